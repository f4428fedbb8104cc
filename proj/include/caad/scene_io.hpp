#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "caad/scene.hpp"

namespace caad {

// Scene files are line-delimited JSON: a header record
// {"format":"caad-scene","version":1} followed by one scene per line.
// Numbers are written with 17 significant digits so that round-trips are
// bit-exact.
void save_scenes(const std::vector<Scene>& scenes, const std::string& path);
std::vector<Scene> load_scenes(const std::string& path);

// Rollout files share the line-delimited layout with header
// {"format":"caad-rollout","version":1}; each record is
// {"scene_id":"...","points":[[x,y],...]} in the scene (world) frame.
struct RolloutRecord {
  std::string scene_id;
  TrajectoryTP traj;
};
void save_rollouts(const std::vector<RolloutRecord>& rollouts, const std::string& path);
std::vector<RolloutRecord> load_rollouts(const std::string& path);

// Minimal streaming JSON writer used by all line-delimited outputs. Doubles
// are formatted with %.17g.
class JsonWriter {
 public:
  JsonWriter& begin_object();
  JsonWriter& end_object();
  JsonWriter& begin_array();
  JsonWriter& end_array();
  JsonWriter& key(const std::string& k);
  JsonWriter& value(double v);
  JsonWriter& value(std::int64_t v);
  JsonWriter& value(int v) { return value(static_cast<std::int64_t>(v)); }
  JsonWriter& value(std::uint64_t v);
  JsonWriter& value(bool v);
  JsonWriter& value(const std::string& s);
  JsonWriter& value(const char* s) { return value(std::string(s)); }
  JsonWriter& raw_number(const std::string& s);

  const std::string& str() const { return out_; }

 private:
  void maybe_comma();
  std::string out_;
  std::vector<bool> first_stack_;
};

std::string format_double(double v);  // %.17g

}  // namespace caad
