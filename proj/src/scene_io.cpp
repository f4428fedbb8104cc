#include "caad/scene_io.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace caad {

using nlohmann::json;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void JsonWriter::maybe_comma() {
  if (!first_stack_.empty()) {
    if (!first_stack_.back()) out_ += ',';
    first_stack_.back() = false;
  }
}

JsonWriter& JsonWriter::begin_object() {
  maybe_comma();
  out_ += '{';
  first_stack_.push_back(true);
  return *this;
}

JsonWriter& JsonWriter::end_object() {
  out_ += '}';
  first_stack_.pop_back();
  return *this;
}

JsonWriter& JsonWriter::begin_array() {
  maybe_comma();
  out_ += '[';
  first_stack_.push_back(true);
  return *this;
}

JsonWriter& JsonWriter::end_array() {
  out_ += ']';
  first_stack_.pop_back();
  return *this;
}

JsonWriter& JsonWriter::key(const std::string& k) {
  maybe_comma();
  out_ += '"';
  out_ += k;
  out_ += "\":";
  if (!first_stack_.empty()) first_stack_.back() = true;  // suppress comma before the value
  return *this;
}

JsonWriter& JsonWriter::value(double v) {
  maybe_comma();
  out_ += format_double(v);
  return *this;
}

JsonWriter& JsonWriter::value(std::int64_t v) {
  maybe_comma();
  out_ += std::to_string(v);
  return *this;
}

JsonWriter& JsonWriter::value(std::uint64_t v) {
  maybe_comma();
  out_ += std::to_string(v);
  return *this;
}

JsonWriter& JsonWriter::value(bool v) {
  maybe_comma();
  out_ += v ? "true" : "false";
  return *this;
}

JsonWriter& JsonWriter::value(const std::string& s) {
  maybe_comma();
  out_ += '"';
  for (char c : s) {
    if (c == '"' || c == '\\') out_ += '\\';
    out_ += c;
  }
  out_ += '"';
  return *this;
}

JsonWriter& JsonWriter::raw_number(const std::string& s) {
  maybe_comma();
  out_ += s;
  return *this;
}

namespace {

void write_points(JsonWriter& w, const std::vector<Vec2>& pts) {
  w.begin_array();
  for (const Vec2& p : pts) {
    w.begin_array();
    w.value(p.x).value(p.y);
    w.end_array();
  }
  w.end_array();
}

void write_poses(JsonWriter& w, const std::vector<Pose2>& ps) {
  w.begin_array();
  for (const Pose2& p : ps) {
    w.begin_array();
    w.value(p.x).value(p.y).value(p.heading);
    w.end_array();
  }
  w.end_array();
}

void write_agent(JsonWriter& w, const AgentState& a) {
  w.begin_object();
  w.key("id").value(a.id);
  w.key("length").value(a.footprint.length);
  w.key("width").value(a.footprint.width);
  w.key("history");
  write_poses(w, a.history);
  w.key("future");
  write_poses(w, a.gt_future);
  w.key("valid").begin_array();
  for (bool v : a.gt_valid) w.value(v);
  w.end_array();
  w.key("role").value(a.role);
  w.end_object();
}

std::vector<Vec2> read_points(const json& j) {
  std::vector<Vec2> out;
  for (const auto& p : j) out.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  return out;
}

std::vector<Pose2> read_poses(const json& j) {
  std::vector<Pose2> out;
  for (const auto& p : j)
    out.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
  return out;
}

AgentState read_agent(const json& j) {
  AgentState a;
  a.id = j.at("id").get<int>();
  a.footprint.length = j.at("length").get<double>();
  a.footprint.width = j.at("width").get<double>();
  a.history = read_poses(j.at("history"));
  a.gt_future = read_poses(j.at("future"));
  for (const auto& v : j.at("valid")) a.gt_valid.push_back(v.get<bool>());
  a.role = j.at("role").get<std::string>();
  return a;
}

[[noreturn]] void parse_error(const std::string& path, int line, const std::string& what) {
  throw std::runtime_error(path + ":" + std::to_string(line) + ": " + what);
}

void check_header(const std::string& path, const std::string& line, const std::string& format) {
  json h;
  try {
    h = json::parse(line);
  } catch (const std::exception& e) {
    parse_error(path, 1, std::string("malformed header: ") + e.what());
  }
  if (h.value("format", "") != format) parse_error(path, 1, "expected format '" + format + "'");
  if (h.value("version", 0) != 1) parse_error(path, 1, "unsupported version");
}

}  // namespace

void save_scenes(const std::vector<Scene>& scenes, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_scenes: cannot open '" + path + "' for writing");
  out << "{\"format\":\"caad-scene\",\"version\":1}\n";
  for (const Scene& s : scenes) {
    JsonWriter w;
    w.begin_object();
    w.key("scene_id").value(s.scene_id);
    w.key("seed").value(static_cast<std::uint64_t>(s.seed));
    w.key("tag").value(to_string(s.tag));
    w.key("ego");
    write_agent(w, s.ego);
    w.key("agents").begin_array();
    for (const AgentState& a : s.agents) write_agent(w, a);
    w.end_array();
    w.key("route");
    write_points(w, s.route.pts);
    w.key("drivable");
    write_points(w, s.drivable.verts);
    w.key("centerlines").begin_array();
    for (const Polyline& line : s.centerlines) write_points(w, line.pts);
    w.end_array();
    w.end_object();
    out << w.str() << '\n';
  }
}

std::vector<Scene> load_scenes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_scenes: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_scenes: empty file '" + path + "'");
  check_header(path, line, "caad-scene");
  std::vector<Scene> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const std::exception& e) {
      parse_error(path, line_no, std::string("malformed record: ") + e.what());
    }
    try {
      Scene s;
      s.scene_id = j.at("scene_id").get<std::string>();
      s.seed = j.at("seed").get<std::uint64_t>();
      s.tag = tag_from_string(j.at("tag").get<std::string>());
      s.ego = read_agent(j.at("ego"));
      for (const auto& a : j.at("agents")) s.agents.push_back(read_agent(a));
      s.route.pts = read_points(j.at("route"));
      s.drivable.verts = read_points(j.at("drivable"));
      for (const auto& c : j.at("centerlines")) s.centerlines.push_back(Polyline{read_points(c)});
      out.push_back(std::move(s));
    } catch (const json::exception& e) {
      parse_error(path, line_no, std::string("bad scene record: ") + e.what());
    }
  }
  return out;
}

void save_rollouts(const std::vector<RolloutRecord>& rollouts, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_rollouts: cannot open '" + path + "' for writing");
  out << "{\"format\":\"caad-rollout\",\"version\":1}\n";
  for (const RolloutRecord& r : rollouts) {
    JsonWriter w;
    w.begin_object();
    w.key("scene_id").value(r.scene_id);
    w.key("points");
    write_points(w, r.traj.points);
    w.end_object();
    out << w.str() << '\n';
  }
}

std::vector<RolloutRecord> load_rollouts(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_rollouts: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_rollouts: empty file '" + path + "'");
  check_header(path, line, "caad-rollout");
  std::vector<RolloutRecord> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const std::exception& e) {
      parse_error(path, line_no, std::string("malformed record: ") + e.what());
    }
    RolloutRecord r;
    r.scene_id = j.at("scene_id").get<std::string>();
    r.traj.points = read_points(j.at("points"));
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace caad
