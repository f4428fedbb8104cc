#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "caad/nn.hpp"

namespace caad {

// Checkpoint container: versioned header followed by named blocks. A block is
// either a raw 64-bit real array with its shape or a UTF-8 string. Loading
// rejects unknown versions; binding into an existing ParamStore rejects shape
// mismatches. Writes go to a temp file renamed into place so a failed write
// never leaves a partial checkpoint.
struct Checkpoint {
  struct Block {
    std::vector<int> shape;
    std::vector<double> data;
  };
  std::map<std::string, Block> arrays;
  std::map<std::string, std::string> strings;

  void put(const std::string& name, const std::vector<int>& shape, std::vector<double> data);
  void put_string(const std::string& name, std::string value);
  bool has(const std::string& name) const { return arrays.count(name) > 0; }

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

// Copies all parameters of `ps` into blocks prefixed with "param/".
void store_params(Checkpoint& ck, const nn::ParamStore& ps);
// Writes blocks back into existing parameters; throws on missing names or
// shape mismatch without touching any parameter.
void bind_params(const Checkpoint& ck, nn::ParamStore& ps);

}  // namespace caad
