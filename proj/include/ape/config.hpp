#pragma once

#include <map>
#include <string>
#include <vector>

#include "ape/corpus.hpp"
#include "ape/model.hpp"
#include "ape/train.hpp"

namespace ape {

// Flat key=value configuration: '#' comments, blank lines ignored. Keys
// mirror ModelConfig/TrainConfig/SynthSpec fields one to one; unknown keys
// are rejected listing the valid ones, bad values are rejected on entry.
class Config {
 public:
  static const std::vector<std::string>& valid_keys();

  void load_file(const std::string& path);
  void set(const std::string& key, const std::string& value);
  void set_assignment(const std::string& keyval);  // "key=value"

  std::string get(const std::string& key) const;  // falls back to the default
  long get_int(const std::string& key) const;
  double get_real(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  // Effective configuration (defaults + overrides), sorted keys.
  std::string canonical_text() const;

  ModelConfig model_config(int vocab_size) const;
  TrainConfig train_config() const;
  SynthSpec synth_spec() const;

 private:
  std::map<std::string, std::string> values_;
};

// Bare file names that do not resolve directly are looked up under
// $APE_CONFIG_DIR when it is set.
std::string resolve_config_path(const std::string& path);

}  // namespace ape
