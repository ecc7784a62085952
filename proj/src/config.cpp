#include "ape/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <sys/stat.h>

namespace ape {

namespace {

enum class Kind { Int, Real, Bool, Arch, Domain };

struct KeySpec {
  Kind kind;
  const char* def;
};

const std::map<std::string, KeySpec>& registry() {
  static const std::map<std::string, KeySpec> r = {
      // model
      {"architecture", {Kind::Arch, "transference"}},
      {"n_src", {Kind::Int, "2"}},
      {"n_mt", {Kind::Int, "2"}},
      {"n_pe", {Kind::Int, "2"}},
      {"d_model", {Kind::Int, "64"}},
      {"heads", {Kind::Int, "4"}},
      {"d_ff", {Kind::Int, "256"}},
      {"dropout", {Kind::Real, "0.1"}},
      {"max_len", {Kind::Int, "256"}},
      {"share_mt_pe_embeddings", {Kind::Bool, "true"}},
      // training
      {"warmup_steps", {Kind::Int, "8000"}},
      {"token_budget", {Kind::Int, "2000"}},
      {"max_steps", {Kind::Int, "2000"}},
      {"max_epochs", {Kind::Int, "0"}},
      {"eval_interval", {Kind::Int, "200"}},
      {"seed", {Kind::Int, "1"}},
      {"label_smoothing", {Kind::Real, "0.1"}},
      {"adam_beta1", {Kind::Real, "0.9"}},
      {"adam_beta2", {Kind::Real, "0.98"}},
      {"adam_eps", {Kind::Real, "1e-9"}},
      {"grad_accum", {Kind::Int, "1"}},
      {"reset_schedule", {Kind::Bool, "true"}},
      {"early_stop_loss", {Kind::Real, "0"}},
      // decoding
      {"beam", {Kind::Int, "4"}},
      {"lenpen", {Kind::Real, "0.6"}},
      {"decode_max_len", {Kind::Int, "0"}},
      // tokenizer
      {"bpe_merges", {Kind::Int, "500"}},
      // synthetic data
      {"synth_lexicon", {Kind::Int, "40"}},
      {"synth_sub_rate", {Kind::Real, "0.2"}},
      {"synth_drop_rate", {Kind::Real, "0.05"}},
      {"synth_ins_rate", {Kind::Real, "0.05"}},
      {"synth_swap_rate", {Kind::Real, "0.05"}},
      {"synth_domain_shift", {Kind::Bool, "false"}},
      {"synth_domain", {Kind::Domain, "generic"}},
      {"synth_min_len", {Kind::Int, "3"}},
      {"synth_max_len", {Kind::Int, "8"}},
  };
  return r;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void unknown_key(const std::string& key) {
  std::ostringstream os;
  os << "unknown config key '" << key << "'; valid keys:";
  for (const auto& k : Config::valid_keys()) os << ' ' << k;
  throw std::invalid_argument(os.str());
}

void check_value(const std::string& key, Kind kind, const std::string& value) {
  try {
    std::size_t used = 0;
    switch (kind) {
      case Kind::Int:
        (void)std::stol(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return;
      case Kind::Real:
        (void)std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return;
      case Kind::Bool:
        if (value == "0" || value == "1" || value == "true" || value == "false") return;
        throw std::invalid_argument(value);
      case Kind::Arch:
        (void)architecture_from_string(value);
        return;
      case Kind::Domain:
        if (value == "generic" || value == "tune") return;
        throw std::invalid_argument(value);
    }
  } catch (const std::exception&) {
    throw std::invalid_argument("bad value '" + value + "' for config key '" + key + "'");
  }
}

}  // namespace

const std::vector<std::string>& Config::valid_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [key, spec] : registry()) k.push_back(key);
    return k;
  }();
  return keys;
}

void Config::set(const std::string& key, const std::string& value) {
  auto it = registry().find(key);
  if (it == registry().end()) unknown_key(key);
  check_value(key, it->second.kind, value);
  values_[key] = value;
}

void Config::set_assignment(const std::string& keyval) {
  const auto eq = keyval.find('=');
  if (eq == std::string::npos)
    throw std::invalid_argument("expected key=value, got '" + keyval + "'");
  set(trim(keyval.substr(0, eq)), trim(keyval.substr(eq + 1)));
}

void Config::load_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file " + path);
  std::string line;
  long lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      set_assignment(line);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::string Config::get(const std::string& key) const {
  auto v = values_.find(key);
  if (v != values_.end()) return v->second;
  auto it = registry().find(key);
  if (it == registry().end()) unknown_key(key);
  return it->second.def;
}

long Config::get_int(const std::string& key) const { return std::stol(get(key)); }
double Config::get_real(const std::string& key) const { return std::stod(get(key)); }
bool Config::get_bool(const std::string& key) const {
  const std::string v = get(key);
  return v == "1" || v == "true";
}

std::string Config::canonical_text() const {
  std::ostringstream os;
  for (const auto& [key, spec] : registry()) os << key << '=' << get(key) << '\n';
  return os.str();
}

ModelConfig Config::model_config(int vocab_size) const {
  ModelConfig c;
  c.architecture = architecture_from_string(get("architecture"));
  c.n_src = static_cast<int>(get_int("n_src"));
  c.n_mt = static_cast<int>(get_int("n_mt"));
  c.n_pe = static_cast<int>(get_int("n_pe"));
  c.d_model = static_cast<int>(get_int("d_model"));
  c.heads = static_cast<int>(get_int("heads"));
  c.d_ff = static_cast<int>(get_int("d_ff"));
  c.dropout = get_real("dropout");
  c.max_len = static_cast<int>(get_int("max_len"));
  c.share_mt_pe_embeddings = get_bool("share_mt_pe_embeddings");
  c.vocab_size = vocab_size;
  return c;
}

TrainConfig Config::train_config() const {
  TrainConfig c;
  c.warmup_steps = static_cast<int>(get_int("warmup_steps"));
  c.token_budget = static_cast<int>(get_int("token_budget"));
  c.max_len = static_cast<int>(get_int("max_len"));
  c.max_steps = static_cast<int>(get_int("max_steps"));
  c.max_epochs = static_cast<int>(get_int("max_epochs"));
  c.eval_interval = static_cast<int>(get_int("eval_interval"));
  c.seed = static_cast<std::uint64_t>(get_int("seed"));
  c.label_smoothing = get_real("label_smoothing");
  c.adam_beta1 = get_real("adam_beta1");
  c.adam_beta2 = get_real("adam_beta2");
  c.adam_eps = get_real("adam_eps");
  c.grad_accum = static_cast<int>(get_int("grad_accum"));
  c.reset_schedule = get_bool("reset_schedule");
  c.early_stop_loss = get_real("early_stop_loss");
  return c;
}

SynthSpec Config::synth_spec() const {
  SynthSpec s;
  s.lexicon = static_cast<int>(get_int("synth_lexicon"));
  s.sub_rate = get_real("synth_sub_rate");
  s.drop_rate = get_real("synth_drop_rate");
  s.ins_rate = get_real("synth_ins_rate");
  s.swap_rate = get_real("synth_swap_rate");
  s.domain_shift = get_bool("synth_domain_shift");
  s.domain = get("synth_domain");
  s.min_len = static_cast<int>(get_int("synth_min_len"));
  s.max_len = static_cast<int>(get_int("synth_max_len"));
  s.seed = static_cast<std::uint64_t>(get_int("seed"));
  return s;
}

std::string resolve_config_path(const std::string& path) {
  struct stat st{};
  if (stat(path.c_str(), &st) == 0) return path;
  if (path.find('/') == std::string::npos) {
    if (const char* dir = std::getenv("APE_CONFIG_DIR")) {
      const std::string candidate = std::string(dir) + "/" + path;
      if (stat(candidate.c_str(), &st) == 0) return candidate;
    }
  }
  return path;  // let the open fail with the original name
}

}  // namespace ape
