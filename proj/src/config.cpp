#include "d2a2/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace d2a2 {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

long long parse_int(const std::string& key, const std::string& v) {
  long long out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(out)) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a real number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string real_text(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const char* bool_text(bool v) { return v ? "true" : "false"; }

}  // namespace

void ModelConfig::validate() const {
  if (num_scales < 1) throw ConfigError("num_scales must be >= 1");
  if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
  if (channel_growth < 1) throw ConfigError("channel_growth must be >= 1");
  if (activation_slope < 0.0 || activation_slope >= 1.0) throw ConfigError("activation_slope must lie in [0, 1)");
  if (lda_epsilon < 0.0) throw ConfigError("lda_epsilon must be >= 0");
  if (offset_bound < 0.0) throw ConfigError("offset_bound must be >= 0");
}

std::size_t ModelConfig::channels(int scale) const {
  std::size_t c = static_cast<std::size_t>(base_channels);
  for (int i = 0; i < scale; ++i) c *= static_cast<std::size_t>(channel_growth);
  return c;
}

bool ModelConfig::set(const std::string& key, const std::string& value) {
  if (key == "num_scales") num_scales = static_cast<int>(parse_int(key, value));
  else if (key == "base_channels") base_channels = static_cast<int>(parse_int(key, value));
  else if (key == "channel_growth") channel_growth = static_cast<int>(parse_int(key, value));
  else if (key == "use_dda") use_dda = parse_bool(key, value);
  else if (key == "use_mfa") use_mfa = parse_bool(key, value);
  else if (key == "lda_mode") {
    try {
      lda_mode = parse_align_mode(value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  } else if (key == "dga_enabled") dga_enabled = parse_bool(key, value);
  else if (key == "gc_enabled") gc_enabled = parse_bool(key, value);
  else if (key == "attention_mode") {
    try {
      attention_mode = parse_attention_mode(value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  } else if (key == "mfa_residual") mfa_residual = parse_bool(key, value);
  else if (key == "activation_slope") activation_slope = parse_real(key, value);
  else if (key == "lda_epsilon") lda_epsilon = parse_real(key, value);
  else if (key == "offset_bound") offset_bound = parse_real(key, value);
  else if (key == "seed") seed = parse_u64(key, value);
  else return false;
  return true;
}

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os << "num_scales=" << num_scales << "\n"
     << "base_channels=" << base_channels << "\n"
     << "channel_growth=" << channel_growth << "\n"
     << "use_dda=" << bool_text(use_dda) << "\n"
     << "use_mfa=" << bool_text(use_mfa) << "\n"
     << "lda_mode=" << to_string(lda_mode) << "\n"
     << "dga_enabled=" << bool_text(dga_enabled) << "\n"
     << "gc_enabled=" << bool_text(gc_enabled) << "\n"
     << "attention_mode=" << to_string(attention_mode) << "\n"
     << "mfa_residual=" << bool_text(mfa_residual) << "\n"
     << "activation_slope=" << real_text(activation_slope) << "\n"
     << "lda_epsilon=" << real_text(lda_epsilon) << "\n"
     << "offset_bound=" << real_text(offset_bound) << "\n"
     << "seed=" << seed << "\n";
  return os.str();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  ModelConfig cfg;
  parse_config_text(text, &cfg, nullptr);
  return cfg;
}

void TrainConfig::validate(int scale) const {
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (steps < 1) throw ConfigError("steps must be positive");
  if (crop_size < 1) throw ConfigError("crop_size must be positive");
  if (scale > 0 && crop_size % scale != 0) {
    throw ConfigError("crop_size " + std::to_string(crop_size) + " is not divisible by scale " + std::to_string(scale));
  }
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) throw ConfigError("adam betas must lie in [0, 1)");
  if (!(adam_epsilon > 0.0)) throw ConfigError("adam_epsilon must be positive");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (synthetic_size < 32 || synthetic_size % 4 != 0) {
    throw ConfigError("synthetic_size must be >= 32 and divisible by 4");
  }
}

bool TrainConfig::set(const std::string& key, const std::string& value) {
  if (key == "lr") lr = parse_real(key, value);
  else if (key == "batch_size") batch_size = static_cast<int>(parse_int(key, value));
  else if (key == "steps") steps = static_cast<int>(parse_int(key, value));
  else if (key == "crop_size") crop_size = static_cast<int>(parse_int(key, value));
  else if (key == "beta1") beta1 = parse_real(key, value);
  else if (key == "beta2") beta2 = parse_real(key, value);
  else if (key == "adam_epsilon") adam_epsilon = parse_real(key, value);
  else if (key == "train_seed") seed = parse_u64(key, value);
  else if (key == "checkpoint_every") checkpoint_every = static_cast<int>(parse_int(key, value));
  else if (key == "augment") augment = parse_bool(key, value);
  else if (key == "synthetic_size") synthetic_size = static_cast<int>(parse_int(key, value));
  else return false;
  return true;
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os << "lr=" << real_text(lr) << "\n"
     << "batch_size=" << batch_size << "\n"
     << "steps=" << steps << "\n"
     << "crop_size=" << crop_size << "\n"
     << "beta1=" << real_text(beta1) << "\n"
     << "beta2=" << real_text(beta2) << "\n"
     << "adam_epsilon=" << real_text(adam_epsilon) << "\n"
     << "train_seed=" << seed << "\n"
     << "checkpoint_every=" << checkpoint_every << "\n"
     << "augment=" << bool_text(augment) << "\n"
     << "synthetic_size=" << synthetic_size << "\n";
  return os.str();
}

void parse_config_text(const std::string& text, ModelConfig* model, TrainConfig* train) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key=value, got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      const bool taken = (model != nullptr && model->set(key, value)) || (train != nullptr && train->set(key, value));
      if (!taken) throw ConfigError("unknown key '" + key + "'");
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (model != nullptr) model->validate();
}

void load_config_file(const std::string& path, ModelConfig* model, TrainConfig* train) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  parse_config_text(buf.str(), model, train);
}

}  // namespace d2a2
