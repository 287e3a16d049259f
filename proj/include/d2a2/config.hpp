#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "d2a2/dda.hpp"
#include "d2a2/mfa.hpp"

namespace d2a2 {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Architecture description; serialized into every checkpoint.
struct ModelConfig {
  int num_scales = 3;
  int base_channels = 32;
  int channel_growth = 2;
  bool use_dda = true;
  bool use_mfa = true;
  AlignMode lda_mode = AlignMode::Lda;
  bool dga_enabled = true;
  bool gc_enabled = true;
  AttentionMode attention_mode = AttentionMode::Pixel;
  bool mfa_residual = true;
  double activation_slope = 0.2;
  double lda_epsilon = 1e-5;
  double offset_bound = 0.0;  // 0 = unbounded offsets
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t channels(int scale) const;

  // Toggles after applying the module-level switches.
  AlignMode effective_align() const { return use_dda ? lda_mode : AlignMode::None; }
  bool effective_dga() const { return use_dda && dga_enabled; }
  bool effective_gc() const { return use_mfa && gc_enabled; }
  AttentionMode effective_attention() const { return use_mfa ? attention_mode : AttentionMode::None; }

  /// Returns false when the key is not a model key; throws ConfigError on a bad value.
  bool set(const std::string& key, const std::string& value);
  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TrainConfig {
  double lr = 1e-3;
  int batch_size = 4;
  int steps = 500;
  int crop_size = 64;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // 0 = final checkpoint only
  bool augment = true;
  int synthetic_size = 64;  // edge length of generated scenes for "synthetic:N" data

  void validate(int scale) const;
  bool set(const std::string& key, const std::string& value);
  std::string to_text() const;
};

/// Parses flat key=value text ('#' comments, blank lines allowed). Keys are
/// offered to each non-null target in turn; a key nobody accepts is an error.
void parse_config_text(const std::string& text, ModelConfig* model, TrainConfig* train);
void load_config_file(const std::string& path, ModelConfig* model, TrainConfig* train);

}  // namespace d2a2
