#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "svip/optim.hpp"

namespace svip {

struct ViTConfig {
  std::size_t image_size = 64;  // square, pixels
  std::size_t channels = 1;
  std::size_t patch_size = 8;
  std::size_t embed_dim = 64;
  std::size_t num_layers = 4;
  std::size_t num_heads = 4;
  double mlp_ratio = 4.0;
  std::size_t num_attributes = 16;
  std::size_t num_seen_classes = 20;
  double dropout = 0.0;
  double init_std = 0.02;

  std::size_t grid() const { return image_size / patch_size; }
  std::size_t num_patches() const { return grid() * grid(); }
  std::size_t patch_dim() const { return patch_size * patch_size * channels; }
  std::size_t head_dim() const { return embed_dim / num_heads; }
  std::size_t mlp_hidden() const;
  // Throws ConfigError on a non-divisible patch size, head count, etc.
  void validate() const;
};

enum class TargetMode { kSoft, kBinaryTopM };
enum class DivergenceMode { kAsWritten, kTrueJsd };

// Ablation switches; all on is the full model, all off the class-token
// baseline.
struct Switches {
  bool ssps = true;
  bool psc = true;
  bool jsd = true;
  bool w2p = true;
  bool p2a = true;

  bool all_on() const { return ssps && psc && jsd && w2p && p2a; }
  // A second, selection-driven pass exists only if something selects patches
  // or contextualizes them.
  bool two_pass() const { return ssps || psc; }
  bool operator==(const Switches&) const = default;
};

struct TrainConfig {
  double lambda1 = 1.0;  // divergence weight
  double lambda2 = 3.0;  // patch loss weight
  double sigma = 5.0;    // cosine temperature
  std::optional<std::size_t> keep_patches;  // M; default round(0.82 N)
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  OptimizerConfig optimizer;
  Switches switches;
  TargetMode targets = TargetMode::kSoft;
  DivergenceMode divergence = DivergenceMode::kAsWritten;
  std::string word_embedding_path;
  std::size_t word_dim = 32;  // synthetic fallback only

  std::size_t resolve_m(std::size_t num_patches) const;
  void validate(std::size_t num_patches) const;
};

struct SyntheticSpec {
  std::size_t grid = 8;  // cells per side; each cell is one 8x8 patch
  std::size_t num_attributes = 16;
  std::size_t seen_classes = 20;
  std::size_t unseen_classes = 8;
  std::size_t samples_per_class = 100;
  double train_fraction = 0.8;  // of seen-class samples
  std::size_t min_active = 2;
  std::size_t max_active = 4;
  double noise_amplitude = 0.25;
  double glyph_jitter = 0.05;
  std::size_t word_dim = 32;
  std::uint64_t seed = 0;

  static constexpr std::size_t kGlyphSize = 8;
  std::size_t image_size() const { return grid * kGlyphSize; }
  void validate() const;
};

// Flat `key = value` settings with `#` comments. Every key must be consumed
// by one of the apply_* calls; leftovers are reported by finish().
class Settings {
 public:
  static Settings parse_file(const std::string& path);
  static Settings parse_text(const std::string& text,
                             const std::string& origin = "<text>");

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> take(const std::string& key);
  const std::map<std::string, std::string>& values() const { return values_; }
  // Throws ConfigError listing keys no apply_* call consumed.
  void finish() const;

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> consumed_;
};

void apply(Settings& s, ViTConfig& vit);
void apply(Settings& s, TrainConfig& train);
void apply(Settings& s, SyntheticSpec& spec);

std::string to_settings_text(const ViTConfig& vit);
std::string to_settings_text(const TrainConfig& train);
std::string to_settings_text(const SyntheticSpec& spec);

std::string to_string(TargetMode m);
std::string to_string(DivergenceMode m);

}  // namespace svip
