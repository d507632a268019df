#include "svip/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "svip/errors.hpp"

namespace svip {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("setting '" + key + "': expected a number, got '" + v +
                      "'");
  }
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  try {
    if (v.empty() || v[0] == '-') throw std::invalid_argument(v);
    std::size_t used = 0;
    auto n = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ConfigError("setting '" + key +
                      "': expected a non-negative integer, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw ConfigError("setting '" + key + "': expected on/off, got '" + v + "'");
}

void take_size(Settings& s, const char* key, std::size_t& out) {
  if (auto v = s.take(key)) out = parse_uint(key, *v);
}
void take_u64(Settings& s, const char* key, std::uint64_t& out) {
  if (auto v = s.take(key)) out = parse_uint(key, *v);
}
void take_double(Settings& s, const char* key, double& out) {
  if (auto v = s.take(key)) out = parse_double(key, *v);
}
void take_bool(Settings& s, const char* key, bool& out) {
  if (auto v = s.take(key)) out = parse_bool(key, *v);
}

}  // namespace

std::size_t ViTConfig::mlp_hidden() const {
  return static_cast<std::size_t>(
      std::llround(mlp_ratio * static_cast<double>(embed_dim)));
}

void ViTConfig::validate() const {
  if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0) {
    throw ConfigError("patch_size " + std::to_string(patch_size) +
                      " must divide image_size " + std::to_string(image_size));
  }
  if (channels == 0) throw ConfigError("channels must be positive");
  if (embed_dim == 0 || num_heads == 0 || embed_dim % num_heads != 0) {
    throw ConfigError("embed_dim " + std::to_string(embed_dim) +
                      " must be divisible by num_heads " +
                      std::to_string(num_heads));
  }
  if (mlp_hidden() == 0) throw ConfigError("mlp_ratio gives empty MLP");
  if (num_attributes == 0) throw ConfigError("num_attributes must be >= 1");
  if (num_seen_classes == 0) throw ConfigError("num_seen_classes must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout in [0, 1)");
  if (!(init_std > 0.0)) throw ConfigError("init_std must be positive");
}

std::size_t TrainConfig::resolve_m(std::size_t num_patches) const {
  if (keep_patches) return *keep_patches;
  return static_cast<std::size_t>(
      std::llround(0.82 * static_cast<double>(num_patches)));
}

void TrainConfig::validate(std::size_t num_patches) const {
  if (lambda1 < 0.0 || lambda2 < 0.0) {
    throw ConfigError("loss coefficients must be non-negative");
  }
  if (!(sigma > 0.0)) throw ConfigError("sigma must be positive");
  const auto m = resolve_m(num_patches);
  if (m > num_patches) {
    throw ConfigError("M = " + std::to_string(m) + " exceeds patch count " +
                      std::to_string(num_patches));
  }
  if (m == 0 && switches.p2a) {
    throw ConfigError("M = 0 leaves no patches for attribute localization");
  }
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(optimizer.lr > 0.0)) throw ConfigError("lr must be positive");
}

void SyntheticSpec::validate() const {
  if (grid == 0) throw ConfigError("grid must be >= 1");
  if (num_attributes == 0) throw ConfigError("num_attributes must be >= 1");
  if (seen_classes == 0) throw ConfigError("need at least one seen class");
  if (min_active == 0 || min_active > max_active) {
    throw ConfigError("active attribute range must satisfy 1 <= min <= max");
  }
  if (max_active > num_attributes) {
    throw ConfigError("max_active exceeds num_attributes");
  }
  if (max_active > grid * grid) {
    throw ConfigError("more active attributes (" + std::to_string(max_active) +
                      ") than grid cells (" + std::to_string(grid * grid) +
                      ")");
  }
  if (train_fraction <= 0.0 || train_fraction > 1.0) {
    throw ConfigError("train_fraction must be in (0, 1]");
  }
  if (samples_per_class == 0) throw ConfigError("samples_per_class >= 1");
  if (word_dim == 0) throw ConfigError("word_dim must be >= 1");
}

Settings Settings::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str(), path);
}

Settings Settings::parse_text(const std::string& text,
                              const std::string& origin) {
  Settings s;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": expected key=value");
    }
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    }
    s.values_[key] = value;
  }
  return s;
}

void Settings::set(const std::string& key, const std::string& value) {
  values_[key] = value;
  consumed_.erase(key);
}

std::optional<std::string> Settings::take(const std::string& key) {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  consumed_.insert(key);
  return it->second;
}

void Settings::finish() const {
  std::string unknown;
  for (const auto& [k, v] : values_) {
    if (!consumed_.count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
  }
  if (!unknown.empty()) throw ConfigError("unknown setting(s): " + unknown);
}

void apply(Settings& s, ViTConfig& vit) {
  take_size(s, "image_size", vit.image_size);
  take_size(s, "channels", vit.channels);
  take_size(s, "patch_size", vit.patch_size);
  take_size(s, "embed_dim", vit.embed_dim);
  take_size(s, "num_layers", vit.num_layers);
  take_size(s, "num_heads", vit.num_heads);
  take_double(s, "mlp_ratio", vit.mlp_ratio);
  take_size(s, "num_attributes", vit.num_attributes);
  take_size(s, "num_seen_classes", vit.num_seen_classes);
  take_double(s, "dropout", vit.dropout);
  take_double(s, "init_std", vit.init_std);
}

void apply(Settings& s, TrainConfig& t) {
  take_double(s, "lambda1", t.lambda1);
  take_double(s, "lambda2", t.lambda2);
  take_double(s, "sigma", t.sigma);
  if (auto v = s.take("M")) {
    if (*v == "auto") {
      t.keep_patches.reset();
    } else {
      t.keep_patches = parse_uint("M", *v);
    }
  }
  take_size(s, "epochs", t.epochs);
  take_size(s, "batch_size", t.batch_size);
  take_u64(s, "seed", t.seed);
  take_double(s, "lr", t.optimizer.lr);
  take_double(s, "weight_decay", t.optimizer.weight_decay);
  if (auto v = s.take("optimizer")) {
    if (*v == "adam") {
      t.optimizer.kind = OptimizerKind::kAdam;
    } else if (*v == "sgd") {
      t.optimizer.kind = OptimizerKind::kSgd;
    } else {
      throw ConfigError("optimizer must be adam or sgd, got '" + *v + "'");
    }
  }
  take_bool(s, "ssps", t.switches.ssps);
  take_bool(s, "psc", t.switches.psc);
  take_bool(s, "jsd", t.switches.jsd);
  take_bool(s, "w2p", t.switches.w2p);
  take_bool(s, "p2a", t.switches.p2a);
  if (auto v = s.take("targets")) {
    if (*v == "soft") {
      t.targets = TargetMode::kSoft;
    } else if (*v == "binary-topM") {
      t.targets = TargetMode::kBinaryTopM;
    } else {
      throw ConfigError("targets must be soft or binary-topM, got '" + *v +
                        "'");
    }
  }
  if (auto v = s.take("divergence")) {
    if (*v == "as-written") {
      t.divergence = DivergenceMode::kAsWritten;
    } else if (*v == "true-jsd") {
      t.divergence = DivergenceMode::kTrueJsd;
    } else {
      throw ConfigError("divergence must be as-written or true-jsd, got '" +
                        *v + "'");
    }
  }
  if (auto v = s.take("word_embedding_path")) t.word_embedding_path = *v;
  take_size(s, "word_dim", t.word_dim);
}

void apply(Settings& s, SyntheticSpec& spec) {
  take_size(s, "grid", spec.grid);
  take_size(s, "num_attributes", spec.num_attributes);
  take_size(s, "seen_classes", spec.seen_classes);
  take_size(s, "unseen_classes", spec.unseen_classes);
  take_size(s, "samples_per_class", spec.samples_per_class);
  take_double(s, "train_fraction", spec.train_fraction);
  take_size(s, "min_active", spec.min_active);
  take_size(s, "max_active", spec.max_active);
  take_double(s, "noise_amplitude", spec.noise_amplitude);
  take_double(s, "glyph_jitter", spec.glyph_jitter);
  take_size(s, "word_dim", spec.word_dim);
  take_u64(s, "seed", spec.seed);
}

std::string to_string(TargetMode m) {
  return m == TargetMode::kSoft ? "soft" : "binary-topM";
}

std::string to_string(DivergenceMode m) {
  return m == DivergenceMode::kAsWritten ? "as-written" : "true-jsd";
}

std::string to_settings_text(const ViTConfig& v) {
  std::ostringstream os;
  os << "image_size=" << v.image_size << '\n'
     << "channels=" << v.channels << '\n'
     << "patch_size=" << v.patch_size << '\n'
     << "embed_dim=" << v.embed_dim << '\n'
     << "num_layers=" << v.num_layers << '\n'
     << "num_heads=" << v.num_heads << '\n'
     << "mlp_ratio=" << fmt_double(v.mlp_ratio) << '\n'
     << "num_attributes=" << v.num_attributes << '\n'
     << "num_seen_classes=" << v.num_seen_classes << '\n'
     << "dropout=" << fmt_double(v.dropout) << '\n'
     << "init_std=" << fmt_double(v.init_std) << '\n';
  return os.str();
}

std::string to_settings_text(const TrainConfig& t) {
  auto onoff = [](bool b) { return b ? "on" : "off"; };
  std::ostringstream os;
  os << "lambda1=" << fmt_double(t.lambda1) << '\n'
     << "lambda2=" << fmt_double(t.lambda2) << '\n'
     << "sigma=" << fmt_double(t.sigma) << '\n'
     << "M=" << (t.keep_patches ? std::to_string(*t.keep_patches) : "auto")
     << '\n'
     << "epochs=" << t.epochs << '\n'
     << "batch_size=" << t.batch_size << '\n'
     << "seed=" << t.seed << '\n'
     << "lr=" << fmt_double(t.optimizer.lr) << '\n'
     << "weight_decay=" << fmt_double(t.optimizer.weight_decay) << '\n'
     << "optimizer="
     << (t.optimizer.kind == OptimizerKind::kAdam ? "adam" : "sgd") << '\n'
     << "ssps=" << onoff(t.switches.ssps) << '\n'
     << "psc=" << onoff(t.switches.psc) << '\n'
     << "jsd=" << onoff(t.switches.jsd) << '\n'
     << "w2p=" << onoff(t.switches.w2p) << '\n'
     << "p2a=" << onoff(t.switches.p2a) << '\n'
     << "targets=" << to_string(t.targets) << '\n'
     << "divergence=" << to_string(t.divergence) << '\n'
     << "word_dim=" << t.word_dim << '\n';
  if (!t.word_embedding_path.empty()) {
    os << "word_embedding_path=" << t.word_embedding_path << '\n';
  }
  return os.str();
}

std::string to_settings_text(const SyntheticSpec& s) {
  std::ostringstream os;
  os << "grid=" << s.grid << '\n'
     << "num_attributes=" << s.num_attributes << '\n'
     << "seen_classes=" << s.seen_classes << '\n'
     << "unseen_classes=" << s.unseen_classes << '\n'
     << "samples_per_class=" << s.samples_per_class << '\n'
     << "train_fraction=" << fmt_double(s.train_fraction) << '\n'
     << "min_active=" << s.min_active << '\n'
     << "max_active=" << s.max_active << '\n'
     << "noise_amplitude=" << fmt_double(s.noise_amplitude) << '\n'
     << "glyph_jitter=" << fmt_double(s.glyph_jitter) << '\n'
     << "word_dim=" << s.word_dim << '\n'
     << "seed=" << s.seed << '\n';
  return os.str();
}

}  // namespace svip
