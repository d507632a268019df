#include "svip/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "svip/errors.hpp"
#include "svip/imageio.hpp"

namespace svip {

namespace fs = std::filesystem;

namespace {

constexpr std::uint8_t kInk = 220;
constexpr std::uint8_t kPaper = 30;

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' '))
      cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

Tensor Dataset::image(std::size_t index) const {
  const auto& px = samples.at(index).pixels;
  std::vector<double> v(px.size());
  for (std::size_t i = 0; i < px.size(); ++i) v[i] = px[i] / 255.0;
  return Tensor::from({image_size, image_size, channels}, std::move(v));
}

std::vector<std::size_t> Dataset::indices(bool train) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].train == train) out.push_back(i);
  return out;
}

std::vector<std::size_t> Dataset::test_indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].train) continue;
    const auto row = attributes.row_of(samples[i].class_id);
    if (attributes.splits()[row] == split) out.push_back(i);
  }
  return out;
}

std::vector<std::vector<std::uint8_t>> glyph_library(std::size_t k) {
  constexpr std::size_t kCells = SyntheticSpec::kGlyphSize * SyntheticSpec::kGlyphSize;
  std::mt19937_64 rng(0x5EEDF00DULL);
  std::bernoulli_distribution coin(0.5);
  std::vector<std::vector<std::uint8_t>> lib;
  while (lib.size() < k) {
    std::vector<std::uint8_t> g(kCells);
    for (auto& b : g) b = coin(rng) ? 1 : 0;
    bool ok = true;
    for (const auto& other : lib) {
      std::size_t d = 0;
      for (std::size_t i = 0; i < kCells; ++i) d += g[i] != other[i];
      if (d < 16) {
        ok = false;
        break;
      }
    }
    if (ok) lib.push_back(std::move(g));
  }
  return lib;
}

WordEmbeddings synthetic_word_embeddings(std::size_t k, std::size_t dim,
                                         std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0xA77B0DULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  WordEmbeddings w;
  std::vector<double> values(k * dim);
  for (std::size_t r = 0; r < k; ++r) {
    double norm = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      values[r * dim + j] = normal(rng);
      norm += values[r * dim + j] * values[r * dim + j];
    }
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < dim; ++j) values[r * dim + j] /= norm;
    char name[32];
    std::snprintf(name, sizeof name, "attr_%02zu", r);
    w.names.emplace_back(name);
  }
  w.vectors = Tensor::from({k, dim}, std::move(values));
  return w;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t k = spec.num_attributes;
  const std::size_t num_classes = spec.seen_classes + spec.unseen_classes;
  std::mt19937_64 rng(spec.seed);

  // Class attribute vectors: unique, seen classes covering every attribute.
  std::vector<std::vector<std::uint8_t>> vectors;
  bool covered = false;
  for (int attempt = 0; attempt < 1000 && !covered; ++attempt) {
    vectors.clear();
    std::set<std::vector<std::uint8_t>> used;
    std::uniform_int_distribution<std::size_t> count(spec.min_active,
                                                     spec.max_active);
    std::size_t guard = 0;
    while (vectors.size() < num_classes) {
      if (++guard > 100000) {
        throw ConfigError("cannot draw " + std::to_string(num_classes) +
                          " distinct attribute vectors with these settings");
      }
      std::vector<std::size_t> order(k);
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      std::vector<std::uint8_t> v(k, 0);
      const auto active = count(rng);
      for (std::size_t i = 0; i < active; ++i) v[order[i]] = 1;
      if (used.insert(v).second) vectors.push_back(std::move(v));
    }
    std::vector<bool> hit(k, false);
    for (std::size_t c = 0; c < spec.seen_classes; ++c)
      for (std::size_t a = 0; a < k; ++a)
        if (vectors[c][a]) hit[a] = true;
    covered = std::all_of(hit.begin(), hit.end(), [](bool b) { return b; });
  }
  if (!covered) {
    throw ConfigError("seen classes cannot cover every attribute; add seen "
                      "classes or active attributes");
  }

  Dataset data;
  data.grid = spec.grid;
  data.image_size = spec.image_size();
  data.channels = 1;
  std::vector<int> ids(num_classes);
  std::vector<Split> splits(num_classes);
  Matrix values(num_classes, k);
  for (std::size_t c = 0; c < num_classes; ++c) {
    ids[c] = static_cast<int>(c);
    splits[c] = c < spec.seen_classes ? Split::kSeen : Split::kUnseen;
    for (std::size_t a = 0; a < k; ++a) values(c, a) = vectors[c][a];
  }
  data.attributes = AttributeMatrix(ids, splits, values);
  data.words = synthetic_word_embeddings(k, spec.word_dim, spec.seed);

  const auto glyphs = glyph_library(k);
  constexpr std::size_t g = SyntheticSpec::kGlyphSize;
  const std::size_t size = data.image_size;
  const std::size_t cells = spec.grid * spec.grid;
  const auto n_train = static_cast<std::size_t>(
      std::llround(spec.train_fraction * static_cast<double>(spec.samples_per_class)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> sym(-1.0, 1.0);

  for (std::size_t c = 0; c < num_classes; ++c) {
    std::vector<std::size_t> active;
    for (std::size_t a = 0; a < k; ++a)
      if (vectors[c][a]) active.push_back(a);
    for (std::size_t s = 0; s < spec.samples_per_class; ++s) {
      Sample sample;
      sample.class_id = ids[c];
      sample.train = splits[c] == Split::kSeen && s < n_train;
      sample.pixels.assign(size * size, 0);
      sample.glyph_cells.assign(cells, 0);

      std::vector<std::size_t> order(cells);
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      std::vector<int> glyph_at(cells, -1);
      for (std::size_t i = 0; i < active.size(); ++i)
        glyph_at[order[i]] = static_cast<int>(active[i]);

      for (std::size_t cell = 0; cell < cells; ++cell) {
        const std::size_t cy = cell / spec.grid, cx = cell % spec.grid;
        auto put = [&](std::size_t y, std::size_t x, double v) {
          sample.pixels[(cy * g + y) * size + cx * g + x] = to_byte(v);
        };
        if (glyph_at[cell] >= 0) {
          sample.glyph_cells[cell] = 1;
          const auto& pattern = glyphs[static_cast<std::size_t>(glyph_at[cell])];
          for (std::size_t y = 0; y < g; ++y)
            for (std::size_t x = 0; x < g; ++x)
              put(y, x,
                  (pattern[y * g + x] ? kInk : kPaper) +
                      255.0 * spec.glyph_jitter * sym(rng));
        } else {
          // Smooth oriented texture around mid-gray plus grain.
          const double fx = 0.3 + 1.3 * unit(rng);
          const double fy = 0.3 + 1.3 * unit(rng);
          const double phase = 6.283185307179586 * unit(rng);
          const double amp = 127.0 * spec.noise_amplitude;
          for (std::size_t y = 0; y < g; ++y)
            for (std::size_t x = 0; x < g; ++x)
              put(y, x,
                  128.0 + amp * std::sin(fx * x + fy * y + phase) +
                      0.3 * amp * sym(rng));
        }
      }
      data.samples.push_back(std::move(sample));
    }
  }
  return data;
}

std::uint64_t dataset_hash(const Dataset& data) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](std::uint8_t b) {
    h ^= b;
    h *= 1099511628211ULL;
  };
  for (const auto& s : data.samples) {
    const auto id = static_cast<std::uint32_t>(s.class_id);
    for (int i = 0; i < 4; ++i) mix(static_cast<std::uint8_t>(id >> (8 * i)));
    mix(s.train ? 1 : 0);
    for (auto b : s.pixels) mix(b);
    for (auto b : s.glyph_cells) mix(b);
  }
  return h;
}

AttributeMatrix load_attribute_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open attribute file " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  const auto header = split_csv(line);
  if (header.size() < 3 || header[0] != "class_id" || header[1] != "split") {
    throw DataError(path + ":1: header must be class_id,split,a_1..a_K");
  }
  const std::size_t k = header.size() - 2;
  std::vector<int> ids;
  std::vector<Split> splits;
  std::vector<double> values;
  std::set<int> seen_ids;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto where = path + ":" + std::to_string(lineno) + ": ";
    const auto cells = split_csv(line);
    if (cells.size() != k + 2) {
      throw DataError(where + "expected " + std::to_string(k + 2) +
                      " fields, got " + std::to_string(cells.size()));
    }
    int id = 0;
    try {
      std::size_t used = 0;
      id = std::stoi(cells[0], &used);
      if (used != cells[0].size()) throw std::invalid_argument(cells[0]);
    } catch (const std::logic_error&) {
      throw DataError(where + "bad class_id '" + cells[0] + "'");
    }
    if (!seen_ids.insert(id).second) {
      throw DataError(where + "duplicate class_id " + std::to_string(id));
    }
    Split split;
    if (cells[1] == "seen") {
      split = Split::kSeen;
    } else if (cells[1] == "unseen") {
      split = Split::kUnseen;
    } else {
      throw DataError(where + "split must be seen or unseen, got '" + cells[1] +
                      "'");
    }
    bool nonzero = false;
    for (std::size_t a = 0; a < k; ++a) {
      double v = 0.0;
      try {
        std::size_t used = 0;
        v = std::stod(cells[a + 2], &used);
        if (used != cells[a + 2].size() || !std::isfinite(v))
          throw std::invalid_argument(cells[a + 2]);
      } catch (const std::logic_error&) {
        throw DataError(where + "bad attribute value '" + cells[a + 2] + "'");
      }
      nonzero = nonzero || v != 0.0;
      values.push_back(v);
    }
    if (!nonzero) {
      throw DataError(where + "class " + std::to_string(id) +
                      " has an all-zero attribute row");
    }
    ids.push_back(id);
    splits.push_back(split);
  }
  if (ids.empty()) throw DataError(path + ": no classes");
  Matrix m(ids.size(), k);
  m.values = std::move(values);
  return AttributeMatrix(std::move(ids), std::move(splits), std::move(m));
}

void save_attribute_matrix(const AttributeMatrix& attrs,
                           const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out.precision(17);
  out << "class_id,split";
  for (std::size_t a = 0; a < attrs.num_attributes(); ++a) out << ",a_" << a + 1;
  out << '\n';
  for (std::size_t r = 0; r < attrs.num_classes(); ++r) {
    out << attrs.class_ids()[r] << ','
        << (attrs.splits()[r] == Split::kSeen ? "seen" : "unseen");
    for (double v : attrs.row(r)) out << ',' << v;
    out << '\n';
  }
}

WordEmbeddings load_word_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open word embedding file " + path);
  WordEmbeddings w;
  std::vector<double> values;
  std::size_t dim = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string name;
    if (!(ls >> name)) continue;
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        double v = std::stod(tok, &used);
        if (used != tok.size() || !std::isfinite(v)) throw std::invalid_argument(tok);
        row.push_back(v);
      } catch (const std::logic_error&) {
        throw DataError(path + ":" + std::to_string(lineno) + ": bad value '" +
                        tok + "'");
      }
    }
    if (row.empty()) {
      throw DataError(path + ":" + std::to_string(lineno) + ": no vector");
    }
    if (dim == 0) dim = row.size();
    if (row.size() != dim) {
      throw DataError(path + ":" + std::to_string(lineno) + ": expected " +
                      std::to_string(dim) + " values, got " +
                      std::to_string(row.size()));
    }
    w.names.push_back(name);
    values.insert(values.end(), row.begin(), row.end());
  }
  if (w.names.empty()) throw DataError(path + ": no word vectors");
  w.vectors = Tensor::from({w.names.size(), dim}, std::move(values));
  return w;
}

void save_word_embeddings(const WordEmbeddings& words, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out.precision(17);
  const auto d = words.vectors.cols();
  for (std::size_t r = 0; r < words.names.size(); ++r) {
    out << words.names[r];
    for (std::size_t j = 0; j < d; ++j) out << ' ' << words.vectors.at(r, j);
    out << '\n';
  }
}

void save_dataset(const Dataset& data, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "preview");
  {
    std::ofstream meta(fs::path(dir) / "meta.txt");
    meta << "format=svip-dataset-v1\n"
         << "image_size=" << data.image_size << '\n'
         << "channels=" << data.channels << '\n'
         << "grid=" << data.grid << '\n'
         << "num_samples=" << data.samples.size() << '\n'
         << "hash=" << dataset_hash(data) << '\n';
  }
  save_attribute_matrix(data.attributes, (fs::path(dir) / "attributes.csv").string());
  save_word_embeddings(data.words, (fs::path(dir) / "words.txt").string());
  std::ofstream csv(fs::path(dir) / "samples.csv");
  csv << "index,class_id,subset,glyph_cells\n";
  std::ofstream bin(fs::path(dir) / "images.bin", std::ios::binary);
  std::set<int> previewed;
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const auto& s = data.samples[i];
    csv << i << ',' << s.class_id << ',' << (s.train ? "train" : "test") << ',';
    for (auto b : s.glyph_cells) csv << static_cast<char>('0' + b);
    csv << '\n';
    bin.write(reinterpret_cast<const char*>(s.pixels.data()),
              static_cast<std::streamsize>(s.pixels.size()));
    if (!s.train && previewed.insert(s.class_id).second) {
      RasterImage img{data.image_size, data.image_size, data.channels, s.pixels};
      if (data.channels == 1 || data.channels == 3) {
        write_pnm((fs::path(dir) / "preview" /
                   ("class_" + std::to_string(s.class_id) +
                    (data.channels == 1 ? ".pgm" : ".ppm")))
                      .string(),
                  img);
      }
    }
  }
  if (!bin || !csv) throw DataError("failed writing dataset to " + dir);
}

Dataset load_dataset(const std::string& dir) {
  const fs::path root(dir);
  if (!fs::exists(root / "meta.txt")) {
    throw DataError(dir + ": not a dataset directory (no meta.txt)");
  }
  auto settings = Settings::parse_file((root / "meta.txt").string());
  Dataset data;
  std::size_t num_samples = 0;
  auto get = [&](const char* key) -> std::size_t {
    auto v = settings.take(key);
    if (!v) throw DataError(dir + "/meta.txt: missing " + key);
    try {
      return std::stoul(*v);
    } catch (const std::logic_error&) {
      throw DataError(dir + "/meta.txt: bad " + std::string(key));
    }
  };
  if (auto f = settings.take("format"); !f || *f != "svip-dataset-v1") {
    throw DataError(dir + "/meta.txt: unsupported dataset format");
  }
  data.image_size = get("image_size");
  data.channels = get("channels");
  data.grid = get("grid");
  num_samples = get("num_samples");
  settings.take("hash");
  data.attributes = load_attribute_matrix((root / "attributes.csv").string());
  if (fs::exists(root / "words.txt")) {
    data.words = load_word_embeddings((root / "words.txt").string());
  }

  std::ifstream csv(root / "samples.csv");
  std::ifstream bin(root / "images.bin", std::ios::binary);
  if (!csv || !bin) throw DataError(dir + ": missing samples.csv or images.bin");
  std::string line;
  std::getline(csv, line);
  const std::size_t px = data.image_size * data.image_size * data.channels;
  const std::size_t cells = data.grid * data.grid;
  std::size_t lineno = 1;
  while (std::getline(csv, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto where = dir + "/samples.csv:" + std::to_string(lineno) + ": ";
    auto f = split_csv(line);
    if (f.size() != 4) throw DataError(where + "expected 4 fields");
    Sample s;
    try {
      s.class_id = std::stoi(f[1]);
    } catch (const std::logic_error&) {
      throw DataError(where + "bad class id");
    }
    if (!data.attributes.contains(s.class_id)) {
      throw DataError(where + "class " + f[1] + " not in attributes.csv");
    }
    if (f[2] != "train" && f[2] != "test") {
      throw DataError(where + "subset must be train or test");
    }
    s.train = f[2] == "train";
    if (s.train &&
        data.attributes.splits()[data.attributes.row_of(s.class_id)] != Split::kSeen) {
      throw DataError(where + "training sample from unseen class " + f[1]);
    }
    if (f[3].size() != cells && !f[3].empty()) {
      throw DataError(where + "glyph mask length differs from grid");
    }
    for (char ch : f[3]) s.glyph_cells.push_back(ch == '1' ? 1 : 0);
    s.pixels.resize(px);
    bin.read(reinterpret_cast<char*>(s.pixels.data()),
             static_cast<std::streamsize>(px));
    if (bin.gcount() != static_cast<std::streamsize>(px)) {
      throw DataError(dir + "/images.bin: truncated at sample " +
                      std::to_string(data.samples.size()));
    }
    data.samples.push_back(std::move(s));
  }
  if (data.samples.size() != num_samples) {
    throw DataError(dir + ": meta.txt lists " + std::to_string(num_samples) +
                    " samples, found " + std::to_string(data.samples.size()));
  }
  return data;
}

}  // namespace svip
