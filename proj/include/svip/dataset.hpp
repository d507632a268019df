#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "svip/config.hpp"
#include "svip/tensor.hpp"
#include "svip/zslhead.hpp"

namespace svip {

struct Sample {
  int class_id = 0;
  bool train = false;                      // seen-class training image
  std::vector<std::uint8_t> pixels;        // H x W x Ch, row-major
  std::vector<std::uint8_t> glyph_cells;   // N entries; 1 = attribute glyph
};

struct WordEmbeddings {
  std::vector<std::string> names;
  Tensor vectors;  // [K, d]
};

struct Dataset {
  std::size_t image_size = 0;
  std::size_t channels = 1;
  std::size_t grid = 0;  // patch cells per side that glyph_cells refers to
  AttributeMatrix attributes;
  WordEmbeddings words;
  std::vector<Sample> samples;

  // Pixels scaled to [0, 1] as an [H, W, Ch] tensor.
  Tensor image(std::size_t index) const;
  std::vector<std::size_t> indices(bool train) const;
  std::vector<std::size_t> test_indices(Split split) const;
};

// K deterministic binary 8x8 patterns (1 = ink), independent of any seed and
// pairwise at Hamming distance >= 16.
std::vector<std::vector<std::uint8_t>> glyph_library(std::size_t k);

// Seeded random unit-norm rows; stands in when no word-vector file is given.
WordEmbeddings synthetic_word_embeddings(std::size_t k, std::size_t dim,
                                         std::uint64_t seed);

// Seen classes get ids 0..S-1, unseen S..S+U-1. Every attribute is active in
// at least one seen class, so unseen classes recombine seen glyphs.
Dataset generate_synthetic(const SyntheticSpec& spec);

// FNV-1a over labels, splits, pixels, and glyph masks.
std::uint64_t dataset_hash(const Dataset& data);

// CSV with header `class_id,split,a_1..a_K`. Errors name the offending line.
AttributeMatrix load_attribute_matrix(const std::string& path);
void save_attribute_matrix(const AttributeMatrix& attrs, const std::string& path);

// One attribute per line: `name v_1 ... v_d`; bound to attributes by order.
WordEmbeddings load_word_embeddings(const std::string& path);
void save_word_embeddings(const WordEmbeddings& words, const std::string& path);

// Directory layout: meta.txt, attributes.csv, words.txt, samples.csv,
// images.bin, preview/class_<id>.pgm.
void save_dataset(const Dataset& data, const std::string& dir);
Dataset load_dataset(const std::string& dir);

}  // namespace svip
