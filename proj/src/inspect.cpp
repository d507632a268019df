#include "svip/inspect.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "svip/errors.hpp"
#include "svip/imageio.hpp"

namespace svip {

namespace {

void write_grid_csv(const std::string& path, std::size_t grid,
                    std::span<const std::optional<double>> cells) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  char buf[32];
  for (std::size_t r = 0; r < grid; ++r) {
    for (std::size_t c = 0; c < grid; ++c) {
      if (c) out << ',';
      if (const auto& v = cells[r * grid + c]) {
        std::snprintf(buf, sizeof buf, "%.9g", *v);
        out << buf;
      }
    }
    out << '\n';
  }
}

std::vector<std::optional<double>> dense(std::span<const double> v) {
  return {v.begin(), v.end()};
}

void write_map(const std::string& stem, std::size_t grid,
               std::span<const std::optional<double>> cells) {
  write_grid_csv(stem + ".csv", grid, cells);
  write_heatmap(stem + ".pgm", grid, grid, cells);
}

}  // namespace

Inspection inspect_image(const SvipModel& model, const TrainConfig& cfg,
                         const Tensor& image, const AttributeMatrix* classes) {
  Inspection ins;
  ins.grid = model.vit.grid();
  const Tensor patches = patchify(image, model.vit.patch_size);

  const Tensor v = embed_patches(patches, model.backbone);
  auto pass1 = forward(embed_sequence(v, model.backbone), model.backbone,
                       model.vit);
  ins.pseudo = pseudo_scores(aggregate_attention(pass1.trace));

  auto enc = encode(model, patches, cfg);
  ins.predicted = enc.predicted_scores;
  ins.mask = enc.mask;
  auto pooled = enc.attributes.pooled.data();
  ins.pooled.assign(pooled.begin(), pooled.end());

  const auto& a = enc.attributes.patch_attributes;
  if (a.numel() > 0) {
    const std::size_t k = a.cols();
    ins.heatmaps.assign(k, std::vector<std::optional<double>>(
                               model.vit.num_patches()));
    for (std::size_t r = 0; r < ins.mask.m(); ++r) {
      for (std::size_t j = 0; j < k; ++j) {
        ins.heatmaps[j][ins.mask.indices[r]] = a.at(r, j);
      }
    }
  }

  if (!classes) return ins;
  auto pick = [&](std::vector<std::size_t> rows) -> std::optional<int> {
    if (rows.empty()) return std::nullopt;
    const Tensor probs =
        classify(enc.attributes.pooled, *classes, rows, cfg.sigma);
    auto p = probs.data();
    std::size_t best = 0;
    for (std::size_t i = 1; i < p.size(); ++i)
      if (p[i] > p[best]) best = i;
    return classes->class_ids()[rows[best]];
  };
  ins.zsl_class = pick(classes->rows_with(Split::kUnseen));
  ins.gzsl_class = pick(classes->all_rows());
  return ins;
}

void write_inspection(const Inspection& ins, const std::string& dir,
                      const std::vector<std::string>& attribute_names) {
  std::filesystem::create_directories(dir);
  const auto base = std::filesystem::path(dir);
  write_map((base / "pseudo_scores").string(), ins.grid, dense(ins.pseudo));
  if (!ins.predicted.empty()) {
    write_map((base / "predicted_scores").string(), ins.grid,
              dense(ins.predicted));
  }
  std::vector<double> mask(ins.mask.num_patches, 0.0);
  for (auto i : ins.mask.indices) mask[i] = 1.0;
  write_map((base / "mask").string(), ins.grid, dense(mask));

  auto name_of = [&](std::size_t k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "attr_%02zu", k);
    return k < attribute_names.size() ? attribute_names[k] : std::string(buf);
  };
  for (std::size_t k = 0; k < ins.heatmaps.size(); ++k) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "heatmap_%02zu", k);
    write_map((base / stem).string(), ins.grid, ins.heatmaps[k]);
  }

  std::ofstream pooled(base / "pooled.csv");
  pooled << "attribute,value\n";
  pooled.precision(17);
  for (std::size_t k = 0; k < ins.pooled.size(); ++k) {
    pooled << name_of(k) << ',' << ins.pooled[k] << '\n';
  }

  nlohmann::json j;
  j["grid"] = ins.grid;
  j["selected"] = ins.mask.indices;
  if (ins.zsl_class) j["zsl_prediction"] = *ins.zsl_class;
  if (ins.gzsl_class) j["gzsl_prediction"] = *ins.gzsl_class;
  j["pooled"] = ins.pooled;
  std::ofstream(base / "summary.json") << j.dump(2) << '\n';
}

}  // namespace svip
