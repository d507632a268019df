// svip command-line tool: data generation, training, evaluation, ablation,
// inspection and gradient checks.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "svip/checkpoint.hpp"
#include "svip/dataset.hpp"
#include "svip/errors.hpp"
#include "svip/gradsuite.hpp"
#include "svip/imageio.hpp"
#include "svip/inspect.hpp"
#include "svip/trainer.hpp"

namespace {

using namespace svip;

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kNumerical = 2;

struct ModelSettings {
  ViTConfig vit;
  TrainConfig train;
};

ModelSettings read_model_settings(const std::string& path) {
  auto s = Settings::parse_file(path);
  ModelSettings out;
  apply(s, out.vit);
  apply(s, out.train);
  s.finish();
  return out;
}

int cmd_gen(const std::string& spec_path, const std::string& out_dir) {
  auto s = Settings::parse_file(spec_path);
  SyntheticSpec spec;
  apply(s, spec);
  s.finish();
  auto data = generate_synthetic(spec);
  save_dataset(data, out_dir);
  std::printf("wrote %zu images (%zu seen + %zu unseen classes, K=%zu) to %s\n",
              data.samples.size(), spec.seen_classes, spec.unseen_classes,
              spec.num_attributes, out_dir.c_str());
  std::printf("dataset hash %016llx\n",
              static_cast<unsigned long long>(dataset_hash(data)));
  return kOk;
}

int cmd_train(const std::string& config, const std::string& data_dir,
              const std::string& ckpt, std::string log_path) {
  auto ms = read_model_settings(config);
  auto data = load_dataset(data_dir);
  const auto vit = vit_for_dataset(ms.vit, data);
  ms.train.validate(vit.num_patches());
  auto model =
      SvipModel::create(vit, resolve_word_embeddings(data, ms.train), ms.train.seed);
  if (log_path.empty()) log_path = ckpt + ".log.jsonl";
  std::ofstream log(log_path);
  if (!log) throw DataError("cannot write training log " + log_path);
  auto result = train(model, data, ms.train, &log);
  save_checkpoint(ckpt, model, ms.train);
  std::printf("trained %zu steps over %zu epochs\n", result.steps,
              ms.train.epochs);
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    std::printf("  epoch %3zu  mean loss %.6f\n", e + 1, result.epoch_loss[e]);
  }
  std::printf("checkpoint: %s\nlog: %s\n", ckpt.c_str(), log_path.c_str());
  return kOk;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir,
             const std::string& protocol) {
  auto ck = load_checkpoint(ckpt_path);
  auto data = load_dataset(data_dir);
  if (data.attributes.num_attributes() != ck.vit.num_attributes) {
    throw DataError("dataset has " +
                    std::to_string(data.attributes.num_attributes()) +
                    " attributes, checkpoint expects " +
                    std::to_string(ck.vit.num_attributes));
  }
  if (data.image_size != ck.vit.image_size || data.channels != ck.vit.channels) {
    throw DataError("dataset image geometry does not match the checkpoint");
  }
  const auto r = evaluate(ck.model, data, ck.train);
  nlohmann::json j;
  j["protocol"] = protocol;
  if (protocol == "zsl") {
    std::printf("%-8s %8s\n", "metric", "value");
    std::printf("%-8s %8.1f\n", "T1", r.t1);
    j["T1"] = r.t1;
  } else {
    std::printf("%-8s %8s\n", "metric", "value");
    std::printf("%-8s %8.1f\n%-8s %8.1f\n%-8s %8.1f\n", "U", r.u, "S", r.s, "H",
                r.h);
    j["U"] = r.u;
    j["S"] = r.s;
    j["H"] = r.h;
  }
  if (r.selection_auc) {
    std::printf("%-8s %8.3f\n", "sel-AUC", *r.selection_auc);
    j["selection_auc"] = *r.selection_auc;
    j["selection_hit_rate"] = *r.selection_hit_rate;
  }
  std::printf("RESULT %s\n", j.dump().c_str());
  return kOk;
}

int cmd_ablate(const std::string& config, const std::string& data_dir) {
  auto ms = read_model_settings(config);
  auto data = load_dataset(data_dir);
  auto rows = run_ablation(ms.vit, ms.train, data, [](const AblationRow& r) {
    std::fprintf(stderr, "%-10s %s\n", r.name.c_str(),
                 format_report(r.report).c_str());
  });
  std::fputs(format_ablation_table(rows).c_str(), stdout);
  for (const auto& r : rows) {
    auto j = nlohmann::json::parse(report_json(r.report));
    j["setting"] = r.name;
    std::printf("RESULT %s\n", j.dump().c_str());
  }
  return kOk;
}

Tensor image_tensor(const RasterImage& img) {
  std::vector<double> px(img.pixels.size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = img.pixels[i] / 255.0;
  return Tensor::from({img.height, img.width, img.channels}, std::move(px));
}

int cmd_inspect(const std::string& ckpt_path, const std::string& image_path,
                const std::string& out_dir, const std::string& data_dir) {
  auto ck = load_checkpoint(ckpt_path);
  auto img = read_pnm(image_path);
  if (img.width != ck.vit.image_size || img.height != ck.vit.image_size ||
      img.channels != ck.vit.channels) {
    throw DataError(image_path + ": image is " + std::to_string(img.width) +
                    "x" + std::to_string(img.height) + "x" +
                    std::to_string(img.channels) + ", model expects " +
                    std::to_string(ck.vit.image_size) + "x" +
                    std::to_string(ck.vit.image_size) + "x" +
                    std::to_string(ck.vit.channels));
  }
  std::optional<Dataset> data;
  if (!data_dir.empty()) data = load_dataset(data_dir);
  auto ins = inspect_image(ck.model, ck.train, image_tensor(img),
                           data ? &data->attributes : nullptr);
  write_inspection(ins, out_dir, data ? data->words.names
                                      : std::vector<std::string>{});
  std::printf("selected %zu of %zu patches\n", ins.mask.m(),
              ins.mask.num_patches);
  if (ins.zsl_class) {
    std::printf("ZSL prediction: class %d\nGZSL prediction: class %d\n",
                *ins.zsl_class, *ins.gzsl_class);
  }
  std::printf("wrote %s\n", out_dir.c_str());
  return kOk;
}

int cmd_gradcheck(const std::string& config, double tolerance) {
  ViTConfig vit = minimal_vit();
  TrainConfig train = minimal_train();
  if (!config.empty()) {
    auto s = Settings::parse_file(config);
    apply(s, vit);
    apply(s, train);
    s.finish();
  }
  auto result = run_gradient_suite(vit, train);
  std::printf("%-44s %12s %12s %6s\n", "parameter", "max rel err",
              "max |grad|", "worst");
  for (const auto& e : result.entries) {
    std::printf("%-44s %12.3e %12.3e %6zu\n", e.name.c_str(), e.max_rel_error,
                e.max_abs_analytic, e.worst_index);
  }
  std::printf("\n%-20s %12s\n", "group", "max rel err");
  for (const auto& [g, err] : result.group_max) {
    std::printf("%-20s %12.3e %s\n", g.c_str(), err,
                err < tolerance ? "ok" : "FAIL");
  }
  const bool ok = result.passed(tolerance);
  std::printf("gradcheck %s (max rel err %.3e, tolerance %.1e)\n",
              ok ? "PASSED" : "FAILED", result.max_rel_error(), tolerance);
  return ok ? kOk : kNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SVIP zero-shot learning on a small vision transformer"};
  app.require_subcommand(1);

  std::string spec, out, config, data, ckpt, log, protocol = "gzsl", image,
                                                   inspect_data;
  double tolerance = 1e-4;

  auto* gen = app.add_subcommand("gen", "generate a synthetic glyph dataset");
  gen->add_option("--spec", spec, "dataset spec file")->required();
  gen->add_option("--out", out, "output directory")->required();

  auto* tr = app.add_subcommand("train", "train a model");
  tr->add_option("--config", config, "model/training config")->required();
  tr->add_option("--data", data, "dataset directory")->required();
  tr->add_option("--out", ckpt, "checkpoint path")->required();
  tr->add_option("--log", log, "training log (default <out>.log.jsonl)");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->add_option("--ckpt", ckpt, "checkpoint path")->required();
  ev->add_option("--data", data, "dataset directory")->required();
  ev->add_option("--protocol", protocol, "zsl or gzsl")
      ->check(CLI::IsMember({"zsl", "gzsl"}));

  auto* ab = app.add_subcommand("ablate", "train and evaluate every ablation");
  ab->add_option("--config", config, "model/training config")->required();
  ab->add_option("--data", data, "dataset directory")->required();

  auto* in = app.add_subcommand("inspect", "export score grids and heatmaps");
  in->add_option("--ckpt", ckpt, "checkpoint path")->required();
  in->add_option("--image", image, "PGM/PPM image")->required();
  in->add_option("--out", out, "output directory")->required();
  in->add_option("--data", inspect_data,
                 "dataset directory, for class predictions and names");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  gc->add_option("--config", config, "overrides for the minimal config");
  gc->add_option("--tolerance", tolerance, "max relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalid;
  }

  try {
    if (*gen) return cmd_gen(spec, out);
    if (*tr) return cmd_train(config, data, ckpt, log);
    if (*ev) return cmd_eval(ckpt, data, protocol);
    if (*ab) return cmd_ablate(config, data);
    if (*in) return cmd_inspect(ckpt, image, out, inspect_data);
    if (*gc) return cmd_gradcheck(config, tolerance);
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  }
  return kInvalid;
}
