#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "svip/config.hpp"
#include "svip/dataset.hpp"
#include "svip/metrics.hpp"
#include "svip/model.hpp"
#include "svip/optim.hpp"

namespace svip {

// Divergence between two distributions. Entries are clamped to >= 1e-12 and
// renormalized first. kAsWritten is the averaged two-way KL,
// 1/2 sum p log(p/q) + 1/2 sum q log(q/p); kTrueJsd is the mixture form.
// Throws UsageError on length mismatch.
Tensor jsd(const Tensor& p, const Tensor& q,
           DivergenceMode mode = DivergenceMode::kAsWritten);
double jsd_value(std::span<const double> p, std::span<const double> q,
                 DivergenceMode mode = DivergenceMode::kAsWritten);

struct Batch {
  std::vector<Tensor> patches;  // each [N, patch_dim], from patchify
  std::vector<int> labels;      // class ids; must be seen classes
};

struct LossComponents {
  double cls = 0.0;
  std::optional<double> jsd;    // absent when the divergence term is off
  std::optional<double> patch;  // absent when patch selection is off
  double total = 0.0;           // cls + l1 * jsd + l2 * patch
};

struct SampleOutput {
  std::vector<double> p_original;        // p(y | Z0) over seen classes
  std::vector<double> p_contextualized;  // p(y | Z0'); empty for one pass
  SelectionMask mask;
  SemanticScores scores;
};

struct StepOutput {
  LossComponents loss;
  std::vector<SampleOutput> samples;
  double accuracy = 0.0;  // percent of batch argmax == label
};

// Differentiable loss pieces for one image, before batch averaging.
struct SampleLoss {
  Tensor cls;
  std::optional<Tensor> jsd;
  std::optional<Tensor> patch;
  SampleOutput output;
};

// Detached values of one image held fixed across calls, so a
// finite-difference check sees the same constants as the analytic gradient.
struct PinnedSample {
  std::vector<double> targets;  // patch targets
  Tensor classifier_input;      // patch embeddings seen by the classifier
  bool empty() const { return !classifier_input.defined(); }
};
using PinnedTargets = std::vector<PinnedSample>;

// Both passes for one image. `label_index` indexes the seen-class rows of
// `classes`. The dropout RNG may be null when dropout is off. When `pinned`
// is non-null and empty it receives the detached values; when non-empty its
// contents replace them.
SampleLoss sample_loss(const SvipModel& model, const Tensor& patches,
                       std::size_t label_index, const AttributeMatrix& classes,
                       const TrainConfig& cfg, std::mt19937_64* dropout_rng,
                       PinnedSample* pinned = nullptr);

// Batch objective as a graph (for gradient checks): mean components composed
// as cls + l1 * jsd + l2 * patch.
Tensor batch_objective(const SvipModel& model, const Batch& batch,
                       const AttributeMatrix& classes, const TrainConfig& cfg,
                       PinnedTargets* pinned = nullptr);

// One training step: both passes per image, losses, backward, and an
// optimizer update over the parameters the switches use.
StepOutput two_pass_step(const Batch& batch, SvipModel& model,
                         const AttributeMatrix& classes, const TrainConfig& cfg,
                         Optimizer& optimizer,
                         std::mt19937_64* dropout_rng = nullptr);

// Same computation without backward or update.
StepOutput evaluate_step(const Batch& batch, const SvipModel& model,
                         const AttributeMatrix& classes, const TrainConfig& cfg);

// Test-time encoding of one image: predicted scores, top-M selection,
// contextualization, one forward pass, attribute localization.
struct Encoding {
  std::vector<double> predicted_scores;  // empty when patch selection is off
  SelectionMask mask;
  AttributePrediction attributes;  // patch map empty when p2a is off
};

struct InferResult {
  int predicted_class = 0;
  std::vector<double> probabilities;  // aligned with candidate rows
  Encoding encoding;
};

Encoding encode(const SvipModel& model, const Tensor& patches,
                const TrainConfig& cfg);
InferResult infer(const Tensor& image, const SvipModel& model,
                  const AttributeMatrix& classes,
                  std::span<const std::size_t> candidate_rows,
                  const TrainConfig& cfg);

// Deterministic per-image random selection used when classifier-driven
// selection is switched off.
SelectionMask random_mask(const Tensor& patches, std::size_t m,
                          std::uint64_t seed);

EvalReport evaluate(const SvipModel& model, const Dataset& data,
                    const TrainConfig& cfg);

struct TrainResult {
  std::size_t steps = 0;
  LossComponents last;
  std::vector<double> epoch_loss;  // mean total per epoch
};

// Word vectors for the model: the configured file, else the dataset's, else a
// seeded synthetic fallback.
Tensor resolve_word_embeddings(const Dataset& data, const TrainConfig& cfg);
ViTConfig vit_for_dataset(ViTConfig vit, const Dataset& data);

// Full training run on the dataset's training split. One JSON line per step
// goes to `log` when given.
TrainResult train(SvipModel& model, const Dataset& data, const TrainConfig& cfg,
                  std::ostream* log = nullptr);

std::string log_record(std::size_t step, std::size_t epoch,
                       const StepOutput& out);

struct AblationRow {
  std::string name;
  Switches switches;
  EvalReport report;
  LossComponents last_loss;
};

// The six ablation settings plus the full model, in table order.
std::vector<std::pair<std::string, Switches>> ablation_settings();

// Trains and evaluates every setting from the same seed.
std::vector<AblationRow> run_ablation(
    const ViTConfig& vit, const TrainConfig& cfg, const Dataset& data,
    const std::function<void(const AblationRow&)>& on_row = {});

std::string format_ablation_table(const std::vector<AblationRow>& rows);

}  // namespace svip
