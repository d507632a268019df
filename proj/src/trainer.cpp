#include "svip/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "svip/errors.hpp"
#include "svip/ops.hpp"

namespace svip {

namespace {

constexpr double kProbFloor = 1e-12;

std::vector<double> values(const Tensor& t) {
  auto d = t.data();
  return {d.begin(), d.end()};
}

Tensor as_row(const Tensor& t) { return ops::reshape(t, {1, t.numel()}); }

Tensor renormalized(const Tensor& p) {
  Tensor c = ops::clamp(as_row(p), kProbFloor,
                        std::numeric_limits<double>::max());
  return ops::div_scalar(c, ops::sum(c));
}

std::vector<std::size_t> seen_rows(const AttributeMatrix& classes) {
  return classes.rows_with(Split::kSeen);
}

std::size_t label_index_of(const AttributeMatrix& classes,
                           std::span<const std::size_t> seen, int label) {
  if (!classes.contains(label)) {
    throw DataError("label " + std::to_string(label) + " is not a known class");
  }
  const auto row = classes.row_of(label);
  auto it = std::find(seen.begin(), seen.end(), row);
  if (it == seen.end()) {
    throw DataError("label " + std::to_string(label) +
                    " is not a seen class; training uses seen classes only");
  }
  return static_cast<std::size_t>(it - seen.begin());
}

SelectionMask all_patches(std::size_t n) {
  SelectionMask mask;
  mask.num_patches = n;
  mask.indices.resize(n);
  std::iota(mask.indices.begin(), mask.indices.end(), 0);
  return mask;
}

std::vector<std::size_t> shifted(std::span<const std::size_t> idx) {
  std::vector<std::size_t> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = idx[i] + 1;
  return out;
}

std::vector<std::size_t> leading_rows(std::size_t m) {
  std::vector<std::size_t> out(m);
  std::iota(out.begin(), out.end(), 1);
  return out;
}

// Attribute prediction from the final embeddings: P2A over the given patch
// rows, or the class-token head when P2A is off.
AttributePrediction attribute_head(const SvipModel& model, const Tensor& z,
                                   std::span<const std::size_t> rows,
                                   const Switches& sw) {
  if (!sw.p2a) {
    const std::size_t zero = 0;
    Tensor pooled = model.cls_head(ops::gather_rows(z, {&zero, 1}));
    return {Tensor{}, pooled, {}};
  }
  auto sel = ops::gather_rows(z, rows);
  return pool_attributes(project_attributes(sel, model.p2a));
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) -
                                  v.begin());
}

std::uint64_t fnv1a(std::span<const double> values, std::uint64_t h) {
  const auto* bytes = reinterpret_cast<const unsigned char*>(values.data());
  for (std::size_t i = 0; i < values.size_bytes(); ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
  return h;
}

// Second-pass sequence for a mask: contextualized, or only the kept patches.
PatchSequence second_pass_sequence(const SvipModel& model, const Tensor& v,
                                   const SelectionMask& mask,
                                   const Switches& sw) {
  if (sw.psc) {
    return embed_sequence(contextualize(v, mask, model.context_embedding(sw)),
                          model.backbone);
  }
  return embed_subsequence(v, mask.indices, model.backbone);
}

std::vector<std::size_t> second_pass_rows(const SelectionMask& mask,
                                          const Switches& sw) {
  return sw.psc ? shifted(mask.indices) : leading_rows(mask.m());
}

}  // namespace

Tensor jsd(const Tensor& p, const Tensor& q, DivergenceMode mode) {
  if (p.numel() != q.numel()) {
    throw UsageError("jsd: distributions have " + std::to_string(p.numel()) +
                     " and " + std::to_string(q.numel()) + " entries");
  }
  Tensor pn = renormalized(p), qn = renormalized(q);
  Tensor lp = ops::log(pn), lq = ops::log(qn);
  if (mode == DivergenceMode::kAsWritten) {
    return ops::scale(ops::sum(ops::mul(ops::sub(pn, qn), ops::sub(lp, lq))),
                      0.5);
  }
  Tensor m = ops::scale(ops::add(pn, qn), 0.5);
  Tensor lm = ops::log(m);
  Tensor kl_p = ops::sum(ops::mul(pn, ops::sub(lp, lm)));
  Tensor kl_q = ops::sum(ops::mul(qn, ops::sub(lq, lm)));
  return ops::scale(ops::add(kl_p, kl_q), 0.5);
}

double jsd_value(std::span<const double> p, std::span<const double> q,
                 DivergenceMode mode) {
  auto t = [](std::span<const double> v) {
    return Tensor::from({1, v.size()}, {v.begin(), v.end()});
  };
  return jsd(t(p), t(q), mode).item();
}

SelectionMask random_mask(const Tensor& patches, std::size_t m,
                          std::uint64_t seed) {
  const std::size_t n = patches.rows();
  if (m > n) {
    throw UsageError("random_mask: M = " + std::to_string(m) +
                     " exceeds patch count " + std::to_string(n));
  }
  std::mt19937_64 rng(fnv1a(patches.data(), 1469598103934665603ULL) ^ seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  SelectionMask mask;
  mask.num_patches = n;
  mask.indices.assign(order.begin(), order.begin() + static_cast<long>(m));
  std::sort(mask.indices.begin(), mask.indices.end());
  return mask;
}

SampleLoss sample_loss(const SvipModel& model, const Tensor& patches,
                       std::size_t label_index, const AttributeMatrix& classes,
                       const TrainConfig& cfg, std::mt19937_64* dropout_rng,
                       PinnedSample* pinned) {
  const Switches& sw = cfg.switches;
  const std::size_t n = patches.rows();
  const std::size_t m = cfg.resolve_m(n);
  const auto seen = seen_rows(classes);
  if (label_index >= seen.size()) {
    throw DataError("label index " + std::to_string(label_index) +
                    " is outside the seen classes");
  }

  ForwardOptions opts;
  opts.dropout = model.vit.dropout;
  opts.rng = dropout_rng;
  opts.record_trace = sw.ssps;

  SampleLoss out;
  Tensor v = embed_patches(patches, model.backbone);
  auto pass1 = forward(embed_sequence(v, model.backbone), model.backbone,
                       model.vit, opts);

  std::optional<Tensor> predicted;
  if (sw.ssps) {
    const Matrix w = aggregate_attention(pass1.trace);
    out.output.scores.raw = raw_scores(w);
    out.output.scores.pseudo = pseudo_scores(w);
    Tensor input = v.detach();
    if (pinned && pinned->empty()) {
      pinned->classifier_input = input;
    } else if (pinned) {
      input = pinned->classifier_input;
    }
    predicted = classify_patches(input, model.patch_classifier);
    out.output.scores.predicted = values(*predicted);
    out.output.mask = select_top_m(out.output.scores.predicted, m);
  } else if (sw.two_pass()) {
    out.output.mask = random_mask(patches, m, cfg.seed);
  } else {
    out.output.mask = all_patches(n);
  }
  const SelectionMask& mask = out.output.mask;

  const auto rows1 = shifted(mask.indices);
  auto attr1 = attribute_head(model, pass1.final_embeddings, rows1, sw);
  Tensor logits1 = cosine_logits(attr1.pooled, classes, seen, cfg.sigma);
  Tensor logp1 = ops::log_softmax(logits1, 1);
  out.output.p_original = values(ops::softmax(logits1, 1));
  out.cls = ops::scale(ops::pick(logp1, label_index), -1.0);

  if (sw.two_pass()) {
    opts.record_trace = false;
    auto pass2 = forward(second_pass_sequence(model, v, mask, sw),
                         model.backbone, model.vit, opts);
    const auto rows2 = second_pass_rows(mask, sw);
    auto attr2 = attribute_head(model, pass2.final_embeddings, rows2, sw);
    Tensor logits2 = cosine_logits(attr2.pooled, classes, seen, cfg.sigma);
    Tensor logp2 = ops::log_softmax(logits2, 1);
    Tensor p2 = ops::softmax(logits2, 1);
    out.output.p_contextualized = values(p2);
    out.cls = ops::sub(out.cls, ops::pick(logp2, label_index));
    if (sw.jsd) {
      out.jsd = jsd(ops::softmax(logits1, 1), p2, cfg.divergence);
    }
  }

  if (sw.ssps) {
    std::vector<double> targets =
        cfg.targets == TargetMode::kSoft
            ? out.output.scores.pseudo
            : binarize_top_m(out.output.scores.pseudo, m);
    if (pinned && pinned->targets.empty()) {
      pinned->targets = targets;
    } else if (pinned) {
      targets = pinned->targets;
    }
    out.patch = patch_loss(*predicted, targets);
  }
  return out;
}

namespace {

struct BatchGraph {
  Tensor total;
  LossComponents loss;
  std::vector<SampleOutput> samples;
  double accuracy = 0.0;
};

BatchGraph build_batch(const SvipModel& model, const Batch& batch,
                       const AttributeMatrix& classes, const TrainConfig& cfg,
                       std::mt19937_64* dropout_rng,
                       PinnedTargets* pinned = nullptr) {
  if (batch.patches.empty() || batch.patches.size() != batch.labels.size()) {
    throw UsageError("batch needs matching, non-empty patches and labels");
  }
  const auto seen = seen_rows(classes);
  std::vector<Tensor> cls, div, patch;
  if (pinned) pinned->resize(batch.patches.size());
  BatchGraph g;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < batch.patches.size(); ++i) {
    const auto label = label_index_of(classes, seen, batch.labels[i]);
    auto s = sample_loss(model, batch.patches[i], label, classes, cfg,
                         dropout_rng, pinned ? &(*pinned)[i] : nullptr);
    cls.push_back(s.cls);
    if (s.jsd) div.push_back(*s.jsd);
    if (s.patch) patch.push_back(*s.patch);
    const auto& final_p = s.output.p_contextualized.empty()
                              ? s.output.p_original
                              : s.output.p_contextualized;
    if (argmax(final_p) == label) ++correct;
    g.samples.push_back(std::move(s.output));
  }
  Tensor cls_mean = ops::mean_of(cls);
  Tensor total = cls_mean;
  g.loss.cls = cls_mean.item();
  if (!div.empty()) {
    Tensor d = ops::mean_of(div);
    g.loss.jsd = d.item();
    total = ops::add(total, ops::scale(d, cfg.lambda1));
  }
  if (!patch.empty()) {
    Tensor p = ops::mean_of(patch);
    g.loss.patch = p.item();
    total = ops::add(total, ops::scale(p, cfg.lambda2));
  }
  g.loss.total = total.item();
  g.total = total;
  g.accuracy = 100.0 * static_cast<double>(correct) /
               static_cast<double>(batch.patches.size());
  return g;
}

}  // namespace

Tensor batch_objective(const SvipModel& model, const Batch& batch,
                       const AttributeMatrix& classes, const TrainConfig& cfg,
                       PinnedTargets* pinned) {
  return build_batch(model, batch, classes, cfg, nullptr, pinned).total;
}

StepOutput two_pass_step(const Batch& batch, SvipModel& model,
                         const AttributeMatrix& classes, const TrainConfig& cfg,
                         Optimizer& optimizer, std::mt19937_64* dropout_rng) {
  auto g = build_batch(model, batch, classes, cfg, dropout_rng);
  std::vector<Tensor> params;
  for (auto& p : model.active_parameters(cfg.switches)) {
    p.tensor.mutable_grad();
    params.push_back(p.tensor);
  }
  g.total.backward();
  optimizer.step(params);
  return {g.loss, std::move(g.samples), g.accuracy};
}

StepOutput evaluate_step(const Batch& batch, const SvipModel& model,
                         const AttributeMatrix& classes,
                         const TrainConfig& cfg) {
  auto g = build_batch(model, batch, classes, cfg, nullptr);
  return {g.loss, std::move(g.samples), g.accuracy};
}

Encoding encode(const SvipModel& model, const Tensor& patches,
                const TrainConfig& cfg) {
  const Switches& sw = cfg.switches;
  const std::size_t n = patches.rows();
  const std::size_t m = cfg.resolve_m(n);
  Encoding enc;
  Tensor v = embed_patches(patches, model.backbone);
  ForwardOptions opts;
  opts.record_trace = false;

  if (sw.ssps) {
    enc.predicted_scores = values(classify_patches(v, model.patch_classifier));
    enc.mask = select_top_m(enc.predicted_scores, m);
  } else if (sw.two_pass()) {
    enc.mask = random_mask(patches, m, cfg.seed);
  } else {
    enc.mask = all_patches(n);
  }

  if (sw.two_pass()) {
    auto out = forward(second_pass_sequence(model, v, enc.mask, sw),
                       model.backbone, model.vit, opts);
    enc.attributes = attribute_head(model, out.final_embeddings,
                                    second_pass_rows(enc.mask, sw), sw);
  } else {
    auto out = forward(embed_sequence(v, model.backbone), model.backbone,
                       model.vit, opts);
    enc.attributes = attribute_head(model, out.final_embeddings,
                                    shifted(enc.mask.indices), sw);
  }
  for (double x : enc.attributes.pooled.data()) {
    if (!std::isfinite(x)) {
      throw NumericalError("inference produced a non-finite attribute vector");
    }
  }
  return enc;
}

InferResult infer(const Tensor& image, const SvipModel& model,
                  const AttributeMatrix& classes,
                  std::span<const std::size_t> candidate_rows,
                  const TrainConfig& cfg) {
  InferResult r;
  r.encoding = encode(model, patchify(image, model.vit.patch_size), cfg);
  r.probabilities = values(
      classify(r.encoding.attributes.pooled, classes, candidate_rows, cfg.sigma));
  r.predicted_class =
      classes.class_ids()[candidate_rows[argmax(r.probabilities)]];
  return r;
}

EvalReport evaluate(const SvipModel& model, const Dataset& data,
                    const TrainConfig& cfg) {
  const auto& classes = data.attributes;
  const auto unseen_rows = classes.rows_with(Split::kUnseen);
  const auto all_rows = classes.all_rows();
  auto ids = [&](std::span<const std::size_t> rows) {
    std::vector<int> out;
    for (auto r : rows) out.push_back(classes.class_ids()[r]);
    return out;
  };
  auto predict = [&](const Tensor& pooled,
                     std::span<const std::size_t> rows) {
    auto logits = values(cosine_logits(pooled, classes, rows, cfg.sigma));
    return classes.class_ids()[rows[argmax(logits)]];
  };

  EvalReport report;
  std::vector<double> aucs;
  std::size_t hits = 0, scored = 0;

  {
    std::vector<int> zsl, gzsl, labels;
    for (auto i : data.test_indices(Split::kUnseen)) {
      const auto& s = data.samples[i];
      auto enc = encode(model, patchify(data.image(i), model.vit.patch_size),
                        cfg);
      labels.push_back(s.class_id);
      zsl.push_back(predict(enc.attributes.pooled, unseen_rows));
      gzsl.push_back(predict(enc.attributes.pooled, all_rows));
      if (!enc.predicted_scores.empty() &&
          s.glyph_cells.size() == enc.predicted_scores.size()) {
        if (auto auc = roc_auc(enc.predicted_scores, s.glyph_cells)) {
          aucs.push_back(*auc);
          double pos = 0, neg = 0;
          std::size_t np = 0, nn = 0;
          for (std::size_t c = 0; c < s.glyph_cells.size(); ++c) {
            if (s.glyph_cells[c]) {
              pos += enc.predicted_scores[c];
              ++np;
            } else {
              neg += enc.predicted_scores[c];
              ++nn;
            }
          }
          if (pos / static_cast<double>(np) > neg / static_cast<double>(nn))
            ++hits;
          ++scored;
        }
      }
    }
    const auto unseen_ids = ids(unseen_rows);
    report.t1 = top1_per_class(zsl, labels, unseen_ids);
    report.u = top1_per_class(gzsl, labels, unseen_ids);
  }
  {
    std::vector<int> gzsl, labels;
    for (auto i : data.test_indices(Split::kSeen)) {
      auto enc = encode(model, patchify(data.image(i), model.vit.patch_size),
                        cfg);
      labels.push_back(data.samples[i].class_id);
      gzsl.push_back(predict(enc.attributes.pooled, all_rows));
    }
    report.s = top1_per_class(gzsl, labels, ids(classes.rows_with(Split::kSeen)));
  }
  report.h = harmonic_mean(report.u, report.s);
  if (!aucs.empty()) {
    report.selection_auc = std::accumulate(aucs.begin(), aucs.end(), 0.0) /
                           static_cast<double>(aucs.size());
    report.selection_hit_rate =
        static_cast<double>(hits) / static_cast<double>(scored);
  }
  return report;
}

Tensor resolve_word_embeddings(const Dataset& data, const TrainConfig& cfg) {
  const std::size_t k = data.attributes.num_attributes();
  Tensor words;
  if (!cfg.word_embedding_path.empty()) {
    words = load_word_embeddings(cfg.word_embedding_path).vectors;
  } else if (data.words.vectors.numel() > 0) {
    words = data.words.vectors;
  } else {
    words = synthetic_word_embeddings(k, cfg.word_dim, cfg.seed).vectors;
  }
  if (words.rows() != k) {
    throw DataError("word embeddings have " + std::to_string(words.rows()) +
                    " rows but the dataset has " + std::to_string(k) +
                    " attributes");
  }
  return words;
}

ViTConfig vit_for_dataset(ViTConfig vit, const Dataset& data) {
  vit.image_size = data.image_size;
  vit.channels = data.channels;
  vit.num_attributes = data.attributes.num_attributes();
  vit.num_seen_classes = data.attributes.rows_with(Split::kSeen).size();
  vit.validate();
  return vit;
}

std::string log_record(std::size_t step, std::size_t epoch,
                       const StepOutput& out) {
  nlohmann::json j;
  j["step"] = step;
  j["epoch"] = epoch;
  j["cls"] = out.loss.cls;
  if (out.loss.jsd) j["jsd"] = *out.loss.jsd;
  if (out.loss.patch) j["patch"] = *out.loss.patch;
  j["total"] = out.loss.total;
  j["acc"] = out.accuracy;
  return j.dump();
}

TrainResult train(SvipModel& model, const Dataset& data, const TrainConfig& cfg,
                  std::ostream* log) {
  cfg.validate(model.vit.num_patches());
  auto train_idx = data.indices(true);
  if (train_idx.empty()) throw DataError("dataset has no training images");

  std::vector<Tensor> cache(data.samples.size());
  for (auto i : train_idx) {
    cache[i] = patchify(data.image(i), model.vit.patch_size);
  }

  Optimizer optimizer(cfg.optimizer);
  std::mt19937_64 order_rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
  std::mt19937_64 dropout_rng(cfg.seed + 1);
  const std::size_t bs = std::max<std::size_t>(1, cfg.batch_size);

  TrainResult result;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), order_rng);
    double epoch_total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < train_idx.size(); start += bs) {
      Batch batch;
      const std::size_t end = std::min(train_idx.size(), start + bs);
      for (std::size_t j = start; j < end; ++j) {
        batch.patches.push_back(cache[train_idx[j]]);
        batch.labels.push_back(data.samples[train_idx[j]].class_id);
      }
      auto out = two_pass_step(batch, model, data.attributes, cfg, optimizer,
                               &dropout_rng);
      ++result.steps;
      if (log) *log << log_record(result.steps, epoch + 1, out) << '\n';
      epoch_total += out.loss.total;
      ++batches;
      result.last = out.loss;
    }
    result.epoch_loss.push_back(epoch_total / static_cast<double>(batches));
  }
  return result;
}

std::vector<std::pair<std::string, Switches>> ablation_settings() {
  Switches full;
  auto without = [&](bool Switches::*field) {
    Switches s = full;
    s.*field = false;
    return s;
  };
  return {{"Baseline", Switches{false, false, false, false, false}},
          {"w/o SSPS", without(&Switches::ssps)},
          {"w/o PSC", without(&Switches::psc)},
          {"w/o JSD", without(&Switches::jsd)},
          {"w/o W2P", without(&Switches::w2p)},
          {"w/o P2A", without(&Switches::p2a)},
          {"SVIP", full}};
}

std::vector<AblationRow> run_ablation(
    const ViTConfig& vit, const TrainConfig& cfg, const Dataset& data,
    const std::function<void(const AblationRow&)>& on_row) {
  const ViTConfig model_cfg = vit_for_dataset(vit, data);
  const Tensor words = resolve_word_embeddings(data, cfg);
  std::vector<AblationRow> rows;
  for (const auto& [name, sw] : ablation_settings()) {
    TrainConfig c = cfg;
    c.switches = sw;
    auto model = SvipModel::create(model_cfg, words, c.seed);
    auto tr = train(model, data, c);
    AblationRow row{name, sw, evaluate(model, data, c), tr.last};
    if (on_row) on_row(row);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
  std::string out;
  char buf[200];
  std::snprintf(buf, sizeof buf, "%-10s %4s %4s %4s %4s %4s | %6s %6s %6s %6s\n",
                "setting", "SSPS", "PSC", "JSD", "W2P", "P2A", "T1", "U", "S",
                "H");
  out += buf;
  auto mark = [](bool b) { return b ? "x" : "-"; };
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf,
                  "%-10s %4s %4s %4s %4s %4s | %6.1f %6.1f %6.1f %6.1f\n",
                  r.name.c_str(), mark(r.switches.ssps), mark(r.switches.psc),
                  mark(r.switches.jsd), mark(r.switches.w2p),
                  mark(r.switches.p2a), r.report.t1, r.report.u, r.report.s,
                  r.report.h);
    out += buf;
  }
  return out;
}

}  // namespace svip
