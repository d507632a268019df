#include "svip/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <map>
#include <numeric>

#include <json.hpp>

#include "svip/errors.hpp"

namespace svip {

double harmonic_mean(double unseen, double seen) {
  if (unseen < 0.0 || seen < 0.0) {
    throw UsageError("harmonic_mean: accuracies must be non-negative");
  }
  if (unseen + seen == 0.0) return 0.0;
  return 2.0 * seen * unseen / (seen + unseen);
}

double top1_per_class(std::span<const int> predictions,
                      std::span<const int> labels, std::span<const int> classes,
                      std::vector<int>* skipped) {
  if (predictions.size() != labels.size()) {
    throw UsageError("top1_per_class: prediction and label counts differ");
  }
  std::map<int, std::pair<std::size_t, std::size_t>> tally;  // correct, total
  for (int c : classes) tally[c] = {0, 0};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto it = tally.find(labels[i]);
    if (it == tally.end()) {
      throw DataError("top1_per_class: label " + std::to_string(labels[i]) +
                      " is not in the evaluated class set");
    }
    it->second.second += 1;
    if (predictions[i] == labels[i]) it->second.first += 1;
  }
  double acc = 0.0;
  std::size_t counted = 0;
  for (const auto& [cls, ct] : tally) {
    if (ct.second == 0) {
      if (skipped) skipped->push_back(cls);
      std::cerr << "warning: class " << cls
                << " has no test samples; excluded from accuracy\n";
      continue;
    }
    acc += static_cast<double>(ct.first) / static_cast<double>(ct.second);
    ++counted;
  }
  return counted ? 100.0 * acc / static_cast<double>(counted) : 0.0;
}

std::optional<double> roc_auc(std::span<const double> scores,
                              std::span<const std::uint8_t> positive) {
  if (scores.size() != positive.size()) {
    throw UsageError("roc_auc: score and label counts differ");
  }
  // Rank-sum (Mann-Whitney) with average ranks for ties.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t npos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (positive[order[t]]) {
        pos_rank_sum += avg_rank;
        ++npos;
      }
    }
    i = j;
  }
  const std::size_t nneg = scores.size() - npos;
  if (npos == 0 || nneg == 0) return std::nullopt;
  const double np = static_cast<double>(npos), nn = static_cast<double>(nneg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

std::string format_report(const EvalReport& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "T1=%.1f U=%.1f S=%.1f H=%.1f", r.t1, r.u, r.s,
                r.h);
  std::string out = buf;
  if (r.selection_auc) {
    std::snprintf(buf, sizeof buf, " AUC=%.3f", *r.selection_auc);
    out += buf;
  }
  return out;
}

std::string report_json(const EvalReport& r) {
  nlohmann::json j;
  j["T1"] = r.t1;
  j["U"] = r.u;
  j["S"] = r.s;
  j["H"] = r.h;
  if (r.selection_auc) j["selection_auc"] = *r.selection_auc;
  if (r.selection_hit_rate) j["selection_hit_rate"] = *r.selection_hit_rate;
  return j.dump();
}

}  // namespace svip
