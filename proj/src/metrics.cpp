#include "pll/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace pll {

void EvalTable::check() const {
  if (scores.rows() != labels.num_clips() || scores.cols() != labels.num_classes()) {
    throw std::invalid_argument("eval table: scores and labels differ in shape");
  }
}

F1Result macro_f1(const EvalTable& table, double threshold) {
  table.check();
  const std::size_t c = table.labels.num_classes();
  F1Result out;
  out.per_class.assign(c, std::nullopt);
  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t k = 0; k < c; ++k) {
    std::size_t tp = 0, fp = 0, fn = 0, observed = 0;
    for (std::size_t i = 0; i < table.labels.num_clips(); ++i) {
      const auto s = table.labels(i, k);
      if (!is_observed(s)) continue;
      ++observed;
      const bool pred = table.scores(i, k) >= threshold;
      const bool truth = s == LabelState::Positive;
      tp += pred && truth;
      fp += pred && !truth;
      fn += !pred && truth;
    }
    if (observed == 0) continue;
    const double precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    const double denom = precision + recall;
    const double f1 = denom > 0.0 ? 2.0 * precision * recall / denom : 0.0;
    out.per_class[k] = f1;
    sum += f1;
    ++counted;
  }
  if (counted == 0) throw std::invalid_argument("macro_f1: no observed label entries");
  out.macro = sum / static_cast<double>(counted);
  return out;
}

std::optional<double> average_precision(std::span<const double> scores,
                                        std::span<const std::uint8_t> positive) {
  if (scores.size() != positive.size()) throw std::invalid_argument("average_precision: length mismatch");
  const auto n_pos = static_cast<std::size_t>(std::count(positive.begin(), positive.end(), std::uint8_t{1}));
  if (n_pos == 0) return std::nullopt;

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  const double total = static_cast<double>(n_pos);
  std::size_t tp = 0, fp = 0;
  double prev_recall = 0.0;
  double ap = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      (positive[order[i]] != 0 ? tp : fp) += 1;
      ++i;
    }
    const double recall = static_cast<double>(tp) / total;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

AuprcResult auprc(const EvalTable& table, AveragingMode mode) {
  table.check();
  const std::size_t n = table.labels.num_clips();
  const std::size_t c = table.labels.num_classes();
  AuprcResult out;

  if (mode == AveragingMode::Micro) {
    std::vector<double> s;
    std::vector<std::uint8_t> y;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < c; ++k) {
        const auto state = table.labels(i, k);
        if (!is_observed(state)) continue;
        s.push_back(table.scores(i, k));
        y.push_back(state == LabelState::Positive);
      }
    }
    const auto ap = average_precision(s, y);
    if (!ap) throw std::invalid_argument("auprc: no observed positive label");
    out.value = *ap;
    return out;
  }

  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t k = 0; k < c; ++k) {
    std::vector<double> s;
    std::vector<std::uint8_t> y;
    std::size_t neg = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto state = table.labels(i, k);
      if (!is_observed(state)) continue;
      s.push_back(table.scores(i, k));
      y.push_back(state == LabelState::Positive ? 1 : 0);
      neg += state == LabelState::Negative;
    }
    const auto ap = average_precision(s, y);
    if (!ap || neg == 0) {
      out.skipped_classes.push_back(k);
      continue;
    }
    sum += *ap;
    ++counted;
  }
  if (counted == 0) throw std::invalid_argument("auprc: no class has both observed positives and negatives");
  out.value = sum / static_cast<double>(counted);
  return out;
}

}  // namespace pll
