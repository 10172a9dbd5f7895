#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "pll/data_model.hpp"
#include "pll/tensor.hpp"

namespace pll {

/// Scores plus tri-state labels. Only observed entries are ever scored.
struct EvalTable {
  Matrix scores;
  PartialLabelMatrix labels;

  void check() const;
};

struct F1Result {
  double macro = 0.0;
  /// Per-class F1; std::nullopt for classes without any observed entry.
  std::vector<std::optional<double>> per_class;
};

/// Per class over observed entries: predicted positive iff score >= threshold;
/// F1 = 2PR/(P+R), or 0 when the denominator is 0. Macro = mean over classes
/// with at least one observed entry.
F1Result macro_f1(const EvalTable& table, double threshold = 0.5);

enum class AveragingMode { Micro, Macro };

/// Non-interpolated average precision of one ranked list.
///
/// Entries are sorted by descending score; tied scores form one group and
/// contribute at the group end. Returns std::nullopt when there is no positive.
/// positive[i] is 1 for a positive entry, 0 otherwise.
std::optional<double> average_precision(std::span<const double> scores,
                                        std::span<const std::uint8_t> positive);

struct AuprcResult {
  double value = 0.0;
  /// Classes skipped in macro mode because they lack an observed positive or negative.
  std::vector<std::size_t> skipped_classes;
};

/// Macro: mean per-class AP over scoreable classes. Micro: AP over every
/// observed (score, label) pair pooled. Throws std::invalid_argument when
/// nothing is scoreable.
AuprcResult auprc(const EvalTable& table, AveragingMode mode);

}  // namespace pll
