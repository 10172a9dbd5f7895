#pragma once

#include <filesystem>
#include <limits>
#include <vector>

#include "pll/data_model.hpp"
#include "pll/losses.hpp"
#include "pll/tensor.hpp"
#include "pll/trainers.hpp"

namespace pll {

/// Threshold of a class without missing labels; nothing in it gets masked.
inline constexpr double kNoThreshold = std::numeric_limits<double>::infinity();

struct LEConfig {
  /// Percentile in [0, 100].
  double gamma = 10.0;
  /// Stage 1; trained with the B0 policy regardless of its method field.
  TrainConfig teacher;
  /// Stage 2; masked training with the enhanced mask.
  TrainConfig student;

  /// Teacher and student built from one run config. The student keeps the
  /// run seed, the teacher gets a derived one.
  static LEConfig from_train_config(const TrainConfig& config);
};

/// Per-class nearest-rank gamma-percentile of the scores at Missing entries:
/// sorted ascending, the element at 1-based rank ceil(gamma/100 * n), with
/// gamma = 0 giving the minimum. Classes with no Missing entry get kNoThreshold.
std::vector<double> class_thresholds(const Matrix& teacher_scores, const PartialLabelMatrix& labels,
                                     double gamma);

/// mask = 0 iff the label is Missing and score >= tau of its class.
LossMask enhance_mask(const PartialLabelMatrix& labels, const Matrix& teacher_scores,
                      const std::vector<double>& tau);

struct LEResult {
  AttentionMILParams student;
  TrainReport student_report;
  AttentionMILParams teacher;
  TrainReport teacher_report;
  /// Inference-mode teacher scores on the training set.
  Matrix teacher_scores;
  std::vector<double> tau;
  LossMask mask;
};

LEResult run_label_enhancing(const LEConfig& config, const Dataset& train, const Dataset& val);

/// teacher.pllnet, tau.csv (class_index,tau) and mask.csv (clip_id,class_index,mask).
void write_le_artifacts(const std::filesystem::path& dir, const LEResult& result, const Dataset& train);

}  // namespace pll
