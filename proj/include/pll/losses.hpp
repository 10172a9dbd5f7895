#pragma once

#include <cstdint>
#include <vector>

#include "pll/data_model.hpp"
#include "pll/tensor.hpp"

namespace pll {

/// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] before any logarithm.
inline constexpr double kProbClamp = 1e-7;

/// Binary N x C mask; 1 = entry contributes to the supervised loss.
class LossMask {
 public:
  LossMask() = default;
  LossMask(std::size_t rows, std::size_t cols, std::uint8_t fill = 1)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::uint8_t operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  void set(std::size_t r, std::size_t c, bool on) { values_[r * cols_ + c] = on ? 1 : 0; }

  std::size_t count_ones() const;
  std::size_t zeros_in_column(std::size_t c) const;
  LossMask select_rows(std::span<const std::size_t> rows) const;

  friend bool operator==(const LossMask&, const LossMask&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> values_;
};

/// A scalar loss and its gradient w.r.t. the (batch x C) probabilities.
struct LossValue {
  double loss = 0.0;
  Matrix grad;
};

/// Missing-as-negative BCE averaged over all batch*C entries.
LossValue bce_full(const Matrix& clip_probs, const PartialLabelMatrix& labels);

/// BCE over mask==1 entries (targets: Positive -> 1, otherwise 0), divided
/// by the number of such entries. An all-zero mask gives loss 0 and zero gradient.
LossValue bce_masked(const Matrix& clip_probs, const PartialLabelMatrix& labels,
                     const LossMask& mask);

/// 1 where the label is observed, 0 where Missing.
LossMask default_mask(const PartialLabelMatrix& labels);

/// Mean squared error between student and teacher outputs; the teacher is a constant.
LossValue consistency_mse(const Matrix& student_probs, const Matrix& teacher_probs);

double combined_loss(double supervised, double consistency, double beta);
/// grad_supervised + beta * grad_consistency, entrywise.
Matrix combined_gradient(const Matrix& supervised, const Matrix& consistency, double beta);

}  // namespace pll
