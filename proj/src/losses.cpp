#include "pll/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace pll {

namespace {

void check_shapes(const Matrix& probs, const PartialLabelMatrix& labels, const char* what) {
  if (probs.rows() != labels.num_clips() || probs.cols() != labels.num_classes()) {
    throw std::invalid_argument(fmt::format("{}: probabilities {}x{} vs labels {}x{}", what,
                                            probs.rows(), probs.cols(), labels.num_clips(),
                                            labels.num_classes()));
  }
}

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

double bce_term(double p, double y) { return -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p)); }

double bce_grad(double p, double y) { return (p - y) / (p * (1.0 - p)); }

}  // namespace

std::size_t LossMask::count_ones() const {
  return static_cast<std::size_t>(std::count(values_.begin(), values_.end(), std::uint8_t{1}));
}

std::size_t LossMask::zeros_in_column(std::size_t c) const {
  std::size_t n = 0;
  for (std::size_t r = 0; r < rows_; ++r) n += (*this)(r, c) == 0 ? 1 : 0;
  return n;
}

LossMask LossMask::select_rows(std::span<const std::size_t> rows) const {
  LossMask out(rows.size(), cols_);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(values_.begin() + static_cast<std::ptrdiff_t>(rows[i] * cols_), cols_,
                out.values_.begin() + static_cast<std::ptrdiff_t>(i * cols_));
  }
  return out;
}

LossValue bce_full(const Matrix& clip_probs, const PartialLabelMatrix& labels) {
  check_shapes(clip_probs, labels, "bce_full");
  if (clip_probs.empty()) throw std::invalid_argument("bce_full: empty batch");
  const double scale = 1.0 / static_cast<double>(clip_probs.size());
  LossValue out{0.0, Matrix(clip_probs.rows(), clip_probs.cols())};
  for (std::size_t i = 0; i < clip_probs.rows(); ++i) {
    for (std::size_t k = 0; k < clip_probs.cols(); ++k) {
      const double p = clamp_prob(clip_probs(i, k));
      const double y = labels(i, k) == LabelState::Positive ? 1.0 : 0.0;
      out.loss += bce_term(p, y);
      out.grad(i, k) = bce_grad(p, y) * scale;
    }
  }
  out.loss *= scale;
  return out;
}

LossValue bce_masked(const Matrix& clip_probs, const PartialLabelMatrix& labels,
                     const LossMask& mask) {
  check_shapes(clip_probs, labels, "bce_masked");
  if (mask.rows() != clip_probs.rows() || mask.cols() != clip_probs.cols()) {
    throw std::invalid_argument("bce_masked: mask shape differs from probabilities");
  }
  LossValue out{0.0, Matrix(clip_probs.rows(), clip_probs.cols())};
  const std::size_t count = mask.count_ones();
  if (count == 0) return out;
  const double scale = 1.0 / static_cast<double>(count);
  for (std::size_t i = 0; i < clip_probs.rows(); ++i) {
    for (std::size_t k = 0; k < clip_probs.cols(); ++k) {
      if (mask(i, k) == 0) continue;
      const double p = clamp_prob(clip_probs(i, k));
      const double y = labels(i, k) == LabelState::Positive ? 1.0 : 0.0;
      out.loss += bce_term(p, y);
      out.grad(i, k) = bce_grad(p, y) * scale;
    }
  }
  out.loss *= scale;
  return out;
}

LossMask default_mask(const PartialLabelMatrix& labels) {
  LossMask mask(labels.num_clips(), labels.num_classes(), 0);
  for (std::size_t i = 0; i < labels.num_clips(); ++i) {
    for (std::size_t k = 0; k < labels.num_classes(); ++k) mask.set(i, k, is_observed(labels(i, k)));
  }
  return mask;
}

LossValue consistency_mse(const Matrix& student_probs, const Matrix& teacher_probs) {
  if (!student_probs.same_shape(teacher_probs)) {
    throw std::invalid_argument("consistency_mse: student and teacher shapes differ");
  }
  if (student_probs.empty()) throw std::invalid_argument("consistency_mse: empty batch");
  const double scale = 1.0 / static_cast<double>(student_probs.size());
  LossValue out{0.0, Matrix(student_probs.rows(), student_probs.cols())};
  const auto s = student_probs.values();
  const auto t = teacher_probs.values();
  auto g = out.grad.values();
  for (std::size_t k = 0; k < s.size(); ++k) {
    const double d = s[k] - t[k];
    out.loss += d * d;
    g[k] = 2.0 * d * scale;
  }
  out.loss *= scale;
  return out;
}

double combined_loss(double supervised, double consistency, double beta) {
  if (!(beta >= 0.0)) throw std::invalid_argument("combined_loss: beta must be >= 0");
  return supervised + beta * consistency;
}

Matrix combined_gradient(const Matrix& supervised, const Matrix& consistency, double beta) {
  if (!supervised.same_shape(consistency)) {
    throw std::invalid_argument("combined_gradient: shapes differ");
  }
  Matrix out(supervised.rows(), supervised.cols());
  for (std::size_t k = 0; k < out.size(); ++k) {
    out.values()[k] = supervised.values()[k] + beta * consistency.values()[k];
  }
  return out;
}

}  // namespace pll
