#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "pll/network.hpp"

namespace pll {

struct AdamState {
  AttentionMILParams m;
  AttentionMILParams v;
  std::uint64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  /// Zero moments shaped like params.
  static AdamState for_params(const AttentionMILParams& params, double lr, double weight_decay);
};

/// One Adam step with decoupled weight decay:
/// theta -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta).
/// Throws std::domain_error naming the tensor if a gradient is non-finite.
void adam_step(AttentionMILParams& params, const AttentionMILParams& grads, AdamState& state);

/// teacher <- alpha * teacher + (1 - alpha) * student, elementwise.
void ema_update(AttentionMILParams& teacher, const AttentionMILParams& student, double alpha);

// "PLLADM01", u32 L, H, C, D, u64 step, f64 lr/beta1/beta2/eps/weight_decay,
// then float32 first moments followed by float32 second moments.
void write_adam_state(std::ostream& out, const AdamState& state);
AdamState read_adam_state(std::istream& in);
void save_adam_state(const std::filesystem::path& path, const AdamState& state);
AdamState load_adam_state(const std::filesystem::path& path);

}  // namespace pll
