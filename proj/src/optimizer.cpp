#include "pll/optimizer.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <fmt/format.h>

#include "pll/io_util.hpp"

namespace pll {

namespace {

constexpr std::string_view kAdamMagic = "PLLADM01";

void require_same_shape(const AttentionMILParams& a, const AttentionMILParams& b, const char* what) {
  if (a.shape() != b.shape()) throw std::invalid_argument(fmt::format("{}: shape mismatch", what));
}

}  // namespace

AdamState AdamState::for_params(const AttentionMILParams& params, double lr, double weight_decay) {
  AdamState s;
  s.m = AttentionMILParams::zeros(params.shape());
  s.v = AttentionMILParams::zeros(params.shape());
  s.lr = lr;
  s.weight_decay = weight_decay;
  return s;
}

void adam_step(AttentionMILParams& params, const AttentionMILParams& grads, AdamState& state) {
  require_same_shape(params, grads, "adam_step");
  require_same_shape(params, state.m, "adam_step");
  require_same_shape(params, state.v, "adam_step");
  if (!(state.lr > 0.0)) throw std::invalid_argument("adam_step: lr must be > 0");

  const auto g = grads.tensors();
  const auto names = grads.tensor_names();
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (double x : g[i]) {
      if (!std::isfinite(x)) {
        throw std::domain_error(fmt::format("adam_step: non-finite gradient in {}", names[i]));
      }
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  auto p = params.tensors();
  auto m = state.m.tensors();
  auto v = state.v.tensors();
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t k = 0; k < p[i].size(); ++k) {
      const double gk = g[i][k];
      m[i][k] = state.beta1 * m[i][k] + (1.0 - state.beta1) * gk;
      v[i][k] = state.beta2 * v[i][k] + (1.0 - state.beta2) * gk * gk;
      const double m_hat = m[i][k] / bc1;
      const double v_hat = v[i][k] / bc2;
      p[i][k] -= state.lr * (m_hat / (std::sqrt(v_hat) + state.eps) + state.weight_decay * p[i][k]);
    }
  }
}

void ema_update(AttentionMILParams& teacher, const AttentionMILParams& student, double alpha) {
  require_same_shape(teacher, student, "ema_update");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("ema_update: alpha must be in [0, 1]");
  auto t = teacher.tensors();
  const auto s = student.tensors();
  for (std::size_t i = 0; i < t.size(); ++i) {
    for (std::size_t k = 0; k < t[i].size(); ++k) t[i][k] = alpha * t[i][k] + (1.0 - alpha) * s[i][k];
  }
}

void write_adam_state(std::ostream& out, const AdamState& state) {
  const auto s = state.m.shape();
  io::write_magic(out, kAdamMagic);
  io::write_u32(out, io::checked_u32(s.layers, "L"));
  io::write_u32(out, io::checked_u32(s.hidden, "H"));
  io::write_u32(out, io::checked_u32(s.num_classes, "C"));
  io::write_u32(out, io::checked_u32(s.embed_dim, "D"));
  io::write_u64(out, state.step);
  for (double x : {state.lr, state.beta1, state.beta2, state.eps, state.weight_decay}) io::write_f64(out, x);
  for (const auto* moments : {&state.m, &state.v}) {
    for (auto t : moments->tensors()) {
      for (double x : t) io::write_f32(out, static_cast<float>(x));
    }
  }
}

AdamState read_adam_state(std::istream& in) {
  io::expect_magic(in, kAdamMagic);
  NetworkShape s;
  s.layers = io::read_u32(in);
  s.hidden = io::read_u32(in);
  s.num_classes = io::read_u32(in);
  s.embed_dim = io::read_u32(in);
  AdamState state;
  state.m = AttentionMILParams::zeros(s);
  state.v = AttentionMILParams::zeros(s);
  state.step = io::read_u64(in);
  state.lr = io::read_f64(in);
  state.beta1 = io::read_f64(in);
  state.beta2 = io::read_f64(in);
  state.eps = io::read_f64(in);
  state.weight_decay = io::read_f64(in);
  for (auto* moments : {&state.m, &state.v}) {
    for (auto t : moments->tensors()) {
      for (auto& x : t) x = io::read_f32(in);
    }
  }
  return state;
}

void save_adam_state(const std::filesystem::path& path, const AdamState& state) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(DataErrorKind::Io, fmt::format("cannot write '{}'", path.string()));
  write_adam_state(out, state);
}

AdamState load_adam_state(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataErrorKind::Io, fmt::format("cannot open '{}'", path.string()));
  return read_adam_state(in);
}

}  // namespace pll
