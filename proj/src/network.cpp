#include "pll/network.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "pll/io_util.hpp"
#include "pll/random.hpp"

namespace pll {

namespace {

constexpr std::string_view kParamsMagic = "PLLNET01";

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

DenseLayer make_layer(std::size_t in, std::size_t out) {
  return DenseLayer{Matrix(in, out), std::vector<double>(out, 0.0)};
}

// out = x W + b, x is (T x in).
Matrix affine(const Matrix& x, const DenseLayer& layer) {
  const std::size_t t_count = x.rows();
  const std::size_t in = layer.weight.rows();
  const std::size_t out = layer.weight.cols();
  Matrix y(t_count, out);
  for (std::size_t t = 0; t < t_count; ++t) {
    auto yr = y.row(t);
    std::copy(layer.bias.begin(), layer.bias.end(), yr.begin());
    const auto xr = x.row(t);
    for (std::size_t i = 0; i < in; ++i) {
      const double xv = xr[i];
      if (xv == 0.0) continue;
      const auto wr = layer.weight.row(i);
      for (std::size_t o = 0; o < out; ++o) yr[o] += xv * wr[o];
    }
  }
  return y;
}

// grad.weight += x^T dy, grad.bias += colsum(dy); returns dy W^T when want_input_grad.
void affine_backward(const Matrix& x, const DenseLayer& layer, const Matrix& dy, DenseLayer& grad,
                     Matrix* dx) {
  const std::size_t t_count = x.rows();
  const std::size_t in = layer.weight.rows();
  const std::size_t out = layer.weight.cols();
  for (std::size_t t = 0; t < t_count; ++t) {
    const auto xr = x.row(t);
    const auto dyr = dy.row(t);
    for (std::size_t o = 0; o < out; ++o) grad.bias[o] += dyr[o];
    for (std::size_t i = 0; i < in; ++i) {
      const double xv = xr[i];
      auto gr = grad.weight.row(i);
      for (std::size_t o = 0; o < out; ++o) gr[o] += xv * dyr[o];
    }
    if (dx != nullptr) {
      auto dxr = dx->row(t);
      for (std::size_t i = 0; i < in; ++i) {
        const auto wr = layer.weight.row(i);
        double acc = 0.0;
        for (std::size_t o = 0; o < out; ++o) acc += dyr[o] * wr[o];
        dxr[i] += acc;
      }
    }
  }
}

void glorot_fill(Matrix& w, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  for (auto& v : w.values()) v = rng.uniform(-limit, limit);
}

}  // namespace

NetworkShape AttentionMILParams::shape() const {
  NetworkShape s;
  s.layers = hidden.size();
  s.embed_dim = hidden.empty() ? classifier.weight.rows() : hidden.front().weight.rows();
  s.hidden = classifier.weight.rows();
  s.num_classes = classifier.weight.cols();
  return s;
}

AttentionMILParams AttentionMILParams::zeros(const NetworkShape& shape) {
  if (shape.layers < 1 || shape.hidden < 1 || shape.embed_dim < 1 || shape.num_classes < 1) {
    throw std::invalid_argument("network shape: L, H, C and D must all be >= 1");
  }
  AttentionMILParams p;
  std::size_t in = shape.embed_dim;
  for (std::size_t l = 0; l < shape.layers; ++l) {
    p.hidden.push_back(make_layer(in, shape.hidden));
    in = shape.hidden;
  }
  p.classifier = make_layer(shape.hidden, shape.num_classes);
  p.attention = make_layer(shape.hidden, shape.num_classes);
  return p;
}

std::vector<std::span<double>> AttentionMILParams::tensors() {
  std::vector<std::span<double>> out;
  for (auto& l : hidden) {
    out.emplace_back(l.weight.values());
    out.emplace_back(l.bias);
  }
  out.emplace_back(classifier.weight.values());
  out.emplace_back(classifier.bias);
  out.emplace_back(attention.weight.values());
  out.emplace_back(attention.bias);
  return out;
}

std::vector<std::span<const double>> AttentionMILParams::tensors() const {
  std::vector<std::span<const double>> out;
  for (const auto& l : hidden) {
    out.emplace_back(l.weight.values());
    out.emplace_back(l.bias);
  }
  out.emplace_back(classifier.weight.values());
  out.emplace_back(classifier.bias);
  out.emplace_back(attention.weight.values());
  out.emplace_back(attention.bias);
  return out;
}

std::vector<std::string> AttentionMILParams::tensor_names() const {
  std::vector<std::string> out;
  for (std::size_t l = 0; l < hidden.size(); ++l) {
    out.push_back(fmt::format("hidden{}.weight", l));
    out.push_back(fmt::format("hidden{}.bias", l));
  }
  out.insert(out.end(), {"classifier.weight", "classifier.bias", "attention.weight", "attention.bias"});
  return out;
}

std::size_t AttentionMILParams::num_values() const {
  std::size_t n = 0;
  for (auto t : tensors()) n += t.size();
  return n;
}

void AttentionMILParams::check_consistent() const {
  const auto s = shape();
  const auto ref = zeros(s);
  const auto a = tensors();
  const auto b = ref.tensors();
  bool ok = a.size() == b.size();
  for (std::size_t i = 0; ok && i < a.size(); ++i) ok = a[i].size() == b[i].size();
  ok = ok && classifier.weight.same_shape(attention.weight);
  for (std::size_t l = 0; ok && l < hidden.size(); ++l) {
    ok = hidden[l].weight.rows() == (l == 0 ? s.embed_dim : s.hidden) &&
         hidden[l].weight.cols() == s.hidden;
  }
  if (!ok) throw std::invalid_argument("attention-MIL parameters have inconsistent shapes");
}

bool AttentionMILParams::all_finite() const {
  for (auto t : tensors()) {
    if (!std::all_of(t.begin(), t.end(), [](double v) { return std::isfinite(v); })) return false;
  }
  return true;
}

bool bitwise_equal(const AttentionMILParams& a, const AttentionMILParams& b) {
  const auto ta = a.tensors();
  const auto tb = b.tensors();
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (ta[i].size() != tb[i].size()) return false;
    for (std::size_t k = 0; k < ta[i].size(); ++k) {
      if (std::bit_cast<std::uint64_t>(ta[i][k]) != std::bit_cast<std::uint64_t>(tb[i][k])) return false;
    }
  }
  return true;
}

AttentionMILParams init_params(std::size_t embed_dim, std::size_t num_classes, std::size_t layers,
                               std::size_t hidden, std::uint64_t seed) {
  auto p = AttentionMILParams::zeros({embed_dim, num_classes, layers, hidden});
  Rng rng(derive_seed(seed, {stream::kInit}));
  for (auto& l : p.hidden) glorot_fill(l.weight, rng);
  glorot_fill(p.classifier.weight, rng);
  glorot_fill(p.attention.weight, rng);
  return p;
}

ForwardTrace forward(const AttentionMILParams& params, const EmbeddingSequence& sequence,
                     const NoiseSpec& noise, bool training) {
  const auto shape = params.shape();
  if (sequence.dim != shape.embed_dim) {
    throw std::invalid_argument(fmt::format("clip '{}': embedding dim {} != network input dim {}",
                                            sequence.clip_id, sequence.dim, shape.embed_dim));
  }
  if (sequence.num_frames == 0 || sequence.frames.size() != sequence.num_frames * sequence.dim) {
    throw std::invalid_argument(fmt::format("clip '{}': malformed frame buffer", sequence.clip_id));
  }
  if (training && !(noise.dropout_rate >= 0.0 && noise.dropout_rate < 1.0)) {
    throw std::invalid_argument("dropout rate must be in [0, 1)");
  }

  const std::size_t t_count = sequence.num_frames;
  const std::size_t c = shape.num_classes;
  ForwardTrace tr;
  tr.shape = shape;
  tr.num_frames = t_count;

  Matrix x(t_count, shape.embed_dim);
  std::copy(sequence.frames.begin(), sequence.frames.end(), x.values().begin());
  tr.activations.push_back(std::move(x));

  const bool use_dropout = training && noise.dropout_rate > 0.0;
  const double keep = 1.0 - noise.dropout_rate;
  Rng rng(noise.seed);
  for (const auto& layer : params.hidden) {
    Matrix z = affine(tr.activations.back(), layer);
    Matrix h(z.rows(), z.cols());
    for (std::size_t k = 0; k < z.size(); ++k) h.values()[k] = std::max(z.values()[k], 0.0);
    if (use_dropout) {
      Matrix scale(z.rows(), z.cols());
      for (std::size_t k = 0; k < scale.size(); ++k) {
        scale.values()[k] = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
        h.values()[k] *= scale.values()[k];
      }
      tr.dropout_scale.push_back(std::move(scale));
    }
    tr.pre_activations.push_back(std::move(z));
    tr.activations.push_back(std::move(h));
  }

  const Matrix& top = tr.activations.back();
  tr.instance_probs = affine(top, params.classifier);
  for (auto& v : tr.instance_probs.values()) v = sigmoid(v);

  // Per-class softmax over time.
  tr.attention_weights = affine(top, params.attention);
  auto& att = tr.attention_weights;
  tr.clip_probs.assign(c, 0.0);
  for (std::size_t k = 0; k < c; ++k) {
    double mx = att(0, k);
    for (std::size_t t = 1; t < t_count; ++t) mx = std::max(mx, att(t, k));
    double sum = 0.0;
    for (std::size_t t = 0; t < t_count; ++t) {
      att(t, k) = std::exp(att(t, k) - mx);
      sum += att(t, k);
    }
    double clip = 0.0;
    for (std::size_t t = 0; t < t_count; ++t) {
      att(t, k) /= sum;
      clip += att(t, k) * tr.instance_probs(t, k);
    }
    tr.clip_probs[k] = clip;
  }
  return tr;
}

void backward_accumulate(const AttentionMILParams& params, const ForwardTrace& trace,
                         std::span<const double> clip_prob_grad, AttentionMILParams& grad) {
  if (trace.shape != params.shape() || grad.shape() != params.shape()) {
    throw std::invalid_argument("backward: trace, parameters and gradient shapes differ");
  }
  const std::size_t c = trace.shape.num_classes;
  if (clip_prob_grad.size() != c) {
    throw std::invalid_argument("backward: upstream gradient has wrong length");
  }
  const std::size_t t_count = trace.num_frames;
  const auto& inst = trace.instance_probs;
  const auto& att = trace.attention_weights;

  // clip_k = sum_t a_tk p_tk; p = sigmoid(u); a = softmax_t(v).
  Matrix d_inst_logit(t_count, c);
  Matrix d_att_logit(t_count, c);
  for (std::size_t t = 0; t < t_count; ++t) {
    for (std::size_t k = 0; k < c; ++k) {
      const double g = clip_prob_grad[k];
      const double p = inst(t, k);
      d_inst_logit(t, k) = g * att(t, k) * p * (1.0 - p);
      d_att_logit(t, k) = g * att(t, k) * (p - trace.clip_probs[k]);
    }
  }

  const Matrix& top = trace.activations.back();
  Matrix d_top(t_count, trace.shape.hidden);
  affine_backward(top, params.classifier, d_inst_logit, grad.classifier, &d_top);
  affine_backward(top, params.attention, d_att_logit, grad.attention, &d_top);

  Matrix d_out = std::move(d_top);
  for (std::size_t l = params.hidden.size(); l-- > 0;) {
    const auto& z = trace.pre_activations[l];
    for (std::size_t k = 0; k < d_out.size(); ++k) {
      double g = z.values()[k] > 0.0 ? d_out.values()[k] : 0.0;
      if (!trace.dropout_scale.empty()) g *= trace.dropout_scale[l].values()[k];
      d_out.values()[k] = g;
    }
    const Matrix& input = trace.activations[l];
    if (l > 0) {
      Matrix d_in(t_count, input.cols());
      affine_backward(input, params.hidden[l], d_out, grad.hidden[l], &d_in);
      d_out = std::move(d_in);
    } else {
      affine_backward(input, params.hidden[l], d_out, grad.hidden[l], nullptr);
    }
  }
}

AttentionMILParams backward(const AttentionMILParams& params, const ForwardTrace& trace,
                            std::span<const double> clip_prob_grad) {
  auto grad = AttentionMILParams::zeros(params.shape());
  backward_accumulate(params, trace, clip_prob_grad, grad);
  return grad;
}

std::vector<double> predict(const AttentionMILParams& params, const EmbeddingSequence& sequence) {
  return forward(params, sequence, NoiseSpec{}, false).clip_probs;
}

void write_params(std::ostream& out, const AttentionMILParams& params) {
  params.check_consistent();
  const auto s = params.shape();
  io::write_magic(out, kParamsMagic);
  io::write_u32(out, io::checked_u32(s.layers, "L"));
  io::write_u32(out, io::checked_u32(s.hidden, "H"));
  io::write_u32(out, io::checked_u32(s.num_classes, "C"));
  io::write_u32(out, io::checked_u32(s.embed_dim, "D"));
  for (auto t : params.tensors()) {
    for (double v : t) io::write_f32(out, static_cast<float>(v));
  }
}

AttentionMILParams read_params(std::istream& in) {
  io::expect_magic(in, kParamsMagic);
  NetworkShape s;
  s.layers = io::read_u32(in);
  s.hidden = io::read_u32(in);
  s.num_classes = io::read_u32(in);
  s.embed_dim = io::read_u32(in);
  auto p = AttentionMILParams::zeros(s);
  for (auto t : p.tensors()) {
    for (auto& v : t) v = io::read_f32(in);
  }
  return p;
}

void save_params(const std::filesystem::path& path, const AttentionMILParams& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(DataErrorKind::Io, fmt::format("cannot write '{}'", path.string()));
  write_params(out, params);
}

AttentionMILParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataErrorKind::Io, fmt::format("cannot open '{}'", path.string()));
  return read_params(in);
}

}  // namespace pll
