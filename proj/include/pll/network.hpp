#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "pll/data_model.hpp"
#include "pll/tensor.hpp"

namespace pll {

struct NetworkShape {
  std::size_t embed_dim = 0;
  std::size_t num_classes = 0;
  std::size_t layers = 0;
  std::size_t hidden = 0;

  friend bool operator==(const NetworkShape&, const NetworkShape&) = default;
};

/// Affine map y = x W + b with W stored (in x out).
struct DenseLayer {
  Matrix weight;
  std::vector<double> bias;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Trainable weights of the attention-MIL classifier.
///
/// Declaration order (hidden layers, classifier head, attention head; weight
/// before bias) is the order used by tensors(), checkpoints and optimizers.
struct AttentionMILParams {
  std::vector<DenseLayer> hidden;
  DenseLayer classifier;
  DenseLayer attention;

  NetworkShape shape() const;

  static AttentionMILParams zeros(const NetworkShape& shape);

  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;
  std::vector<std::string> tensor_names() const;
  std::size_t num_values() const;

  /// Throws std::invalid_argument unless every tensor has the expected size.
  void check_consistent() const;
  bool all_finite() const;

  friend bool operator==(const AttentionMILParams&, const AttentionMILParams&) = default;
};

/// Bitwise equality, distinguishing +0/-0 and NaN payloads.
bool bitwise_equal(const AttentionMILParams& a, const AttentionMILParams& b);

/// Dropout configuration of one stochastic pass.
struct NoiseSpec {
  double dropout_rate = 0.0;
  std::uint64_t seed = 0;
};

/// Output of one forward pass plus everything backward() needs.
struct ForwardTrace {
  NetworkShape shape;
  std::size_t num_frames = 0;
  std::vector<double> clip_probs;   // C
  Matrix instance_probs;            // T x C
  Matrix attention_weights;         // T x C, columns sum to 1
  // activations[0] is the input; activations[l] the (dropped-out) output of hidden layer l.
  std::vector<Matrix> activations;
  std::vector<Matrix> pre_activations;  // per hidden layer, T x H
  std::vector<Matrix> dropout_scale;    // per hidden layer, 0 or 1/(1-rate); empty when not training
};

/// Glorot-uniform weights, zero biases.
AttentionMILParams init_params(std::size_t embed_dim, std::size_t num_classes, std::size_t layers,
                               std::size_t hidden, std::uint64_t seed);

ForwardTrace forward(const AttentionMILParams& params, const EmbeddingSequence& sequence,
                     const NoiseSpec& noise, bool training);

/// Gradient of the loss w.r.t. every parameter, given d loss / d clip_probs.
AttentionMILParams backward(const AttentionMILParams& params, const ForwardTrace& trace,
                            std::span<const double> clip_prob_grad);

/// Same as backward() but adds into an existing gradient buffer.
void backward_accumulate(const AttentionMILParams& params, const ForwardTrace& trace,
                         std::span<const double> clip_prob_grad, AttentionMILParams& grad);

/// Inference-mode clip probabilities.
std::vector<double> predict(const AttentionMILParams& params, const EmbeddingSequence& sequence);

// Checkpoint container: "PLLNET01", u32 L, H, C, D, then float32 tensors in declaration order.
void write_params(std::ostream& out, const AttentionMILParams& params);
AttentionMILParams read_params(std::istream& in);
void save_params(const std::filesystem::path& path, const AttentionMILParams& params);
AttentionMILParams load_params(const std::filesystem::path& path);

}  // namespace pll
