#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "contradist/matrix.hpp"

namespace contradist {

// Fully connected ReLU network. Layer l maps dims[l] -> dims[l+1] via
// Z = A * W + b, with W stored dims[l] x dims[l+1]. Hidden layers apply ReLU;
// the last layer emits logits.
struct ModelParams {
  std::vector<std::size_t> layer_dims;
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;

  std::size_t num_layers() const noexcept { return weights.size(); }
  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t output_dim() const { return layer_dims.back(); }
  std::size_t parameter_count() const;

  // Shapes consistent with layer_dims, every value finite.
  void validate() const;

  bool operator==(const ModelParams&) const = default;
};

// Gradient buffers shaped like ModelParams.
struct Gradients {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;

  static Gradients zeros_like(const ModelParams& p);
  Gradients& operator+=(const Gradients& other);
  Gradients& operator*=(double s);
  bool all_finite() const;
};

// Generator G(noise) -> fake sample. Same network structure as the classifier.
struct GeneratorParams {
  ModelParams net;

  std::size_t noise_dim() const { return net.input_dim(); }
  std::size_t output_dim() const { return net.output_dim(); }
};

struct ForwardTrace {
  // activations[0] is the input; activations[l] is the output of hidden layer l
  // (post-ReLU) for l in [1, L-1].
  std::vector<Matrix> activations;
  // Pre-activation of every layer; pre_activations.back() is the logits.
  std::vector<Matrix> pre_activations;
  Matrix probs;
  Matrix log_probs;

  std::size_t batch_size() const { return probs.rows(); }
  std::size_t num_classes() const { return probs.cols(); }
  const Matrix& logits() const { return pre_activations.back(); }
  // Last hidden activation, the encoder output used by the MMD generator loss.
  const Matrix& embedding() const { return activations.back(); }
};

ModelParams init_params(const std::vector<std::size_t>& layer_dims, std::uint64_t seed);

// Row-wise softmax and log-softmax with per-row max subtraction.
void softmax_rows(const Matrix& logits, Matrix& probs, Matrix& log_probs);

ForwardTrace forward(const ModelParams& params, const Matrix& x);

// Plain network output (logits for a classifier, samples for a generator).
Matrix forward_output(const ModelParams& params, const Matrix& x);

Gradients backward(const ModelParams& params, const ForwardTrace& trace, const Matrix& dL_dlogits);

struct BackwardResult {
  Gradients grads;
  Matrix input_grad;
};

// Backpropagates a gradient given at activations[layer] (1 <= layer <= L) where
// layer == L means the logits. Also returns the gradient at the network input.
BackwardResult backward_from(const ModelParams& params, const ForwardTrace& trace,
                             std::size_t layer, const Matrix& upstream);

// Binary format: "CDST", u32 version, u32 dim count, u64 dims, then per layer
// the row-major weights followed by the biases, all little-endian f64.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace contradist
