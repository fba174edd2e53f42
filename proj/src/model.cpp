#include "contradist/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "contradist/errors.hpp"
#include "contradist/rng.hpp"

namespace contradist {

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < num_layers(); ++l) n += weights[l].size() + biases[l].size();
  return n;
}

void ModelParams::validate() const {
  if (layer_dims.size() < 2) throw ValidationError("model needs at least 2 layer dims");
  if (weights.size() + 1 != layer_dims.size() || biases.size() != weights.size()) {
    throw ShapeError("layer count does not match layer_dims");
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != layer_dims[l] || weights[l].cols() != layer_dims[l + 1] ||
        biases[l].size() != layer_dims[l + 1]) {
      throw ShapeError("layer " + std::to_string(l) + " shape does not match layer_dims");
    }
    if (!weights[l].all_finite()) throw NumericError("non-finite weight in layer " + std::to_string(l));
    for (double b : biases[l]) {
      if (!std::isfinite(b)) throw NumericError("non-finite bias in layer " + std::to_string(l));
    }
  }
}

Gradients Gradients::zeros_like(const ModelParams& p) {
  Gradients g;
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    g.weights.emplace_back(p.weights[l].rows(), p.weights[l].cols());
    g.biases.emplace_back(p.biases[l].size(), 0.0);
  }
  return g;
}

Gradients& Gradients::operator+=(const Gradients& other) {
  if (weights.size() != other.weights.size()) throw ShapeError("gradient layer count mismatch");
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] += other.weights[l];
    if (biases[l].size() != other.biases[l].size()) throw ShapeError("gradient bias mismatch");
    for (std::size_t j = 0; j < biases[l].size(); ++j) biases[l][j] += other.biases[l][j];
  }
  return *this;
}

Gradients& Gradients::operator*=(double s) {
  for (auto& w : weights) w *= s;
  for (auto& b : biases) {
    for (double& x : b) x *= s;
  }
  return *this;
}

bool Gradients::all_finite() const {
  for (const auto& w : weights) {
    if (!w.all_finite()) return false;
  }
  for (const auto& b : biases) {
    for (double x : b) {
      if (!std::isfinite(x)) return false;
    }
  }
  return true;
}

ModelParams init_params(const std::vector<std::size_t>& layer_dims, std::uint64_t seed) {
  if (layer_dims.size() < 2) throw ValidationError("init_params: need at least 2 layer dims");
  for (auto d : layer_dims) {
    if (d == 0) throw ValidationError("init_params: layer dims must be positive");
  }
  Rng rng(seed, 0x1417);
  ModelParams p;
  p.layer_dims = layer_dims;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const std::size_t fan_in = layer_dims[l];
    const std::size_t fan_out = layer_dims[l + 1];
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix w(fan_in, fan_out);
    for (double& x : w.values()) x = rng.uniform(-a, a);
    p.weights.push_back(std::move(w));
    p.biases.emplace_back(fan_out, 0.0);
  }
  return p;
}

void softmax_rows(const Matrix& logits, Matrix& probs, Matrix& log_probs) {
  probs = Matrix(logits.rows(), logits.cols());
  log_probs = Matrix(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto z = logits.row(i);
    double m = -std::numeric_limits<double>::infinity();
    for (double v : z) m = std::max(m, v);
    double s = 0.0;
    for (double v : z) s += std::exp(v - m);
    const double lse = m + std::log(s);
    auto p = probs.row(i);
    auto lp = log_probs.row(i);
    for (std::size_t k = 0; k < z.size(); ++k) {
      lp[k] = z[k] - lse;
      p[k] = std::exp(lp[k]);
    }
  }
}

namespace {

void add_bias(Matrix& z, const std::vector<double>& b) {
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto r = z.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += b[j];
  }
}

Matrix relu(const Matrix& z) {
  Matrix a = z;
  for (double& x : a.values()) x = x > 0.0 ? x : 0.0;
  return a;
}

void check_input(const ModelParams& params, const Matrix& x) {
  if (params.weights.empty()) throw ValidationError("model has no layers");
  if (x.cols() != params.input_dim()) {
    throw ShapeError("input width " + std::to_string(x.cols()) + " does not match model input " +
                     std::to_string(params.input_dim()));
  }
}

}  // namespace

ForwardTrace forward(const ModelParams& params, const Matrix& x) {
  check_input(params, x);
  ForwardTrace t;
  const std::size_t L = params.num_layers();
  t.activations.reserve(L);
  t.pre_activations.reserve(L);
  t.activations.push_back(x);
  for (std::size_t l = 0; l < L; ++l) {
    Matrix z = matmul(t.activations.back(), params.weights[l]);
    add_bias(z, params.biases[l]);
    if (l + 1 < L) t.activations.push_back(relu(z));
    t.pre_activations.push_back(std::move(z));
  }
  softmax_rows(t.pre_activations.back(), t.probs, t.log_probs);
  return t;
}

Matrix forward_output(const ModelParams& params, const Matrix& x) {
  check_input(params, x);
  Matrix a = x;
  const std::size_t L = params.num_layers();
  for (std::size_t l = 0; l < L; ++l) {
    Matrix z = matmul(a, params.weights[l]);
    add_bias(z, params.biases[l]);
    a = l + 1 < L ? relu(z) : std::move(z);
  }
  return a;
}

BackwardResult backward_from(const ModelParams& params, const ForwardTrace& trace,
                             std::size_t layer, const Matrix& upstream) {
  const std::size_t L = params.num_layers();
  if (trace.pre_activations.size() != L || trace.activations.size() != L) {
    throw ShapeError("trace does not belong to this model");
  }
  if (layer < 1 || layer > L) throw ShapeError("backward_from: layer out of range");
  const std::size_t n = trace.activations.front().rows();
  if (upstream.rows() != n || upstream.cols() != params.layer_dims[layer]) {
    throw ShapeError("upstream gradient shape " + std::to_string(upstream.rows()) + "x" +
                     std::to_string(upstream.cols()) + " does not match layer " +
                     std::to_string(layer));
  }

  BackwardResult out{Gradients::zeros_like(params), {}};
  Matrix dz = upstream;
  if (layer < L) {
    const Matrix& z = trace.pre_activations[layer - 1];
    for (std::size_t i = 0; i < dz.size(); ++i) {
      if (!(z.values()[i] > 0.0)) dz.values()[i] = 0.0;
    }
  }
  for (std::size_t l = layer; l-- > 0;) {
    out.grads.weights[l] = matmul_tn(trace.activations[l], dz);
    auto& gb = out.grads.biases[l];
    for (std::size_t i = 0; i < dz.rows(); ++i) {
      auto r = dz.row(i);
      for (std::size_t j = 0; j < r.size(); ++j) gb[j] += r[j];
    }
    Matrix da = matmul_nt(dz, params.weights[l]);
    if (l == 0) {
      out.input_grad = std::move(da);
    } else {
      const Matrix& z = trace.pre_activations[l - 1];
      for (std::size_t i = 0; i < da.size(); ++i) {
        if (!(z.values()[i] > 0.0)) da.values()[i] = 0.0;
      }
      dz = std::move(da);
    }
  }
  return out;
}

Gradients backward(const ModelParams& params, const ForwardTrace& trace, const Matrix& dL_dlogits) {
  return backward_from(params, trace, params.num_layers(), dL_dlogits).grads;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[4] = {'C', 'D', 'S', 'T'};

template <typename T>
void put_le(std::vector<unsigned char>& buf, T v) {
  std::uint64_t bits = 0;
  if constexpr (std::is_same_v<T, double>) {
    bits = std::bit_cast<std::uint64_t>(v);
  } else {
    bits = static_cast<std::uint64_t>(v);
  }
  for (std::size_t i = 0; i < sizeof(T); ++i) buf.push_back(static_cast<unsigned char>(bits >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& buf) : buf_(buf) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > buf_.size()) throw CheckpointError("checkpoint is truncated");
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      bits |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
    }
    pos_ += sizeof(T);
    if constexpr (std::is_same_v<T, double>) {
      return std::bit_cast<double>(bits);
    } else {
      return static_cast<T>(bits);
    }
  }

  bool at_end() const { return pos_ == buf_.size(); }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  const std::vector<unsigned char>& buf_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  params.validate();
  std::vector<unsigned char> buf(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(buf, kCheckpointVersion);
  put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(params.layer_dims.size()));
  for (auto d : params.layer_dims) put_le<std::uint64_t>(buf, d);
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    for (double w : params.weights[l].values()) put_le<double>(buf, w);
    for (double b : params.biases[l]) put_le<double>(buf, b);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw CheckpointError("write failed for '" + path.string() + "'");
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0) {
    throw CheckpointError("'" + path.string() + "' is not a checkpoint (bad magic)");
  }
  Reader r(buf);
  for (int i = 0; i < 4; ++i) r.get<std::uint8_t>();
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  const auto count = r.get<std::uint32_t>();
  if (count < 2 || count > 1024) throw CheckpointError("implausible layer count in checkpoint");

  ModelParams p;
  std::size_t expected = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto d = r.get<std::uint64_t>();
    if (d == 0 || d > (1u << 24)) throw CheckpointError("implausible layer width in checkpoint");
    p.layer_dims.push_back(static_cast<std::size_t>(d));
  }
  for (std::size_t l = 0; l + 1 < p.layer_dims.size(); ++l) {
    expected += (p.layer_dims[l] + 1) * p.layer_dims[l + 1];
  }
  if (r.remaining() != expected * sizeof(double)) {
    throw CheckpointError("checkpoint payload is truncated or has trailing bytes");
  }
  for (std::size_t l = 0; l + 1 < p.layer_dims.size(); ++l) {
    Matrix w(p.layer_dims[l], p.layer_dims[l + 1]);
    for (double& x : w.values()) x = r.get<double>();
    std::vector<double> b(p.layer_dims[l + 1]);
    for (double& x : b) x = r.get<double>();
    p.weights.push_back(std::move(w));
    p.biases.push_back(std::move(b));
  }
  try {
    p.validate();
  } catch (const Error& e) {
    throw CheckpointError(std::string("invalid checkpoint: ") + e.what());
  }
  return p;
}

}  // namespace contradist
