#include "contradist/optimizer.hpp"

#include <cmath>

#include "contradist/errors.hpp"

namespace contradist {

std::string to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd") return OptimizerKind::sgd;
  throw ValidationError("unknown optimizer '" + s + "' (expected adam or sgd)");
}

Optimizer::Optimizer(const OptimizerConfig& cfg, const ModelParams& shape)
    : cfg_(cfg), m_(Gradients::zeros_like(shape)), v_(Gradients::zeros_like(shape)) {
  if (!(cfg.lr >= 0.0) || !std::isfinite(cfg.lr)) throw ValidationError("learning rate must be >= 0");
  if (cfg.kind == OptimizerKind::adam) {
    if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0)) {
      throw ValidationError("adam betas must lie in [0, 1)");
    }
    if (!(cfg.eps > 0.0)) throw ValidationError("adam eps must be positive");
  }
}

void Optimizer::update(std::span<double> param, std::span<const double> grad, std::span<double> m,
                       std::span<double> v) const {
  if (cfg_.kind == OptimizerKind::sgd) {
    for (std::size_t i = 0; i < param.size(); ++i) param[i] -= cfg_.lr * grad[i];
    return;
  }
  const double c1 = 1.0 - bias1_;
  const double c2 = 1.0 - bias2_;
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * grad[i];
    v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    param[i] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
  }
}

void Optimizer::step(ModelParams& params, const Gradients& grads) {
  if (grads.weights.size() != params.num_layers()) throw ShapeError("optimizer: gradient layer mismatch");
  ++t_;
  bias1_ *= cfg_.beta1;
  bias2_ *= cfg_.beta2;
  if (cfg_.lr == 0.0) return;
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    if (grads.weights[l].size() != params.weights[l].size() ||
        grads.biases[l].size() != params.biases[l].size()) {
      throw ShapeError("optimizer: gradient shape mismatch in layer " + std::to_string(l));
    }
    update(params.weights[l].values(), grads.weights[l].values(), m_.weights[l].values(),
           v_.weights[l].values());
    update(params.biases[l], grads.biases[l], m_.biases[l], v_.biases[l]);
  }
}

}  // namespace contradist
