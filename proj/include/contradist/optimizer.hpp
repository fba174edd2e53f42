#pragma once

#include <string>
#include <vector>

#include "contradist/model.hpp"

namespace contradist {

enum class OptimizerKind { adam, sgd };

std::string to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First-order optimizer owning its moment buffers for one parameter set.
class Optimizer {
 public:
  Optimizer(const OptimizerConfig& cfg, const ModelParams& shape);

  // params -= update(grads). With lr == 0 the parameters are left untouched.
  void step(ModelParams& params, const Gradients& grads);

  const OptimizerConfig& config() const noexcept { return cfg_; }
  std::size_t steps_taken() const noexcept { return t_; }

 private:
  void update(std::span<double> param, std::span<const double> grad, std::span<double> m,
              std::span<double> v) const;

  OptimizerConfig cfg_;
  std::size_t t_ = 0;
  double bias1_ = 1.0;
  double bias2_ = 1.0;
  Gradients m_;
  Gradients v_;
};

}  // namespace contradist
