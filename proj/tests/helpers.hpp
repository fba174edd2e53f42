#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "contradist/model.hpp"
#include "contradist/rng.hpp"

namespace testing_util {

// A trace whose only layer is the logits themselves, for testing losses in
// isolation from any network.
inline contradist::ForwardTrace trace_from_logits(const contradist::Matrix& logits) {
  contradist::ForwardTrace t;
  t.activations.push_back(logits);
  t.pre_activations.push_back(logits);
  contradist::softmax_rows(logits, t.probs, t.log_probs);
  return t;
}

// Random non-zero biases keep every pre-activation away from the ReLU kink.
inline contradist::ModelParams jittered(const std::vector<std::size_t>& dims, std::uint64_t seed,
                                        std::uint64_t stream = 77) {
  contradist::ModelParams p = contradist::init_params(dims, seed);
  contradist::Rng rng(seed, stream);
  for (auto& b : p.biases) {
    for (double& v : b) v = 0.1 + 0.3 * rng.uniform();
  }
  return p;
}

// Smallest |pre-activation| over the hidden layers.
inline double relu_margin(const contradist::ModelParams& p, const contradist::Matrix& x) {
  const contradist::ForwardTrace t = contradist::forward(p, x);
  double m = 1e300;
  for (std::size_t l = 0; l + 1 < t.pre_activations.size(); ++l) {
    for (double v : t.pre_activations[l].values()) m = std::min(m, std::abs(v));
  }
  return m;
}

}  // namespace testing_util
