#include "contradist/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "contradist/errors.hpp"

namespace contradist {

namespace {

constexpr double kProbFloor = 1e-12;

void check_trace(const ForwardTrace& trace) {
  if (trace.probs.rows() == 0) throw ShapeError("empty batch");
  if (trace.log_probs.rows() != trace.probs.rows() || trace.log_probs.cols() != trace.probs.cols()) {
    throw ShapeError("trace probs/log_probs disagree");
  }
}

}  // namespace

double clamped_log(double p) { return std::log(std::max(p, kProbFloor)); }

LossValue ce_loss(const ForwardTrace& trace, const Labels& labels) {
  check_trace(trace);
  const std::size_t n = trace.batch_size();
  const std::size_t k = trace.num_classes();
  if (labels.size() != n) {
    throw ShapeError("ce_loss: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(n) + " rows");
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  LossValue out{0.0, trace.probs};
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw ValidationError("ce_loss: label " + std::to_string(y) + " outside [0, " +
                            std::to_string(k) + ")");
    }
    out.value -= trace.log_probs(i, static_cast<std::size_t>(y));
    out.grad(i, static_cast<std::size_t>(y)) -= 1.0;
  }
  out.value *= inv_n;
  out.grad *= inv_n;
  return out;
}

PseudoLabels pseudo_label_select(const Matrix& probs, const Priors& priors) {
  const std::size_t n = probs.rows();
  const std::size_t k = probs.cols();
  if (n == 0) throw ShapeError("pseudo_label_select: empty batch");
  if (priors.size() != k) {
    throw ShapeError("pseudo_label_select: prior has " + std::to_string(priors.size()) +
                     " classes, probs have " + std::to_string(k));
  }
  std::vector<double> column_sum(k, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t c = 0; c < k; ++c) column_sum[c] += probs(j, c);
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (!(column_sum[c] > 0.0)) {
      throw NumericError("pseudo_label_select: class " + std::to_string(c) +
                         " has zero total probability in the batch");
    }
  }

  PseudoLabels out{Labels(n, 0), Matrix(n, k)};
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t best = 0;
    for (std::size_t c = 0; c < k; ++c) {
      const double s = probs(j, c) * priors[c] / column_sum[c];
      out.scores(j, c) = s;
      if (s > out.scores(j, best)) best = c;
    }
    out.labels[j] = static_cast<int>(best);
  }
  return out;
}

LossValue contradistinguish_loss(const ForwardTrace& trace, const PseudoLabels& pseudo,
                                 const Priors& priors) {
  check_trace(trace);
  const std::size_t n = trace.batch_size();
  const std::size_t k = trace.num_classes();
  if (pseudo.labels.size() != n) {
    throw ShapeError("contradistinguish_loss: " + std::to_string(pseudo.labels.size()) +
                     " pseudo-labels for " + std::to_string(n) + " rows");
  }
  if (priors.size() != k) throw ShapeError("contradistinguish_loss: prior size mismatch");

  // Column-wise log-sum-exp over the batch of log p(c | x_l), and the softmax
  // weights w(l, c) = p(c|x_l) / sum_l' p(c|x_l') it induces.
  std::vector<double> column_lse(k);
  Matrix weight(n, k);
  for (std::size_t c = 0; c < k; ++c) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < n; ++l) m = std::max(m, trace.log_probs(l, c));
    double s = 0.0;
    for (std::size_t l = 0; l < n; ++l) s += std::exp(trace.log_probs(l, c) - m);
    column_lse[c] = m + std::log(s);
    for (std::size_t l = 0; l < n; ++l) weight(l, c) = std::exp(trace.log_probs(l, c) - column_lse[c]);
  }

  std::vector<double> count(k, 0.0);
  double objective = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const int y = pseudo.labels[j];
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw ValidationError("contradistinguish_loss: pseudo-label out of range");
    }
    const auto c = static_cast<std::size_t>(y);
    objective += trace.log_probs(j, c) + clamped_log(priors[c]) - column_lse[c];
    count[c] += 1.0;
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  LossValue out{-objective * inv_n, Matrix(n, k)};
  // Term 1 contributes (p_i - e_{y_i}); term 3 contributes g_i - p_i * sum(g_i)
  // with g(i, c) = count[c] * w(i, c).
  for (std::size_t i = 0; i < n; ++i) {
    double g_sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) g_sum += count[c] * weight(i, c);
    for (std::size_t c = 0; c < k; ++c) {
      const double p = trace.probs(i, c);
      out.grad(i, c) = (p + count[c] * weight(i, c) - p * g_sum) * inv_n;
    }
    out.grad(i, static_cast<std::size_t>(pseudo.labels[i])) -= inv_n;
  }
  return out;
}

LossValue adv_multilabel_loss(const ForwardTrace& trace_fake) {
  check_trace(trace_fake);
  const std::size_t n = trace_fake.batch_size();
  const std::size_t k = trace_fake.num_classes();
  const double inv_n = 1.0 / static_cast<double>(n);
  const auto kd = static_cast<double>(k);
  LossValue out{0.0, Matrix(n, k)};
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t c = 0; c < k; ++c) {
      out.value -= trace_fake.log_probs(j, c);
      out.grad(j, c) = (kd * trace_fake.probs(j, c) - 1.0) * inv_n;
    }
  }
  out.value *= inv_n;
  return out;
}

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double median_heuristic_gamma(const Matrix& a, const Matrix& b) {
  std::vector<double> d2;
  d2.reserve(a.rows() * b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) d2.push_back(squared_distance(a.row(i), b.row(j)));
  }
  std::sort(d2.begin(), d2.end());
  const std::size_t m = d2.size();
  const double median = m % 2 == 1 ? d2[m / 2] : 0.5 * (d2[m / 2 - 1] + d2[m / 2]);
  if (!(median > 0.0)) {
    throw NumericError("kernel_mmd: median squared distance is zero; set an explicit gamma");
  }
  return 1.0 / (2.0 * median);
}

// Accumulates coef * sum_{i,j} k(x_i, y_j) into the value and its gradient
// into gx (and gy when given).
double kernel_block(const Matrix& x, const Matrix& y, double gamma, double coef, Matrix& gx,
                    Matrix* gy) {
  double total = 0.0;
  const std::size_t h = x.cols();
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto xi = x.row(i);
    for (std::size_t j = 0; j < y.rows(); ++j) {
      auto yj = y.row(j);
      const double kv = std::exp(-gamma * squared_distance(xi, yj));
      total += kv;
      // d k / d x_i = -2 gamma k (x_i - y_j) = -(d k / d y_j)
      const double s = -2.0 * gamma * kv * coef;
      for (std::size_t c = 0; c < h; ++c) {
        const double diff = xi[c] - yj[c];
        gx(i, c) += s * diff;
        if (gy) (*gy)(j, c) -= s * diff;
      }
    }
  }
  return coef * total;
}

}  // namespace

MmdValue kernel_mmd(const Matrix& emb_a, const Matrix& emb_b, const MmdConfig& cfg) {
  if (emb_a.rows() == 0 || emb_b.rows() == 0) throw ShapeError("kernel_mmd: empty input set");
  if (emb_a.cols() != emb_b.cols()) throw ShapeError("kernel_mmd: embedding widths differ");
  if (cfg.gamma && !(*cfg.gamma > 0.0)) throw ValidationError("kernel_mmd: gamma must be positive");

  MmdValue out;
  out.gamma = cfg.gamma ? *cfg.gamma : median_heuristic_gamma(emb_a, emb_b);
  out.grad_a = Matrix(emb_a.rows(), emb_a.cols());
  out.grad_b = Matrix(emb_b.rows(), emb_b.cols());

  const auto na = static_cast<double>(emb_a.rows());
  const auto nb = static_cast<double>(emb_b.rows());
  // Within-set blocks: both arguments are the same set, so the pair gradient
  // lands on both rows of the same matrix.
  out.value += kernel_block(emb_a, emb_a, out.gamma, 1.0 / (na * na), out.grad_a, &out.grad_a);
  out.value += kernel_block(emb_b, emb_b, out.gamma, 1.0 / (nb * nb), out.grad_b, &out.grad_b);
  out.value += kernel_block(emb_a, emb_b, out.gamma, -2.0 / (na * nb), out.grad_a, &out.grad_b);
  return out;
}

LossValue multi_source_supervised(std::span<const LossValue> per_source) {
  if (per_source.empty()) throw ValidationError("multi_source_supervised: no sources");
  LossValue out{0.0, per_source.front().grad};
  out.value = per_source.front().value;
  for (std::size_t r = 1; r < per_source.size(); ++r) {
    out.value += per_source[r].value;
    out.grad += per_source[r].grad;
  }
  return out;
}

}  // namespace contradist
