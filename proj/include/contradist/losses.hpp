#pragma once

#include <optional>
#include <span>
#include <vector>

#include "contradist/dataset.hpp"
#include "contradist/matrix.hpp"
#include "contradist/model.hpp"

namespace contradist {

// Every objective is expressed as a mean over the batch and minimized.
// `grad` is the derivative with respect to the logits of the trace it was
// computed from.
struct LossValue {
  double value = 0.0;
  Matrix grad;
};

struct PseudoLabels {
  Labels labels;
  // scores(j, k) = probs(j, k) * prior[k] / sum_l probs(l, k). Not normalized.
  Matrix scores;
};

struct MmdConfig {
  // nullopt selects the median heuristic: gamma = 1 / (2 * median squared
  // cross distance), evaluated once per call and held constant for gradients.
  std::optional<double> gamma;
};

struct MmdValue {
  double value = 0.0;
  double gamma = 0.0;
  Matrix grad_a;
  Matrix grad_b;
};

// Mean cross-entropy of the labelled rows.
LossValue ce_loss(const ForwardTrace& trace, const Labels& labels);

// E-step: prior-enforced pseudo-labels over the batch. Ties go to the lowest
// class index.
PseudoLabels pseudo_label_select(const Matrix& probs, const Priors& priors);

// M-step objective with pseudo-labels held fixed:
//   -(1/n) [ sum_j log p(y_j|x_j) + sum_j log prior[y_j]
//            - sum_j log sum_l p(y_j|x_l) ]
// The prior term enters the value only; it is constant in the parameters.
LossValue contradistinguish_loss(const ForwardTrace& trace, const PseudoLabels& pseudo,
                                 const Priors& priors);

// Multi-label every fake sample to all K classes: -(1/n) sum_j sum_k log p_jk.
LossValue adv_multilabel_loss(const ForwardTrace& trace_fake);

// Biased (V-statistic) squared MMD with a Gaussian kernel exp(-gamma |x-y|^2).
MmdValue kernel_mmd(const Matrix& emb_a, const Matrix& emb_b, const MmdConfig& cfg);

// Sum of per-source supervised losses. Gradients are added element-wise and
// must share a shape.
LossValue multi_source_supervised(std::span<const LossValue> per_source);

// log(max(p, 1e-12)); used wherever a probability (not a logit) is logged.
double clamped_log(double p);

}  // namespace contradist
