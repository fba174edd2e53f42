#include <doctest.h>

#include <cmath>
#include <numeric>

#include "contradist/errors.hpp"
#include "contradist/losses.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace contradist;
using testing_util::trace_from_logits;

namespace {

double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

Priors random_prior(std::size_t k, Rng& rng) {
  Priors p;
  double s = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    p.probs.push_back(0.05 + rng.uniform());
    s += p.probs.back();
  }
  for (double& x : p.probs) x /= s;
  return p;
}

}  // namespace

TEST_SUITE("ce_loss") {
  TEST_CASE("perfect prediction has zero loss") {
    const auto t = trace_from_logits(Matrix{{800.0, 0.0}});
    CHECK(std::abs(ce_loss(t, {0}).value) < 1e-12);
  }

  TEST_CASE("uniform probabilities give ln 2") {
    const auto t = trace_from_logits(Matrix{{0.0, 0.0}, {1.5, 1.5}});
    CHECK(ce_loss(t, {0, 1}).value == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }

  TEST_CASE("matches loop oracle and finite differences") {
    Rng rng(11);
    for (int rep = 0; rep < 20; ++rep) {
      const Matrix z = oracle::random_matrix(4, 3, rng, 2.0);
      const Labels y = oracle::random_labels(4, 3, rng);
      const LossValue lv = ce_loss(trace_from_logits(z), y);
      CHECK(lv.value == doctest::Approx(oracle::ce(z, y)).epsilon(1e-12));
      const Matrix fd = oracle::finite_difference([&](const Matrix& m) { return oracle::ce(m, y); }, z);
      CHECK(oracle::max_rel_error(lv.grad.values(), fd.values()) <= 1e-4);
      CHECK(lv.value >= 0.0);
    }
  }

  TEST_CASE("rejects out-of-range labels") {
    const auto t = trace_from_logits(Matrix{{0.0, 0.0}});
    CHECK_THROWS_AS(ce_loss(t, {2}), ValidationError);
    CHECK_THROWS_AS(ce_loss(t, {0, 1}), ShapeError);
  }
}

TEST_SUITE("pseudo_label_select") {
  TEST_CASE("uniform prior, two samples") {
    const Matrix probs{{0.8, 0.2}, {0.4, 0.6}};
    const auto pl = pseudo_label_select(probs, Priors::uniform(2));
    const auto [ref_y, ref_s] = oracle::pseudo_labels(probs, {0.5, 0.5});
    CHECK(pl.labels == ref_y);
    CHECK(max_abs_diff(pl.scores, ref_s) < 1e-15);
    CHECK(pl.scores(0, 0) == doctest::Approx(1.0 / 3.0));
    CHECK(pl.scores(0, 1) == doctest::Approx(0.125));
    CHECK(pl.scores(1, 0) == doctest::Approx(1.0 / 6.0));
    CHECK(pl.scores(1, 1) == doctest::Approx(0.375));
    CHECK(pl.labels == Labels{0, 1});
  }

  TEST_CASE("skewed prior flips the second sample") {
    const Matrix probs{{0.8, 0.2}, {0.4, 0.6}};
    const auto pl = pseudo_label_select(probs, Priors{{0.9, 0.1}});
    CHECK(pl.scores(1, 0) == doctest::Approx(0.3));
    CHECK(pl.scores(1, 1) == doctest::Approx(0.075));
    CHECK(pl.labels == Labels{0, 0});
  }

  TEST_CASE("single sample scores equal the prior and ties go to class 0") {
    const auto pl = pseudo_label_select(Matrix{{0.3, 0.7}}, Priors::uniform(2));
    CHECK(pl.scores(0, 0) == doctest::Approx(0.5));
    CHECK(pl.scores(0, 1) == doctest::Approx(0.5));
    CHECK(pl.labels == Labels{0});
  }

  TEST_CASE("zero column is a numeric error") {
    CHECK_THROWS_AS(pseudo_label_select(Matrix{{1.0, 0.0}, {1.0, 0.0}}, Priors::uniform(2)), NumericError);
    CHECK_THROWS_AS(pseudo_label_select(Matrix{{1.0, 0.0}}, Priors::uniform(3)), ShapeError);
  }

  TEST_CASE("column scaling leaves scores and labels unchanged") {
    Rng rng(5);
    for (int rep = 0; rep < 30; ++rep) {
      const std::size_t n = 1 + rng.below(12);
      const std::size_t k = 2 + rng.below(4);
      const Matrix probs = oracle::softmax(oracle::random_matrix(n, k, rng, 2.0));
      const Priors prior = random_prior(k, rng);
      const auto base = pseudo_label_select(probs, prior);
      Matrix scaled = probs;
      const std::size_t col = rng.below(k);
      const double c = 0.1 + 5.0 * rng.uniform();
      for (std::size_t j = 0; j < n; ++j) scaled(j, col) *= c;
      const auto pl = pseudo_label_select(scaled, prior);
      CHECK(max_abs_diff(pl.scores, base.scores) < 1e-14);
      CHECK(pl.labels == base.labels);
    }
  }

  TEST_CASE("raising prior[k] only moves labels toward k") {
    Rng rng(6);
    for (int rep = 0; rep < 30; ++rep) {
      const std::size_t n = 2 + rng.below(10);
      const std::size_t k = 2 + rng.below(4);
      const Matrix probs = oracle::softmax(oracle::random_matrix(n, k, rng, 2.0));
      const Priors prior = random_prior(k, rng);
      const std::size_t boosted = rng.below(k);
      Priors raised = prior;
      raised.probs[boosted] *= 1.0 + 3.0 * rng.uniform();
      const auto before = pseudo_label_select(probs, prior).labels;
      const auto after = pseudo_label_select(probs, raised).labels;
      for (std::size_t j = 0; j < n; ++j) {
        if (after[j] != before[j]) CHECK(after[j] == static_cast<int>(boosted));
        if (before[j] == static_cast<int>(boosted)) CHECK(after[j] == static_cast<int>(boosted));
      }
    }
  }

  TEST_CASE("permuting rows permutes labels") {
    Rng rng(7);
    for (int rep = 0; rep < 30; ++rep) {
      const std::size_t n = 2 + rng.below(12);
      const std::size_t k = 2 + rng.below(4);
      const Matrix probs = oracle::softmax(oracle::random_matrix(n, k, rng, 2.0));
      const Priors prior = random_prior(k, rng);
      std::vector<std::size_t> perm(n);
      std::iota(perm.begin(), perm.end(), 0);
      rng.shuffle(perm);
      const auto base = pseudo_label_select(probs, prior).labels;
      const auto permuted = pseudo_label_select(gather_rows(probs, perm), prior).labels;
      for (std::size_t j = 0; j < n; ++j) CHECK(permuted[j] == base[perm[j]]);
    }
  }
}

TEST_SUITE("contradistinguish_loss") {
  TEST_CASE("single sample: terms cancel, value is -log prior, zero gradient") {
    const auto t = trace_from_logits(Matrix{{0.3, -1.2, 2.0}});
    const Priors prior{{0.2, 0.5, 0.3}};
    const auto pl = pseudo_label_select(t.probs, prior);
    const LossValue lv = contradistinguish_loss(t, pl, prior);
    CHECK(lv.value == doctest::Approx(-std::log(prior[static_cast<std::size_t>(pl.labels[0])])).epsilon(1e-12));
    for (double g : lv.grad.values()) CHECK(std::abs(g) < 1e-15);
  }

  TEST_CASE("matches double-loop oracle and finite differences with frozen labels") {
    Rng rng(12);
    for (int rep = 0; rep < 20; ++rep) {
      const std::size_t k = rep < 10 ? 2 : 2 + rng.below(3);
      const std::size_t n = rep < 10 ? 4 : 2 + rng.below(7);
      const Matrix z = oracle::random_matrix(n, k, rng, 2.0);
      const Priors prior = random_prior(k, rng);
      const auto t = trace_from_logits(z);
      const auto pl = pseudo_label_select(t.probs, prior);
      const LossValue lv = contradistinguish_loss(t, pl, prior);
      CHECK(std::abs(lv.value - oracle::contradistinguish(z, pl.labels, prior.probs)) <= 1e-10);
      const Matrix fd = oracle::finite_difference(
          [&](const Matrix& m) { return oracle::contradistinguish(m, pl.labels, prior.probs); }, z);
      CHECK(oracle::max_rel_error(lv.grad.values(), fd.values()) <= 1e-4);
    }
  }

  TEST_CASE("stays finite for extreme logits") {
    const auto t = trace_from_logits(Matrix{{900.0, -900.0}, {-900.0, 900.0}, {0.0, 0.0}});
    const auto pl = pseudo_label_select(t.probs, Priors::uniform(2));
    const LossValue lv = contradistinguish_loss(t, pl, Priors::uniform(2));
    CHECK(std::isfinite(lv.value));
    CHECK(lv.grad.all_finite());
  }

  TEST_CASE("label count mismatch is a shape error") {
    const auto t = trace_from_logits(Matrix{{0.0, 1.0}, {1.0, 0.0}});
    PseudoLabels pl{{0}, Matrix(1, 2)};
    CHECK_THROWS_AS(contradistinguish_loss(t, pl, Priors::uniform(2)), ShapeError);
  }
}

TEST_SUITE("adv_multilabel_loss") {
  TEST_CASE("uniform output gives 2 ln 2 for K=2") {
    const auto t = trace_from_logits(Matrix{{0.4, 0.4}});
    CHECK(adv_multilabel_loss(t).value == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
  }

  TEST_CASE("per-sample value is at least K ln K") {
    Rng rng(13);
    for (int rep = 0; rep < 50; ++rep) {
      const std::size_t k = 2 + rng.below(5);
      const Matrix z = oracle::random_matrix(1, k, rng, 3.0);
      const double kk = static_cast<double>(k);
      CHECK(adv_multilabel_loss(trace_from_logits(z)).value >= kk * std::log(kk) - 1e-9);
    }
  }

  TEST_CASE("gradient matches finite differences") {
    Rng rng(14);
    for (int rep = 0; rep < 20; ++rep) {
      const Matrix z = oracle::random_matrix(3, 4, rng, 2.0);
      const LossValue lv = adv_multilabel_loss(trace_from_logits(z));
      CHECK(lv.value == doctest::Approx(oracle::adv(z)).epsilon(1e-12));
      const Matrix fd = oracle::finite_difference(oracle::adv, z);
      CHECK(oracle::max_rel_error(lv.grad.values(), fd.values()) <= 1e-4);
    }
  }
}

TEST_SUITE("kernel_mmd") {
  TEST_CASE("identical sets give zero") {
    const Matrix a{{0.0, 1.0}, {2.0, -1.0}, {0.5, 0.5}};
    const Matrix b{{2.0, -1.0}, {0.5, 0.5}, {0.0, 1.0}};
    CHECK(std::abs(kernel_mmd(a, b, {0.7}).value) <= 1e-9);
    CHECK(std::abs(kernel_mmd(a, b, {}).value) <= 1e-9);
  }

  TEST_CASE("singletons have a closed form") {
    const Matrix a{{1.0, 2.0}};
    const Matrix b{{-0.5, 0.0}};
    const double gamma = 0.3;
    const double d2 = 1.5 * 1.5 + 2.0 * 2.0;
    CHECK(kernel_mmd(a, b, {gamma}).value == doctest::Approx(2.0 * (1.0 - std::exp(-gamma * d2))).epsilon(1e-14));
  }

  TEST_CASE("matches triple-loop oracle; gradients match finite differences") {
    Rng rng(15);
    for (int rep = 0; rep < 20; ++rep) {
      const Matrix a = oracle::random_matrix(3, 2, rng);
      const Matrix b = oracle::random_matrix(4, 2, rng);
      const double gamma = 0.2 + rng.uniform();
      const MmdValue v = kernel_mmd(a, b, {gamma});
      CHECK(std::abs(v.value - oracle::mmd(a, b, gamma)) <= 1e-12);
      const Matrix fa = oracle::finite_difference([&](const Matrix& m) { return oracle::mmd(m, b, gamma); }, a);
      const Matrix fb = oracle::finite_difference([&](const Matrix& m) { return oracle::mmd(a, m, gamma); }, b);
      CHECK(oracle::max_rel_error(v.grad_a.values(), fa.values()) <= 1e-4);
      CHECK(oracle::max_rel_error(v.grad_b.values(), fb.values()) <= 1e-4);
    }
  }

  TEST_CASE("median heuristic") {
    // Cross squared distances {1, 4}: median 2.5, gamma = 1 / 5.
    const Matrix a{{0.0}};
    const Matrix b{{1.0}, {2.0}};
    CHECK(kernel_mmd(a, b, {}).gamma == doctest::Approx(0.2));
    CHECK_THROWS_AS(kernel_mmd(Matrix{{1.0}}, Matrix{{1.0}}, {}), NumericError);
  }

  TEST_CASE("non-negative on random inputs") {
    Rng rng(16);
    for (int rep = 0; rep < 50; ++rep) {
      const Matrix a = oracle::random_matrix(1 + rng.below(6), 3, rng);
      const Matrix b = oracle::random_matrix(1 + rng.below(6), 3, rng, 2.0);
      CHECK(kernel_mmd(a, b, {0.1 + rng.uniform()}).value >= -1e-12);
    }
  }

  TEST_CASE("shape errors") {
    CHECK_THROWS_AS(kernel_mmd(Matrix(0, 2), Matrix(1, 2), {1.0}), ShapeError);
    CHECK_THROWS_AS(kernel_mmd(Matrix(1, 2), Matrix(1, 3), {1.0}), ShapeError);
  }
}

TEST_SUITE("multi_source_supervised") {
  TEST_CASE("single source is the identity") {
    const LossValue a{0.7, Matrix{{0.1, -0.1}}};
    const LossValue s = multi_source_supervised(std::vector<LossValue>{a});
    CHECK(s.value == 0.7);
    CHECK(s.grad == a.grad);
  }

  TEST_CASE("two equal losses double") {
    const LossValue a{0.7, Matrix{{0.1, -0.1}}};
    const LossValue s = multi_source_supervised(std::vector<LossValue>{a, a});
    CHECK(s.value == doctest::Approx(1.4));
    CHECK(s.grad(0, 0) == doctest::Approx(0.2));
  }

  TEST_CASE("three random losses match reverse-order accumulation") {
    Rng rng(17);
    std::vector<LossValue> parts;
    for (int r = 0; r < 3; ++r) parts.push_back({rng.uniform(), oracle::random_matrix(3, 2, rng)});
    const LossValue s = multi_source_supervised(parts);
    double v = 0.0;
    Matrix g(3, 2);
    for (int r = 2; r >= 0; --r) {
      v += parts[static_cast<std::size_t>(r)].value;
      g += parts[static_cast<std::size_t>(r)].grad;
    }
    CHECK(s.value == doctest::Approx(v).epsilon(1e-15));
    CHECK(max_abs_diff(s.grad, g) < 1e-15);
  }

  TEST_CASE("empty list is rejected") {
    CHECK_THROWS_AS(multi_source_supervised(std::vector<LossValue>{}), ValidationError);
  }
}
