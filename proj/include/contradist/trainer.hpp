#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "contradist/dataset.hpp"
#include "contradist/losses.hpp"
#include "contradist/matrix.hpp"
#include "contradist/model.hpp"
#include "contradist/optimizer.hpp"
#include "contradist/rng.hpp"

namespace contradist {

// Loss components: source supervised, source/target unsupervised
// (contradistinguish) and source/target adversarial.
enum class Term { ss, su, tu, sa, ta };

inline constexpr Term kAllTerms[] = {Term::ss, Term::su, Term::tu, Term::sa, Term::ta};

std::string to_string(Term t);
Term term_from_string(const std::string& s);

struct TermSet {
  bool ss = true;
  bool su = false;
  bool tu = false;
  bool sa = false;
  bool ta = false;

  bool contains(Term t) const;
  void set(Term t, bool on);
  // "ss,tu,ta"
  static TermSet parse(const std::string& list);
  std::string str() const;

  bool operator==(const TermSet&) const = default;
};

struct TermWeights {
  double ss = 1.0;
  double su = 1.0;
  double tu = 1.0;
  double sa = 1.0;
  double ta = 1.0;
  double gen = 1.0;

  double of(Term t) const;
  void set(Term t, double w);
};

enum class PriorMode { given, estimate_from_source };
enum class FakeSampler { gaussian_input, generator };

struct GeneratorConfig {
  std::size_t noise_dim = 8;
  std::vector<std::size_t> hidden{64};
  double lr = 1e-3;
};

struct TrainConfig {
  std::size_t batch_size = 128;
  std::size_t epochs = 100;
  OptimizerConfig optimizer;
  std::vector<std::size_t> hidden{64, 64};
  TermSet terms;
  TermWeights weights;
  PriorMode prior_mode = PriorMode::estimate_from_source;
  std::optional<Priors> target_prior;
  FakeSampler fake_sampler = FakeSampler::gaussian_input;
  GeneratorConfig generator;
  MmdConfig mmd;
  std::uint64_t seed = 0;

  void validate() const;
  // Enabled and carrying a non-zero weight.
  bool active(Term t) const { return terms.contains(t) && weights.of(t) != 0.0; }
};

nlohmann::json to_json(const TrainConfig& cfg);
// Missing fields keep their defaults; unknown fields are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

struct EpochRecord {
  std::size_t epoch = 0;
  // Mean over the epoch's steps of each active term, plus "total" and, in
  // generator mode, "gen".
  std::map<std::string, double> losses;
  double source_train_accuracy = 0.0;
  std::optional<double> target_train_accuracy;

  bool operator==(const EpochRecord&) const = default;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;

  // One JSON object per line.
  std::string to_json_lines() const;
  bool operator==(const TrainHistory&) const = default;
};

nlohmann::json to_json(const EpochRecord& r);

// Optional hook evaluated after each epoch. It is the only way target labels
// can influence the history, and it never feeds back into training.
using TargetDiagnostic = std::function<std::optional<double>(const ModelParams&)>;

struct TrainResult {
  ModelParams params;
  TrainHistory history;
  Priors target_prior;
  std::optional<GeneratorParams> generator;
};

// Per-dimension Gaussian with the sample mean and (n-1) standard deviation of
// `features`.
Matrix sample_fake_gaussian(const Matrix& features, std::size_t n_fake, Rng& rng);
Matrix sample_fake_gaussian(const Matrix& features, std::size_t n_fake, std::uint64_t seed);

struct GeneratorLoss {
  MmdValue mmd;
  Gradients grads;
  Matrix fakes;
};

// MMD between the classifier's last hidden embedding of G(noise) and of the
// target batch, with its gradient with respect to the generator parameters.
GeneratorLoss generator_loss(const GeneratorParams& gen, const ModelParams& clf, const Matrix& noise,
                             const Matrix& target_batch, const MmdConfig& mmd);

struct GeneratorStep {
  double mmd = 0.0;
  Matrix fakes;  // produced by the pre-update generator
};

// Draws N(0, I) noise, evaluates generator_loss and applies one optimizer
// step (gradient scaled by `weight`) to the generator only.
GeneratorStep generator_step(GeneratorParams& gen, Optimizer& opt, const ModelParams& clf,
                             const Matrix& target_batch, const MmdConfig& mmd, std::size_t n_fake,
                             Rng& rng, double weight = 1.0);

GeneratorParams init_generator(const GeneratorConfig& cfg, std::size_t output_dim, std::uint64_t seed);

Priors estimate_target_prior(const TrainConfig& cfg, std::span<const DomainDataset> sources);

// Joint training. Sources must be labelled; the target is passed as bare
// features, so its labels cannot be read here.
TrainResult train(const TrainConfig& cfg, std::span<const DomainDataset> sources,
                  const Matrix& target, const TargetDiagnostic& diagnostic = {});

// Shuffled mini-batches over [0, n). A new permutation is drawn whenever fewer
// than `batch` unused indices remain in the current pass.
class BatchCycler {
 public:
  BatchCycler(std::size_t n, std::size_t batch, Rng rng);
  std::span<const std::size_t> next();
  std::size_t batch_size() const noexcept { return batch_; }

 private:
  std::vector<std::size_t> order_;
  std::size_t batch_;
  std::size_t pos_ = 0;
  Rng rng_;
};

}  // namespace contradist
