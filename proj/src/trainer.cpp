#include "contradist/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "contradist/errors.hpp"
#include "contradist/eval.hpp"

namespace contradist {

// ---------------------------------------------------------------------------
// Terms and configuration

std::string to_string(Term t) {
  switch (t) {
    case Term::ss: return "ss";
    case Term::su: return "su";
    case Term::tu: return "tu";
    case Term::sa: return "sa";
    case Term::ta: return "ta";
  }
  return "?";
}

Term term_from_string(const std::string& s) {
  for (Term t : kAllTerms) {
    if (to_string(t) == s) return t;
  }
  throw ValidationError("unknown loss term '" + s + "' (expected ss, su, tu, sa or ta)");
}

bool TermSet::contains(Term t) const {
  switch (t) {
    case Term::ss: return ss;
    case Term::su: return su;
    case Term::tu: return tu;
    case Term::sa: return sa;
    case Term::ta: return ta;
  }
  return false;
}

void TermSet::set(Term t, bool on) {
  switch (t) {
    case Term::ss: ss = on; break;
    case Term::su: su = on; break;
    case Term::tu: tu = on; break;
    case Term::sa: sa = on; break;
    case Term::ta: ta = on; break;
  }
}

TermSet TermSet::parse(const std::string& list) {
  TermSet out;
  out.ss = false;
  std::stringstream in(list);
  std::string item;
  bool any = false;
  while (std::getline(in, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t+"));
    item.erase(item.find_last_not_of(" \t+") + 1);
    if (item.empty()) continue;
    out.set(term_from_string(item), true);
    any = true;
  }
  if (!any) throw ValidationError("empty loss term list");
  return out;
}

std::string TermSet::str() const {
  std::string out;
  for (Term t : kAllTerms) {
    if (!contains(t)) continue;
    if (!out.empty()) out += ',';
    out += to_string(t);
  }
  return out;
}

double TermWeights::of(Term t) const {
  switch (t) {
    case Term::ss: return ss;
    case Term::su: return su;
    case Term::tu: return tu;
    case Term::sa: return sa;
    case Term::ta: return ta;
  }
  return 0.0;
}

void TermWeights::set(Term t, double w) {
  switch (t) {
    case Term::ss: ss = w; break;
    case Term::su: su = w; break;
    case Term::tu: tu = w; break;
    case Term::sa: sa = w; break;
    case Term::ta: ta = w; break;
  }
}

void TrainConfig::validate() const {
  if (!terms.ss) throw ValidationError("the source supervised term 'ss' must be enabled");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (terms.tu && batch_size < 2) throw ValidationError("batch_size must be >= 2 when 'tu' is enabled");
  if (!(optimizer.lr >= 0.0) || !std::isfinite(optimizer.lr)) throw ValidationError("lr must be >= 0");
  for (Term t : kAllTerms) {
    const double w = weights.of(t);
    if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("term weights must be finite and >= 0");
  }
  if (!(weights.gen >= 0.0) || !std::isfinite(weights.gen)) {
    throw ValidationError("generator weight must be finite and >= 0");
  }
  for (auto h : hidden) {
    if (h == 0) throw ValidationError("hidden layer widths must be positive");
  }
  if (prior_mode == PriorMode::given) {
    if (!target_prior) throw ValidationError("prior_mode 'given' requires target_prior");
    target_prior->validate();
  }
  if (mmd.gamma && !(*mmd.gamma > 0.0)) throw ValidationError("mmd gamma must be positive");
  if (fake_sampler == FakeSampler::generator) {
    if (generator.noise_dim == 0) throw ValidationError("generator noise_dim must be positive");
    if (!(generator.lr >= 0.0)) throw ValidationError("generator lr must be >= 0");
    for (auto h : generator.hidden) {
      if (h == 0) throw ValidationError("generator hidden widths must be positive");
    }
  }
}

nlohmann::json to_json(const TrainConfig& cfg) {
  nlohmann::json j;
  j["batch_size"] = cfg.batch_size;
  j["epochs"] = cfg.epochs;
  j["optimizer"] = {{"kind", to_string(cfg.optimizer.kind)},
                    {"lr", cfg.optimizer.lr},
                    {"beta1", cfg.optimizer.beta1},
                    {"beta2", cfg.optimizer.beta2},
                    {"eps", cfg.optimizer.eps}};
  j["hidden"] = cfg.hidden;
  j["terms"] = cfg.terms.str();
  j["weights"] = {{"ss", cfg.weights.ss}, {"su", cfg.weights.su}, {"tu", cfg.weights.tu},
                  {"sa", cfg.weights.sa}, {"ta", cfg.weights.ta}, {"gen", cfg.weights.gen}};
  j["prior_mode"] = cfg.prior_mode == PriorMode::given ? "given" : "estimate_from_source";
  j["target_prior"] = cfg.target_prior ? nlohmann::json(cfg.target_prior->probs) : nlohmann::json(nullptr);
  j["fake_sampler"] = cfg.fake_sampler == FakeSampler::generator ? "generator" : "gaussian_input";
  j["generator"] = {{"noise_dim", cfg.generator.noise_dim},
                    {"hidden", cfg.generator.hidden},
                    {"lr", cfg.generator.lr}};
  j["mmd"] = {{"gamma", cfg.mmd.gamma ? nlohmann::json(*cfg.mmd.gamma) : nlohmann::json("median-heuristic")}};
  j["seed"] = cfg.seed;
  return j;
}

namespace {

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                    const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ValidationError("unknown field '" + key + "' in " + where);
    }
  }
}

}  // namespace

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig cfg) {
  if (!j.is_object()) throw ValidationError("train config must be a JSON object");
  reject_unknown(j,
                 {"batch_size", "epochs", "optimizer", "hidden", "terms", "weights", "prior_mode",
                  "target_prior", "fake_sampler", "generator", "mmd", "seed"},
                 "train config");
  try {
    if (j.contains("batch_size")) cfg.batch_size = j.at("batch_size").get<std::size_t>();
    if (j.contains("epochs")) cfg.epochs = j.at("epochs").get<std::size_t>();
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      reject_unknown(o, {"kind", "lr", "beta1", "beta2", "eps"}, "optimizer");
      if (o.contains("kind")) cfg.optimizer.kind = optimizer_from_string(o.at("kind").get<std::string>());
      if (o.contains("lr")) cfg.optimizer.lr = o.at("lr").get<double>();
      if (o.contains("beta1")) cfg.optimizer.beta1 = o.at("beta1").get<double>();
      if (o.contains("beta2")) cfg.optimizer.beta2 = o.at("beta2").get<double>();
      if (o.contains("eps")) cfg.optimizer.eps = o.at("eps").get<double>();
    }
    if (j.contains("hidden")) cfg.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    if (j.contains("terms")) {
      const auto& t = j.at("terms");
      if (t.is_string()) {
        cfg.terms = TermSet::parse(t.get<std::string>());
      } else {
        std::string joined;
        for (const auto& x : t) joined += x.get<std::string>() + ",";
        cfg.terms = TermSet::parse(joined);
      }
    }
    if (j.contains("weights")) {
      const auto& w = j.at("weights");
      reject_unknown(w, {"ss", "su", "tu", "sa", "ta", "gen"}, "weights");
      for (Term t : kAllTerms) {
        if (w.contains(to_string(t))) cfg.weights.set(t, w.at(to_string(t)).get<double>());
      }
      if (w.contains("gen")) cfg.weights.gen = w.at("gen").get<double>();
    }
    if (j.contains("prior_mode")) {
      const auto m = j.at("prior_mode").get<std::string>();
      if (m == "given") {
        cfg.prior_mode = PriorMode::given;
      } else if (m == "estimate_from_source") {
        cfg.prior_mode = PriorMode::estimate_from_source;
      } else {
        throw ValidationError("unknown prior_mode '" + m + "'");
      }
    }
    if (j.contains("target_prior")) {
      const auto& p = j.at("target_prior");
      if (p.is_null()) {
        cfg.target_prior.reset();
      } else {
        cfg.target_prior = Priors{p.get<std::vector<double>>()};
      }
    }
    if (j.contains("fake_sampler")) {
      const auto f = j.at("fake_sampler").get<std::string>();
      if (f == "generator") {
        cfg.fake_sampler = FakeSampler::generator;
      } else if (f == "gaussian_input") {
        cfg.fake_sampler = FakeSampler::gaussian_input;
      } else {
        throw ValidationError("unknown fake_sampler '" + f + "'");
      }
    }
    if (j.contains("generator")) {
      const auto& g = j.at("generator");
      reject_unknown(g, {"noise_dim", "hidden", "lr"}, "generator");
      if (g.contains("noise_dim")) cfg.generator.noise_dim = g.at("noise_dim").get<std::size_t>();
      if (g.contains("hidden")) cfg.generator.hidden = g.at("hidden").get<std::vector<std::size_t>>();
      if (g.contains("lr")) cfg.generator.lr = g.at("lr").get<double>();
    }
    if (j.contains("mmd")) {
      const auto& m = j.at("mmd");
      reject_unknown(m, {"gamma"}, "mmd");
      if (m.contains("gamma")) {
        const auto& g = m.at("gamma");
        if (g.is_string()) {
          if (g.get<std::string>() != "median-heuristic") {
            throw ValidationError("mmd gamma must be a number or \"median-heuristic\"");
          }
          cfg.mmd.gamma.reset();
        } else {
          cfg.mmd.gamma = g.get<double>();
        }
      }
    }
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("train config: ") + e.what());
  }
  return cfg;
}

nlohmann::json to_json(const EpochRecord& r) {
  nlohmann::json j;
  j["epoch"] = r.epoch;
  j["losses"] = r.losses;
  j["source_train_accuracy"] = r.source_train_accuracy;
  j["target_train_accuracy"] =
      r.target_train_accuracy ? nlohmann::json(*r.target_train_accuracy) : nlohmann::json(nullptr);
  return j;
}

std::string TrainHistory::to_json_lines() const {
  std::string out;
  for (const auto& r : epochs) out += to_json(r).dump() + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Fake samples and the generator

Matrix sample_fake_gaussian(const Matrix& features, std::size_t n_fake, Rng& rng) {
  const std::size_t n = features.rows();
  const std::size_t d = features.cols();
  if (n < 2) throw ValidationError("sample_fake_gaussian: need at least 2 rows for a std");
  std::vector<double> mean(d, 0.0);
  std::vector<double> sd(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < d; ++c) mean[c] += features(i, c);
  }
  for (double& m : mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < d; ++c) {
      const double dv = features(i, c) - mean[c];
      sd[c] += dv * dv;
    }
  }
  for (double& s : sd) s = std::sqrt(s / static_cast<double>(n - 1));

  Matrix out(n_fake, d);
  for (std::size_t i = 0; i < n_fake; ++i) {
    for (std::size_t c = 0; c < d; ++c) {
      const double z = rng.normal();
      out(i, c) = sd[c] == 0.0 ? mean[c] : mean[c] + sd[c] * z;
    }
  }
  return out;
}

Matrix sample_fake_gaussian(const Matrix& features, std::size_t n_fake, std::uint64_t seed) {
  Rng rng(seed, 0xFA4E);
  return sample_fake_gaussian(features, n_fake, rng);
}

GeneratorParams init_generator(const GeneratorConfig& cfg, std::size_t output_dim, std::uint64_t seed) {
  std::vector<std::size_t> dims{cfg.noise_dim};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(output_dim);
  return GeneratorParams{init_params(dims, seed ^ 0x6E4E7A70ULL)};
}

GeneratorLoss generator_loss(const GeneratorParams& gen, const ModelParams& clf, const Matrix& noise,
                             const Matrix& target_batch, const MmdConfig& mmd) {
  if (gen.output_dim() != clf.input_dim()) {
    throw ShapeError("generator output width does not match classifier input");
  }
  const ForwardTrace gtrace = forward(gen.net, noise);
  Matrix fakes = gtrace.logits();
  const ForwardTrace fake_trace = forward(clf, fakes);
  const ForwardTrace real_trace = forward(clf, target_batch);

  GeneratorLoss out;
  out.mmd = kernel_mmd(fake_trace.embedding(), real_trace.embedding(), mmd);
  // The embedding is activations[L-1]; for a classifier without hidden layers
  // it is the input itself.
  const std::size_t L = clf.num_layers();
  Matrix dfake = L > 1 ? backward_from(clf, fake_trace, L - 1, out.mmd.grad_a).input_grad
                       : out.mmd.grad_a;
  out.grads = backward_from(gen.net, gtrace, gen.net.num_layers(), dfake).grads;
  out.fakes = std::move(fakes);
  return out;
}

GeneratorStep generator_step(GeneratorParams& gen, Optimizer& opt, const ModelParams& clf,
                             const Matrix& target_batch, const MmdConfig& mmd, std::size_t n_fake,
                             Rng& rng, double weight) {
  Matrix noise(n_fake, gen.noise_dim());
  for (double& x : noise.values()) x = rng.normal();
  GeneratorLoss loss = generator_loss(gen, clf, noise, target_batch, mmd);
  if (!std::isfinite(loss.mmd.value) || !loss.grads.all_finite()) {
    throw NumericError("generator MMD loss diverged");
  }
  loss.grads *= weight;
  opt.step(gen.net, loss.grads);
  return {loss.mmd.value, std::move(loss.fakes)};
}

// ---------------------------------------------------------------------------
// Training loop

BatchCycler::BatchCycler(std::size_t n, std::size_t batch, Rng rng)
    : order_(n), batch_(std::min(batch, n)), pos_(0), rng_(rng) {
  for (std::size_t i = 0; i < n; ++i) order_[i] = i;
  rng_.shuffle(order_);
}

std::span<const std::size_t> BatchCycler::next() {
  if (pos_ + batch_ > order_.size()) {
    rng_.shuffle(order_);
    pos_ = 0;
  }
  std::span<const std::size_t> out(order_.data() + pos_, batch_);
  pos_ += batch_;
  return out;
}

Priors estimate_target_prior(const TrainConfig& cfg, std::span<const DomainDataset> sources) {
  if (cfg.prior_mode == PriorMode::given) {
    if (!cfg.target_prior) throw ValidationError("prior_mode 'given' requires target_prior");
    cfg.target_prior->validate();
    return *cfg.target_prior;
  }
  Labels pooled;
  std::size_t k = 0;
  for (const auto& s : sources) {
    if (!s.labels) throw ValidationError("source '" + s.domain_id + "' is unlabeled");
    pooled.insert(pooled.end(), s.labels->begin(), s.labels->end());
    k = std::max(k, s.num_classes());
  }
  return estimate_prior(pooled, k);
}

namespace {

struct Block {
  std::size_t begin;
  std::size_t rows;
};

// Probability rows [b.begin, b.begin + b.rows) of a trace, enough for the losses.
ForwardTrace output_rows(const ForwardTrace& t, Block b) {
  ForwardTrace out;
  out.probs = Matrix(b.rows, t.num_classes());
  out.log_probs = Matrix(b.rows, t.num_classes());
  for (std::size_t i = 0; i < b.rows; ++i) {
    for (std::size_t c = 0; c < t.num_classes(); ++c) {
      out.probs(i, c) = t.probs(b.begin + i, c);
      out.log_probs(i, c) = t.log_probs(b.begin + i, c);
    }
  }
  return out;
}

// Zero-pads a block loss to the full stacked batch.
LossValue embed(const LossValue& part, Block b, std::size_t total_rows) {
  LossValue out{part.value, Matrix(total_rows, part.grad.cols())};
  for (std::size_t i = 0; i < b.rows; ++i) {
    for (std::size_t c = 0; c < part.grad.cols(); ++c) out.grad(b.begin + i, c) = part.grad(i, c);
  }
  return out;
}

void require_finite(double v, const std::string& what, std::size_t epoch) {
  if (!std::isfinite(v)) {
    throw NumericError(what + " loss became non-finite in epoch " + std::to_string(epoch));
  }
}

double accuracy(const ModelParams& p, std::span<const DomainDataset> sets) {
  std::size_t correct = 0;
  std::size_t total = 0;
  for (const auto& s : sets) {
    const Labels pred = predict(p, s.features);
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == (*s.labels)[i] ? 1 : 0;
    total += pred.size();
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace

TrainResult train(const TrainConfig& cfg, std::span<const DomainDataset> sources, const Matrix& target,
                  const TargetDiagnostic& diagnostic) {
  cfg.validate();
  if (sources.empty()) throw ValidationError("train: at least one source domain is required");
  const std::size_t d = target.cols();
  std::size_t k = 0;
  for (const auto& s : sources) {
    if (!s.labeled()) throw ValidationError("source '" + s.domain_id + "' is unlabeled");
    s.validate();
    if (s.dim() != d) {
      throw ValidationError("source '" + s.domain_id + "' has " + std::to_string(s.dim()) +
                            " features, target has " + std::to_string(d));
    }
    const std::size_t ks = s.num_classes();
    if (k != 0 && ks != k) {
      throw ValidationError("class count mismatch across sources (" + std::to_string(k) + " vs " +
                            std::to_string(ks) + ")");
    }
    k = ks;
  }
  if (k < 2) throw ValidationError("train: need at least 2 classes");
  if (target.rows() == 0) throw ValidationError("train: target domain is empty");
  if (!target.all_finite()) throw ValidationError("train: target has non-finite features");
  if (cfg.target_prior && cfg.prior_mode == PriorMode::given && cfg.target_prior->size() != k) {
    throw ValidationError("target prior has " + std::to_string(cfg.target_prior->size()) +
                          " classes, sources have " + std::to_string(k));
  }

  const bool use_tu = cfg.active(Term::tu);
  const bool use_su = cfg.active(Term::su);
  const bool use_ta = cfg.active(Term::ta);
  const bool use_sa = cfg.active(Term::sa);
  const bool use_generator = use_ta && cfg.fake_sampler == FakeSampler::generator;
  if (use_tu && target.rows() < 2) throw ValidationError("train: 'tu' needs at least 2 target rows");
  if (use_ta && target.rows() < 2) throw ValidationError("train: 'ta' needs at least 2 target rows");

  const Priors target_prior = estimate_target_prior(cfg, sources);
  std::vector<Priors> source_priors;
  for (const auto& s : sources) source_priors.push_back(estimate_prior(*s.labels, k));

  std::vector<std::size_t> dims{d};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(k);

  TrainResult result{init_params(dims, cfg.seed), {}, target_prior, std::nullopt};
  ModelParams& params = result.params;
  Optimizer opt(cfg.optimizer, params);

  std::optional<Optimizer> gen_opt;
  if (use_generator) {
    result.generator = init_generator(cfg.generator, d, cfg.seed);
    OptimizerConfig gcfg = cfg.optimizer;
    gcfg.lr = cfg.generator.lr;
    gen_opt.emplace(gcfg, result.generator->net);
  }

  const Rng root(cfg.seed, 0xC0DA);
  std::vector<BatchCycler> source_cyclers;
  std::size_t n_max = target.rows();
  for (std::size_t r = 0; r < sources.size(); ++r) {
    source_cyclers.emplace_back(sources[r].size(), cfg.batch_size, root.fork(100 + r));
    n_max = std::max(n_max, sources[r].size());
  }
  BatchCycler target_cycler(target.rows(), cfg.batch_size, root.fork(99));
  Rng fake_rng = root.fork(7);
  const std::size_t n_batches = (n_max + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t n_fake = cfg.batch_size;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::map<std::string, double> sums;

    for (std::size_t step = 0; step < n_batches; ++step) {
      // Source side: every source batch goes through one stacked forward pass.
      std::vector<Matrix> xs;
      std::vector<Labels> ys;
      std::vector<Block> blocks;
      std::size_t row = 0;
      for (std::size_t r = 0; r < sources.size(); ++r) {
        auto idx = source_cyclers[r].next();
        xs.push_back(gather_rows(sources[r].features, idx));
        Labels y;
        y.reserve(idx.size());
        for (auto i : idx) y.push_back((*sources[r].labels)[i]);
        ys.push_back(std::move(y));
        blocks.push_back({row, idx.size()});
        row += idx.size();
      }
      const std::size_t source_rows = row;
      const ForwardTrace src_trace = forward(params, vstack(xs));

      std::vector<LossValue> ce_parts;
      for (std::size_t r = 0; r < sources.size(); ++r) {
        ce_parts.push_back(embed(ce_loss(output_rows(src_trace, blocks[r]), ys[r]), blocks[r], source_rows));
      }
      const LossValue ss = multi_source_supervised(ce_parts);
      Matrix src_grad = ss.grad;
      src_grad *= cfg.weights.ss;
      double total = cfg.weights.ss * ss.value;
      sums["ss"] += ss.value;

      if (use_su) {
        std::vector<LossValue> parts;
        for (std::size_t r = 0; r < sources.size(); ++r) {
          const ForwardTrace part = output_rows(src_trace, blocks[r]);
          const PseudoLabels pl = pseudo_label_select(part.probs, source_priors[r]);
          parts.push_back(embed(contradistinguish_loss(part, pl, source_priors[r]), blocks[r], source_rows));
        }
        const LossValue su = multi_source_supervised(parts);
        Matrix g = su.grad;
        g *= cfg.weights.su;
        src_grad += g;
        total += cfg.weights.su * su.value;
        sums["su"] += su.value;
      }
      Gradients grads = backward(params, src_trace, src_grad);

      // Target side.
      Matrix xt;
      if (use_tu || use_ta) xt = gather_rows(target, target_cycler.next());
      if (use_tu) {
        const ForwardTrace t_trace = forward(params, xt);
        const PseudoLabels pl = pseudo_label_select(t_trace.probs, target_prior);
        LossValue tu = contradistinguish_loss(t_trace, pl, target_prior);
        tu.grad *= cfg.weights.tu;
        grads += backward(params, t_trace, tu.grad);
        total += cfg.weights.tu * tu.value;
        sums["tu"] += tu.value;
      }

      if (use_ta) {
        Matrix fakes;
        if (use_generator) {
          GeneratorStep gs = generator_step(*result.generator, *gen_opt, params, xt, cfg.mmd, n_fake,
                                            fake_rng, cfg.weights.gen);
          fakes = std::move(gs.fakes);
          sums["gen"] += gs.mmd;
        } else {
          fakes = sample_fake_gaussian(xt, n_fake, fake_rng);
        }
        const ForwardTrace f_trace = forward(params, fakes);
        LossValue ta = adv_multilabel_loss(f_trace);
        ta.grad *= cfg.weights.ta;
        grads += backward(params, f_trace, ta.grad);
        total += cfg.weights.ta * ta.value;
        sums["ta"] += ta.value;
      }

      if (use_sa) {
        std::vector<Matrix> fakes;
        std::vector<Block> fblocks;
        std::size_t frow = 0;
        for (std::size_t r = 0; r < sources.size(); ++r) {
          if (xs[r].rows() < 2) throw ValidationError("'sa' needs source batches of at least 2 rows");
          fakes.push_back(sample_fake_gaussian(xs[r], n_fake, fake_rng));
          fblocks.push_back({frow, n_fake});
          frow += n_fake;
        }
        const ForwardTrace f_trace = forward(params, vstack(fakes));
        std::vector<LossValue> parts;
        for (std::size_t r = 0; r < sources.size(); ++r) {
          parts.push_back(embed(adv_multilabel_loss(output_rows(f_trace, fblocks[r])), fblocks[r], frow));
        }
        LossValue sa = multi_source_supervised(parts);
        sa.grad *= cfg.weights.sa;
        grads += backward(params, f_trace, sa.grad);
        total += cfg.weights.sa * sa.value;
        sums["sa"] += sa.value;
      }

      require_finite(total, "total", epoch);
      if (!grads.all_finite()) {
        throw NumericError("gradient became non-finite in epoch " + std::to_string(epoch));
      }
      sums["total"] += total;
      opt.step(params, grads);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    for (const auto& [name, s] : sums) {
      rec.losses[name] = s / static_cast<double>(n_batches);
      require_finite(rec.losses[name], name, epoch);
    }
    rec.source_train_accuracy = accuracy(params, sources);
    if (diagnostic) rec.target_train_accuracy = diagnostic(params);
    result.history.epochs.push_back(std::move(rec));
  }
  return result;
}

}  // namespace contradist
