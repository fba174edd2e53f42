// Command-line front end: gen-data, train, eval, contour, sweep.
//
// Exit codes: 0 success, 1 validation error, 2 runtime or numeric error.
// Option precedence: built-in defaults < --config file < explicit flags.

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "contradist/errors.hpp"
#include "contradist/experiment.hpp"
#include "contradist/presets.hpp"

namespace {

using namespace contradist;

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> parse_reals(const std::string& s, const std::string& what) {
  std::vector<double> out;
  for (const auto& x : split_list(s)) {
    try {
      out.push_back(parse_double(x));
    } catch (const ParseError&) {
      throw ValidationError(what + ": '" + x + "' is not a number");
    }
  }
  return out;
}

// Flags shared by gen-data and train. Unset flags leave the config untouched.
struct ExperimentFlags {
  std::string config;
  std::string preset;
  std::string data_dir;
  std::string out;
  std::string sources;
  std::string target;
  std::string terms;
  std::string weights;
  std::string prior;
  std::string optimizer;
  std::string fake_sampler;
  std::string hidden;
  std::string mmd_gamma;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> data_seed;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> lr;
  std::optional<double> fraction;

  ExperimentConfig resolve() const {
    ExperimentConfig cfg;
    if (!config.empty()) cfg = experiment_from_json(read_json_file(config));
    if (!preset.empty()) {
      cfg.preset = preset;
      cfg.domains.clear();
    }
    if (!data_dir.empty()) cfg.data_dir = data_dir;
    if (!out.empty()) cfg.output_dir = out;
    if (!sources.empty()) cfg.sources = split_list(sources);
    if (!target.empty()) cfg.target = target;
    if (!terms.empty()) cfg.train.terms = TermSet::parse(terms);
    if (!weights.empty()) {
      for (const auto& kv : split_list(weights)) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ValidationError("--weights expects term=value pairs");
        const std::string name = kv.substr(0, eq);
        const double w = parse_reals(kv.substr(eq + 1), "--weights").at(0);
        if (name == "gen") {
          cfg.train.weights.gen = w;
        } else {
          cfg.train.weights.set(term_from_string(name), w);
        }
      }
    }
    if (!prior.empty()) {
      cfg.train.prior_mode = PriorMode::given;
      cfg.train.target_prior = Priors{parse_reals(prior, "--prior")};
    }
    if (!optimizer.empty()) cfg.train.optimizer.kind = optimizer_from_string(optimizer);
    if (!fake_sampler.empty()) {
      if (fake_sampler == "generator") {
        cfg.train.fake_sampler = FakeSampler::generator;
      } else if (fake_sampler == "gaussian" || fake_sampler == "gaussian_input") {
        cfg.train.fake_sampler = FakeSampler::gaussian_input;
      } else {
        throw ValidationError("--fake-sampler must be gaussian or generator");
      }
    }
    if (!hidden.empty()) {
      cfg.train.hidden.clear();
      for (double h : parse_reals(hidden, "--hidden")) cfg.train.hidden.push_back(static_cast<std::size_t>(h));
    }
    if (!mmd_gamma.empty()) {
      if (mmd_gamma == "median-heuristic") {
        cfg.train.mmd.gamma.reset();
      } else {
        cfg.train.mmd.gamma = parse_reals(mmd_gamma, "--mmd-gamma").at(0);
      }
    }
    if (seed) cfg.train.seed = *seed;
    if (data_seed) cfg.data_seed = *data_seed;
    if (epochs) cfg.train.epochs = *epochs;
    if (batch_size) cfg.train.batch_size = *batch_size;
    if (lr) cfg.train.optimizer.lr = *lr;
    if (fraction) cfg.train_fraction = *fraction;
    return cfg;
  }
};

void add_data_flags(CLI::App* cmd, ExperimentFlags& f) {
  cmd->add_option("--config", f.config, "JSON experiment config (schema_version 1)");
  cmd->add_option("--preset", f.preset, "Blob preset name");
  cmd->add_option("--data", f.data_dir, "Dataset directory");
  cmd->add_option("--data-seed", f.data_seed, "Seed for data generation and splitting");
  cmd->add_option("--fraction", f.fraction, "Train fraction of the stratified split");
}

void add_train_flags(CLI::App* cmd, ExperimentFlags& f) {
  cmd->add_option("--config", f.config, "JSON experiment config (schema_version 1)");
  cmd->add_option("--data", f.data_dir, "Directory holding <domain>_train.csv / _test.csv");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--sources", f.sources, "Comma-separated source domains, e.g. D0 or D0,D1");
  cmd->add_option("--target", f.target, "Target domain");
  cmd->add_option("--terms", f.terms, "Loss terms, e.g. ss,tu,ta");
  cmd->add_option("--weights", f.weights, "Term weights, e.g. tu=1,ta=0.5,gen=1");
  cmd->add_option("--prior", f.prior, "Known target prior, e.g. 0.9,0.1");
  cmd->add_option("--optimizer", f.optimizer, "adam or sgd");
  cmd->add_option("--fake-sampler", f.fake_sampler, "gaussian or generator");
  cmd->add_option("--hidden", f.hidden, "Hidden widths, e.g. 64,64");
  cmd->add_option("--mmd-gamma", f.mmd_gamma, "Kernel gamma or median-heuristic");
  cmd->add_option("--seed", f.seed, "Training seed");
  cmd->add_option("--epochs", f.epochs, "Epochs");
  cmd->add_option("--batch-size", f.batch_size, "Mini-batch size");
  cmd->add_option("--lr", f.lr, "Learning rate");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contradistinguisher domain adaptation on toy and CSV feature data"};
  app.require_subcommand(1);

  ExperimentFlags gen_flags;
  auto* gen = app.add_subcommand("gen-data", "Generate and split a blob preset into CSV files");
  add_data_flags(gen, gen_flags);

  ExperimentFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "Train a contradistinguisher");
  add_train_flags(train_cmd, train_flags);

  std::string eval_ckpt;
  std::string eval_data;
  std::string eval_out;
  auto* eval = app.add_subcommand("eval", "Score a checkpoint on a labelled CSV");
  eval->add_option("--checkpoint", eval_ckpt, "Model checkpoint")->required();
  eval->add_option("--data", eval_data, "Labelled dataset CSV")->required();
  eval->add_option("--out", eval_out, "Write metrics JSON here");

  ContourOptions contour_opts;
  std::string contour_ckpt;
  std::string contour_out;
  std::string contour_bounds;
  std::vector<std::string> contour_data;
  auto* contour = app.add_subcommand("contour", "Export decision-boundary probabilities on a grid");
  contour->add_option("--checkpoint", contour_ckpt, "Model checkpoint")->required();
  contour->add_option("--out", contour_out, "Output CSV")->required();
  contour->add_option("--resolution", contour_opts.resolution, "Grid points per axis");
  contour->add_option("--bounds", contour_bounds, "x_min,x_max,y_min,y_max");
  contour->add_option("--data", contour_data, "CSV files whose bounding box (+20%) sets the default bounds");

  std::string sweep_config;
  std::string sweep_out;
  std::optional<std::size_t> sweep_threads;
  std::optional<std::size_t> sweep_epochs;
  auto* sweep = app.add_subcommand("sweep", "Run a preset x direction x terms x seed matrix");
  sweep->add_option("--config", sweep_config, "JSON sweep config (schema_version 1)");
  sweep->add_option("--out", sweep_out, "Output directory");
  sweep->add_option("--threads", sweep_threads, "Worker threads (capped by CONTRADIST_THREADS)");
  sweep->add_option("--epochs", sweep_epochs, "Override epochs for every cell");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*gen) {
      cmd_gen_data(gen_flags.resolve(), std::cout);
    } else if (*train_cmd) {
      cmd_train(train_flags.resolve(), std::cout);
    } else if (*eval) {
      cmd_eval(eval_ckpt, eval_data, eval_out.empty() ? std::nullopt : std::optional<std::filesystem::path>(eval_out),
               std::cout);
    } else if (*contour) {
      contour_opts.checkpoint = contour_ckpt;
      contour_opts.out = contour_out;
      for (const auto& d : contour_data) contour_opts.data.emplace_back(d);
      if (!contour_bounds.empty()) {
        const auto b = parse_reals(contour_bounds, "--bounds");
        if (b.size() != 4) throw ValidationError("--bounds expects x_min,x_max,y_min,y_max");
        contour_opts.bounds = Bounds{b[0], b[1], b[2], b[3]};
      }
      cmd_contour(contour_opts, std::cout);
    } else if (*sweep) {
      SweepConfig cfg;
      if (!sweep_config.empty()) cfg = sweep_from_json(read_json_file(sweep_config));
      if (!sweep_out.empty()) cfg.output_dir = sweep_out;
      if (sweep_threads) cfg.threads = *sweep_threads;
      if (sweep_epochs) cfg.train.epochs = *sweep_epochs;
      const SweepResult r = cmd_sweep(cfg, std::cout);
      std::cout << r.rows.size() << " cells, " << r.failures << " failed; summary at "
                << (cfg.output_dir / "summary.csv").string() << '\n';
      return r.failures == 0 ? 0 : 2;
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
