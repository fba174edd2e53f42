#include "contradist/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "contradist/errors.hpp"
#include "contradist/model.hpp"
#include "contradist/presets.hpp"

namespace contradist {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config serialization

void ExperimentConfig::validate() const {
  if (sources.empty()) throw ValidationError("at least one source domain is required");
  if (target.empty()) throw ValidationError("a target domain is required");
  if (std::find(sources.begin(), sources.end(), target) != sources.end()) {
    throw ValidationError("target '" + target + "' is also listed as a source");
  }
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ValidationError("train_fraction must lie in (0, 1)");
  }
  train.validate();
}

json to_json(const BlobSpec& spec) {
  json classes = json::array();
  for (const auto& c : spec.classes) {
    classes.push_back({{"center", {c.center[0], c.center[1]}}, {"std", c.std}});
  }
  return {{"classes", classes},
          {"samples_per_class", spec.samples_per_class},
          {"rotation_deg", spec.rotation_deg},
          {"offset", {spec.offset[0], spec.offset[1]}},
          {"seed", spec.seed}};
}

BlobSpec blob_spec_from_json(const json& j) {
  try {
    BlobSpec s;
    for (const auto& c : j.at("classes")) {
      const auto center = c.at("center").get<std::vector<double>>();
      if (center.size() != 2) throw ValidationError("blob center must have 2 coordinates");
      s.classes.push_back({{center[0], center[1]}, c.at("std").get<double>()});
    }
    s.samples_per_class = j.value("samples_per_class", s.samples_per_class);
    s.rotation_deg = j.value("rotation_deg", 0.0);
    if (j.contains("offset")) {
      const auto off = j.at("offset").get<std::vector<double>>();
      if (off.size() != 2) throw ValidationError("blob offset must have 2 coordinates");
      s.offset = {off[0], off[1]};
    }
    s.seed = j.value("seed", std::uint64_t{0});
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("blob spec: ") + e.what());
  }
}

json to_json(const ExperimentConfig& cfg) {
  json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["preset"] = cfg.preset;
  json doms = json::object();
  for (const auto& [name, spec] : cfg.domains) doms[name] = to_json(spec);
  j["domains"] = doms;
  j["data_seed"] = cfg.data_seed;
  j["train_fraction"] = cfg.train_fraction;
  j["sources"] = cfg.sources;
  j["target"] = cfg.target;
  j["train"] = to_json(cfg.train);
  j["data_dir"] = cfg.data_dir.string();
  j["output_dir"] = cfg.output_dir.string();
  return j;
}

namespace {

void check_schema(const json& j) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  if (!j.contains("schema_version")) throw ValidationError("config is missing schema_version");
  const auto v = j.at("schema_version");
  if (!v.is_number_integer() || v.get<int>() != kConfigSchemaVersion) {
    throw ValidationError("unsupported config schema_version (expected " +
                          std::to_string(kConfigSchemaVersion) + ")");
  }
}

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ValidationError("unknown field '" + key + "' in " + where);
    }
  }
}

}  // namespace

ExperimentConfig experiment_from_json(const json& j, ExperimentConfig cfg) {
  check_schema(j);
  reject_unknown(j,
                 {"schema_version", "preset", "domains", "data_seed", "train_fraction", "sources",
                  "target", "train", "data_dir", "output_dir"},
                 "experiment config");
  try {
    if (j.contains("preset")) cfg.preset = j.at("preset").get<std::string>();
    if (j.contains("domains")) {
      cfg.domains.clear();
      for (const auto& [name, spec] : j.at("domains").items()) {
        cfg.domains.emplace_back(name, blob_spec_from_json(spec));
      }
    }
    if (j.contains("data_seed")) cfg.data_seed = j.at("data_seed").get<std::uint64_t>();
    if (j.contains("train_fraction")) cfg.train_fraction = j.at("train_fraction").get<double>();
    if (j.contains("sources")) cfg.sources = j.at("sources").get<std::vector<std::string>>();
    if (j.contains("target")) cfg.target = j.at("target").get<std::string>();
    if (j.contains("train")) cfg.train = train_config_from_json(j.at("train"), cfg.train);
    if (j.contains("data_dir")) cfg.data_dir = j.at("data_dir").get<std::string>();
    if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("experiment config: ") + e.what());
  }
  return cfg;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("config '" + path.string() + "': " + e.what());
  }
}

void write_json_file(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << '\n';
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

std::vector<std::pair<std::string, BlobSpec>> resolve_domains(const ExperimentConfig& cfg) {
  if (!cfg.domains.empty()) return cfg.domains;
  return make_preset(cfg.preset, cfg.data_seed).domains;
}

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw Error("cannot create output directory '" + dir.string() + "'");
  }
}

std::vector<std::size_t> class_counts(const DomainDataset& ds, std::size_t k) {
  std::vector<std::size_t> c(k, 0);
  if (ds.labels) {
    for (int y : *ds.labels) ++c[static_cast<std::size_t>(y)];
  }
  return c;
}

std::string join_counts(const std::vector<std::size_t>& c) {
  std::string s;
  for (std::size_t i = 0; i < c.size(); ++i) s += (i ? " " : "") + std::to_string(i) + ":" + std::to_string(c[i]);
  return s;
}

struct DomainData {
  DomainDataset train;
  std::optional<DomainDataset> test;
};

DomainData load_domain(const fs::path& dir, const std::string& name) {
  const fs::path train_path = dir / (name + "_train.csv");
  const fs::path test_path = dir / (name + "_test.csv");
  if (!fs::exists(train_path)) {
    throw ValidationError("missing dataset '" + train_path.string() + "' (run gen-data first)");
  }
  DomainData d{load_csv(train_path), std::nullopt};
  if (fs::exists(test_path)) d.test = load_csv(test_path);
  return d;
}

// Strips the labels; the trainer only ever sees target features.
Matrix features_only(const DomainDataset& ds) { return ds.features; }

std::optional<Metrics> score(const ModelParams& p, const std::vector<const DomainDataset*>& sets,
                             std::size_t k) {
  Labels pred;
  Labels truth;
  for (const auto* s : sets) {
    if (!s || !s->labels) return std::nullopt;
    const Labels y = predict(p, s->features);
    pred.insert(pred.end(), y.begin(), y.end());
    truth.insert(truth.end(), s->labels->begin(), s->labels->end());
  }
  if (truth.empty()) return std::nullopt;
  return compute_metrics(pred, truth, k);
}

// Trains on in-memory domains and writes every artifact into `out_dir`.
TrainOutcome run_training(const ExperimentConfig& cfg, const std::vector<DomainData>& sources,
                          const DomainData& target, const fs::path& out_dir, std::ostream* log) {
  ensure_dir(out_dir);
  write_json_file(to_json(cfg), out_dir / "config.json");

  std::vector<DomainDataset> train_sets;
  for (const auto& s : sources) train_sets.push_back(s.train);
  const std::size_t k = std::max_element(train_sets.begin(), train_sets.end(), [](const auto& a, const auto& b) {
                          return a.num_classes() < b.num_classes();
                        })->num_classes();
  if (target.train.labeled() && target.train.num_classes() > k) {
    throw ValidationError("target has labels beyond the sources' " + std::to_string(k) + " classes");
  }

  TargetDiagnostic diag;
  if (target.train.labeled()) {
    diag = [&target](const ModelParams& p) -> std::optional<double> {
      const Labels y = predict(p, target.train.features);
      std::size_t ok = 0;
      for (std::size_t i = 0; i < y.size(); ++i) ok += y[i] == (*target.train.labels)[i] ? 1 : 0;
      return static_cast<double>(ok) / static_cast<double>(y.size());
    };
  }

  TrainOutcome out{train(cfg.train, train_sets, features_only(target.train), diag), std::nullopt,
                   std::nullopt};
  save_checkpoint(out.result.params, out_dir / "model.cdst");
  {
    std::ofstream h(out_dir / "history.jsonl");
    h << out.result.history.to_json_lines();
  }

  std::vector<const DomainDataset*> src_tests;
  for (const auto& s : sources) src_tests.push_back(s.test ? &*s.test : nullptr);
  out.source_test = score(out.result.params, src_tests, k);
  out.target_test = score(out.result.params, {target.test ? &*target.test : nullptr}, k);
  if (out.source_test) write_json_file(metrics_to_json(*out.source_test), out_dir / "metrics_source_test.json");
  if (out.target_test) write_json_file(metrics_to_json(*out.target_test), out_dir / "metrics_target_test.json");

  if (log) {
    const auto& last = out.result.history.epochs;
    if (!last.empty()) *log << "final epoch: " << to_json(last.back()).dump() << '\n';
    if (out.source_test) *log << "source test accuracy: " << out.source_test->accuracy << '\n';
    if (out.target_test) {
      *log << "target test accuracy: " << out.target_test->accuracy << '\n';
    } else {
      *log << "target test set unavailable or unlabeled; no target metrics written\n";
    }
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Commands

std::vector<DomainSplit> generate_domains(const ExperimentConfig& cfg) {
  const auto domains = resolve_domains(cfg);
  std::vector<DomainSplit> out;
  for (std::size_t i = 0; i < domains.size(); ++i) {
    const auto& [name, spec] = domains[i];
    auto [tr, te] = split(make_blobs(spec, name), cfg.train_fraction, cfg.data_seed * 0x9E37 + i);
    out.push_back({name, std::move(tr), std::move(te)});
  }
  return out;
}

std::vector<GeneratedDomain> cmd_gen_data(const ExperimentConfig& cfg, std::ostream& log) {
  const auto domains = generate_domains(cfg);
  ensure_dir(cfg.data_dir);
  std::vector<GeneratedDomain> out;
  for (const auto& d : domains) {
    save_csv(d.train, cfg.data_dir / (d.name + "_train.csv"));
    save_csv(d.test, cfg.data_dir / (d.name + "_test.csv"));
    const std::size_t k = d.train.num_classes();
    GeneratedDomain g{d.name, class_counts(d.train, k), class_counts(d.test, k)};
    log << d.name << ": train " << d.train.size() << " [" << join_counts(g.train_counts) << "], test "
        << d.test.size() << " [" << join_counts(g.test_counts) << "]\n";
    out.push_back(std::move(g));
  }
  write_json_file(to_json(cfg), cfg.data_dir / "config.json");
  return out;
}

TrainOutcome cmd_train(const ExperimentConfig& cfg, std::ostream& log) {
  cfg.validate();
  std::vector<DomainData> sources;
  for (const auto& name : cfg.sources) {
    sources.push_back(load_domain(cfg.data_dir, name));
    if (!sources.back().train.labeled()) throw ValidationError("source '" + name + "' is unlabeled");
  }
  const DomainData target = load_domain(cfg.data_dir, cfg.target);
  return run_training(cfg, sources, target, cfg.output_dir, &log);
}

Metrics cmd_eval(const fs::path& checkpoint, const fs::path& dataset, const std::optional<fs::path>& out,
                 std::ostream& log) {
  const ModelParams p = load_checkpoint(checkpoint);
  const DomainDataset ds = load_csv(dataset, p.output_dim());
  if (!ds.labeled()) throw ValidationError("dataset '" + dataset.string() + "' is unlabeled; cannot score");
  if (ds.dim() != p.input_dim()) {
    throw ValidationError("dataset has " + std::to_string(ds.dim()) + " features, model expects " +
                          std::to_string(p.input_dim()));
  }
  const Metrics m = compute_metrics(predict(p, ds.features), *ds.labels, p.output_dim());
  const json j = metrics_to_json(m);
  log << j.dump(2) << '\n';
  if (out) write_json_file(j, *out);
  return m;
}

ContourGrid cmd_contour(const ContourOptions& opts, std::ostream& log) {
  const ModelParams p = load_checkpoint(opts.checkpoint);
  if (p.input_dim() != 2) {
    throw ValidationError("contour needs a 2-D model; checkpoint has input dimension " +
                          std::to_string(p.input_dim()));
  }
  Bounds b;
  if (opts.bounds) {
    b = *opts.bounds;
  } else {
    if (opts.data.empty()) throw ValidationError("contour: give --bounds or at least one --data file");
    std::vector<DomainDataset> sets;
    for (const auto& path : opts.data) sets.push_back(load_csv(path));
    std::vector<const Matrix*> ms;
    for (const auto& s : sets) ms.push_back(&s.features);
    b = data_bounds(ms, 0.2);
  }
  ContourGrid g = contour_grid(p, b, opts.resolution);
  save_contour_csv(g, opts.out);
  log << "wrote " << g.size() << " grid rows to " << opts.out.string() << " (x " << b.x_min << ".."
      << b.x_max << ", y " << b.y_min << ".." << b.y_max << ")\n";
  return g;
}

// ---------------------------------------------------------------------------
// Sweep

std::pair<std::string, std::string> parse_direction(const std::string& direction) {
  const auto pos = direction.find("->");
  if (pos == std::string::npos || pos == 0 || pos + 2 >= direction.size()) {
    throw ValidationError("direction '" + direction + "' must look like D0->D1");
  }
  return {direction.substr(0, pos), direction.substr(pos + 2)};
}

std::size_t thread_cap(std::size_t requested) {
  std::size_t n = requested == 0 ? std::max(1u, std::thread::hardware_concurrency()) : requested;
  if (const char* env = std::getenv("CONTRADIST_THREADS")) {
    char* end = nullptr;
    const unsigned long cap = std::strtoul(env, &end, 10);
    if (end != env && cap > 0) n = std::min<std::size_t>(n, cap);
  }
  return std::max<std::size_t>(n, 1);
}

json to_json(const SweepConfig& cfg) {
  json terms = json::array();
  for (const auto& t : cfg.term_sets) terms.push_back(t.str());
  return {{"schema_version", kConfigSchemaVersion},
          {"presets", cfg.presets},
          {"term_sets", terms},
          {"seeds", cfg.seeds},
          {"directions", cfg.directions},
          {"train_fraction", cfg.train_fraction},
          {"train", to_json(cfg.train)},
          {"output_dir", cfg.output_dir.string()},
          {"threads", cfg.threads}};
}

SweepConfig sweep_from_json(const json& j, SweepConfig cfg) {
  check_schema(j);
  reject_unknown(j,
                 {"schema_version", "presets", "term_sets", "seeds", "directions", "train_fraction",
                  "train", "output_dir", "threads"},
                 "sweep config");
  try {
    if (j.contains("presets")) cfg.presets = j.at("presets").get<std::vector<std::string>>();
    if (j.contains("term_sets")) {
      cfg.term_sets.clear();
      for (const auto& t : j.at("term_sets")) cfg.term_sets.push_back(TermSet::parse(t.get<std::string>()));
    }
    if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("directions")) cfg.directions = j.at("directions").get<std::vector<std::string>>();
    if (j.contains("train_fraction")) cfg.train_fraction = j.at("train_fraction").get<double>();
    if (j.contains("train")) cfg.train = train_config_from_json(j.at("train"), cfg.train);
    if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("threads")) cfg.threads = j.at("threads").get<std::size_t>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("sweep config: ") + e.what());
  }
  return cfg;
}

namespace {

std::string dir_safe(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '>' || c == '-') c = '_';
  }
  return s;
}

struct Cell {
  std::string preset;
  std::string direction;
  TermSet terms;
  std::uint64_t seed;
};

SweepRow run_cell(const SweepConfig& sweep, const Cell& cell) {
  SweepRow row{cell.preset, cell.direction, cell.terms.str(), cell.seed, 0.0, 0.0, "ok"};
  std::replace(row.terms.begin(), row.terms.end(), ',', '+');

  ExperimentConfig cfg;
  cfg.preset = cell.preset;
  cfg.data_seed = cell.seed;
  cfg.train_fraction = sweep.train_fraction;
  const auto [src, tgt] = parse_direction(cell.direction);
  cfg.sources.clear();
  std::stringstream names(src);
  for (std::string name; std::getline(names, name, '+');) cfg.sources.push_back(name);
  cfg.target = tgt;
  cfg.train = sweep.train;
  cfg.train.terms = cell.terms;
  cfg.train.seed = cell.seed;
  cfg.output_dir = sweep.output_dir / cell.preset / dir_safe(src + "_to_" + tgt) /
                   dir_safe(cell.terms.str()) / ("seed" + std::to_string(cell.seed));
  cfg.data_dir = cfg.output_dir;
  cfg.validate();

  const auto domains = generate_domains(cfg);
  auto build = [&](const std::string& name) {
    for (const auto& d : domains) {
      if (d.name == name) return DomainData{d.train, d.test};
    }
    throw ValidationError("preset '" + cfg.preset + "' has no domain '" + name + "'");
  };
  std::vector<DomainData> sources;
  for (const auto& name : cfg.sources) sources.push_back(build(name));
  const DomainData target = build(tgt);

  const TrainOutcome out = run_training(cfg, sources, target, cfg.output_dir, nullptr);
  row.source_acc = out.source_test ? out.source_test->accuracy : 0.0;
  row.target_acc = out.target_test ? out.target_test->accuracy : 0.0;
  return row;
}

}  // namespace

SweepResult cmd_sweep(const SweepConfig& cfg, std::ostream& log) {
  if (cfg.presets.empty() || cfg.term_sets.empty() || cfg.seeds.empty() || cfg.directions.empty()) {
    throw ValidationError("sweep matrix has an empty axis");
  }
  for (const auto& d : cfg.directions) parse_direction(d);
  for (const auto& p : cfg.presets) make_preset(p, 0);

  std::vector<Cell> cells;
  for (const auto& p : cfg.presets) {
    for (const auto& d : cfg.directions) {
      for (const auto& t : cfg.term_sets) {
        for (auto s : cfg.seeds) cells.push_back({p, d, t, s});
      }
    }
  }
  ensure_dir(cfg.output_dir);
  write_json_file(to_json(cfg), cfg.output_dir / "config.json");

  SweepResult result;
  result.rows.resize(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      const Cell& c = cells[i];
      SweepRow row;
      try {
        row = run_cell(cfg, c);
      } catch (const std::exception& e) {
        row = {c.preset, c.direction, c.terms.str(), c.seed, 0.0, 0.0, std::string("failed: ") + e.what()};
        std::replace(row.terms.begin(), row.terms.end(), ',', '+');
      }
      std::lock_guard lock(log_mutex);
      log << c.preset << ' ' << c.direction << ' ' << row.terms << " seed " << c.seed << ": "
          << (row.status == "ok" ? "target acc " + format_double(row.target_acc) : row.status) << '\n';
      result.rows[i] = std::move(row);
    }
  };
  const std::size_t n_threads = std::min(thread_cap(cfg.threads), cells.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  std::ofstream out(cfg.output_dir / "summary.csv");
  if (!out) throw Error("cannot write sweep summary");
  out << "preset,direction,terms,seed,source_acc,target_acc,status\n";
  for (const auto& r : result.rows) {
    std::string status = r.status;
    std::replace(status.begin(), status.end(), ',', ';');
    std::replace(status.begin(), status.end(), '\n', ' ');
    out << r.preset << ',' << r.direction << ',' << r.terms << ',' << r.seed << ','
        << format_double(r.source_acc) << ',' << format_double(r.target_acc) << ',' << status << '\n';
    if (r.status != "ok") ++result.failures;
  }
  return result;
}

}  // namespace contradist
