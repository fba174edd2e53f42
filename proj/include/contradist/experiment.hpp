#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "contradist/dataset.hpp"
#include "contradist/eval.hpp"
#include "contradist/trainer.hpp"

namespace contradist {

inline constexpr int kConfigSchemaVersion = 1;

// Everything one command needs. Values come from defaults, then a JSON config
// file, then command-line flags (later wins).
struct ExperimentConfig {
  std::string preset = "aligned";
  // Explicit domains; when non-empty they replace the preset.
  std::vector<std::pair<std::string, BlobSpec>> domains;
  std::uint64_t data_seed = 0;
  double train_fraction = 0.5;
  std::vector<std::string> sources{"D0"};
  std::string target = "D1";
  TrainConfig train;
  std::filesystem::path data_dir = "data";
  std::filesystem::path output_dir = "out";

  // At least one source, one target not among the sources.
  void validate() const;
};

nlohmann::json to_json(const BlobSpec& spec);
BlobSpec blob_spec_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_from_json(const nlohmann::json& j, ExperimentConfig base = {});
nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const nlohmann::json& j, const std::filesystem::path& path);

// The domains a config generates: explicit ones or the preset's.
std::vector<std::pair<std::string, BlobSpec>> resolve_domains(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// gen-data

struct DomainSplit {
  std::string name;
  DomainDataset train;
  DomainDataset test;
};

// Samples every domain of the config and splits it; the i-th domain uses split
// seed data_seed * 0x9E37 + i. gen-data and sweep both go through here.
std::vector<DomainSplit> generate_domains(const ExperimentConfig& cfg);

struct GeneratedDomain {
  std::string name;
  std::vector<std::size_t> train_counts;
  std::vector<std::size_t> test_counts;
};

// Writes <data_dir>/<domain>_{train,test}.csv for every domain plus config.json.
std::vector<GeneratedDomain> cmd_gen_data(const ExperimentConfig& cfg, std::ostream& log);

// ---------------------------------------------------------------------------
// train

struct TrainOutcome {
  TrainResult result;
  std::optional<Metrics> source_test;
  std::optional<Metrics> target_test;
};

// Reads <data_dir>/<name>_train.csv (and _test.csv when present) for every
// source and the target. Writes model.cdst, history.jsonl, config.json and
// metrics_{source,target}_test.json into output_dir.
TrainOutcome cmd_train(const ExperimentConfig& cfg, std::ostream& log);

// ---------------------------------------------------------------------------
// eval / contour

Metrics cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& dataset,
                 const std::optional<std::filesystem::path>& out, std::ostream& log);

struct ContourOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path out;
  std::size_t resolution = 200;
  std::optional<Bounds> bounds;
  // Used for the default bounds (bounding box + 20% per side).
  std::vector<std::filesystem::path> data;
};

ContourGrid cmd_contour(const ContourOptions& opts, std::ostream& log);

// ---------------------------------------------------------------------------
// sweep

struct SweepConfig {
  std::vector<std::string> presets{"aligned", "rotated"};
  std::vector<TermSet> term_sets{TermSet::parse("ss"), TermSet::parse("ss,tu,ta")};
  std::vector<std::uint64_t> seeds{1};
  // Each entry is "<source>-><target>"; several sources join with +, e.g. "D0+D1->D2".
  std::vector<std::string> directions{"D0->D1", "D1->D0"};
  double train_fraction = 0.5;
  TrainConfig train;
  std::filesystem::path output_dir = "sweep";
  std::size_t threads = 1;
};

nlohmann::json to_json(const SweepConfig& cfg);
SweepConfig sweep_from_json(const nlohmann::json& j, SweepConfig base = {});

struct SweepRow {
  std::string preset;
  std::string direction;
  std::string terms;
  std::uint64_t seed = 0;
  double source_acc = 0.0;
  double target_acc = 0.0;
  std::string status = "ok";
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::size_t failures = 0;
};

// Runs every preset x direction x term set x seed cell on a worker pool
// capped by CONTRADIST_THREADS. Each cell gets its own data, RNG streams and
// output subdirectory. Writes summary.csv; failed cells are recorded, not fatal.
SweepResult cmd_sweep(const SweepConfig& cfg, std::ostream& log);

std::pair<std::string, std::string> parse_direction(const std::string& direction);
std::size_t thread_cap(std::size_t requested);

}  // namespace contradist
