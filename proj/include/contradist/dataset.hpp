#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "contradist/matrix.hpp"

namespace contradist {

using Labels = std::vector<int>;
using Point2 = std::array<double, 2>;

struct BlobClass {
  Point2 center{0.0, 0.0};
  double std = 1.0;
};

// Isotropic Gaussian blobs, one per class, for a single 2-D domain. The
// whole domain is rotated about the origin and then translated by `offset`.
struct BlobSpec {
  std::vector<BlobClass> classes;
  std::size_t samples_per_class = 2000;
  double rotation_deg = 0.0;
  Point2 offset{0.0, 0.0};
  std::uint64_t seed = 0;

  // Throws ValidationError on a non-positive std, zero samples or K < 2.
  void validate() const;
  std::size_t num_classes() const noexcept { return classes.size(); }
};

enum class Split { train, test, all };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct DomainDataset {
  Matrix features;
  std::optional<Labels> labels;
  std::string domain_id;
  Split split = Split::all;

  std::size_t size() const noexcept { return features.rows(); }
  std::size_t dim() const noexcept { return features.cols(); }
  bool labeled() const noexcept { return labels.has_value(); }
  // max label + 1, or 0 when unlabeled.
  std::size_t num_classes() const;

  // n > 0, finite features, labels (if any) in [0, num_classes).
  void validate(std::optional<std::size_t> num_classes = std::nullopt) const;
};

struct Priors {
  std::vector<double> probs;

  std::size_t size() const noexcept { return probs.size(); }
  double operator[](std::size_t k) const { return probs[k]; }

  static Priors uniform(std::size_t k);
  // Non-negative entries summing to 1 within 1e-9.
  void validate() const;
};

DomainDataset make_blobs(const BlobSpec& spec, const std::string& domain_id = "D0");

// Stratified split. Within each class the train side takes
// floor(train_fraction * n_c) rows plus the fractional remainder, i.e.
// ceil(train_fraction * n_c); the test side keeps the rest.
// Both sides keep the original relative row order.
std::pair<DomainDataset, DomainDataset> split(const DomainDataset& ds, double train_fraction,
                                              std::uint64_t seed);

Priors estimate_prior(const Labels& labels, std::size_t num_classes);

// CSV with header `f0,...,f{d-1},label`; unlabeled rows carry -1.
void save_csv(const DomainDataset& ds, const std::filesystem::path& path);
DomainDataset load_csv(const std::filesystem::path& path,
                       std::optional<std::size_t> num_classes = std::nullopt);

// Shortest decimal form that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view text);

}  // namespace contradist
