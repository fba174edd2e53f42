#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "contradist/dataset.hpp"
#include "contradist/matrix.hpp"
#include "contradist/model.hpp"

namespace contradist {

struct Metrics {
  double accuracy = 0.0;
  // nullopt when the denominator is zero (class never predicted / never present).
  std::vector<std::optional<double>> per_class_precision;
  std::vector<std::optional<double>> per_class_recall;
  // confusion[true][pred]
  std::vector<std::vector<std::size_t>> confusion;
  std::size_t count = 0;
};

struct Bounds {
  double x_min = 0.0;
  double x_max = 1.0;
  double y_min = 0.0;
  double y_max = 1.0;
};

struct ContourGrid {
  Bounds bounds;
  std::size_t resolution = 0;
  // Row-major with x varying fastest; one row per grid point.
  std::vector<double> xs;
  std::vector<double> ys;
  Matrix probs;
  Labels predicted;

  std::size_t size() const noexcept { return xs.size(); }
};

// Argmax of the softmax output per row; ties resolve to the lowest class.
Labels predict(const ModelParams& params, const Matrix& x);
Labels argmax_rows(const Matrix& m);

Metrics compute_metrics(const Labels& pred, const Labels& truth, std::size_t num_classes);
nlohmann::json metrics_to_json(const Metrics& m);

// Bounding box of the rows of every matrix, padded by `pad_fraction` of the
// extent on each side.
Bounds data_bounds(const std::vector<const Matrix*>& data, double pad_fraction = 0.2);

ContourGrid contour_grid(const ModelParams& params, const Bounds& bounds, std::size_t resolution);
// Header `x,y,p0,...,p{K-1},pred`.
void save_contour_csv(const ContourGrid& grid, const std::filesystem::path& path);

}  // namespace contradist
