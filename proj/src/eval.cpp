#include "contradist/eval.hpp"

#include <algorithm>
#include <fstream>
#include <limits>

#include "contradist/errors.hpp"

namespace contradist {

Labels argmax_rows(const Matrix& m) {
  Labels out(m.rows(), 0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    std::size_t best = 0;
    for (std::size_t k = 1; k < r.size(); ++k) {
      if (r[k] > r[best]) best = k;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

Labels predict(const ModelParams& params, const Matrix& x) {
  return argmax_rows(forward(params, x).probs);
}

Metrics compute_metrics(const Labels& pred, const Labels& truth, std::size_t num_classes) {
  if (pred.size() != truth.size()) {
    throw ValidationError("compute_metrics: " + std::to_string(pred.size()) + " predictions for " +
                          std::to_string(truth.size()) + " labels");
  }
  if (truth.empty()) throw ValidationError("compute_metrics: no samples");
  if (num_classes == 0) throw ValidationError("compute_metrics: num_classes must be positive");

  Metrics m;
  m.count = truth.size();
  m.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i];
    const int p = pred[i];
    if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= num_classes ||
        static_cast<std::size_t>(p) >= num_classes) {
      throw ValidationError("compute_metrics: class id out of range at index " + std::to_string(i));
    }
    ++m.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
  }
  std::size_t correct = 0;
  for (std::size_t c = 0; c < num_classes; ++c) correct += m.confusion[c][c];
  m.accuracy = static_cast<double>(correct) / static_cast<double>(m.count);

  for (std::size_t c = 0; c < num_classes; ++c) {
    std::size_t predicted = 0;
    std::size_t actual = 0;
    for (std::size_t o = 0; o < num_classes; ++o) {
      predicted += m.confusion[o][c];
      actual += m.confusion[c][o];
    }
    const auto tp = static_cast<double>(m.confusion[c][c]);
    m.per_class_precision.push_back(predicted == 0 ? std::nullopt
                                                   : std::optional(tp / static_cast<double>(predicted)));
    m.per_class_recall.push_back(actual == 0 ? std::nullopt
                                             : std::optional(tp / static_cast<double>(actual)));
  }
  return m;
}

nlohmann::json metrics_to_json(const Metrics& m) {
  auto opt_array = [](const std::vector<std::optional<double>>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& x : v) a.push_back(x ? nlohmann::json(*x) : nlohmann::json(nullptr));
    return a;
  };
  return {
      {"accuracy", m.accuracy},
      {"count", m.count},
      {"per_class_precision", opt_array(m.per_class_precision)},
      {"per_class_recall", opt_array(m.per_class_recall)},
      {"confusion", m.confusion},
  };
}

Bounds data_bounds(const std::vector<const Matrix*>& data, double pad_fraction) {
  double x0 = std::numeric_limits<double>::infinity();
  double y0 = x0;
  double x1 = -x0;
  double y1 = -x0;
  bool any = false;
  for (const Matrix* m : data) {
    if (m->cols() != 2) throw ValidationError("data_bounds: data must be 2-D");
    for (std::size_t i = 0; i < m->rows(); ++i) {
      x0 = std::min(x0, (*m)(i, 0));
      x1 = std::max(x1, (*m)(i, 0));
      y0 = std::min(y0, (*m)(i, 1));
      y1 = std::max(y1, (*m)(i, 1));
      any = true;
    }
  }
  if (!any) throw ValidationError("data_bounds: no points");
  // A degenerate axis gets unit extent so the grid stays well-formed.
  const double wx = x1 > x0 ? x1 - x0 : 1.0;
  const double wy = y1 > y0 ? y1 - y0 : 1.0;
  return {x0 - pad_fraction * wx, x1 + pad_fraction * wx, y0 - pad_fraction * wy,
          y1 + pad_fraction * wy};
}

ContourGrid contour_grid(const ModelParams& params, const Bounds& b, std::size_t resolution) {
  if (params.input_dim() != 2) {
    throw ValidationError("contour_grid: model input dimension is " +
                          std::to_string(params.input_dim()) + ", expected 2");
  }
  if (!(b.x_min < b.x_max) || !(b.y_min < b.y_max)) {
    throw ValidationError("contour_grid: bounds must satisfy min < max");
  }
  if (resolution < 2) throw ValidationError("contour_grid: resolution must be >= 2");

  ContourGrid g;
  g.bounds = b;
  g.resolution = resolution;
  const std::size_t n = resolution * resolution;
  Matrix pts(n, 2);
  const double step_x = (b.x_max - b.x_min) / static_cast<double>(resolution - 1);
  const double step_y = (b.y_max - b.y_min) / static_cast<double>(resolution - 1);
  for (std::size_t iy = 0; iy < resolution; ++iy) {
    const double y = iy + 1 == resolution ? b.y_max : b.y_min + step_y * static_cast<double>(iy);
    for (std::size_t ix = 0; ix < resolution; ++ix) {
      const double x = ix + 1 == resolution ? b.x_max : b.x_min + step_x * static_cast<double>(ix);
      const std::size_t r = iy * resolution + ix;
      pts(r, 0) = x;
      pts(r, 1) = y;
      g.xs.push_back(x);
      g.ys.push_back(y);
    }
  }
  g.probs = forward(params, pts).probs;
  g.predicted = argmax_rows(g.probs);
  return g;
}

void save_contour_csv(const ContourGrid& grid, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  const std::size_t k = grid.probs.cols();
  out << "x,y";
  for (std::size_t c = 0; c < k; ++c) out << ",p" << c;
  out << ",pred\n";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    out << format_double(grid.xs[i]) << ',' << format_double(grid.ys[i]);
    for (std::size_t c = 0; c < k; ++c) out << ',' << format_double(grid.probs(i, c));
    out << ',' << grid.predicted[i] << '\n';
  }
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

}  // namespace contradist
