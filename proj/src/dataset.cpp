#include "contradist/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "contradist/errors.hpp"
#include "contradist/rng.hpp"

namespace contradist {

void BlobSpec::validate() const {
  if (classes.size() < 2) throw ValidationError("blob spec needs at least 2 classes");
  if (samples_per_class < 1) throw ValidationError("samples_per_class must be >= 1");
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const auto& b = classes[c];
    if (!(b.std > 0.0) || !std::isfinite(b.std)) {
      throw ValidationError("class " + std::to_string(c) + ": std must be positive");
    }
    if (!std::isfinite(b.center[0]) || !std::isfinite(b.center[1])) {
      throw ValidationError("class " + std::to_string(c) + ": center must be finite");
    }
  }
  if (!std::isfinite(rotation_deg) || !std::isfinite(offset[0]) || !std::isfinite(offset[1])) {
    throw ValidationError("rotation and offset must be finite");
  }
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::test: return "test";
    case Split::all: return "all";
  }
  return "all";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  if (s == "all") return Split::all;
  throw ValidationError("unknown split '" + s + "'");
}

std::size_t DomainDataset::num_classes() const {
  if (!labels || labels->empty()) return 0;
  return static_cast<std::size_t>(*std::max_element(labels->begin(), labels->end())) + 1;
}

void DomainDataset::validate(std::optional<std::size_t> k) const {
  if (features.rows() == 0) throw ValidationError("dataset '" + domain_id + "' is empty");
  if (!features.all_finite()) {
    throw ValidationError("dataset '" + domain_id + "' has non-finite features");
  }
  if (!labels) return;
  if (labels->size() != features.rows()) {
    throw ShapeError("dataset '" + domain_id + "': label count differs from row count");
  }
  for (int y : *labels) {
    if (y < 0 || (k && static_cast<std::size_t>(y) >= *k)) {
      throw ValidationError("dataset '" + domain_id + "': label " + std::to_string(y) +
                            " out of range");
    }
  }
}

Priors Priors::uniform(std::size_t k) {
  return Priors{std::vector<double>(k, 1.0 / static_cast<double>(k))};
}

void Priors::validate() const {
  if (probs.empty()) throw ValidationError("prior is empty");
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw ValidationError("prior entries must be >= 0");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ValidationError("prior must sum to 1 (got " + format_double(sum) + ")");
  }
}

DomainDataset make_blobs(const BlobSpec& spec, const std::string& domain_id) {
  spec.validate();
  const std::size_t k = spec.num_classes();
  const std::size_t n = k * spec.samples_per_class;
  const double theta = spec.rotation_deg * std::numbers::pi / 180.0;
  const double cs = std::cos(theta);
  const double sn = std::sin(theta);

  Rng rng(spec.seed);
  DomainDataset ds;
  ds.features = Matrix(n, 2);
  ds.labels = Labels(n);
  ds.domain_id = domain_id;
  ds.split = Split::all;

  std::size_t row = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const auto& blob = spec.classes[c];
    for (std::size_t i = 0; i < spec.samples_per_class; ++i, ++row) {
      const double x = blob.center[0] + blob.std * rng.normal();
      const double y = blob.center[1] + blob.std * rng.normal();
      ds.features(row, 0) = cs * x - sn * y + spec.offset[0];
      ds.features(row, 1) = sn * x + cs * y + spec.offset[1];
      (*ds.labels)[row] = static_cast<int>(c);
    }
  }
  return ds;
}

std::pair<DomainDataset, DomainDataset> split(const DomainDataset& ds, double train_fraction,
                                              std::uint64_t seed) {
  if (ds.size() == 0) throw ValidationError("cannot split an empty dataset");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ValidationError("train_fraction must lie in (0, 1)");
  }

  // Unlabeled data is split as a single group.
  const std::size_t k = ds.labeled() ? ds.num_classes() : 1;
  std::vector<std::vector<std::size_t>> groups(k);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    groups[ds.labeled() ? static_cast<std::size_t>((*ds.labels)[i]) : 0].push_back(i);
  }

  Rng rng(seed, 0x5B17);
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> test_idx;
  for (std::size_t c = 0; c < k; ++c) {
    auto& g = groups[c];
    if (g.empty()) continue;
    // The slack keeps products like 0.9 * 10 from landing a hair off an integer.
    const auto n_train = std::min(
        g.size(), static_cast<std::size_t>(std::ceil(train_fraction * static_cast<double>(g.size()) - 1e-9)));
    const std::size_t n_test = g.size() - n_train;
    if (n_test == 0 || n_train == 0) {
      throw ValidationError("cannot stratify class " + std::to_string(c) + " with " +
                            std::to_string(g.size()) + " sample(s) at fraction " +
                            format_double(train_fraction));
    }
    rng.shuffle(g);
    test_idx.insert(test_idx.end(), g.begin(), g.begin() + static_cast<std::ptrdiff_t>(n_test));
    train_idx.insert(train_idx.end(), g.begin() + static_cast<std::ptrdiff_t>(n_test), g.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());

  auto take = [&](const std::vector<std::size_t>& idx, Split s) {
    DomainDataset out;
    out.features = gather_rows(ds.features, idx);
    if (ds.labels) {
      Labels y;
      y.reserve(idx.size());
      for (auto i : idx) y.push_back((*ds.labels)[i]);
      out.labels = std::move(y);
    }
    out.domain_id = ds.domain_id;
    out.split = s;
    return out;
  };
  return {take(train_idx, Split::train), take(test_idx, Split::test)};
}

Priors estimate_prior(const Labels& labels, std::size_t num_classes) {
  if (labels.empty()) throw ValidationError("cannot estimate a prior from no labels");
  if (num_classes == 0) throw ValidationError("num_classes must be positive");
  std::vector<std::size_t> counts(num_classes, 0);
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw ValidationError("label " + std::to_string(y) + " out of range");
    }
    ++counts[static_cast<std::size_t>(y)];
  }
  Priors p;
  p.probs.resize(num_classes);
  const auto n = static_cast<double>(labels.size());
  for (std::size_t c = 0; c < num_classes; ++c) p.probs[c] = static_cast<double>(counts[c]) / n;
  return p;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) {
    throw ParseError("not a number: '" + std::string(text) + "'");
  }
  return v;
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

Split split_from_stem(const std::string& stem) {
  auto ends_with = [&](std::string_view suf) {
    return stem.size() >= suf.size() && stem.compare(stem.size() - suf.size(), suf.size(), suf) == 0;
  };
  if (ends_with("_train")) return Split::train;
  if (ends_with("_test")) return Split::test;
  return Split::all;
}

}  // namespace

void save_csv(const DomainDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  const std::size_t d = ds.dim();
  for (std::size_t c = 0; c < d; ++c) out << 'f' << c << ',';
  out << "label\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t c = 0; c < d; ++c) out << format_double(ds.features(i, c)) << ',';
    out << (ds.labels ? (*ds.labels)[i] : -1) << '\n';
  }
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

DomainDataset load_csv(const std::filesystem::path& path, std::optional<std::size_t> num_classes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing header", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_fields(line);
  if (header.size() < 2 || header.back() != "label") {
    throw ParseError("header must be f0,...,f{d-1},label", 1);
  }
  const std::size_t d = header.size() - 1;
  for (std::size_t c = 0; c < d; ++c) {
    if (header[c] != "f" + std::to_string(c)) {
      throw ParseError("unexpected header column '" + std::string(header[c]) + "'", 1);
    }
  }

  std::vector<double> values;
  Labels labels;
  std::size_t n_unlabeled = 0;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != d + 1) {
      throw ParseError("expected " + std::to_string(d + 1) + " columns, got " +
                           std::to_string(fields.size()),
                       row);
    }
    for (std::size_t c = 0; c < d; ++c) {
      double v = 0.0;
      try {
        v = parse_double(fields[c]);
      } catch (const ParseError& e) {
        throw ParseError(e.what(), row);
      }
      if (!std::isfinite(v)) throw ParseError("non-finite feature", row);
      values.push_back(v);
    }
    int y = 0;
    auto lf = fields[d];
    auto res = std::from_chars(lf.data(), lf.data() + lf.size(), y);
    if (res.ec != std::errc() || res.ptr != lf.data() + lf.size() || y < -1) {
      throw ParseError("bad label '" + std::string(lf) + "'", row);
    }
    if (num_classes && y >= 0 && static_cast<std::size_t>(y) >= *num_classes) {
      throw ParseError("label " + std::to_string(y) + " >= K=" + std::to_string(*num_classes), row);
    }
    if (y == -1) ++n_unlabeled;
    labels.push_back(y);
  }
  const std::size_t n = labels.size();
  if (n == 0) throw ParseError("no data rows", row);
  if (n_unlabeled != 0 && n_unlabeled != n) {
    throw ParseError("file mixes labeled and unlabeled (-1) rows");
  }

  DomainDataset ds;
  ds.features = Matrix(n, d);
  std::copy(values.begin(), values.end(), ds.features.values().begin());
  if (n_unlabeled == 0) ds.labels = std::move(labels);
  const std::string stem = path.stem().string();
  ds.split = split_from_stem(stem);
  ds.domain_id = ds.split == Split::all ? stem : stem.substr(0, stem.rfind('_'));
  return ds;
}

}  // namespace contradist
