#include "contradist/presets.hpp"

#include "contradist/errors.hpp"
#include "contradist/rng.hpp"

namespace contradist {

namespace {

constexpr std::size_t kSamplesPerClass = 2000;

BlobSpec two_blobs(Point2 c0, double s0, Point2 c1, double s1, double rotation_deg, Point2 offset) {
  BlobSpec b;
  b.classes = {{c0, s0}, {c1, s1}};
  b.samples_per_class = kSamplesPerClass;
  b.rotation_deg = rotation_deg;
  b.offset = offset;
  return b;
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"aligned", "rotated", "overlap-source", "multi-source"};
}

Preset make_preset(const std::string& name, std::uint64_t seed) {
  Preset p;
  p.name = name;
  if (name == "aligned") {
    p.description = "two separable blobs; D1 is D0 translated";
    p.domains = {{"D0", two_blobs({-2.0, 0.0}, 0.7, {2.0, 0.0}, 0.7, 0.0, {0.0, 0.0})},
                 {"D1", two_blobs({-2.0, 0.0}, 0.7, {2.0, 0.0}, 0.7, 0.0, {0.5, 1.5})}};
  } else if (name == "rotated") {
    p.description = "two separable blobs; D1 is D0 rotated by 30 degrees and translated";
    p.domains = {{"D0", two_blobs({-2.0, 0.0}, 0.6, {2.0, 0.0}, 0.6, 0.0, {0.0, 0.0})},
                 {"D1", two_blobs({-2.0, 0.0}, 0.6, {2.0, 0.0}, 0.6, 30.0, {0.5, 1.5})}};
  } else if (name == "overlap-source") {
    p.description = "D0 classes overlap; D1 classes are separable and shifted across D0's boundary";
    p.domains = {{"D0", two_blobs({-1.0, 0.0}, 1.0, {1.0, 0.0}, 1.0, 0.0, {0.0, 0.0})},
                 {"D1", two_blobs({-2.0, 0.0}, 0.4, {2.0, 0.0}, 0.4, 0.0, {1.2, 0.5})}};
  } else if (name == "multi-source") {
    p.description = "two labelled sources and a third, rotated domain";
    p.domains = {{"D0", two_blobs({-2.0, 0.0}, 0.7, {2.0, 0.0}, 0.7, 0.0, {0.0, 0.0})},
                 {"D1", two_blobs({-2.0, 0.0}, 0.7, {2.0, 0.0}, 0.7, 15.0, {0.0, 1.5})},
                 {"D2", two_blobs({-2.0, 0.0}, 0.7, {2.0, 0.0}, 0.7, 30.0, {0.5, -1.5})}};
  } else {
    std::string known;
    for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
    throw ValidationError("unknown preset '" + name + "' (known presets: " + known + ")");
  }
  for (std::size_t i = 0; i < p.domains.size(); ++i) {
    p.domains[i].second.seed = splitmix64_finalize(seed * 0x100 + i + 1);
  }
  return p;
}

}  // namespace contradist
