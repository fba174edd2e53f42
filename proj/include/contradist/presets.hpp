#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "contradist/dataset.hpp"

namespace contradist {

// A named set of 2-D blob domains D0, D1 (and D2 for multi-source). The
// geometries are illustrative toy settings, not measured from any figure.
struct Preset {
  std::string name;
  std::string description;
  std::vector<std::pair<std::string, BlobSpec>> domains;
};

std::vector<std::string> preset_names();
// Domain seeds are derived from `seed`. Throws ValidationError listing the
// known presets when `name` is unknown.
Preset make_preset(const std::string& name, std::uint64_t seed);

}  // namespace contradist
