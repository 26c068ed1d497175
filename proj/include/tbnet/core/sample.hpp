#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tbnet/core/taxonomy.hpp"

namespace tbnet {

/// Row-major H x W array.
template <typename T>
struct Grid {
  int height = 0;
  int width = 0;
  std::vector<T> values;

  Grid() = default;
  Grid(int h, int w, T fill = T{})
      : height(h), width(w), values(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), fill) {}

  T& operator()(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  const T& operator()(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return values.size(); }
  bool same_shape(int h, int w) const { return height == h && width == w; }
  template <typename U>
  bool same_shape(const Grid<U>& other) const {
    return height == other.height && width == other.width;
  }

  bool operator==(const Grid&) const = default;
};

using Image = Grid<double>;
using LabelMap = Grid<std::uint8_t>;
using BinaryMap = Grid<std::uint8_t>;

/// Gray-scale image in [0,1], per-pixel class ids and an optional binary
/// boundary target of the same shape.
struct Sample {
  std::string id;
  Image image;
  LabelMap labels;
  std::optional<BinaryMap> boundary;

  /// Throws ValidationError describing the first broken invariant.
  void validate(const ClassTaxonomy& taxonomy) const;

  bool operator==(const Sample&) const = default;
};

enum class Split { Train, Val, Test };

std::string to_string(Split split);
Split parse_split(const std::string& text);

struct Dataset {
  std::vector<Sample> samples;
  Split split = Split::Train;

  bool empty() const { return samples.empty(); }
  std::size_t size() const { return samples.size(); }
  bool operator==(const Dataset&) const = default;
};

}  // namespace tbnet
