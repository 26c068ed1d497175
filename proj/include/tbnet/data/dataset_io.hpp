#pragma once

#include <filesystem>
#include <string>

#include "tbnet/core/sample.hpp"
#include "tbnet/core/taxonomy.hpp"

namespace tbnet {

/// On-disk layout:
///   <root>/taxonomy.txt                    "id name" per line
///   <root>/<split>/images/<id>.png         8-bit gray
///   <root>/<split>/masks/<id>.png          8-bit, pixel value = class id
///   <root>/<split>/boundaries/<id>.png     optional, 0 or 255
void save_dataset(const std::filesystem::path& root, const Dataset& data,
                  const ClassTaxonomy& taxonomy = ClassTaxonomy::pavement());

/// taxonomy.txt when present, the pavement taxonomy otherwise.
ClassTaxonomy load_taxonomy(const std::filesystem::path& root);

/// Pairs images with masks by file stem (sorted by stem), checks label range
/// and computes boundary targets when none are stored. Throws LoadError on a
/// missing mask, an out-of-range label or an empty split.
Dataset load_dataset(const std::filesystem::path& root, Split split);

/// Half-pixel-centered resampling.
Image resize_bilinear(const Image& image, int height, int width);
LabelMap resize_nearest(const LabelMap& labels, int height, int width);

/// Bilinear image, nearest-neighbor labels, boundary recomputed.
Sample resize_sample(const Sample& sample, int height, int width);

/// Gray PNG as [0,1] intensities.
Image load_image(const std::filesystem::path& path);

}  // namespace tbnet
