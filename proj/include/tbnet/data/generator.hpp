#pragma once

#include <cstdint>
#include <map>

#include "tbnet/core/sample.hpp"

namespace tbnet {

/// Procedural pavement images. Every class has its own shape grammar:
///   crack          thin random polylines, 1-3 px wide
///   cornerfracture small triangles touching a block corner
///   seambroken     small blobs sitting on slab lines
///   patch          filled rectangles
///   repair         long filled strips
///   slab           straight 1-2 px grid lines
///   track          rings, line bands or low-contrast blobs
///   light          small filled circles
/// The background is mid-gray grain on a low-frequency illumination ramp.
struct GeneratorSpec {
  int num_samples = 16;
  int height = 128;
  int width = 128;
  std::uint64_t seed = 0;
  /// Non-background class id -> expected instance count per image.
  std::map<ClassId, double> class_mix = default_class_mix();
  double illumination_amplitude = 0.15;
  double grain_std = 0.04;

  /// Annotated-area counts of the reference inspection dataset per thousand:
  /// crack 3.586, cornerfracture 0.151, seambroken 0.557, patch 0.312,
  /// repair 0.893, slab 3.040, track 3.749, light 0.058.
  static std::map<ClassId, double> default_class_mix();

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Deterministic in the GeneratorSpec; sample i draws from its own (seed, split, i)
/// stream, so train and val sets generated from one seed do not overlap.
/// Images are quantized to multiples of 1/255 so PNG storage is lossless.
Dataset generate_dataset(const GeneratorSpec& spec, Split split = Split::Train);
Sample generate_sample(const GeneratorSpec& spec, int index, Split split = Split::Train);

}  // namespace tbnet
