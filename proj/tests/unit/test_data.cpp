#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <set>

#include <unistd.h>

#include "tbnet/core/error.hpp"
#include "tbnet/data/boundary.hpp"
#include "tbnet/data/class_weights.hpp"
#include "tbnet/data/dataset_io.hpp"
#include "tbnet/data/generator.hpp"
#include "tbnet/data/png_io.hpp"

using namespace tbnet;
namespace fs = std::filesystem;

namespace {

LabelMap labels_from(int h, int w, std::initializer_list<int> values) {
  LabelMap m(h, w);
  std::transform(values.begin(), values.end(), m.values.begin(), [](int v) { return static_cast<std::uint8_t>(v); });
  return m;
}

Dataset single(const LabelMap& labels) {
  Dataset d;
  Sample s;
  s.id = "a";
  s.image = Image(labels.height, labels.width, 0.5);
  s.labels = labels;
  d.samples.push_back(s);
  return d;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("tbnet_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("boundary of a constant map is empty") {
  const BinaryMap b = extract_boundary(LabelMap(5, 7, 3));
  CHECK(std::all_of(b.values.begin(), b.values.end(), [](auto v) { return v == 0; }));
}

TEST_CASE("boundary of a vertical split is the two middle columns") {
  const LabelMap m = labels_from(4, 4, {0, 0, 1, 1, 0, 0, 1, 1, 0, 0, 1, 1, 0, 0, 1, 1});
  const BinaryMap b = extract_boundary(m);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) CHECK(b(y, x) == ((x == 1 || x == 2) ? 1 : 0));
}

TEST_CASE("boundary around a single pixel is the pixel and its 4-neighbors") {
  LabelMap m(5, 5, 0);
  m(2, 2) = 1;
  const BinaryMap b = extract_boundary(m);
  std::set<std::pair<int, int>> expected{{2, 2}, {1, 2}, {3, 2}, {2, 1}, {2, 3}};
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) CHECK(b(y, x) == (expected.count({y, x}) ? 1 : 0));
}

TEST_CASE("boundary matches a brute-force neighborhood scan and is permutation invariant") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> cls(0, 3);
  for (int trial = 0; trial < 20; ++trial) {
    LabelMap m(9, 11);
    for (auto& v : m.values) v = static_cast<std::uint8_t>(cls(rng));
    const BinaryMap b = extract_boundary(m);
    for (int y = 0; y < 9; ++y)
      for (int x = 0; x < 11; ++x) {
        bool edge = false;
        const int dy[] = {-1, 1, 0, 0}, dx[] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
          const int ny = y + dy[k], nx = x + dx[k];
          if (ny >= 0 && ny < 9 && nx >= 0 && nx < 11 && m(ny, nx) != m(y, x)) edge = true;
        }
        CHECK(b(y, x) == (edge ? 1 : 0));
      }
    const std::uint8_t perm[] = {2, 0, 3, 1};
    LabelMap p = m;
    for (auto& v : p.values) v = perm[v];
    CHECK(extract_boundary(p) == b);
    CHECK(extract_boundary(m) == b);
  }
}

TEST_CASE("class weights on the four-pixel example") {
  const ClassWeights w = compute_class_weights(single(labels_from(2, 2, {0, 0, 0, 1})), 2);
  CHECK(w.raw[0] == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
  CHECK(w.raw[1] == 4.0);
  CHECK(w.normalized[0] == 0.25);
  CHECK(w.normalized[1] == 0.75);
}

TEST_CASE("class weights: balance, scale invariance, absent classes, monotonicity") {
  const ClassWeights balanced = compute_class_weights(single(labels_from(2, 2, {0, 1, 1, 0})), 2);
  CHECK(balanced.normalized[0] == doctest::Approx(0.5));
  CHECK(balanced.normalized[1] == doctest::Approx(0.5));

  Dataset twice = single(labels_from(2, 3, {0, 0, 1, 2, 2, 2}));
  const ClassWeights once = compute_class_weights(twice, 4);
  twice.samples.push_back(twice.samples[0]);
  const ClassWeights doubled = compute_class_weights(twice, 4);
  for (int c = 0; c < 4; ++c) CHECK(doubled.normalized[c] == doctest::Approx(once.normalized[c]).epsilon(1e-15));
  CHECK(once.raw[3] == 0.0);
  CHECK(once.normalized[3] == 0.0);
  CHECK(once.normalized[1] > once.normalized[0]);
  CHECK(once.normalized[0] > once.normalized[2]);

  CHECK_THROWS_AS(compute_class_weights(Dataset{}, 3), ConfigError);
}

TEST_CASE("normalized class weights sum to one on generated data") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    GeneratorSpec spec;
    spec.num_samples = 3;
    spec.height = spec.width = 48;
    spec.seed = seed;
    const ClassWeights w = compute_class_weights(generate_dataset(spec), 9);
    CHECK(std::accumulate(w.normalized.begin(), w.normalized.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    for (double v : w.normalized) CHECK(v >= 0.0);
  }
}

TEST_CASE("generator is deterministic and seed sensitive") {
  GeneratorSpec spec;
  spec.num_samples = 3;
  spec.height = spec.width = 64;
  spec.seed = 7;
  const Dataset a = generate_dataset(spec), b = generate_dataset(spec);
  CHECK(a.samples == b.samples);
  spec.seed = 8;
  CHECK_FALSE(generate_dataset(spec).samples == a.samples);
  CHECK_FALSE(generate_dataset(spec, Split::Val).samples == generate_dataset(spec, Split::Train).samples);
}

TEST_CASE("generator output satisfies its contract") {
  GeneratorSpec spec;
  spec.num_samples = 4;
  spec.seed = 11;
  const Dataset d = generate_dataset(spec);
  REQUIRE(d.samples.size() == 4);
  for (const auto& s : d.samples) {
    CHECK(s.image.height == 128);
    CHECK(s.image.width == 128);
    CHECK_NOTHROW(s.validate(ClassTaxonomy::pavement()));
    REQUIRE(s.boundary.has_value());
    CHECK(*s.boundary == extract_boundary(s.labels));
    CHECK(std::any_of(s.labels.values.begin(), s.labels.values.end(), [](auto v) { return v != 0; }));
    for (double v : s.image.values) CHECK(v * 255.0 == std::round(v * 255.0));
  }
}

TEST_CASE("class mix restricted to cracks yields only background and crack") {
  GeneratorSpec spec;
  spec.num_samples = 6;
  spec.height = spec.width = 64;
  spec.class_mix = {{pavement::kCrack, 2.0}};
  for (const auto& s : generate_dataset(spec).samples) {
    std::set<int> seen(s.labels.values.begin(), s.labels.values.end());
    CHECK(seen == std::set<int>{0, 1});
  }
}

TEST_CASE("invalid generator specs are rejected") {
  GeneratorSpec spec;
  spec.num_samples = 0;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = {};
  spec.class_mix = {{0, 1.0}};
  CHECK_THROWS_AS(generate_dataset(spec), ConfigError);
  spec = {};
  spec.grain_std = -1;
  CHECK_THROWS_AS(generate_dataset(spec), ConfigError);
}

TEST_CASE("dataset save/load round trip") {
  const fs::path root = scratch_dir("roundtrip");
  GeneratorSpec spec;
  spec.num_samples = 3;
  spec.height = spec.width = 32;
  const Dataset d = generate_dataset(spec);
  save_dataset(root, d);
  CHECK(fs::exists(root / "taxonomy.txt"));
  CHECK(load_taxonomy(root) == ClassTaxonomy::pavement());
  const Dataset back = load_dataset(root, Split::Train);
  CHECK(back.samples == d.samples);
  fs::remove_all(root);
}

TEST_CASE("boundaries are recomputed when absent on disk") {
  const fs::path root = scratch_dir("noboundary");
  GeneratorSpec spec;
  spec.num_samples = 2;
  spec.height = spec.width = 32;
  const Dataset d = generate_dataset(spec);
  save_dataset(root, d);
  fs::remove_all(root / "train" / "boundaries");
  CHECK(load_dataset(root, Split::Train).samples == d.samples);
  fs::remove_all(root);
}

TEST_CASE("load errors: empty split, missing mask, out-of-range label") {
  const fs::path root = scratch_dir("errors");
  fs::create_directories(root / "train" / "images");
  CHECK_THROWS_WITH_AS(load_dataset(root, Split::Train), doctest::Contains("no samples found"), LoadError);

  GeneratorSpec spec;
  spec.num_samples = 2;
  spec.height = spec.width = 16;
  save_dataset(root, generate_dataset(spec));
  fs::remove(root / "train" / "masks" / "s00001.png");
  CHECK_THROWS_WITH_AS(load_dataset(root, Split::Train), doctest::Contains("s00001"), LoadError);

  Grid<std::uint8_t> bad(16, 16, 0);
  bad(3, 5) = 9;
  write_gray_png((root / "train" / "masks" / "s00001.png").string(), bad);
  CHECK_THROWS_WITH_AS(load_dataset(root, Split::Train), doctest::Contains("s00001.png"), LoadError);
  CHECK_THROWS_WITH_AS(load_dataset(root, Split::Train), doctest::Contains("(3,5)"), LoadError);
  fs::remove_all(root);
}

TEST_CASE("resize_sample keeps labels nearest and recomputes boundaries") {
  GeneratorSpec spec;
  spec.num_samples = 1;
  spec.height = spec.width = 64;
  const Sample s = generate_dataset(spec).samples[0];
  const Sample r = resize_sample(s, 32, 32);
  CHECK(r.image.height == 32);
  CHECK(r.labels.width == 32);
  CHECK(*r.boundary == extract_boundary(r.labels));
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) CHECK(r.labels(y, x) == s.labels(2 * y + 1, 2 * x + 1));
  CHECK(resize_sample(s, 64, 64) == s);
}
