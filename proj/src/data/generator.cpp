#include "tbnet/data/generator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <vector>

#include "tbnet/core/error.hpp"
#include "tbnet/core/rng.hpp"
#include "tbnet/data/boundary.hpp"

namespace tbnet {

namespace {

using namespace pavement;

// Intensity offsets relative to the background: defects darker, markings
// and lights brighter.
double class_offset(ClassId c) {
  switch (c) {
    case kCrack: return -0.28;
    case kCornerFracture: return -0.22;
    case kSeamBroken: return -0.24;
    case kPatch: return 0.12;
    case kRepair: return -0.10;
    case kSlab: return -0.18;
    case kTrack: return 0.24;
    case kLight: return 0.40;
    default: return 0.0;
  }
}

class Canvas {
 public:
  Canvas(int h, int w) : labels(h, w, 0), offset(h, w, 0.0) {}

  void paint(int y, int x, ClassId c, double off) {
    if (y < 0 || x < 0 || y >= labels.height || x >= labels.width) return;
    labels(y, x) = static_cast<std::uint8_t>(c);
    offset(y, x) = off;
  }

  void disk(double cy, double cx, double r, ClassId c, double off) {
    const int y0 = static_cast<int>(std::floor(cy - r)), y1 = static_cast<int>(std::ceil(cy + r));
    const int x0 = static_cast<int>(std::floor(cx - r)), x1 = static_cast<int>(std::ceil(cx + r));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) paint(y, x, c, off);
  }

  void ellipse(double cy, double cx, double ry, double rx, double angle, ClassId c, double off) {
    const double r = std::max(ry, rx);
    const double ca = std::cos(angle), sa = std::sin(angle);
    for (int y = static_cast<int>(std::floor(cy - r)); y <= static_cast<int>(std::ceil(cy + r)); ++y)
      for (int x = static_cast<int>(std::floor(cx - r)); x <= static_cast<int>(std::ceil(cx + r)); ++x) {
        const double dy = y - cy, dx = x - cx;
        const double u = dx * ca + dy * sa, v = -dx * sa + dy * ca;
        if ((u * u) / (rx * rx) + (v * v) / (ry * ry) <= 1.0) paint(y, x, c, off);
      }
  }

  void ring(double cy, double cx, double r, double thickness, ClassId c, double off) {
    const double outer = r + thickness / 2, inner = r - thickness / 2;
    for (int y = static_cast<int>(std::floor(cy - outer)); y <= static_cast<int>(std::ceil(cy + outer)); ++y)
      for (int x = static_cast<int>(std::floor(cx - outer)); x <= static_cast<int>(std::ceil(cx + outer)); ++x) {
        const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
        if (d2 <= outer * outer && d2 >= inner * inner) paint(y, x, c, off);
      }
  }

  void rect(int y0, int x0, int y1, int x1, ClassId c, double off) {
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) paint(y, x, c, off);
  }

  // Thick segment: every pixel within width/2 of the segment.
  void segment(double ay, double ax, double by, double bx, double width, ClassId c, double off) {
    const double half = width / 2.0;
    const double dy = by - ay, dx = bx - ax;
    const double len2 = dy * dy + dx * dx;
    const int y0 = static_cast<int>(std::floor(std::min(ay, by) - half)) - 1;
    const int y1 = static_cast<int>(std::ceil(std::max(ay, by) + half)) + 1;
    const int x0 = static_cast<int>(std::floor(std::min(ax, bx) - half)) - 1;
    const int x1 = static_cast<int>(std::ceil(std::max(ax, bx) + half)) + 1;
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        double t = len2 > 0 ? ((y - ay) * dy + (x - ax) * dx) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        const double py = ay + t * dy - y, px = ax + t * dx - x;
        if (py * py + px * px <= half * half) paint(y, x, c, off);
      }
  }

  void triangle(double ay, double ax, double by, double bx, double cy, double cx, ClassId c, double off) {
    const int y0 = static_cast<int>(std::floor(std::min({ay, by, cy})));
    const int y1 = static_cast<int>(std::ceil(std::max({ay, by, cy})));
    const int x0 = static_cast<int>(std::floor(std::min({ax, bx, cx})));
    const int x1 = static_cast<int>(std::ceil(std::max({ax, bx, cx})));
    auto edge = [](double py, double px, double qy, double qx, double y, double x) {
      return (qx - px) * (y - py) - (qy - py) * (x - px);
    };
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double e0 = edge(ay, ax, by, bx, y, x), e1 = edge(by, bx, cy, cx, y, x), e2 = edge(cy, cx, ay, ax, y, x);
        if ((e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0)) paint(y, x, c, off);
      }
  }

  LabelMap labels;
  Grid<double> offset;
};

struct SlabLine {
  bool horizontal;
  int position;
};

class SampleRenderer {
 public:
  SampleRenderer(const GeneratorSpec& spec, std::mt19937_64& rng)
      : spec_(spec), rng_(rng), canvas_(spec.height, spec.width),
        scale_(static_cast<double>(std::min(spec.height, spec.width))) {}

  void draw(ClassId c) {
    switch (c) {
      case kSlab: slab(); break;
      case kRepair: repair(); break;
      case kPatch: patch(); break;
      case kTrack: track(); break;
      case kSeamBroken: seam_broken(); break;
      case kCornerFracture: corner_fracture(); break;
      case kCrack: crack(); break;
      case kLight: light(); break;
      default: break;
    }
  }

  Canvas& canvas() { return canvas_; }

 private:
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool coin() { return uniform_int(0, 1) == 1; }
  double y_pos() { return uniform(0, spec_.height - 1); }
  double x_pos() { return uniform(0, spec_.width - 1); }

  void slab() {
    const bool horizontal = coin();
    const int extent = horizontal ? spec_.height : spec_.width;
    const int pos = uniform_int(extent / 8, extent - 1 - extent / 8);
    const int width = uniform_int(1, 2);
    if (horizontal) canvas_.rect(pos, 0, pos + width, spec_.width, kSlab, class_offset(kSlab));
    else canvas_.rect(0, pos, spec_.height, pos + width, kSlab, class_offset(kSlab));
    slabs_.push_back({horizontal, pos});
  }

  void repair() {
    const bool horizontal = coin();
    const double thick = uniform(scale_ / 12, scale_ / 6);
    if (horizontal) {
      const double len = uniform(0.6, 1.0) * spec_.width;
      const int x0 = static_cast<int>(uniform(0, spec_.width - len));
      const int y0 = static_cast<int>(uniform(0, spec_.height - thick));
      canvas_.rect(y0, x0, y0 + static_cast<int>(thick), x0 + static_cast<int>(len), kRepair, class_offset(kRepair));
    } else {
      const double len = uniform(0.6, 1.0) * spec_.height;
      const int y0 = static_cast<int>(uniform(0, spec_.height - len));
      const int x0 = static_cast<int>(uniform(0, spec_.width - thick));
      canvas_.rect(y0, x0, y0 + static_cast<int>(len), x0 + static_cast<int>(thick), kRepair, class_offset(kRepair));
    }
  }

  void patch() {
    const int h = static_cast<int>(uniform(scale_ / 6, scale_ / 3));
    const int w = static_cast<int>(uniform(scale_ / 6, scale_ / 3));
    const int y0 = uniform_int(0, std::max(0, spec_.height - h));
    const int x0 = uniform_int(0, std::max(0, spec_.width - w));
    canvas_.rect(y0, x0, y0 + h, x0 + w, kPatch, class_offset(kPatch));
  }

  void track() {
    switch (uniform_int(0, 2)) {
      case 0:
        canvas_.ring(y_pos(), x_pos(), uniform(scale_ / 8, scale_ / 4), uniform(2, 4), kTrack, class_offset(kTrack));
        break;
      case 1: {
        const double angle = uniform(0, std::numbers::pi);
        const double cy = y_pos(), cx = x_pos(), r = scale_;
        canvas_.segment(cy - r * std::sin(angle), cx - r * std::cos(angle), cy + r * std::sin(angle),
                        cx + r * std::cos(angle), uniform(3, 6), kTrack, class_offset(kTrack));
        break;
      }
      default:
        // Water/oil stain: faint and dark rather than a bright marking.
        canvas_.ellipse(y_pos(), x_pos(), uniform(scale_ / 10, scale_ / 5), uniform(scale_ / 10, scale_ / 5),
                        uniform(0, std::numbers::pi), kTrack, -0.09);
        break;
    }
  }

  // A point on an existing slab line, or anywhere when there is none.
  std::pair<double, double> on_slab_line() {
    if (slabs_.empty()) return {y_pos(), x_pos()};
    const SlabLine& line = slabs_[static_cast<std::size_t>(uniform_int(0, static_cast<int>(slabs_.size()) - 1))];
    return line.horizontal ? std::pair{static_cast<double>(line.position), x_pos()}
                           : std::pair{y_pos(), static_cast<double>(line.position)};
  }

  void seam_broken() {
    const auto [cy, cx] = on_slab_line();
    canvas_.ellipse(cy, cx, uniform(scale_ / 40, scale_ / 20), uniform(scale_ / 24, scale_ / 12),
                    uniform(0, std::numbers::pi), kSeamBroken, class_offset(kSeamBroken));
  }

  // Block corners are slab-line crossings, or the image corners without a grid.
  std::pair<double, double> block_corner() {
    std::vector<std::pair<double, double>> corners;
    for (const auto& a : slabs_)
      for (const auto& b : slabs_)
        if (a.horizontal && !b.horizontal) corners.emplace_back(a.position, b.position);
    if (corners.empty())
      corners = {{0.0, 0.0}, {0.0, spec_.width - 1.0}, {spec_.height - 1.0, 0.0}, {spec_.height - 1.0, spec_.width - 1.0}};
    return corners[static_cast<std::size_t>(uniform_int(0, static_cast<int>(corners.size()) - 1))];
  }

  void corner_fracture() {
    const auto [cy, cx] = block_corner();
    const double sy = coin() ? 1.0 : -1.0, sx = coin() ? 1.0 : -1.0;
    const double leg_y = uniform(scale_ / 16, scale_ / 8), leg_x = uniform(scale_ / 16, scale_ / 8);
    canvas_.triangle(cy, cx, cy + sy * leg_y, cx, cy, cx + sx * leg_x, kCornerFracture,
                     class_offset(kCornerFracture));
  }

  void crack() {
    double y = y_pos(), x = x_pos();
    double heading = uniform(0, 2 * std::numbers::pi);
    const double width = uniform_int(1, 3);
    const int segments = uniform_int(2, 5);
    for (int s = 0; s < segments; ++s) {
      heading += uniform(-0.7, 0.7);
      const double len = uniform(scale_ / 8, scale_ / 4);
      const double ny = y + len * std::sin(heading), nx = x + len * std::cos(heading);
      canvas_.segment(y, x, ny, nx, width, kCrack, class_offset(kCrack));
      y = ny;
      x = nx;
    }
  }

  void light() {
    canvas_.disk(y_pos(), x_pos(), std::max(2.0, uniform(scale_ / 40, scale_ / 20)), kLight, class_offset(kLight));
  }

  const GeneratorSpec& spec_;
  std::mt19937_64& rng_;
  Canvas canvas_;
  double scale_;
  std::vector<SlabLine> slabs_;
};

// Fixed drawing order: larger structures first, fine defects on top.
constexpr ClassId kDrawOrder[] = {kSlab, kRepair, kPatch, kTrack, kSeamBroken, kCornerFracture, kCrack, kLight};

}  // namespace

std::map<ClassId, double> GeneratorSpec::default_class_mix() {
  return {{kCrack, 3.586},   {kCornerFracture, 0.151}, {kSeamBroken, 0.557}, {kPatch, 0.312},
          {kRepair, 0.893},  {kSlab, 3.040},           {kTrack, 3.749},      {kLight, 0.058}};
}

void GeneratorSpec::validate() const {
  if (num_samples <= 0) throw ConfigError("num_samples must be > 0");
  if (height <= 0 || width <= 0) throw ConfigError("image_size must be positive");
  if (class_mix.empty()) throw ConfigError("class_mix must name at least one class");
  double total = 0;
  for (const auto& [c, count] : class_mix) {
    if (c <= kBackground || c >= kNumClasses)
      throw ConfigError("class_mix key " + std::to_string(c) + " is not a non-background class id");
    if (!(count >= 0)) throw ConfigError("class_mix counts must be >= 0");
    total += count;
  }
  if (!(total > 0)) throw ConfigError("class_mix must have a positive expected instance count");
  if (!(illumination_amplitude >= 0)) throw ConfigError("illumination amplitude must be >= 0");
  if (!(grain_std >= 0)) throw ConfigError("texture grain std must be >= 0");
}

Sample generate_sample(const GeneratorSpec& spec, int index, Split split) {
  auto rng = substream(spec.seed, "generator/" + to_string(split), static_cast<std::uint64_t>(index));
  SampleRenderer renderer(spec, rng);

  std::vector<std::pair<ClassId, int>> plan;
  int instances = 0;
  for (ClassId c : kDrawOrder) {
    const auto it = spec.class_mix.find(c);
    if (it == spec.class_mix.end() || it->second <= 0) continue;
    const int n = std::poisson_distribution<int>(it->second)(rng);
    plan.emplace_back(c, n);
    instances += n;
  }
  if (instances == 0) {
    // Every sample carries at least one region: draw one instance of a class
    // picked in proportion to the mix.
    std::vector<ClassId> ids;
    std::vector<double> weights;
    for (const auto& [c, count] : spec.class_mix) {
      ids.push_back(c);
      weights.push_back(count);
    }
    const ClassId c = ids[std::discrete_distribution<std::size_t>(weights.begin(), weights.end())(rng)];
    plan.assign(1, {c, 1});
  }
  for (const auto& [c, n] : plan)
    for (int i = 0; i < n; ++i) renderer.draw(c);

  Canvas& canvas = renderer.canvas();
  bool any = std::any_of(canvas.labels.values.begin(), canvas.labels.values.end(),
                         [](std::uint8_t v) { return v != kBackground; });
  // Shapes can land fully outside the frame; fall back to a centered light.
  while (!any) {
    const ClassId c = spec.class_mix.rbegin()->first;
    renderer.draw(c);
    any = std::any_of(canvas.labels.values.begin(), canvas.labels.values.end(),
                      [](std::uint8_t v) { return v != kBackground; });
  }

  Sample s;
  char id[32];
  std::snprintf(id, sizeof(id), "s%05d", index);
  s.id = id;
  s.labels = canvas.labels;
  s.image = Image(spec.height, spec.width);
  const double angle = std::uniform_real_distribution<double>(0, 2 * std::numbers::pi)(rng);
  const double amplitude = spec.illumination_amplitude * std::uniform_real_distribution<double>(0.5, 1.0)(rng);
  std::normal_distribution<double> grain(0.0, spec.grain_std > 0 ? spec.grain_std : 1.0);
  const double diag = std::hypot(spec.height, spec.width) / 2.0;
  for (int y = 0; y < spec.height; ++y)
    for (int x = 0; x < spec.width; ++x) {
      const double t = ((y - spec.height / 2.0) * std::sin(angle) + (x - spec.width / 2.0) * std::cos(angle)) / diag;
      double v = 0.5 + amplitude * t + canvas.offset(y, x);
      if (spec.grain_std > 0) v += grain(rng);
      v = std::clamp(v, 0.0, 1.0);
      s.image(y, x) = std::round(v * 255.0) / 255.0;
    }
  s.boundary = extract_boundary(s.labels);
  return s;
}

Dataset generate_dataset(const GeneratorSpec& spec, Split split) {
  spec.validate();
  Dataset d;
  d.split = split;
  d.samples.reserve(static_cast<std::size_t>(spec.num_samples));
  for (int i = 0; i < spec.num_samples; ++i) d.samples.push_back(generate_sample(spec, i, split));
  return d;
}

}  // namespace tbnet
