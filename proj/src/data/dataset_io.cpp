#include "tbnet/data/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include "tbnet/core/error.hpp"
#include "tbnet/data/boundary.hpp"
#include "tbnet/data/png_io.hpp"

namespace fs = std::filesystem;

namespace tbnet {

namespace {

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

Grid<std::uint8_t> quantize(const Image& image) {
  Grid<std::uint8_t> out(image.height, image.width);
  for (std::size_t i = 0; i < image.size(); ++i)
    out.values[i] = static_cast<std::uint8_t>(std::lround(std::clamp(image.values[i], 0.0, 1.0) * 255.0));
  return out;
}

}  // namespace

void save_dataset(const fs::path& root, const Dataset& data, const ClassTaxonomy& taxonomy) {
  const fs::path split_dir = root / to_string(data.split);
  make_dirs(split_dir / "images");
  make_dirs(split_dir / "masks");
  make_dirs(split_dir / "boundaries");
  {
    std::ofstream out(root / "taxonomy.txt");
    if (!out) throw IoError("cannot write " + (root / "taxonomy.txt").string());
    out << taxonomy.to_text();
  }
  for (const auto& s : data.samples) {
    s.validate(taxonomy);
    const std::string file = s.id + ".png";
    write_gray_png((split_dir / "images" / file).string(), quantize(s.image));
    write_gray_png((split_dir / "masks" / file).string(), s.labels);
    BinaryMap b = s.boundary ? *s.boundary : extract_boundary(s.labels);
    for (auto& v : b.values) v = v ? 255 : 0;
    write_gray_png((split_dir / "boundaries" / file).string(), b);
  }
}

ClassTaxonomy load_taxonomy(const fs::path& root) {
  const fs::path file = root / "taxonomy.txt";
  if (!fs::exists(file)) return ClassTaxonomy::pavement();
  std::ifstream in(file);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ClassTaxonomy::from_text(ss.str());
}

Image load_image(const fs::path& path) {
  const auto raw = read_gray_png(path.string());
  Image img(raw.height, raw.width);
  for (std::size_t i = 0; i < raw.size(); ++i) img.values[i] = raw.values[i] / 255.0;
  return img;
}

Dataset load_dataset(const fs::path& root, Split split) {
  const ClassTaxonomy taxonomy = load_taxonomy(root);
  const fs::path split_dir = root / to_string(split);
  const fs::path images_dir = split_dir / "images";
  std::vector<std::string> stems;
  if (fs::is_directory(images_dir))
    for (const auto& entry : fs::directory_iterator(images_dir))
      if (entry.is_regular_file() && entry.path().extension() == ".png") stems.push_back(entry.path().stem().string());
  if (stems.empty()) throw LoadError("no samples found under " + images_dir.string());
  std::sort(stems.begin(), stems.end());

  Dataset data;
  data.split = split;
  for (const auto& stem : stems) {
    const fs::path mask_path = split_dir / "masks" / (stem + ".png");
    if (!fs::exists(mask_path)) throw LoadError("missing mask for image " + stem + " (expected " + mask_path.string() + ")");
    Sample s;
    s.id = stem;
    s.image = load_image(images_dir / (stem + ".png"));
    s.labels = read_gray_png(mask_path.string());
    if (!s.labels.same_shape(s.image))
      throw LoadError("mask " + mask_path.string() + " does not match its image size");
    for (int y = 0; y < s.labels.height; ++y)
      for (int x = 0; x < s.labels.width; ++x)
        if (!taxonomy.valid(s.labels(y, x)))
          throw LoadError("mask " + mask_path.string() + ": label value " + std::to_string(s.labels(y, x)) +
                          " at (" + std::to_string(y) + "," + std::to_string(x) + ") is outside the " +
                          std::to_string(taxonomy.num_classes()) + "-class taxonomy");
    const fs::path boundary_path = split_dir / "boundaries" / (stem + ".png");
    if (fs::exists(boundary_path)) {
      BinaryMap b = read_gray_png(boundary_path.string());
      if (!b.same_shape(s.labels)) throw LoadError("boundary " + boundary_path.string() + " has the wrong size");
      for (auto& v : b.values) {
        if (v != 0 && v != 255) throw LoadError("boundary " + boundary_path.string() + " is not binary (0/255)");
        v = v ? 1 : 0;
      }
      s.boundary = std::move(b);
    } else {
      s.boundary = extract_boundary(s.labels);
    }
    data.samples.push_back(std::move(s));
  }
  return data;
}

Image resize_bilinear(const Image& image, int height, int width) {
  if (image.same_shape(height, width)) return image;
  Image out(height, width);
  const int in_h = image.height, in_w = image.width;
  const double sy = static_cast<double>(in_h) / height, sx = static_cast<double>(in_w) / width;
  for (int y = 0; y < height; ++y) {
    const double fy = std::max(0.0, (y + 0.5) * sy - 0.5);
    const int y0 = std::min(static_cast<int>(fy), in_h - 1), y1 = std::min(y0 + 1, in_h - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::max(0.0, (x + 0.5) * sx - 0.5);
      const int x0 = std::min(static_cast<int>(fx), in_w - 1), x1 = std::min(x0 + 1, in_w - 1);
      const double wx = fx - x0;
      out(y, x) = (1 - wy) * ((1 - wx) * image(y0, x0) + wx * image(y0, x1)) +
                  wy * ((1 - wx) * image(y1, x0) + wx * image(y1, x1));
    }
  }
  return out;
}

LabelMap resize_nearest(const LabelMap& labels, int height, int width) {
  if (labels.same_shape(height, width)) return labels;
  LabelMap out(height, width);
  const double sy = static_cast<double>(labels.height) / height, sx = static_cast<double>(labels.width) / width;
  for (int y = 0; y < height; ++y) {
    const int ny = std::min(static_cast<int>((y + 0.5) * sy), labels.height - 1);
    for (int x = 0; x < width; ++x)
      out(y, x) = labels(ny, std::min(static_cast<int>((x + 0.5) * sx), labels.width - 1));
  }
  return out;
}

Sample resize_sample(const Sample& sample, int height, int width) {
  if (sample.image.same_shape(height, width)) return sample;
  Sample out;
  out.id = sample.id;
  out.image = resize_bilinear(sample.image, height, width);
  out.labels = resize_nearest(sample.labels, height, width);
  out.boundary = extract_boundary(out.labels);
  return out;
}

}  // namespace tbnet
