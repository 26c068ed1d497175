#include "tbnet/data/png_io.hpp"

#include <png.h>

#include <cstring>

#include "tbnet/core/error.hpp"

namespace tbnet {

Grid<std::uint8_t> read_gray_png(const std::string& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw LoadError("cannot read PNG " + path + ": " + image.message);
  image.format = PNG_FORMAT_GRAY;
  Grid<std::uint8_t> out(static_cast<int>(image.height), static_cast<int>(image.width));
  if (!png_image_finish_read(&image, nullptr, out.values.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw LoadError("cannot decode PNG " + path + ": " + msg);
  }
  return out;
}

namespace {

void write_png(const std::string& path, int height, int width, png_uint_32 format, const void* data) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;
  if (!png_image_write_to_file(&image, path.c_str(), 0, data, 0, nullptr))
    throw IoError("cannot write PNG " + path + ": " + image.message);
}

}  // namespace

void write_gray_png(const std::string& path, const Grid<std::uint8_t>& pixels) {
  write_png(path, pixels.height, pixels.width, PNG_FORMAT_GRAY, pixels.values.data());
}

void write_rgb_png(const std::string& path, int height, int width, const std::vector<std::uint8_t>& rgb) {
  if (rgb.size() != static_cast<std::size_t>(height) * width * 3) throw ShapeError("RGB buffer size mismatch");
  write_png(path, height, width, PNG_FORMAT_RGB, rgb.data());
}

}  // namespace tbnet
