#include "tbnet/core/sample.hpp"

#include "tbnet/core/error.hpp"

namespace tbnet {

void Sample::validate(const ClassTaxonomy& taxonomy) const {
  if (!image.same_shape(labels))
    throw ValidationError("sample " + id + ": image " + std::to_string(image.height) + "x" +
                          std::to_string(image.width) + " and labels " + std::to_string(labels.height) + "x" +
                          std::to_string(labels.width) + " differ in shape");
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      if (!(image(y, x) >= 0.0 && image(y, x) <= 1.0))
        throw ValidationError("sample " + id + ": intensity at (" + std::to_string(y) + "," + std::to_string(x) +
                              ") outside [0,1]");
  for (int y = 0; y < labels.height; ++y)
    for (int x = 0; x < labels.width; ++x)
      if (!taxonomy.valid(labels(y, x)))
        throw ValidationError("sample " + id + ": label " + std::to_string(labels(y, x)) + " at (" +
                              std::to_string(y) + "," + std::to_string(x) + ") outside taxonomy");
  if (boundary) {
    if (!boundary->same_shape(labels)) throw ValidationError("sample " + id + ": boundary shape differs");
    for (auto v : boundary->values)
      if (v > 1) throw ValidationError("sample " + id + ": boundary is not {0,1}-valued");
  }
}

std::string to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::Train;
  if (text == "val") return Split::Val;
  if (text == "test") return Split::Test;
  throw ConfigError("split must be train|val|test, got '" + text + "'");
}

}  // namespace tbnet
