#pragma once

#include <string>
#include <vector>

namespace tbnet {

using ClassId = int;

struct ClassInfo {
  ClassId id;
  std::string name;
};

/// Ordered label space. Ids are exactly 0..C-1.
class ClassTaxonomy {
 public:
  /// Throws ConfigError when ids are not a gap-free 0..C-1 sequence or the
  /// background id is not one of them.
  ClassTaxonomy(std::vector<ClassInfo> classes, ClassId background_id);

  /// background, crack, cornerfracture, seambroken, patch, repair, slab,
  /// track, light.
  static const ClassTaxonomy& pavement();

  int num_classes() const { return static_cast<int>(classes_.size()); }
  ClassId background_id() const { return background_id_; }
  const std::vector<ClassInfo>& classes() const { return classes_; }
  const std::string& name(ClassId id) const;
  bool valid(int id) const { return id >= 0 && id < num_classes(); }

  /// "id name" per line.
  std::string to_text() const;
  static ClassTaxonomy from_text(const std::string& text);

  bool operator==(const ClassTaxonomy&) const;

 private:
  std::vector<ClassInfo> classes_;
  ClassId background_id_;
};

namespace pavement {
inline constexpr ClassId kBackground = 0;
inline constexpr ClassId kCrack = 1;
inline constexpr ClassId kCornerFracture = 2;
inline constexpr ClassId kSeamBroken = 3;
inline constexpr ClassId kPatch = 4;
inline constexpr ClassId kRepair = 5;
inline constexpr ClassId kSlab = 6;
inline constexpr ClassId kTrack = 7;
inline constexpr ClassId kLight = 8;
inline constexpr int kNumClasses = 9;
}  // namespace pavement

}  // namespace tbnet
