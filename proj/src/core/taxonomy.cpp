#include "tbnet/core/taxonomy.hpp"

#include <algorithm>
#include <sstream>

#include "tbnet/core/error.hpp"

namespace tbnet {

ClassTaxonomy::ClassTaxonomy(std::vector<ClassInfo> classes, ClassId background_id)
    : classes_(std::move(classes)), background_id_(background_id) {
  if (classes_.empty()) throw ConfigError("taxonomy must contain at least one class");
  std::sort(classes_.begin(), classes_.end(),
            [](const ClassInfo& a, const ClassInfo& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    if (classes_[i].id != static_cast<ClassId>(i))
      throw ConfigError("taxonomy ids must be exactly 0..C-1 without gaps or duplicates");
  }
  if (!valid(background_id_)) throw ConfigError("taxonomy background id is not a valid class id");
}

const ClassTaxonomy& ClassTaxonomy::pavement() {
  static const ClassTaxonomy taxonomy(
      {{0, "background"},
       {1, "crack"},
       {2, "cornerfracture"},
       {3, "seambroken"},
       {4, "patch"},
       {5, "repair"},
       {6, "slab"},
       {7, "track"},
       {8, "light"}},
      0);
  return taxonomy;
}

const std::string& ClassTaxonomy::name(ClassId id) const {
  if (!valid(id)) throw ValidationError("class id " + std::to_string(id) + " outside taxonomy");
  return classes_[static_cast<std::size_t>(id)].name;
}

std::string ClassTaxonomy::to_text() const {
  std::ostringstream out;
  for (const auto& c : classes_) out << c.id << ' ' << c.name << '\n';
  return out.str();
}

ClassTaxonomy ClassTaxonomy::from_text(const std::string& text) {
  std::istringstream in(text);
  std::vector<ClassInfo> classes;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    ClassInfo info;
    if (!(ls >> info.id >> info.name)) throw LoadError("malformed taxonomy line: " + line);
    classes.push_back(std::move(info));
  }
  // The background class is the one named "background" when present, else id 0.
  ClassId background = 0;
  for (const auto& c : classes)
    if (c.name == "background") background = c.id;
  return ClassTaxonomy(std::move(classes), background);
}

bool ClassTaxonomy::operator==(const ClassTaxonomy& other) const {
  if (background_id_ != other.background_id_ || classes_.size() != other.classes_.size()) return false;
  for (std::size_t i = 0; i < classes_.size(); ++i)
    if (classes_[i].id != other.classes_[i].id || classes_[i].name != other.classes_[i].name) return false;
  return true;
}

}  // namespace tbnet
