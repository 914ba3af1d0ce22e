#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace hiervid {

// Three-level target structure: coarse groups T1, fine categories T2 (each
// with exactly one parent group), and the caption token inventory.
struct Taxonomy {
  std::vector<std::string> groups;
  std::vector<std::pair<std::string, int>> categories;  // (name, parent group)
  std::vector<std::string> vocabulary;

  int n_groups() const { return static_cast<int>(groups.size()); }
  int n_categories() const { return static_cast<int>(categories.size()); }
  int parent(int category) const;
  int category_index(const std::string& name) const;

  // Throws unless: every category has one in-range parent, every group has
  // >= 2 categories, and |T1| < |T2|.
  void validate() const;

  std::string to_json() const;
  static Taxonomy from_json(const std::string& text);
  static Taxonomy load(const std::string& path);
  void save(const std::string& path) const;
};

// The fixed synthetic taxonomy: 4 motion groups, 14 direction/size
// refinements, and the caption vocabulary (shapes, colors, motion words,
// specials).
Taxonomy build_taxonomy();

// Caption template pieces for the synthetic corpus.
const std::vector<std::string>& shape_names();   // circle, square, triangle
const std::vector<std::string>& color_names();   // red, green, blue, yellow
const std::string& motion_phrase(int category);  // e.g. "slides left"

// Inverts the caption template: motion phrase -> category id, or -1.
int category_from_phrase(const Taxonomy& tax, const std::string& phrase);

}  // namespace hiervid
