#pragma once

#include <string>
#include <vector>

#include "hiervid/manifest.hpp"
#include "hiervid/pipeline.hpp"
#include "hiervid/taxonomy.hpp"

namespace hiervid {

// A generated (or ingested) corpus directory: train/val/test.jsonl,
// taxonomy.json, and the clip files the manifests point to.
struct DataSource {
  std::string root;
  Taxonomy taxonomy;
  std::vector<ManifestEntry> train, val, test;
  Vocabulary vocab;  // built from the training split only

  static DataSource load(const std::string& dir);
  const std::vector<ManifestEntry>& split(const std::string& name) const;

  // labels must agree with the taxonomy's shape
  void validate() const;
};

}  // namespace hiervid
