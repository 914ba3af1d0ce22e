#pragma once

#include <string>
#include <vector>

namespace hiervid {

// One JSONL manifest line; `frames` is relative to the manifest's directory.
struct ManifestEntry {
  std::string id;
  std::string frames;
  int64_t n_frames = 0;
  double fps = 0.0;
  int group = 0;
  int category = 0;
  std::string caption;
};

std::vector<ManifestEntry> read_manifest(const std::string& path);
void write_manifest(const std::string& path,
                    const std::vector<ManifestEntry>& entries);

}  // namespace hiervid
