#include "hiervid/manifest.hpp"

#include <fstream>
#include <json.hpp>

#include "hiervid/check.hpp"

namespace hiervid {

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  HV_REQUIRE(in.good(), "manifest: cannot open '", path, "'");
  std::vector<ManifestEntry> entries;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      ManifestEntry e;
      e.id = j.at("id").get<std::string>();
      e.frames = j.at("frames").get<std::string>();
      e.n_frames = j.at("n_frames").get<int64_t>();
      e.fps = j.at("fps").get<double>();
      e.group = j.at("group").get<int>();
      e.category = j.at("category").get<int>();
      e.caption = j.at("caption").get<std::string>();
      entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      HV_REQUIRE(false, "manifest '", path, "' line ", lineno, ": ", ex.what());
    }
  }
  return entries;
}

void write_manifest(const std::string& path,
                    const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path);
  HV_REQUIRE(out.good(), "manifest: cannot write '", path, "'");
  for (const auto& e : entries) {
    nlohmann::json j;
    j["id"] = e.id;
    j["frames"] = e.frames;
    j["n_frames"] = e.n_frames;
    j["fps"] = e.fps;
    j["group"] = e.group;
    j["category"] = e.category;
    j["caption"] = e.caption;
    out << j.dump() << "\n";
  }
  HV_REQUIRE(out.good(), "manifest: write failed for '", path, "'");
}

}  // namespace hiervid
