#include "hiervid/dataset.hpp"

#include <filesystem>

#include "hiervid/check.hpp"

namespace hiervid {

DataSource DataSource::load(const std::string& dir) {
  namespace fs = std::filesystem;
  DataSource data;
  data.root = dir;
  data.taxonomy = Taxonomy::load((fs::path(dir) / "taxonomy.json").string());
  data.train = read_manifest((fs::path(dir) / "train.jsonl").string());
  data.val = read_manifest((fs::path(dir) / "val.jsonl").string());
  data.test = read_manifest((fs::path(dir) / "test.jsonl").string());
  data.vocab = build_vocab(data.train);
  data.validate();
  return data;
}

const std::vector<ManifestEntry>& DataSource::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "test") return test;
  HV_REQUIRE(false, "DataSource: unknown split '", name,
             "' (want train, val, or test)");
  return train;
}

void DataSource::validate() const {
  taxonomy.validate();
  for (const auto* split : {&train, &val, &test})
    for (const auto& e : *split) {
      HV_REQUIRE(e.category >= 0 && e.category < taxonomy.n_categories(),
                 "DataSource: sample '", e.id, "' has category ", e.category,
                 " outside the taxonomy");
      HV_REQUIRE(e.group == taxonomy.parent(e.category), "DataSource: sample '",
                 e.id, "' labels group ", e.group, " but category ",
                 e.category, " belongs to group ", taxonomy.parent(e.category));
    }
}

}  // namespace hiervid
