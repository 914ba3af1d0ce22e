#include "hiervid/taxonomy.hpp"

#include <fstream>
#include <json.hpp>

#include "hiervid/check.hpp"

namespace hiervid {

namespace {

const std::vector<std::string> kShapes = {"circle", "square", "triangle"};
const std::vector<std::string> kColors = {"red", "green", "blue", "yellow"};

// category order matches build_taxonomy()
const std::vector<std::string> kPhrases = {
    "enters left", "enters right", "enters top",  "enters bottom",
    "leaves left", "leaves right", "leaves top",  "leaves bottom",
    "slides left", "slides right", "slides up",   "slides down",
    "grows",       "shrinks"};

}  // namespace

int Taxonomy::parent(int category) const {
  HV_REQUIRE(category >= 0 && category < n_categories(),
             "Taxonomy: category ", category, " out of range [0,",
             n_categories(), ")");
  return categories[static_cast<size_t>(category)].second;
}

int Taxonomy::category_index(const std::string& name) const {
  for (size_t i = 0; i < categories.size(); ++i)
    if (categories[i].first == name) return static_cast<int>(i);
  HV_REQUIRE(false, "Taxonomy: unknown category '", name, "'");
  return -1;
}

void Taxonomy::validate() const {
  HV_REQUIRE(!groups.empty(), "Taxonomy: no groups");
  std::vector<int> children(groups.size(), 0);
  for (size_t i = 0; i < categories.size(); ++i) {
    const int p = categories[i].second;
    HV_REQUIRE(p >= 0 && p < n_groups(), "Taxonomy: category '",
               categories[i].first, "' has out-of-range parent ", p);
    ++children[static_cast<size_t>(p)];
  }
  for (size_t g = 0; g < groups.size(); ++g)
    HV_REQUIRE(children[g] >= 2, "Taxonomy: group '", groups[g], "' has ",
               children[g], " categories, needs >= 2");
  HV_REQUIRE(n_groups() < n_categories(),
             "Taxonomy: coarse level must be strictly coarser: |T1|=",
             n_groups(), " |T2|=", n_categories());
}

std::string Taxonomy::to_json() const {
  nlohmann::json j;
  j["groups"] = groups;
  j["categories"] = nlohmann::json::array();
  for (const auto& [name, parent] : categories)
    j["categories"].push_back({{"name", name}, {"group", parent}});
  j["vocabulary"] = vocabulary;
  return j.dump(2);
}

Taxonomy Taxonomy::from_json(const std::string& text) {
  Taxonomy tax;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    HV_REQUIRE(false, "Taxonomy: malformed JSON: ", e.what());
  }
  try {
    tax.groups = j.at("groups").get<std::vector<std::string>>();
    for (const auto& c : j.at("categories"))
      tax.categories.emplace_back(c.at("name").get<std::string>(),
                                  c.at("group").get<int>());
    if (j.contains("vocabulary"))
      tax.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    HV_REQUIRE(false, "Taxonomy: missing or mistyped field: ", e.what());
  }
  tax.validate();
  return tax;
}

Taxonomy Taxonomy::load(const std::string& path) {
  std::ifstream in(path);
  HV_REQUIRE(in.good(), "Taxonomy: cannot open '", path, "'");
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return from_json(text);
}

void Taxonomy::save(const std::string& path) const {
  std::ofstream out(path);
  HV_REQUIRE(out.good(), "Taxonomy: cannot write '", path, "'");
  out << to_json() << "\n";
}

Taxonomy build_taxonomy() {
  Taxonomy tax;
  tax.groups = {"enter", "leave", "slide", "pulse"};
  tax.categories = {
      {"enter-left", 0},   {"enter-right", 0}, {"enter-top", 0},
      {"enter-bottom", 0}, {"leave-left", 1},  {"leave-right", 1},
      {"leave-top", 1},    {"leave-bottom", 1}, {"slide-left", 2},
      {"slide-right", 2},  {"slide-up", 2},    {"slide-down", 2},
      {"pulse-grow", 3},   {"pulse-shrink", 3}};
  tax.vocabulary = {"<pad>", "<bos>", "<eos>", "<unk>"};
  for (const auto& s : kColors) tax.vocabulary.push_back(s);
  for (const auto& s : kShapes) tax.vocabulary.push_back(s);
  for (const std::string word :
       {"enters", "leaves", "slides", "left", "right", "top", "bottom", "up",
        "down", "grows", "shrinks"})
    tax.vocabulary.push_back(word);
  tax.validate();
  return tax;
}

const std::vector<std::string>& shape_names() { return kShapes; }
const std::vector<std::string>& color_names() { return kColors; }

const std::string& motion_phrase(int category) {
  HV_REQUIRE(category >= 0 && category < static_cast<int>(kPhrases.size()),
             "motion_phrase: category ", category, " out of range");
  return kPhrases[static_cast<size_t>(category)];
}

int category_from_phrase(const Taxonomy& tax, const std::string& phrase) {
  for (int c = 0; c < tax.n_categories() &&
                  c < static_cast<int>(kPhrases.size());
       ++c)
    if (kPhrases[static_cast<size_t>(c)] == phrase) return c;
  return -1;
}

}  // namespace hiervid
