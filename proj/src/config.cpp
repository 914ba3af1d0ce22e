#include "hiervid/config.hpp"

#include <fstream>
#include <json.hpp>
#include <set>

namespace hiervid {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& where) {
  HV_REQUIRE(j.is_object(), "config: '", where, "' must be a JSON object");
  for (const auto& [key, value] : j.items())
    HV_REQUIRE(allowed.count(key), "config: unknown key '", key, "' in ",
               where);
}

template <class V>
void read_if(const json& j, const char* key, V& out) {
  if (j.contains(key)) out = j.at(key).get<V>();
}

}  // namespace

Pointwise parse_activation(const std::string& name) {
  if (name == "relu") return Pointwise::relu;
  if (name == "sigmoid") return Pointwise::sigmoid;
  if (name == "tanh") return Pointwise::tanh;
  HV_REQUIRE(false, "config: unknown activation '", name,
             "' (want relu, sigmoid, or tanh)");
  return Pointwise::relu;
}

const char* activation_name(Pointwise kind) { return pointwise_name(kind); }

LossWeights parse_weights(const std::string& text) {
  std::vector<double> values;
  std::string cur;
  for (char c : text) {
    if (c == ',') {
      values.push_back(std::stod(cur));
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) values.push_back(std::stod(cur));
  HV_REQUIRE(values.size() == 3, "weights: want 3 comma-separated values, got '",
             text, "'");
  LossWeights w{values[0], values[1], values[2]};
  w.validate();
  return w;
}

std::vector<LossWeights> parse_stages(const std::string& text) {
  std::vector<LossWeights> stages;
  std::string cur;
  for (char c : text) {
    if (c == ';') {
      stages.push_back(parse_weights(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) stages.push_back(parse_weights(cur));
  HV_REQUIRE(!stages.empty(), "stages: empty schedule '", text, "'");
  return stages;
}

RunConfig RunConfig::from_json_text(const std::string& text) {
  RunConfig cfg;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    HV_REQUIRE(false, "config: malformed JSON: ", e.what());
  }
  try {
    reject_unknown_keys(
        j, {"seed", "data", "encoder", "heads", "train", "paths"}, "top level");
    read_if(j, "seed", cfg.seed);

    if (j.contains("data")) {
      const json& d = j.at("data");
      reject_unknown_keys(
          d, {"canvas", "frames_min", "frames_max", "fps", "train", "val", "test"},
          "data");
      read_if(d, "canvas", cfg.data.canvas);
      read_if(d, "frames_min", cfg.data.frames_min);
      read_if(d, "frames_max", cfg.data.frames_max);
      read_if(d, "fps", cfg.data.fps);
      read_if(d, "train", cfg.n_train);
      read_if(d, "val", cfg.n_val);
      read_if(d, "test", cfg.n_test);
    }

    if (j.contains("encoder")) {
      const json& e = j.at("encoder");
      reject_unknown_keys(
          e, {"channels", "pool_after", "lstm_hidden", "activation"}, "encoder");
      read_if(e, "channels", cfg.model.encoder.channels);
      read_if(e, "pool_after", cfg.model.encoder.pool_after);
      read_if(e, "lstm_hidden", cfg.model.encoder.lstm_hidden);
      if (e.contains("activation"))
        cfg.model.encoder.activation =
            parse_activation(e.at("activation").get<std::string>());
    }

    if (j.contains("heads")) {
      const json& h = j.at("heads");
      reject_unknown_keys(h, {"embed_dim", "decoder_hidden", "max_decode_len"},
                          "heads");
      read_if(h, "embed_dim", cfg.model.embed_dim);
      read_if(h, "decoder_hidden", cfg.model.decoder_hidden);
      read_if(h, "max_decode_len", cfg.model.max_decode_len);
    }

    if (j.contains("train")) {
      const json& t = j.at("train");
      reject_unknown_keys(t,
                          {"lr", "batch_size", "epochs_per_stage", "stages",
                           "reset_optimizer_between_stages", "deterministic",
                           "max_steps"},
                          "train");
      read_if(t, "lr", cfg.train.lr);
      read_if(t, "batch_size", cfg.train.batch_size);
      read_if(t, "epochs_per_stage", cfg.train.epochs_per_stage);
      read_if(t, "reset_optimizer_between_stages",
              cfg.train.reset_optimizer_between_stages);
      read_if(t, "deterministic", cfg.train.deterministic);
      read_if(t, "max_steps", cfg.train.max_steps);
      if (t.contains("stages")) {
        cfg.train.stages.clear();
        for (const auto& stage : t.at("stages")) {
          const auto v = stage.get<std::vector<double>>();
          HV_REQUIRE(v.size() == 3, "config: each stage wants 3 weights");
          cfg.train.stages.push_back(LossWeights{v[0], v[1], v[2]});
        }
      }
    }

    if (j.contains("paths")) {
      const json& p = j.at("paths");
      reject_unknown_keys(p, {"data_dir", "out_dir"}, "paths");
      read_if(p, "data_dir", cfg.data_dir);
      read_if(p, "out_dir", cfg.out_dir);
    }
  } catch (const json::exception& e) {
    HV_REQUIRE(false, "config: mistyped field: ", e.what());
  }
  cfg.resolve();
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  HV_REQUIRE(in.good(), "config: cannot open '", path, "'");
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return from_json_text(text);
}

void RunConfig::resolve() {
  data.seed = seed;
  train.seed = seed;
  model.encoder.validate();
  train.validate();
  HV_REQUIRE(data.frames_min >= 2 && data.frames_max >= data.frames_min,
             "config: bad frame range [", data.frames_min, ",",
             data.frames_max, "]");
  HV_REQUIRE(data.canvas >= 8, "config: canvas too small: ", data.canvas);
  HV_REQUIRE(n_train >= 1 && n_val >= 1 && n_test >= 1,
             "config: split sizes must be >= 1");
}

std::string RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["data"] = {{"canvas", data.canvas},   {"frames_min", data.frames_min},
               {"frames_max", data.frames_max}, {"fps", data.fps},
               {"train", n_train},        {"val", n_val},
               {"test", n_test}};
  j["encoder"] = {{"channels", model.encoder.channels},
                  {"pool_after", model.encoder.pool_after},
                  {"lstm_hidden", model.encoder.lstm_hidden},
                  {"activation", activation_name(model.encoder.activation)}};
  j["heads"] = {{"embed_dim", model.embed_dim},
                {"decoder_hidden", model.decoder_hidden},
                {"max_decode_len", model.max_decode_len}};
  json stages = json::array();
  for (const auto& w : train.stages)
    stages.push_back({w.group, w.category, w.caption});
  j["train"] = {{"lr", train.lr},
                {"batch_size", train.batch_size},
                {"epochs_per_stage", train.epochs_per_stage},
                {"stages", stages},
                {"reset_optimizer_between_stages",
                 train.reset_optimizer_between_stages},
                {"deterministic", train.deterministic},
                {"max_steps", train.max_steps}};
  j["paths"] = {{"data_dir", data_dir}, {"out_dir", out_dir}};
  return j.dump(2);
}

}  // namespace hiervid
