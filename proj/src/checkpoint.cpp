#include "hiervid/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace hiervid {

namespace {

constexpr char kMagic[4] = {'H', 'V', 'C', 'K'};

template <class V>
void put(std::ostream& out, V v) {
  uint8_t b[sizeof(V)];
  std::memcpy(b, &v, sizeof(V));  // little-endian host assumed; x86/arm64
  out.write(reinterpret_cast<const char*>(b), sizeof(V));
}

template <class V>
V get(std::istream& in, const std::string& path, const char* what) {
  uint8_t b[sizeof(V)];
  in.read(reinterpret_cast<char*>(b), sizeof(V));
  HV_REQUIRE(in.gcount() == sizeof(V), "checkpoint '", path,
             "': truncated reading ", what);
  V v;
  std::memcpy(&v, b, sizeof(V));
  return v;
}

void put_record(std::ostream& out, const TensorRecord& rec) {
  HV_REQUIRE(rec.name.size() <= 0xFFFF, "checkpoint: name too long: ", rec.name);
  HV_REQUIRE(rec.dims.size() <= 0xFF, "checkpoint: rank too large for '",
             rec.name, "'");
  put<uint16_t>(out, static_cast<uint16_t>(rec.name.size()));
  out.write(rec.name.data(), static_cast<std::streamsize>(rec.name.size()));
  put<uint8_t>(out, static_cast<uint8_t>(rec.dims.size()));
  int64_t numel = 1;
  for (int64_t d : rec.dims) {
    put<uint32_t>(out, static_cast<uint32_t>(d));
    numel *= d;
  }
  HV_REQUIRE(numel == static_cast<int64_t>(rec.values.size()),
             "checkpoint: '", rec.name, "' dims disagree with value count");
  out.write(reinterpret_cast<const char*>(rec.values.data()),
            static_cast<std::streamsize>(rec.values.size() * sizeof(float)));
}

TensorRecord get_record(std::istream& in, const std::string& path) {
  TensorRecord rec;
  const auto name_len = get<uint16_t>(in, path, "name length");
  rec.name.resize(name_len);
  in.read(rec.name.data(), name_len);
  HV_REQUIRE(in.gcount() == name_len, "checkpoint '", path,
             "': truncated reading a parameter name");
  const auto rank = get<uint8_t>(in, path, "rank");
  int64_t numel = 1;
  for (int r = 0; r < rank; ++r) {
    const auto d = get<uint32_t>(in, path, "dims");
    HV_REQUIRE(d >= 1, "checkpoint '", path, "': zero extent in '", rec.name, "'");
    rec.dims.push_back(d);
    numel *= d;
  }
  rec.values.resize(static_cast<size_t>(numel));
  in.read(reinterpret_cast<char*>(rec.values.data()),
          static_cast<std::streamsize>(numel * sizeof(float)));
  HV_REQUIRE(in.gcount() == static_cast<std::streamsize>(numel * sizeof(float)),
             "checkpoint '", path, "': truncated reading values of '", rec.name,
             "'");
  return rec;
}

}  // namespace

void save_checkpoint(const CheckpointState& state, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  HV_REQUIRE(out.good(), "checkpoint: cannot open '", path, "' for writing");
  out.write(kMagic, 4);
  put<uint32_t>(out, state.version);
  put<uint32_t>(out, static_cast<uint32_t>(state.params.size()));
  for (const auto& rec : state.params) put_record(out, rec);
  put<uint32_t>(out, static_cast<uint32_t>(state.moments.size()));
  for (const auto& rec : state.moments) put_record(out, rec);
  put<uint64_t>(out, static_cast<uint64_t>(state.adam_step));
  put<uint64_t>(out, state.rng_seed);
  put<uint32_t>(out, state.stage);
  put<uint32_t>(out, state.epoch_in_stage);
  put<uint64_t>(out, state.global_epoch);
  put<uint64_t>(out, state.global_step);
  HV_REQUIRE(out.good(), "checkpoint: write failed for '", path, "'");
}

CheckpointState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  HV_REQUIRE(in.good(), "checkpoint: cannot open '", path, "'");
  char magic[4];
  in.read(magic, 4);
  HV_REQUIRE(in.gcount() == 4 && std::memcmp(magic, kMagic, 4) == 0,
             "checkpoint: '", path, "' is not an HVCK file");
  CheckpointState state;
  state.version = get<uint32_t>(in, path, "version");
  HV_REQUIRE(state.version == 1, "checkpoint '", path,
             "': unsupported version ", state.version);
  const auto n_params = get<uint32_t>(in, path, "param count");
  for (uint32_t i = 0; i < n_params; ++i)
    state.params.push_back(get_record(in, path));
  const auto n_moments = get<uint32_t>(in, path, "moment count");
  for (uint32_t i = 0; i < n_moments; ++i)
    state.moments.push_back(get_record(in, path));
  state.adam_step = static_cast<int64_t>(get<uint64_t>(in, path, "adam step"));
  state.rng_seed = get<uint64_t>(in, path, "rng seed");
  state.stage = get<uint32_t>(in, path, "stage");
  state.epoch_in_stage = get<uint32_t>(in, path, "epoch");
  state.global_epoch = get<uint64_t>(in, path, "global epoch");
  state.global_step = get<uint64_t>(in, path, "global step");
  return state;
}

CheckpointState snapshot_training(const Model<float>& model,
                                  const Adam<float>& opt, uint64_t rng_seed,
                                  uint32_t stage, uint32_t epoch_in_stage,
                                  uint64_t global_epoch, uint64_t global_step) {
  CheckpointState state;
  state.adam_step = opt.step_count();
  state.rng_seed = rng_seed;
  state.stage = stage;
  state.epoch_in_stage = epoch_in_stage;
  state.global_epoch = global_epoch;
  state.global_step = global_step;
  const auto& items = model.params.items();
  for (size_t p = 0; p < items.size(); ++p) {
    TensorRecord rec;
    rec.name = items[p].first;
    rec.dims = items[p].second.shape().dims();
    rec.values = items[p].second.values();
    state.params.push_back(std::move(rec));

    TensorRecord m{"adam.m." + items[p].first, items[p].second.shape().dims(),
                   opt.first_moments()[p]};
    TensorRecord v{"adam.v." + items[p].first, items[p].second.shape().dims(),
                   opt.second_moments()[p]};
    state.moments.push_back(std::move(m));
    state.moments.push_back(std::move(v));
  }
  return state;
}

void restore_training(const CheckpointState& state, Model<float>& model,
                      Adam<float>& opt) {
  HV_REQUIRE(state.params.size() == model.params.size(),
             "checkpoint: holds ", state.params.size(),
             " parameters, model has ", model.params.size());
  for (const auto& rec : state.params) {
    HV_REQUIRE(model.params.has(rec.name), "checkpoint: unknown parameter '",
               rec.name, "'");
    Tensor<float> t = model.params.get(rec.name);
    HV_REQUIRE(t.shape().dims() == rec.dims, "checkpoint: parameter '",
               rec.name, "' has shape ", Shape(rec.dims).to_string(),
               ", model wants ", t.shape().to_string());
    t.values() = rec.values;
  }
  HV_REQUIRE(state.moments.size() == 2 * model.params.size(),
             "checkpoint: holds ", state.moments.size(),
             " moment tensors, model wants ", 2 * model.params.size());
  const auto& items = model.params.items();
  for (size_t p = 0; p < items.size(); ++p) {
    const TensorRecord& m = state.moments[2 * p];
    const TensorRecord& v = state.moments[2 * p + 1];
    HV_REQUIRE(m.name == "adam.m." + items[p].first &&
                   v.name == "adam.v." + items[p].first,
               "checkpoint: moment records misordered near '", items[p].first,
               "'");
    HV_REQUIRE(m.values.size() == items[p].second.values().size(),
               "checkpoint: moment '", m.name, "' has ", m.values.size(),
               " values, parameter wants ", items[p].second.values().size());
    opt.first_moments()[p] = m.values;
    opt.second_moments()[p] = v.values;
  }
  opt.set_step_count(state.adam_step);
}

}  // namespace hiervid
