#include "hiervid/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

namespace hiervid {

namespace fs = std::filesystem;

Model<float> build_model(const ModelSettings& settings, const DataSource& data) {
  HeadsConfig heads;
  heads.n_groups = data.taxonomy.n_groups();
  heads.n_categories = data.taxonomy.n_categories();
  heads.vocab_size = data.vocab.size();
  heads.embed_dim = settings.embed_dim;
  heads.decoder_hidden = settings.decoder_hidden;
  heads.max_decode_len = settings.max_decode_len;
  return Model<float>::build(settings.encoder, heads);
}

Trainer::Trainer(Model<float>& model, const DataSource& data, TrainConfig cfg)
    : model_(model), data_(data), cfg_(std::move(cfg)),
      opt_(model.params, cfg_.lr) {
  cfg_.validate();
}

double Trainer::train_step(const std::vector<ManifestEntry>& batch,
                           const LossWeights& weights,
                           uint64_t epoch_for_streams) {
  Batch b = collate(batch, data_.root, data_.vocab, PipelineMode::train,
                    cfg_.seed, epoch_for_streams);
  Tape<float> tape;
  auto out = model_.forward(&tape, b.video, b.group, b.category, b.caption_ids,
                            b.max_len, weights);
  const double total = out.breakdown.total;
  if (!std::isfinite(total)) return total;  // caller aborts; no update applied
  model_.params.zero_all_grads();
  tape.backward(out.total);
  opt_.step(model_.params);
  ++global_step_;
  return total;
}

MetricsRow Trainer::evaluate(const std::string& split,
                             const LossWeights& weights, int stage, int epoch) {
  const auto& entries = data_.split(split);
  HV_REQUIRE(!entries.empty(), "evaluate: split '", split, "' is empty");
  MetricsRow row;
  row.stage = stage;
  row.epoch = epoch;
  row.split = split;

  double acc_group = 0.0, acc_category = 0.0, exact = 0.0;
  double loss_group = 0.0, loss_category = 0.0, loss_caption = 0.0, total = 0.0;
  bool has_group = true, has_category = true, has_caption = true;

  const auto n = static_cast<int64_t>(entries.size());
  for (int64_t begin = 0; begin < n; begin += cfg_.batch_size) {
    const int64_t end = std::min(n, begin + cfg_.batch_size);
    std::vector<ManifestEntry> part(entries.begin() + begin, entries.begin() + end);
    Batch b = collate(part, data_.root, data_.vocab, PipelineMode::eval,
                      cfg_.seed, 0);
    auto out = model_.forward(nullptr, b.video, b.group, b.category,
                              b.caption_ids, b.max_len, weights,
                              /*compute_all=*/true);
    const auto bs = static_cast<double>(b.size);
    acc_group += top1_accuracy(out.p_group, b.group) * bs;
    acc_category += top1_accuracy(out.p_category, b.category) * bs;

    auto decoded = model_.decode(out.v, out.p_category);
    for (int64_t r = 0; r < b.size; ++r) {
      std::vector<int64_t> ref(b.caption_ids.begin() + r * b.max_len,
                               b.caption_ids.begin() + (r + 1) * b.max_len);
      exact += exact_match(decoded[static_cast<size_t>(r)], ref);
    }

    if (out.breakdown.loss_group) loss_group += *out.breakdown.loss_group * bs;
    else has_group = false;
    if (out.breakdown.loss_category)
      loss_category += *out.breakdown.loss_category * bs;
    else has_category = false;
    if (out.breakdown.loss_caption)
      loss_caption += *out.breakdown.loss_caption * bs;
    else has_caption = false;
    total += out.breakdown.total * bs;
  }

  const auto dn = static_cast<double>(n);
  row.acc_group = acc_group / dn;
  row.acc_category = acc_category / dn;
  row.caption_exact = exact / dn;
  if (has_group) row.losses.loss_group = loss_group / dn;
  if (has_category) row.losses.loss_category = loss_category / dn;
  if (has_caption) row.losses.loss_caption = loss_caption / dn;
  row.losses.total = total / dn;
  return row;
}

CheckpointState Trainer::snapshot(uint32_t stage, uint32_t epoch_in_stage) const {
  return snapshot_training(model_, opt_, cfg_.seed, stage, epoch_in_stage,
                           global_epoch_, static_cast<uint64_t>(global_step_));
}

TrainResult Trainer::run(const std::string& out_dir) {
  return run_loop(0, 0, out_dir);
}

TrainResult Trainer::resume(const CheckpointState& state,
                            const std::string& out_dir) {
  restore_training(state, model_, opt_);
  HV_REQUIRE(state.rng_seed == cfg_.seed,
             "resume: checkpoint was trained with seed ", state.rng_seed,
             ", config says ", cfg_.seed);
  global_epoch_ = state.global_epoch;
  global_step_ = static_cast<int64_t>(state.global_step);
  return run_loop(state.stage, state.epoch_in_stage, out_dir);
}

TrainResult Trainer::run_loop(uint32_t start_stage, uint32_t start_epoch,
                              const std::string& out_dir) {
  TrainResult result;
  std::ofstream csv;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    const auto csv_path = fs::path(out_dir) / "metrics.csv";
    const bool fresh = !fs::exists(csv_path);
    csv.open(csv_path, std::ios::app);
    if (fresh) csv << metrics_csv_header() << "\n";
  }

  auto persist = [&](const std::string& name, uint32_t stage, uint32_t epoch) {
    if (out_dir.empty()) return;
    const std::string path = (fs::path(out_dir) / name).string();
    save_checkpoint(snapshot(stage, epoch), path);
    result.last_checkpoint = path;
  };

  // the pre-training state is the first "last good" checkpoint
  persist("last.hvck", start_stage, start_epoch);

  bool stopped = false;
  for (uint32_t stage = start_stage;
       stage < cfg_.stages.size() && !stopped; ++stage) {
    const LossWeights& weights = cfg_.stages[stage];
    if (stage != start_stage && cfg_.reset_optimizer_between_stages)
      opt_.reset();

    const uint32_t epoch0 = stage == start_stage ? start_epoch : 0;
    for (uint32_t epoch = epoch0;
         epoch < static_cast<uint32_t>(cfg_.epochs_per_stage) && !stopped;
         ++epoch) {
      std::vector<int64_t> order(data_.train.size());
      for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int64_t>(i);
      Rng shuffle_rng(derive_seed(cfg_.seed, "shuffle", global_epoch_));
      shuffle_rng.shuffle(order);

      const auto n = static_cast<int64_t>(order.size());
      for (int64_t begin = 0; begin < n; begin += cfg_.batch_size) {
        const int64_t end = std::min(n, begin + cfg_.batch_size);
        std::vector<ManifestEntry> batch;
        batch.reserve(static_cast<size_t>(end - begin));
        for (int64_t i = begin; i < end; ++i)
          batch.push_back(data_.train[static_cast<size_t>(order[static_cast<size_t>(i)])]);
        const double total = train_step(batch, weights, global_epoch_);
        if (!std::isfinite(total)) {
          // abort; the most recent persisted checkpoint stays on disk
          result.aborted_non_finite = true;
          result.steps = global_step_;
          return result;
        }
        result.loss_trajectory.push_back(total);
        if (cfg_.max_steps > 0 && global_step_ >= cfg_.max_steps) {
          stopped = true;
          break;
        }
      }
      if (stopped) break;  // partial epoch: no epoch-end bookkeeping
      ++global_epoch_;

      MetricsRow row = evaluate("val", weights, static_cast<int>(stage + 1),
                                static_cast<int>(epoch + 1));
      result.metrics.push_back(row);
      if (csv.is_open()) csv << metrics_csv_row(row) << "\n" << std::flush;
      persist("last.hvck", stage, epoch + 1);
    }
    if (stopped) break;

    MetricsRow test_row = evaluate("test", weights, static_cast<int>(stage + 1),
                                   static_cast<int>(cfg_.epochs_per_stage));
    result.metrics.push_back(test_row);
    if (csv.is_open()) csv << metrics_csv_row(test_row) << "\n" << std::flush;
    persist("stage" + std::to_string(stage + 1) + ".hvck", stage + 1, 0);
  }
  result.steps = global_step_;
  return result;
}

MetricsRow evaluate_checkpoint(const std::string& checkpoint_path,
                               const ModelSettings& settings,
                               const DataSource& data, const std::string& split,
                               const LossWeights& weights) {
  Model<float> model = build_model(settings, data);
  Adam<float> opt(model.params);
  CheckpointState state = load_checkpoint(checkpoint_path);
  restore_training(state, model, opt);
  TrainConfig cfg;
  cfg.seed = state.rng_seed;
  Trainer trainer(model, data, cfg);
  return trainer.evaluate(split, weights, static_cast<int>(state.stage),
                          static_cast<int>(state.epoch_in_stage));
}

}  // namespace hiervid
