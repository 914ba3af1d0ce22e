#include <chrono>

#include "hiervid/gradcheck.hpp"
#include "hiervid/model.hpp"

namespace hiervid::gradcheck {

namespace {

using D = double;

EncoderConfig tiny_encoder() {
  EncoderConfig cfg;
  cfg.channels = {3, 3, 4, 4, 5, 6};
  cfg.lstm_hidden = 3;
  return cfg;
}

HeadsConfig tiny_heads() {
  HeadsConfig cfg;
  cfg.n_groups = 3;
  cfg.n_categories = 5;
  cfg.vocab_size = 9;
  cfg.embed_dim = 4;
  cfg.decoder_hidden = 5;
  return cfg;
}

struct FullModelProblem {
  Model<D> model;
  Tensor<D> video;
  std::vector<int64_t> groups, categories, captions;
  int64_t caption_len = 5;
  LossWeights weights{0.7, 1.1, 1.3};

  double loss() const {
    Tape<D> tape;
    return model
        .forward(&tape, video, groups, categories, captions, caption_len,
                 weights)
        .total.item();
  }
};

FullModelProblem make_full_model(uint64_t seed) {
  FullModelProblem p;
  p.model = Model<D>::build(tiny_encoder(), tiny_heads());
  p.model.init_params(seed);
  Rng rng(derive_seed(seed, "gradcheck-data"));
  const int64_t b = 2;
  p.video = Tensor<D>::zeros(Shape{b, 3, 4, 32, 32});
  for (int64_t i = 0; i < p.video.numel(); ++i)
    p.video.data()[i] = rng.uniform(-1.0, 1.0);
  for (int64_t r = 0; r < b; ++r) {
    p.groups.push_back(rng.uniform_int(3));
    p.categories.push_back(rng.uniform_int(5));
  }
  // [<bos>, w, w, w, <eos>] per row with words outside the special range
  for (int64_t r = 0; r < b; ++r) {
    p.captions.push_back(Vocabulary::kBos);
    for (int i = 0; i < 3; ++i) p.captions.push_back(4 + rng.uniform_int(5));
    p.captions.push_back(Vocabulary::kEos);
  }
  return p;
}

}  // namespace

// Whole-model joint loss vs central finite differences on 10 randomly
// chosen parameter elements per seed.
OpReport check_full_model(int seeds) {
  OpReport rep{"full_model"};
  const auto start = std::chrono::steady_clock::now();
  for (int s = 0; s < seeds; ++s) {
    FullModelProblem p = make_full_model(1000 + static_cast<uint64_t>(s));
    Tape<D> tape;
    auto out = p.model.forward(&tape, p.video, p.groups, p.categories,
                               p.captions, p.caption_len, p.weights);
    p.model.params.zero_all_grads();
    tape.backward(out.total);

    Rng pick(derive_seed(static_cast<uint64_t>(s), "gradcheck-pick"));
    const int64_t total_elements = p.model.params.total_elements();
    for (int probe = 0; probe < 10; ++probe) {
      int64_t flat = pick.uniform_int(total_elements);
      Tensor<D> param;
      for (const auto& [name, tensor] : p.model.params.items()) {
        if (flat < tensor.numel()) {
          param = tensor;
          break;
        }
        flat -= tensor.numel();
      }
      const double ad = param.grad()[static_cast<size_t>(flat)];
      const double orig = param.data()[flat];
      param.data()[flat] = orig + kStep;
      const double lp = p.loss();
      param.data()[flat] = orig - kStep;
      const double lm = p.loss();
      param.data()[flat] = orig;
      const double fd = (lp - lm) / (2.0 * kStep);
      rep.max_rel_err = std::max(rep.max_rel_err, rel_err(ad, fd));
      ++rep.comparisons;
    }
  }
  rep.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return rep;
}

// Two-layer, three-step teacher-forced decode: finite differences over V,
// the conditioning distribution, and every decoder parameter element.
OpReport check_caption_decoder(int seeds) {
  OpReport rep{"caption_decoder"};
  const auto start = std::chrono::steady_clock::now();
  for (int s = 0; s < seeds; ++s) {
    HeadsConfig cfg = tiny_heads();
    cfg.encoding_width = 6;
    ParamStore<D> store;
    HeadsParams<D> heads = HeadsParams<D>::create(store, cfg);
    Rng rng(derive_seed(2000 + static_cast<uint64_t>(s), "gradcheck-capt"));
    for (auto [name, tensor] : store.items())
      for (auto& v : tensor.values()) v = rng.uniform(-0.5, 0.5);

    const int64_t b = 2;
    Tensor<D> v = Tensor<D>::zeros(Shape{b, cfg.encoding_width});
    Tensor<D> p_cat = Tensor<D>::zeros(Shape{b, cfg.n_categories});
    for (int64_t i = 0; i < v.numel(); ++i) v.data()[i] = rng.uniform(-1, 1);
    for (int64_t r = 0; r < b; ++r) {
      // a positive random distribution row
      double sum = 0.0;
      for (int64_t k = 0; k < cfg.n_categories; ++k) {
        const double e = std::exp(rng.uniform(-1, 1));
        p_cat.data()[r * cfg.n_categories + k] = e;
        sum += e;
      }
      for (int64_t k = 0; k < cfg.n_categories; ++k)
        p_cat.data()[r * cfg.n_categories + k] /= sum;
    }
    v.set_requires_grad(true);
    p_cat.set_requires_grad(true);

    // 4 tokens per row -> 3 prediction steps
    std::vector<int64_t> ids;
    for (int64_t r = 0; r < b; ++r) {
      ids.push_back(Vocabulary::kBos);
      ids.push_back(4 + rng.uniform_int(5));
      ids.push_back(4 + rng.uniform_int(5));
      ids.push_back(Vocabulary::kEos);
    }
    const int64_t len = 4;

    auto loss_fn = [&](Tape<D>* tape) {
      return caption_loss(tape, v, p_cat, ids, len, heads, cfg);
    };
    Tape<D> tape;
    Tensor<D> loss = loss_fn(&tape);
    tape.backward(loss);

    std::vector<Tensor<D>> inputs = {v, p_cat};
    for (const auto& [name, tensor] : store.items()) inputs.push_back(tensor);
    for (auto& input : inputs) {
      const std::vector<D> ad = input.grad();
      for (int64_t e = 0; e < input.numel(); ++e) {
        const double orig = input.data()[e];
        input.data()[e] = orig + kStep;
        const double lp = loss_fn(nullptr).item();
        input.data()[e] = orig - kStep;
        const double lm = loss_fn(nullptr).item();
        input.data()[e] = orig;
        const double fd = (lp - lm) / (2.0 * kStep);
        rep.max_rel_err =
            std::max(rep.max_rel_err, rel_err(ad[static_cast<size_t>(e)], fd));
        ++rep.comparisons;
      }
    }
  }
  rep.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return rep;
}

}  // namespace hiervid::gradcheck
