#include <doctest.h>

#include <cmath>

#include "hiervid/gradcheck.hpp"
#include "hiervid/model.hpp"

using namespace hiervid;

namespace {

HeadsConfig demo_config(int64_t encoding_width = 8) {
  HeadsConfig cfg;
  cfg.n_groups = 4;
  cfg.n_categories = 14;
  cfg.vocab_size = 22;
  cfg.encoding_width = encoding_width;
  cfg.embed_dim = 5;
  cfg.decoder_hidden = 6;
  return cfg;
}

template <class T>
Tensor<T> random_rows(Shape shape, uint64_t seed, double lo = -1, double hi = 1) {
  Tensor<T> t = Tensor<T>::zeros(shape);
  Rng rng(seed);
  for (int64_t i = 0; i < t.numel(); ++i)
    t.data()[i] = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

struct SmallModel {
  Model<float> model;
  Tensor<float> video;
  std::vector<int64_t> groups{0, 2};
  std::vector<int64_t> categories{1, 5};
  std::vector<int64_t> captions;
  int64_t caption_len = 5;

  explicit SmallModel(uint64_t seed) {
    EncoderConfig enc;
    enc.channels = {2, 2, 3, 3, 4, 4};
    enc.lstm_hidden = 3;
    HeadsConfig heads;
    heads.n_groups = 4;
    heads.n_categories = 14;
    heads.vocab_size = 22;
    heads.embed_dim = 5;
    heads.decoder_hidden = 6;
    model = Model<float>::build(enc, heads);
    model.init_params(seed);
    video = random_rows<float>(Shape{2, 3, 4, 32, 32}, seed + 1);
    captions = {Vocabulary::kBos, 5, 6, 7, Vocabulary::kEos,
                Vocabulary::kBos, 8, 9, Vocabulary::kEos, Vocabulary::kPad};
  }

  // max |grad| per module prefix after one backward pass
  double module_grad(const std::string& prefix) const {
    double m = 0.0;
    for (const auto& [name, tensor] : model.params.items())
      if (name.rfind(prefix, 0) == 0)
        for (float g : tensor.grad()) m = std::max(m, std::abs(static_cast<double>(g)));
    return m;
  }

  void run(const LossWeights& w) {
    Tape<float> tape;
    auto out = model.forward(&tape, video, groups, categories, captions,
                             caption_len, w);
    model.params.zero_all_grads();
    tape.backward(out.total);
  }
};

}  // namespace

TEST_CASE("zero parameters give a uniform group distribution of width |T1|") {
  HeadsConfig cfg = demo_config();
  ParamStore<float> store;
  auto heads = HeadsParams<float>::create(store, cfg);
  auto v = random_rows<float>(Shape{3, 8}, 1);
  auto p = group_head<float>(nullptr, v, heads);
  CHECK(p.shape() == Shape{3, 4});
  for (int64_t i = 0; i < p.numel(); ++i)
    CHECK(p.data()[i] == doctest::Approx(0.25).epsilon(1e-6));
}

TEST_CASE("category head dimensions follow the concatenation") {
  HeadsConfig cfg = demo_config(128);
  ParamStore<float> store;
  auto heads = HeadsParams<float>::create(store, cfg);
  CHECK(heads.cat_w.shape() == Shape{132, 14});  // (|T1| + |V|) x |T2|

  auto v = random_rows<float>(Shape{2, 128}, 2);
  auto pg = random_rows<float>(Shape{2, 4}, 3, 0.0, 1.0);
  auto pc = category_head<float>(nullptr, v, pg, heads);
  CHECK(pc.shape() == Shape{2, 14});
  for (int64_t r = 0; r < 2; ++r) {
    double sum = 0.0;
    for (int64_t k = 0; k < 14; ++k) sum += pc.data()[r * 14 + k];
    CHECK(std::abs(sum - 1.0) <= 1e-6);
  }
}

TEST_CASE("perturbing p_group moves p_category for generic parameters") {
  HeadsConfig cfg = demo_config();
  ParamStore<float> store;
  auto heads = HeadsParams<float>::create(store, cfg);
  Rng rng(4);
  for (auto [name, tensor] : store.items())
    for (auto& x : tensor.values()) x = static_cast<float>(rng.uniform(-0.5, 0.5));

  auto v = random_rows<float>(Shape{1, 8}, 5);
  auto pg1 = Tensor<float>::from_vector(Shape{1, 4}, {0.7f, 0.1f, 0.1f, 0.1f});
  auto pg2 = Tensor<float>::from_vector(Shape{1, 4}, {0.1f, 0.7f, 0.1f, 0.1f});
  auto pc1 = category_head<float>(nullptr, v, pg1, heads);
  auto pc2 = category_head<float>(nullptr, v, pg2, heads);
  double diff = 0.0;
  for (int64_t i = 0; i < pc1.numel(); ++i)
    diff = std::max(diff, std::abs(static_cast<double>(pc1.data()[i]) -
                                   static_cast<double>(pc2.data()[i])));
  CHECK(diff > 0.0);
}

TEST_CASE("one_hot_probe emits distributions and validates the index") {
  HeadsConfig cfg = demo_config();
  ParamStore<float> store;
  auto heads = HeadsParams<float>::create(store, cfg);
  Rng rng(6);
  for (auto [name, tensor] : store.items())
    for (auto& x : tensor.values()) x = static_cast<float>(rng.uniform(-0.5, 0.5));
  auto v = random_rows<float>(Shape{3, 8}, 7);

  for (int64_t g = 0; g < 4; ++g) {
    auto probe = one_hot_probe<float>(nullptr, v, g, heads, cfg);
    for (int64_t r = 0; r < 3; ++r) {
      double sum = 0.0;
      for (int64_t k = 0; k < 14; ++k) sum += probe.data()[r * 14 + k];
      CHECK(std::abs(sum - 1.0) <= 1e-6);
    }
  }
  CHECK_THROWS_WITH_AS(one_hot_probe<float>(nullptr, v, 4, heads, cfg),
                       doctest::Contains("out of range"), Error);
}

TEST_CASE("caption loss: uniform softmax closed form and pad masking") {
  HeadsConfig cfg = demo_config();
  cfg.vocab_size = 4;  // everything uniform over 4 tokens with zero params
  ParamStore<float> store;
  auto heads = HeadsParams<float>::create(store, cfg);
  auto v = random_rows<float>(Shape{1, 8}, 8);
  auto pc = Tensor<float>::full(Shape{1, 14}, 1.0f / 14.0f);

  // [<bos>, t, t, <eos>]: 3 predicted tokens, each ln 4
  std::vector<int64_t> ids = {Vocabulary::kBos, 3, 3, Vocabulary::kEos};
  auto loss = caption_loss<float>(nullptr, v, pc, ids, 4, heads, cfg);
  CHECK(loss.item() == doctest::Approx(3.0 * std::log(4.0)).epsilon(1e-6));

  // appended <pad> steps change nothing
  std::vector<int64_t> padded = {Vocabulary::kBos, 3, 3, Vocabulary::kEos,
                                 Vocabulary::kPad, Vocabulary::kPad};
  auto loss2 = caption_loss<float>(nullptr, v, pc, padded, 6, heads, cfg);
  CHECK(loss2.item() == loss.item());

  CHECK_THROWS_WITH_AS(
      caption_loss<float>(nullptr, v, pc, ids, 3, heads, cfg),
      doctest::Contains("does not match"), Error);
}

TEST_CASE("caption decoder gradients match finite differences") {
  auto rep = gradcheck::check_caption_decoder(3);
  INFO("max rel err ", rep.max_rel_err, " over ", rep.comparisons);
  CHECK(rep.comparisons > 0);
  CHECK(rep.max_rel_err <= gradcheck::kTolerance);
}

TEST_CASE("greedy decode stops immediately when <eos> dominates") {
  HeadsConfig cfg = demo_config();
  ParamStore<float> store;
  auto heads = HeadsParams<float>::create(store, cfg);
  heads.out_b.data()[Vocabulary::kEos] = 10.0f;  // frozen logits favor <eos>
  auto v = random_rows<float>(Shape{2, 8}, 9);
  auto pc = Tensor<float>::full(Shape{2, 14}, 1.0f / 14.0f);
  auto decoded = caption_decode<float>(v, pc, heads, cfg);
  CHECK(decoded[0].empty());
  CHECK(decoded[1].empty());
}

TEST_CASE("greedy decode is deterministic and bounded by max_decode_len") {
  HeadsConfig cfg = demo_config();
  ParamStore<float> store;
  auto heads = HeadsParams<float>::create(store, cfg);
  Rng rng(10);
  for (auto [name, tensor] : store.items())
    for (auto& x : tensor.values()) x = static_cast<float>(rng.uniform(-0.5, 0.5));
  auto v = random_rows<float>(Shape{2, 8}, 11);
  auto pc = Tensor<float>::full(Shape{2, 14}, 1.0f / 14.0f);
  auto a = caption_decode<float>(v, pc, heads, cfg);
  auto b = caption_decode<float>(v, pc, heads, cfg);
  CHECK(a == b);
  for (const auto& row : a) CHECK(row.size() <= 12);
}

TEST_CASE("joint loss arithmetic and weight validation") {
  auto l1 = Tensor<float>::scalar(2.0f);
  auto l2 = Tensor<float>::scalar(3.0f);
  auto l3 = Tensor<float>::scalar(4.0f);

  LossBreakdown bd;
  auto total = joint_loss<float>(nullptr, l1, l2, l3, LossWeights{1, 1, 1}, &bd);
  CHECK(total.item() == 9.0f);
  CHECK(bd.total == 9.0);
  CHECK(*bd.loss_group == 2.0);

  auto masked = joint_loss<float>(nullptr, l1, Tensor<float>(), Tensor<float>(),
                                  LossWeights{1, 0, 0}, &bd);
  CHECK(masked.item() == 2.0f);
  CHECK(!bd.loss_category.has_value());
  CHECK(!bd.loss_caption.has_value());

  auto weighted = joint_loss<float>(nullptr, l1, l2, l3, LossWeights{0.5, 1, 2});
  CHECK(weighted.item() == 12.0f);

  CHECK_THROWS_WITH_AS(LossWeights(-1, 1, 1).validate(),
                       doctest::Contains("nonnegative"), Error);
  CHECK_THROWS_WITH_AS(LossWeights(0, 0, 0).validate(),
                       doctest::Contains("at least one"), Error);
  CHECK_THROWS_WITH_AS(
      joint_loss<float>(nullptr, Tensor<float>(), l2, l3, LossWeights{1, 1, 1}),
      doctest::Contains("was not computed"), Error);
}

TEST_CASE("W=[1,0,0]: only the group path receives gradients") {
  SmallModel m(100);
  m.run(LossWeights{1, 0, 0});
  CHECK(m.module_grad("heads.group.") > 0.0);
  CHECK(m.module_grad("encoder.") > 0.0);
  CHECK(m.module_grad("heads.category.") == 0.0);
  CHECK(m.module_grad("decoder.") == 0.0);
}

TEST_CASE("W=[0,1,0]: gradients reach the group head only through conditioning") {
  SmallModel m(200);
  m.run(LossWeights{0, 1, 0});
  CHECK(m.module_grad("heads.category.") > 0.0);
  CHECK(m.module_grad("heads.group.") > 0.0);  // via the concatenated p_group
  CHECK(m.module_grad("encoder.") > 0.0);
  CHECK(m.module_grad("decoder.") == 0.0);

  // ablating the conditioning edge cuts that flow exactly
  m.model.detach_conditioning = true;
  m.run(LossWeights{0, 1, 0});
  CHECK(m.module_grad("heads.group.") == 0.0);
  CHECK(m.module_grad("heads.category.") > 0.0);
  CHECK(m.module_grad("encoder.") > 0.0);
}

TEST_CASE("W=[0,0,1]: the caption loss reaches all four submodules") {
  SmallModel m(300);
  m.run(LossWeights{0, 0, 1});
  CHECK(m.module_grad("encoder.") > 0.0);
  CHECK(m.module_grad("heads.group.") > 0.0);
  CHECK(m.module_grad("heads.category.") > 0.0);
  CHECK(m.module_grad("decoder.") > 0.0);
}

TEST_CASE("model init is deterministic per seed") {
  SmallModel a(42), b(42), c(43);
  for (size_t i = 0; i < a.model.params.items().size(); ++i) {
    CHECK(a.model.params.items()[i].second.values() ==
          b.model.params.items()[i].second.values());
  }
  bool any_diff = false;
  for (size_t i = 0; i < a.model.params.items().size(); ++i)
    if (a.model.params.items()[i].second.values() !=
        c.model.params.items()[i].second.values())
      any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("full model joint-loss gradients match finite differences") {
  auto rep = gradcheck::check_full_model(3);
  INFO("max rel err ", rep.max_rel_err, " over ", rep.comparisons);
  CHECK(rep.comparisons > 0);
  CHECK(rep.max_rel_err <= gradcheck::kTolerance);
}
