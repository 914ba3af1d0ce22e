#include <doctest.h>

#include "hiervid/model.hpp"

using namespace hiervid;

namespace {

template <class T>
void randomize(ParamStore<T>& store, uint64_t seed, double scale = 0.3) {
  Rng rng(seed);
  for (auto [name, tensor] : store.items())
    for (auto& v : tensor.values())
      v = static_cast<T>(rng.uniform(-scale, scale));
}

Tensor<float> random_video(Shape shape, uint64_t seed) {
  Tensor<float> v = Tensor<float>::zeros(shape);
  Rng rng(seed);
  for (int64_t i = 0; i < v.numel(); ++i)
    v.data()[i] = static_cast<float>(rng.uniform(-1, 1));
  return v;
}

EncoderConfig small_config() {
  EncoderConfig cfg;
  cfg.channels = {2, 2, 3, 3, 4, 4};
  cfg.lstm_hidden = 3;
  return cfg;
}

}  // namespace

TEST_CASE("encoder config validation") {
  EncoderConfig cfg;
  cfg.channels = {8, 8};
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("6 conv widths"), Error);
  cfg = EncoderConfig{};
  cfg.pool_after = {1, 2, 3};
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("4 pool positions"), Error);
  cfg = EncoderConfig{};
  cfg.lstm_hidden = 0;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("lstm_hidden"), Error);
}

TEST_CASE("default config shape trace: 96 -> 6 spatial, V has 128 columns") {
  EncoderConfig cfg;  // defaults: [16,16,32,32,64,64], pools after 1-4, H=64
  ParamStore<float> store;
  auto params = EncoderParams<float>::create(store, cfg);
  CHECK(params.conv_kernel[5].shape() == Shape{64, 64, 3, 3, 3});
  CHECK(params.fw_w_ih.shape() == Shape{64, 256});

  auto video = random_video(Shape{1, 3, 6, 96, 96}, 1);
  auto v = encode<float>(nullptr, video, cfg, params);
  CHECK(v.shape() == Shape{1, 128});
}

TEST_CASE("all-zero parameters produce V = 0") {
  EncoderConfig cfg = small_config();
  ParamStore<float> store;
  auto params = EncoderParams<float>::create(store, cfg);
  auto video = random_video(Shape{2, 3, 5, 32, 32}, 2);
  auto v = encode<float>(nullptr, video, cfg, params);
  for (int64_t i = 0; i < v.numel(); ++i) CHECK(v.data()[i] == 0.0f);
}

TEST_CASE("time reversal with tied directions swaps the V halves") {
  EncoderConfig cfg = small_config();
  ParamStore<double> store;
  auto params = EncoderParams<double>::create(store, cfg);
  randomize(store, 7);
  // tie backward params to forward params
  params.bw_w_ih.values() = params.fw_w_ih.values();
  params.bw_w_hh.values() = params.fw_w_hh.values();
  params.bw_bias.values() = params.fw_bias.values();
  // symmetrize the temporal taps so the conv stack commutes with reversal
  // (general kernels do not, so the per-step features would only be
  // approximately reversed)
  for (auto& kernel : params.conv_kernel) {
    const int64_t blocks = kernel.numel() / 27;
    for (int64_t b = 0; b < blocks; ++b)
      for (int64_t i = 0; i < 9; ++i)
        kernel.data()[b * 27 + 2 * 9 + i] = kernel.data()[b * 27 + i];
  }

  const int64_t steps = 5, hw = 32;
  Tensor<double> video = Tensor<double>::zeros(Shape{1, 3, steps, hw, hw});
  Rng rng(9);
  for (int64_t i = 0; i < video.numel(); ++i) video.data()[i] = rng.uniform(-1, 1);

  Tensor<double> reversed = Tensor<double>::zeros(video.shape());
  const int64_t plane = hw * hw;
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t t = 0; t < steps; ++t)
      std::copy_n(video.data() + (c * steps + t) * plane, plane,
                  reversed.data() + (c * steps + (steps - 1 - t)) * plane);

  auto v1 = encode<double>(nullptr, video, cfg, params);
  auto v2 = encode<double>(nullptr, reversed, cfg, params);
  const int64_t h = cfg.lstm_hidden;
  for (int64_t i = 0; i < h; ++i) {
    CHECK(v1.data()[i] == doctest::Approx(v2.data()[h + i]).epsilon(1e-10));
    CHECK(v1.data()[h + i] == doctest::Approx(v2.data()[i]).epsilon(1e-10));
  }
}

TEST_CASE("encoding a sample alone matches its encoding inside a batch") {
  EncoderConfig cfg = small_config();
  ParamStore<float> store;
  auto params = EncoderParams<float>::create(store, cfg);
  randomize(store, 11);

  auto batch = random_video(Shape{3, 3, 4, 32, 32}, 12);
  auto vb = encode<float>(nullptr, batch, cfg, params);

  const int64_t sample = 3 * 4 * 32 * 32;
  for (int64_t b = 0; b < 3; ++b) {
    Tensor<float> one = Tensor<float>::zeros(Shape{1, 3, 4, 32, 32});
    std::copy_n(batch.data() + b * sample, sample, one.data());
    auto v1 = encode<float>(nullptr, one, cfg, params);
    for (int64_t i = 0; i < v1.numel(); ++i)
      CHECK(std::abs(v1.data()[i] - vb.data()[b * v1.numel() + i]) <= 1e-5f);
  }
}

TEST_CASE("every encoder parameter lies on the gradient path of V") {
  EncoderConfig cfg = small_config();
  ParamStore<double> store;
  auto params = EncoderParams<double>::create(store, cfg);
  randomize(store, 21);

  Tensor<double> video = Tensor<double>::zeros(Shape{2, 3, 4, 32, 32});
  Rng rng(22);
  for (int64_t i = 0; i < video.numel(); ++i) video.data()[i] = rng.uniform(-1, 1);

  Tape<double> tape;
  auto v = encode(&tape, video, cfg, params);
  // generic scalar of V
  Tensor<double> coefs = Tensor<double>::zeros(v.shape());
  for (int64_t i = 0; i < coefs.numel(); ++i) coefs.data()[i] = rng.uniform(0.5, 1.5);
  auto loss = sum_all(&tape, mul(&tape, v, coefs));
  store.zero_all_grads();
  tape.backward(loss);

  for (const auto& [name, tensor] : store.items()) {
    double max_abs = 0.0;
    for (double g : tensor.grad()) max_abs = std::max(max_abs, std::abs(g));
    INFO("parameter ", name);
    CHECK(max_abs > 0.0);
  }
}

TEST_CASE("encode rejects bad spatial extents and mismatched params") {
  EncoderConfig cfg = small_config();
  ParamStore<float> store;
  auto params = EncoderParams<float>::create(store, cfg);
  auto video = random_video(Shape{1, 3, 4, 30, 32}, 31);
  CHECK_THROWS_WITH_AS(encode<float>(nullptr, video, cfg, params),
                       doctest::Contains("divisible by 16"), Error);

  // a conv2 kernel expecting 4 input channels behind a 2-channel conv1
  auto broken = params;
  broken.conv_kernel[1] = Tensor<float>::zeros(Shape{2, 4, 3, 3, 3});
  auto ok_video = random_video(Shape{1, 3, 4, 32, 32}, 32);
  CHECK_THROWS_WITH_AS(encode<float>(nullptr, ok_video, cfg, broken),
                       doctest::Contains("input channels"), Error);
}
