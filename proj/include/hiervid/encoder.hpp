#pragma once

#include <algorithm>
#include <vector>

#include "hiervid/ops.hpp"
#include "hiervid/params.hpp"

namespace hiervid {

// Fig-style video encoder: six 3x3x3 convs with four interleaved spatial
// max-pools, global spatial averaging per step, a bidirectional LSTM over
// time, and a temporal mean producing the encoding V.
struct EncoderConfig {
  std::vector<int64_t> channels = {16, 16, 32, 32, 64, 64};
  std::vector<int> pool_after = {1, 2, 3, 4};  // 1-based conv indices
  int64_t lstm_hidden = 64;
  Pointwise activation = Pointwise::relu;

  int64_t encoding_width() const { return 2 * lstm_hidden; }

  void validate() const {
    HV_REQUIRE(channels.size() == 6, "EncoderConfig: need exactly 6 conv widths, got ",
               channels.size());
    for (int64_t c : channels)
      HV_REQUIRE(c >= 1, "EncoderConfig: conv width must be >= 1, got ", c);
    HV_REQUIRE(pool_after.size() == 4,
               "EncoderConfig: need exactly 4 pool positions, got ",
               pool_after.size());
    for (int p : pool_after)
      HV_REQUIRE(p >= 1 && p <= 6, "EncoderConfig: pool position ", p,
                 " out of range [1,6]");
    HV_REQUIRE(lstm_hidden >= 1, "EncoderConfig: lstm_hidden must be >= 1, got ",
               lstm_hidden);
  }
};

template <class T>
struct EncoderParams {
  std::vector<Tensor<T>> conv_kernel, conv_bias;
  Tensor<T> fw_w_ih, fw_w_hh, fw_bias;
  Tensor<T> bw_w_ih, bw_w_hh, bw_bias;

  static EncoderParams create(ParamStore<T>& store, const EncoderConfig& cfg) {
    cfg.validate();
    EncoderParams p;
    int64_t cin = 3;
    for (int i = 0; i < 6; ++i) {
      const int64_t cout = cfg.channels[static_cast<size_t>(i)];
      const std::string base = "encoder.conv" + std::to_string(i + 1);
      p.conv_kernel.push_back(store.create(base + ".kernel", Shape{cout, cin, 3, 3, 3}));
      p.conv_bias.push_back(store.create(base + ".bias", Shape{cout}));
      cin = cout;
    }
    const int64_t h = cfg.lstm_hidden;
    p.fw_w_ih = store.create("encoder.lstm.fw.w_ih", Shape{cin, 4 * h});
    p.fw_w_hh = store.create("encoder.lstm.fw.w_hh", Shape{h, 4 * h});
    p.fw_bias = store.create("encoder.lstm.fw.bias", Shape{4 * h});
    p.bw_w_ih = store.create("encoder.lstm.bw.w_ih", Shape{cin, 4 * h});
    p.bw_w_hh = store.create("encoder.lstm.bw.w_hh", Shape{h, 4 * h});
    p.bw_bias = store.create("encoder.lstm.bw.bias", Shape{4 * h});
    return p;
  }
};

// video [B,3,T,H,W] -> V [B, 2*lstm_hidden]
template <class T>
Tensor<T> encode(Tape<T>* tape, const Tensor<T>& video, const EncoderConfig& cfg,
                 const EncoderParams<T>& params) {
  cfg.validate();
  HV_REQUIRE(video.shape().rank() == 5, "encode: video must be rank 5, got ",
             video.shape().to_string());
  HV_REQUIRE(video.shape()[1] == 3, "encode: expected 3 input channels, got ",
             video.shape()[1]);
  HV_REQUIRE(video.shape()[3] % 16 == 0 && video.shape()[4] % 16 == 0,
             "encode: spatial dims must be divisible by 16, got ",
             video.shape()[3], "x", video.shape()[4]);
  const int64_t b = video.shape()[0];
  const int64_t steps = video.shape()[2];

  Tensor<T> x = video;
  for (int i = 0; i < 6; ++i) {
    x = conv3d(tape, x, params.conv_kernel[static_cast<size_t>(i)],
               params.conv_bias[static_cast<size_t>(i)]);
    x = pointwise(tape, x, cfg.activation);
    if (std::find(cfg.pool_after.begin(), cfg.pool_after.end(), i + 1) !=
        cfg.pool_after.end())
      x = maxpool_spatial(tape, x);
  }
  HV_REQUIRE(x.shape()[2] == steps,
             "encode: temporal extent changed through the conv stack: ",
             x.shape()[2], " != ", steps);

  Tensor<T> feats = global_spatial_avg(tape, x);  // [B,T,C]
  const int64_t hidden = cfg.lstm_hidden;

  std::vector<Tensor<T>> fw_states, bw_states;
  fw_states.reserve(static_cast<size_t>(steps));
  bw_states.reserve(static_cast<size_t>(steps));

  Tensor<T> h = Tensor<T>::zeros(Shape{b, hidden});
  Tensor<T> c = Tensor<T>::zeros(Shape{b, hidden});
  for (int64_t t = 0; t < steps; ++t) {
    auto [h2, c2] = lstm_step(tape, select_time(tape, feats, t), h, c,
                              params.fw_w_ih, params.fw_w_hh, params.fw_bias);
    h = h2;
    c = c2;
    fw_states.push_back(h);
  }
  h = Tensor<T>::zeros(Shape{b, hidden});
  c = Tensor<T>::zeros(Shape{b, hidden});
  for (int64_t t = steps - 1; t >= 0; --t) {
    auto [h2, c2] = lstm_step(tape, select_time(tape, feats, t), h, c,
                              params.bw_w_ih, params.bw_w_hh, params.bw_bias);
    h = h2;
    c = c2;
    bw_states.push_back(h);
  }

  // per-step output is [fw_t ; bw_t]; the temporal mean of the concatenation
  // equals the concatenation of the per-direction means
  return concat(tape, mean_of(tape, fw_states), mean_of(tape, bw_states));
}

}  // namespace hiervid
