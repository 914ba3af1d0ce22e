#pragma once

#include <string>

#include "hiervid/encoder.hpp"
#include "hiervid/heads.hpp"
#include "hiervid/rng.hpp"

namespace hiervid {

// Per-level head outputs and losses for one batch. Tensors stay undefined
// when the active loss weights made their computation unnecessary.
template <class T>
struct HeadOutputs {
  Tensor<T> v;
  Tensor<T> p_group, p_category;
  Tensor<T> loss_group, loss_category, loss_caption;
  Tensor<T> total;
  LossBreakdown breakdown;
  LossWeights weights;
};

template <class T>
struct Model {
  EncoderConfig encoder_cfg;
  HeadsConfig heads_cfg;
  ParamStore<T> params;
  EncoderParams<T> encoder;
  HeadsParams<T> heads;
  // Severs the p_group -> category and p_category -> decoder edges. Exists
  // for the gradient-flow ablation tests; training never sets it.
  bool detach_conditioning = false;

  static Model build(const EncoderConfig& enc_cfg, const HeadsConfig& heads_cfg_in) {
    Model m;
    m.encoder_cfg = enc_cfg;
    m.heads_cfg = heads_cfg_in;
    m.heads_cfg.encoding_width = enc_cfg.encoding_width();
    m.heads_cfg.validate();
    m.encoder = EncoderParams<T>::create(m.params, m.encoder_cfg);
    m.heads = HeadsParams<T>::create(m.params, m.heads_cfg);
    return m;
  }

  // Glorot-uniform weights from per-parameter substreams of `seed`; zero
  // biases except LSTM forget gates at 1.
  void init_params(uint64_t seed) {
    for (const auto& [name, tensor] : params.items()) init_one(seed, name, tensor);
  }

  HeadOutputs<T> forward(Tape<T>* tape, const Tensor<T>& video,
                         const std::vector<int64_t>& group_targets,
                         const std::vector<int64_t>& category_targets,
                         const std::vector<int64_t>& caption_ids,
                         int64_t caption_len, const LossWeights& w,
                         bool compute_all = false) const {
    w.validate();
    HeadOutputs<T> out;
    out.weights = w;
    const bool need_caption = compute_all || w.caption > 0.0;
    const bool need_category = compute_all || w.category > 0.0 || need_caption;

    out.v = encode(tape, video, encoder_cfg, encoder);
    out.p_group = group_head(tape, out.v, heads);
    if (w.group > 0.0 || compute_all)
      out.loss_group = cross_entropy(tape, out.p_group, group_targets);
    if (need_category) {
      out.p_category =
          category_head(tape, out.v, out.p_group, heads, detach_conditioning);
      if (w.category > 0.0 || compute_all)
        out.loss_category = cross_entropy(tape, out.p_category, category_targets);
    }
    if (need_caption && caption_len > 0)
      out.loss_caption = caption_loss(tape, out.v, out.p_category, caption_ids,
                                      caption_len, heads, heads_cfg,
                                      detach_conditioning);
    out.total = joint_loss(tape, out.loss_group, out.loss_category,
                           out.loss_caption, w, &out.breakdown);
    return out;
  }

  std::vector<std::vector<int64_t>> decode(const Tensor<T>& v,
                                           const Tensor<T>& p_category) const {
    return caption_decode(v, p_category, heads, heads_cfg);
  }

 private:
  void init_one(uint64_t seed, const std::string& name, Tensor<T> tensor) {
    const Shape& shape = tensor.shape();
    const bool is_bias = shape.rank() == 1;
    if (is_bias) {
      std::fill(tensor.values().begin(), tensor.values().end(), T(0));
      // lstm gate bias layout [i f g o]: forget slice starts warm
      if (name.find("lstm") != std::string::npos &&
          name.size() >= 5 && name.compare(name.size() - 5, 5, ".bias") == 0) {
        const int64_t h = shape[0] / 4;
        for (int64_t i = h; i < 2 * h; ++i) tensor.data()[i] = T(1);
      }
      return;
    }
    int64_t fan_in, fan_out;
    if (shape.rank() == 5) {  // conv kernel [cout, cin, 3,3,3]
      fan_in = shape[1] * 27;
      fan_out = shape[0] * 27;
    } else {  // [in, out] matrices and the embedding table
      fan_in = shape[0];
      fan_out = shape[1];
    }
    const double bound =
        std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Rng rng(derive_seed(seed, "init", hash_str(name)));
    for (auto& v : tensor.values())
      v = static_cast<T>(rng.uniform(-bound, bound));
  }
};

}  // namespace hiervid
