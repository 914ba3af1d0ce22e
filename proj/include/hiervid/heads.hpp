#pragma once

#include <optional>
#include <vector>

#include "hiervid/ops.hpp"
#include "hiervid/params.hpp"
#include "hiervid/pipeline.hpp"

namespace hiervid {

// Weights on the per-level losses, ordered [group, category, caption].
struct LossWeights {
  double group = 1.0, category = 1.0, caption = 1.0;

  void validate() const {
    HV_REQUIRE(group >= 0.0 && category >= 0.0 && caption >= 0.0,
               "LossWeights: weights must be nonnegative, got [", group, ",",
               category, ",", caption, "]");
    HV_REQUIRE(group > 0.0 || category > 0.0 || caption > 0.0,
               "LossWeights: at least one weight must be positive");
  }
  double operator[](int i) const { return i == 0 ? group : i == 1 ? category : caption; }
};

// Per-level loss values; a level whose loss was never computed stays empty
// and contributes nothing.
struct LossBreakdown {
  std::optional<double> loss_group, loss_category, loss_caption;
  double total = 0.0;
};

struct HeadsConfig {
  int64_t n_groups = 0;
  int64_t n_categories = 0;
  int64_t vocab_size = 0;
  int64_t encoding_width = 0;  // |V|
  int64_t embed_dim = 32;
  int64_t decoder_hidden = 128;
  int64_t max_decode_len = 12;

  void validate() const {
    HV_REQUIRE(n_groups >= 2, "HeadsConfig: need >= 2 groups, got ", n_groups);
    HV_REQUIRE(n_categories > n_groups, "HeadsConfig: need |T2| > |T1|, got ",
               n_categories, " vs ", n_groups);
    HV_REQUIRE(vocab_size >= 4, "HeadsConfig: vocabulary too small: ", vocab_size);
    HV_REQUIRE(encoding_width >= 1 && embed_dim >= 1 && decoder_hidden >= 1,
               "HeadsConfig: widths must be >= 1");
  }
};

template <class T>
struct HeadsParams {
  Tensor<T> group_w, group_b;
  Tensor<T> cat_w, cat_b;
  Tensor<T> embed;
  Tensor<T> init_h1_w, init_h1_b, init_c1_w, init_c1_b;
  Tensor<T> init_h2_w, init_h2_b, init_c2_w, init_c2_b;
  Tensor<T> l1_w_ih, l1_w_hh, l1_bias;
  Tensor<T> l2_w_ih, l2_w_hh, l2_bias;
  Tensor<T> out_w, out_b;

  static HeadsParams create(ParamStore<T>& store, const HeadsConfig& cfg) {
    cfg.validate();
    HeadsParams p;
    const int64_t v = cfg.encoding_width;
    p.group_w = store.create("heads.group.weight", Shape{v, cfg.n_groups});
    p.group_b = store.create("heads.group.bias", Shape{cfg.n_groups});
    p.cat_w = store.create("heads.category.weight",
                           Shape{cfg.n_groups + v, cfg.n_categories});
    p.cat_b = store.create("heads.category.bias", Shape{cfg.n_categories});
    p.embed = store.create("decoder.embed.table",
                           Shape{cfg.vocab_size, cfg.embed_dim});
    const int64_t ctx = cfg.n_categories + v;
    const int64_t h = cfg.decoder_hidden;
    p.init_h1_w = store.create("decoder.init_h1.weight", Shape{ctx, h});
    p.init_h1_b = store.create("decoder.init_h1.bias", Shape{h});
    p.init_c1_w = store.create("decoder.init_c1.weight", Shape{ctx, h});
    p.init_c1_b = store.create("decoder.init_c1.bias", Shape{h});
    p.init_h2_w = store.create("decoder.init_h2.weight", Shape{ctx, h});
    p.init_h2_b = store.create("decoder.init_h2.bias", Shape{h});
    p.init_c2_w = store.create("decoder.init_c2.weight", Shape{ctx, h});
    p.init_c2_b = store.create("decoder.init_c2.bias", Shape{h});
    p.l1_w_ih = store.create("decoder.lstm1.w_ih", Shape{cfg.embed_dim, 4 * h});
    p.l1_w_hh = store.create("decoder.lstm1.w_hh", Shape{h, 4 * h});
    p.l1_bias = store.create("decoder.lstm1.bias", Shape{4 * h});
    p.l2_w_ih = store.create("decoder.lstm2.w_ih", Shape{h, 4 * h});
    p.l2_w_hh = store.create("decoder.lstm2.w_hh", Shape{h, 4 * h});
    p.l2_bias = store.create("decoder.lstm2.bias", Shape{4 * h});
    p.out_w = store.create("decoder.out.weight", Shape{h, cfg.vocab_size});
    p.out_b = store.create("decoder.out.bias", Shape{cfg.vocab_size});
    return p;
  }
};

// P(T1 | V) = softmax(affine(V))
template <class T>
Tensor<T> group_head(Tape<T>* tape, const Tensor<T>& v,
                     const HeadsParams<T>& p) {
  return softmax(tape, affine(tape, v, p.group_w, p.group_b));
}

// P(T2 | .) = softmax(affine([P(T1); V])). Gradients flow through p_group
// unless the test-only detach switch is on.
template <class T>
Tensor<T> category_head(Tape<T>* tape, const Tensor<T>& v,
                        const Tensor<T>& p_group, const HeadsParams<T>& p,
                        bool detach_conditioning = false) {
  Tensor<T> cond = detach_conditioning ? detach(p_group) : p_group;
  return softmax(tape, affine(tape, concat(tape, cond, v), p.cat_w, p.cat_b));
}

// The category head read as the conditional estimator P(c | g, V): evaluate
// it with a one-hot group distribution. Diagnostic only; outputs are
// reported per group, never summed (softmax is nonlinear in its input).
template <class T>
Tensor<T> one_hot_probe(Tape<T>* tape, const Tensor<T>& v, int64_t group_index,
                        const HeadsParams<T>& p, const HeadsConfig& cfg) {
  HV_REQUIRE(group_index >= 0 && group_index < cfg.n_groups,
             "one_hot_probe: group ", group_index, " out of range [0,",
             cfg.n_groups, ")");
  Tensor<T> onehot = Tensor<T>::zeros(Shape{v.shape()[0], cfg.n_groups});
  for (int64_t r = 0; r < v.shape()[0]; ++r)
    onehot.data()[r * cfg.n_groups + group_index] = T(1);
  return category_head(tape, v, onehot, p);
}

namespace detail {

template <class T>
struct DecoderState {
  Tensor<T> h1, c1, h2, c2;
};

// Conditioning enters once, through affine projections of [P(T2); V] that
// initialize both decoder layers.
template <class T>
DecoderState<T> decoder_init(Tape<T>* tape, const Tensor<T>& v,
                             const Tensor<T>& p_category,
                             const HeadsParams<T>& p, bool detach_conditioning) {
  Tensor<T> cond = detach_conditioning ? detach(p_category) : p_category;
  Tensor<T> ctx = concat(tape, cond, v);
  DecoderState<T> s;
  s.h1 = affine(tape, ctx, p.init_h1_w, p.init_h1_b);
  s.c1 = affine(tape, ctx, p.init_c1_w, p.init_c1_b);
  s.h2 = affine(tape, ctx, p.init_h2_w, p.init_h2_b);
  s.c2 = affine(tape, ctx, p.init_c2_w, p.init_c2_b);
  return s;
}

template <class T>
Tensor<T> decoder_step_probs(Tape<T>* tape, DecoderState<T>& s,
                             const std::vector<int64_t>& tokens,
                             const HeadsParams<T>& p) {
  Tensor<T> x = embedding(tape, p.embed, tokens);
  auto [h1, c1] = lstm_step(tape, x, s.h1, s.c1, p.l1_w_ih, p.l1_w_hh, p.l1_bias);
  s.h1 = h1;
  s.c1 = c1;
  auto [h2, c2] = lstm_step(tape, h1, s.h2, s.c2, p.l2_w_ih, p.l2_w_hh, p.l2_bias);
  s.h2 = h2;
  s.c2 = c2;
  return softmax(tape, affine(tape, h2, p.out_w, p.out_b));
}

}  // namespace detail

// Teacher-forced caption loss: sum over real target tokens (everything after
// <bos> through <eos>; <pad> masked) of -log P(token), then mean over the
// batch. caption_ids is row-major [B, len].
template <class T>
Tensor<T> caption_loss(Tape<T>* tape, const Tensor<T>& v,
                       const Tensor<T>& p_category,
                       const std::vector<int64_t>& caption_ids, int64_t len,
                       const HeadsParams<T>& p, const HeadsConfig& cfg,
                       bool detach_conditioning = false) {
  const int64_t b = v.shape()[0];
  HV_REQUIRE(static_cast<int64_t>(caption_ids.size()) == b * len,
             "caption_loss: ids size ", caption_ids.size(),
             " does not match batch ", b, " x len ", len);
  HV_REQUIRE(len >= 2, "caption_loss: captions must hold at least <bos> and <eos>, got len ",
             len);
  for (int64_t r = 0; r < b; ++r)
    HV_REQUIRE(caption_ids[static_cast<size_t>(r * len)] == Vocabulary::kBos,
               "caption_loss: row ", r, " does not start with <bos>");

  auto state = detail::decoder_init(tape, v, p_category, p, detach_conditioning);
  Tensor<T> total;
  for (int64_t t = 0; t + 1 < len; ++t) {
    std::vector<int64_t> inputs(static_cast<size_t>(b));
    std::vector<int64_t> targets(static_cast<size_t>(b));
    std::vector<T> mask(static_cast<size_t>(b));
    bool any = false;
    for (int64_t r = 0; r < b; ++r) {
      inputs[static_cast<size_t>(r)] = caption_ids[static_cast<size_t>(r * len + t)];
      const int64_t target = caption_ids[static_cast<size_t>(r * len + t + 1)];
      const bool live = target != Vocabulary::kPad;
      targets[static_cast<size_t>(r)] = live ? target : 0;
      mask[static_cast<size_t>(r)] = live ? T(1) : T(0);
      any = any || live;
    }
    if (!any) break;
    Tensor<T> probs = detail::decoder_step_probs(tape, state, inputs, p);
    Tensor<T> step = cross_entropy_masked(tape, probs, targets, mask);
    total = total.defined() ? add(tape, total, step) : step;
  }
  HV_REQUIRE(total.defined(), "caption_loss: no real target tokens in batch");
  return total;
}

// Greedy decode from <bos>; stops at <eos> or max_decode_len emitted tokens;
// argmax ties break to the lowest token id. Returns content tokens only.
template <class T>
std::vector<std::vector<int64_t>> caption_decode(const Tensor<T>& v,
                                                 const Tensor<T>& p_category,
                                                 const HeadsParams<T>& p,
                                                 const HeadsConfig& cfg) {
  const int64_t b = v.shape()[0];
  auto state = detail::decoder_init<T>(nullptr, v, p_category, p, false);
  std::vector<std::vector<int64_t>> out(static_cast<size_t>(b));
  std::vector<int64_t> current(static_cast<size_t>(b), Vocabulary::kBos);
  std::vector<char> done(static_cast<size_t>(b), 0);
  for (int64_t step = 0; step < cfg.max_decode_len; ++step) {
    Tensor<T> probs = detail::decoder_step_probs<T>(nullptr, state, current, p);
    bool all_done = true;
    for (int64_t r = 0; r < b; ++r) {
      if (done[static_cast<size_t>(r)]) {
        current[static_cast<size_t>(r)] = Vocabulary::kEos;
        continue;
      }
      const T* row = probs.data() + r * cfg.vocab_size;
      int64_t best = 0;
      for (int64_t k = 1; k < cfg.vocab_size; ++k)
        if (row[k] > row[best]) best = k;
      if (best == Vocabulary::kEos) {
        done[static_cast<size_t>(r)] = 1;
        current[static_cast<size_t>(r)] = Vocabulary::kEos;
      } else {
        out[static_cast<size_t>(r)].push_back(best);
        current[static_cast<size_t>(r)] = best;
        all_done = false;
      }
    }
    if (all_done) break;
  }
  return out;
}

// total = w1*loss_group + w2*loss_category + w3*loss_caption. Zero-weight
// levels may pass an undefined tensor; they are recorded as not computed and
// never touch the tape, so their parameters keep exactly-zero gradients.
template <class T>
Tensor<T> joint_loss(Tape<T>* tape, const Tensor<T>& loss_group,
                     const Tensor<T>& loss_category,
                     const Tensor<T>& loss_caption, const LossWeights& w,
                     LossBreakdown* breakdown = nullptr) {
  w.validate();
  const Tensor<T>* losses[3] = {&loss_group, &loss_category, &loss_caption};
  std::optional<double>* slots[3] = {nullptr, nullptr, nullptr};
  LossBreakdown local;
  LossBreakdown& bd = breakdown ? *breakdown : local;
  bd = LossBreakdown{};
  slots[0] = &bd.loss_group;
  slots[1] = &bd.loss_category;
  slots[2] = &bd.loss_caption;

  Tensor<T> total;
  for (int i = 0; i < 3; ++i) {
    const double wi = w[i];
    if (losses[i]->defined())
      *slots[i] = static_cast<double>(losses[i]->item());
    if (wi == 0.0) continue;
    HV_REQUIRE(losses[i]->defined(), "joint_loss: level ", i,
               " has weight ", wi, " but its loss was not computed");
    Tensor<T> term = scale(tape, *losses[i], static_cast<T>(wi));
    total = total.defined() ? add(tape, total, term) : term;
  }
  bd.total = static_cast<double>(total.item());
  return total;
}

}  // namespace hiervid
