#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <utility>
#include <vector>

#include "hiervid/blas.hpp"
#include "hiervid/tensor.hpp"
#include "hiervid/threading.hpp"

namespace hiervid {

enum class Pointwise { relu, sigmoid, tanh };

inline const char* pointwise_name(Pointwise k) {
  switch (k) {
    case Pointwise::relu: return "relu";
    case Pointwise::sigmoid: return "sigmoid";
    case Pointwise::tanh: return "tanh";
  }
  return "?";
}

namespace detail {

template <class T>
bool track(Tape<T>* tape, std::initializer_list<const Tensor<T>*> inputs) {
  if (!tape) return false;
  for (const Tensor<T>* t : inputs)
    if ((*t).needs_grad()) return true;
  return false;
}

template <class T>
Tensor<T> make_output(Shape shape, bool needs_grad) {
  Tensor<T> out = Tensor<T>::zeros(std::move(shape));
  out.impl()->needs_grad = needs_grad;
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  HV_REQUIRE(a.shape() == b.shape(), "add: shape mismatch ",
             a.shape().to_string(), " vs ", b.shape().to_string());
  const bool rec = detail::track(tape, {&a, &b});
  Tensor<T> out = detail::make_output<T>(a.shape(), rec);
  const int64_t n = a.numel();
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  if (rec) {
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    tape->record(oi, [ai, bi, oi] {
      if (ai->needs_grad) {
        ai->ensure_grad();
        for (size_t i = 0; i < oi->g.size(); ++i) ai->g[i] += oi->g[i];
      }
      if (bi->needs_grad) {
        bi->ensure_grad();
        for (size_t i = 0; i < oi->g.size(); ++i) bi->g[i] += oi->g[i];
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> mul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  HV_REQUIRE(a.shape() == b.shape(), "mul: shape mismatch ",
             a.shape().to_string(), " vs ", b.shape().to_string());
  const bool rec = detail::track(tape, {&a, &b});
  Tensor<T> out = detail::make_output<T>(a.shape(), rec);
  const int64_t n = a.numel();
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
  if (rec) {
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    tape->record(oi, [ai, bi, oi] {
      if (ai->needs_grad) {
        ai->ensure_grad();
        for (size_t i = 0; i < oi->g.size(); ++i) ai->g[i] += oi->g[i] * bi->v[i];
      }
      if (bi->needs_grad) {
        bi->ensure_grad();
        for (size_t i = 0; i < oi->g.size(); ++i) bi->g[i] += oi->g[i] * ai->v[i];
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> scale(Tape<T>* tape, const Tensor<T>& a, T c) {
  const bool rec = detail::track(tape, {&a});
  Tensor<T> out = detail::make_output<T>(a.shape(), rec);
  const int64_t n = a.numel();
  const T* pa = a.data();
  T* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * c;
  if (rec) {
    auto ai = a.impl();
    auto oi = out.impl();
    tape->record(oi, [ai, oi, c] {
      ai->ensure_grad();
      for (size_t i = 0; i < oi->g.size(); ++i) ai->g[i] += oi->g[i] * c;
    });
  }
  return out;
}

template <class T>
Tensor<T> pointwise(Tape<T>* tape, const Tensor<T>& x, Pointwise kind) {
  const bool rec = detail::track(tape, {&x});
  Tensor<T> out = detail::make_output<T>(x.shape(), rec);
  const int64_t n = x.numel();
  const T* px = x.data();
  T* po = out.data();
  parallel_for(n, [&](int64_t begin, int64_t end) {
    switch (kind) {
      case Pointwise::relu:
        for (int64_t i = begin; i < end; ++i) po[i] = px[i] > T(0) ? px[i] : T(0);
        break;
      case Pointwise::sigmoid:
        for (int64_t i = begin; i < end; ++i)
          po[i] = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(px[i]))));
        break;
      case Pointwise::tanh:
        for (int64_t i = begin; i < end; ++i)
          po[i] = static_cast<T>(std::tanh(static_cast<double>(px[i])));
        break;
    }
  });
  if (rec) {
    auto xi = x.impl();
    auto oi = out.impl();
    tape->record(oi, [xi, oi, kind] {
      xi->ensure_grad();
      const int64_t n = static_cast<int64_t>(oi->g.size());
      parallel_for(n, [&](int64_t begin, int64_t end) {
        switch (kind) {
          case Pointwise::relu:
            for (int64_t i = begin; i < end; ++i)
              if (xi->v[i] > T(0)) xi->g[i] += oi->g[i];
            break;
          case Pointwise::sigmoid:
            for (int64_t i = begin; i < end; ++i)
              xi->g[i] += oi->g[i] * oi->v[i] * (T(1) - oi->v[i]);
            break;
          case Pointwise::tanh:
            for (int64_t i = begin; i < end; ++i)
              xi->g[i] += oi->g[i] * (T(1) - oi->v[i] * oi->v[i]);
            break;
        }
      });
    });
  }
  return out;
}

// Copy that blocks gradient flow. Test-only switch for the conditioning-edge
// ablation; the trained model never detaches.
template <class T>
Tensor<T> detach(const Tensor<T>& x) {
  return Tensor<T>::from_vector(x.shape(), x.values());
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> matmul(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w) {
  HV_REQUIRE(x.shape().rank() == 2, "matmul: input must be rank 2, got ",
             x.shape().to_string());
  HV_REQUIRE(w.shape().rank() == 2, "matmul: weight must be rank 2, got ",
             w.shape().to_string());
  const int64_t b = x.shape()[0], n = x.shape()[1];
  const int64_t wn = w.shape()[0], m = w.shape()[1];
  HV_REQUIRE(n == wn, "matmul: inner dimensions disagree: input has ", n,
             " columns, weight has ", wn, " rows");
  const bool rec = detail::track(tape, {&x, &w});
  Tensor<T> out = detail::make_output<T>(Shape{b, m}, rec);
  gemm(false, false, static_cast<int>(b), static_cast<int>(m),
       static_cast<int>(n), T(1), x.data(), static_cast<int>(n), w.data(),
       static_cast<int>(m), T(0), out.data(), static_cast<int>(m));
  if (rec) {
    auto xi = x.impl(), wi = w.impl(), oi = out.impl();
    tape->record(oi, [xi, wi, oi, b, n, m] {
      if (xi->needs_grad) {
        xi->ensure_grad();
        gemm(false, true, static_cast<int>(b), static_cast<int>(n),
             static_cast<int>(m), T(1), oi->g.data(), static_cast<int>(m),
             wi->v.data(), static_cast<int>(m), T(1), xi->g.data(),
             static_cast<int>(n));
      }
      if (wi->needs_grad) {
        wi->ensure_grad();
        gemm(true, false, static_cast<int>(n), static_cast<int>(m),
             static_cast<int>(b), T(1), xi->v.data(), static_cast<int>(n),
             oi->g.data(), static_cast<int>(m), T(1), wi->g.data(),
             static_cast<int>(m));
      }
    });
  }
  return out;
}

// out = x . weight + bias (row-wise). One tape step per node: the bias add
// is fused so the output has a single producing op.
template <class T>
Tensor<T> affine(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w,
                 const Tensor<T>& bias) {
  HV_REQUIRE(x.shape().rank() == 2, "affine: input must be rank 2, got ",
             x.shape().to_string());
  HV_REQUIRE(w.shape().rank() == 2, "affine: weight must be rank 2, got ",
             w.shape().to_string());
  const int64_t b = x.shape()[0], n = x.shape()[1];
  const int64_t wn = w.shape()[0], m = w.shape()[1];
  HV_REQUIRE(n == wn, "affine: inner dimensions disagree: input has ", n,
             " columns, weight has ", wn, " rows");
  HV_REQUIRE(bias.shape().rank() == 1 && bias.shape()[0] == m,
             "affine: bias shape ", bias.shape().to_string(),
             " does not match ", m, " output columns");
  const bool rec = detail::track(tape, {&x, &w, &bias});
  Tensor<T> out = detail::make_output<T>(Shape{b, m}, rec);
  gemm(false, false, static_cast<int>(b), static_cast<int>(m),
       static_cast<int>(n), T(1), x.data(), static_cast<int>(n), w.data(),
       static_cast<int>(m), T(0), out.data(), static_cast<int>(m));
  T* po = out.data();
  const T* pb = bias.data();
  for (int64_t r = 0; r < b; ++r)
    for (int64_t c = 0; c < m; ++c) po[r * m + c] += pb[c];
  if (rec) {
    auto xi = x.impl(), wi = w.impl(), bi = bias.impl(), oi = out.impl();
    tape->record(oi, [xi, wi, bi, oi, b, n, m] {
      if (xi->needs_grad) {
        xi->ensure_grad();
        gemm(false, true, static_cast<int>(b), static_cast<int>(n),
             static_cast<int>(m), T(1), oi->g.data(), static_cast<int>(m),
             wi->v.data(), static_cast<int>(m), T(1), xi->g.data(),
             static_cast<int>(n));
      }
      if (wi->needs_grad) {
        wi->ensure_grad();
        gemm(true, false, static_cast<int>(n), static_cast<int>(m),
             static_cast<int>(b), T(1), xi->v.data(), static_cast<int>(n),
             oi->g.data(), static_cast<int>(m), T(1), wi->g.data(),
             static_cast<int>(m));
      }
      if (bi->needs_grad) {
        bi->ensure_grad();
        for (int64_t r = 0; r < b; ++r)
          for (int64_t c = 0; c < m; ++c) bi->g[c] += oi->g[r * m + c];
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> concat(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  // an undefined handle is the neutral element
  if (!b.defined()) return a;
  if (!a.defined()) return b;
  HV_REQUIRE(a.shape().rank() == 2 && b.shape().rank() == 2,
             "concat: expects rank-2 inputs, got ", a.shape().to_string(),
             " and ", b.shape().to_string());
  HV_REQUIRE(a.shape()[0] == b.shape()[0], "concat: batch dimension mismatch: ",
             a.shape()[0], " vs ", b.shape()[0]);
  const int64_t rows = a.shape()[0], na = a.shape()[1], nb = b.shape()[1];
  const bool rec = detail::track(tape, {&a, &b});
  Tensor<T> out = detail::make_output<T>(Shape{rows, na + nb}, rec);
  T* po = out.data();
  for (int64_t r = 0; r < rows; ++r) {
    std::memcpy(po + r * (na + nb), a.data() + r * na, sizeof(T) * na);
    std::memcpy(po + r * (na + nb) + na, b.data() + r * nb, sizeof(T) * nb);
  }
  if (rec) {
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    tape->record(oi, [ai, bi, oi, rows, na, nb] {
      for (int64_t r = 0; r < rows; ++r) {
        const T* gr = oi->g.data() + r * (na + nb);
        if (ai->needs_grad) {
          ai->ensure_grad();
          for (int64_t c = 0; c < na; ++c) ai->g[r * na + c] += gr[c];
        }
        if (bi->needs_grad) {
          bi->ensure_grad();
          for (int64_t c = 0; c < nb; ++c) bi->g[r * nb + c] += gr[na + c];
        }
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> slice_cols(Tape<T>* tape, const Tensor<T>& x, int64_t begin,
                     int64_t len) {
  HV_REQUIRE(x.shape().rank() == 2, "slice_cols: expects rank-2 input, got ",
             x.shape().to_string());
  const int64_t rows = x.shape()[0], cols = x.shape()[1];
  HV_REQUIRE(begin >= 0 && len >= 1 && begin + len <= cols,
             "slice_cols: range [", begin, ",", begin + len,
             ") out of bounds for ", cols, " columns");
  const bool rec = detail::track(tape, {&x});
  Tensor<T> out = detail::make_output<T>(Shape{rows, len}, rec);
  for (int64_t r = 0; r < rows; ++r)
    std::memcpy(out.data() + r * len, x.data() + r * cols + begin,
                sizeof(T) * len);
  if (rec) {
    auto xi = x.impl();
    auto oi = out.impl();
    tape->record(oi, [xi, oi, rows, cols, begin, len] {
      xi->ensure_grad();
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < len; ++c)
          xi->g[r * cols + begin + c] += oi->g[r * len + c];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> sum_all(Tape<T>* tape, const Tensor<T>& x) {
  const bool rec = detail::track(tape, {&x});
  double acc = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) acc += static_cast<double>(x.data()[i]);
  Tensor<T> out = detail::make_output<T>(Shape{1}, rec);
  out.data()[0] = static_cast<T>(acc);
  if (rec) {
    auto xi = x.impl();
    auto oi = out.impl();
    tape->record(oi, [xi, oi] {
      xi->ensure_grad();
      for (auto& g : xi->g) g += oi->g[0];
    });
  }
  return out;
}

// Arithmetic mean along one axis; that axis is dropped from the shape.
template <class T>
Tensor<T> mean_axis(Tape<T>* tape, const Tensor<T>& x, int64_t axis) {
  const int64_t rank = x.shape().rank();
  HV_REQUIRE(axis >= 0 && axis < rank, "mean_axis: axis ", axis,
             " out of range for rank ", rank);
  int64_t outer = 1, inner = 1;
  for (int64_t i = 0; i < axis; ++i) outer *= x.shape()[i];
  for (int64_t i = axis + 1; i < rank; ++i) inner *= x.shape()[i];
  const int64_t n = x.shape()[axis];

  std::vector<Extent> out_dims;
  for (int64_t i = 0; i < rank; ++i)
    if (i != axis) out_dims.push_back(x.shape()[i]);
  if (out_dims.empty()) out_dims.push_back(1);

  const bool rec = detail::track(tape, {&x});
  Tensor<T> out = detail::make_output<T>(Shape(out_dims), rec);
  const T* px = x.data();
  T* po = out.data();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t i = 0; i < inner; ++i) {
      double acc = 0.0;
      for (int64_t j = 0; j < n; ++j)
        acc += static_cast<double>(px[(o * n + j) * inner + i]);
      po[o * inner + i] = static_cast<T>(acc / static_cast<double>(n));
    }
  if (rec) {
    auto xi = x.impl();
    auto oi = out.impl();
    tape->record(oi, [xi, oi, outer, inner, n] {
      xi->ensure_grad();
      const T inv = T(1) / static_cast<T>(n);
      for (int64_t o = 0; o < outer; ++o)
        for (int64_t j = 0; j < n; ++j)
          for (int64_t i = 0; i < inner; ++i)
            xi->g[(o * n + j) * inner + i] += oi->g[o * inner + i] * inv;
    });
  }
  return out;
}

// Mean of k same-shape tensors (used for temporal averaging of LSTM states).
template <class T>
Tensor<T> mean_of(Tape<T>* tape, const std::vector<Tensor<T>>& xs) {
  HV_REQUIRE(!xs.empty(), "mean_of: needs at least one tensor");
  bool rec = false;
  for (const auto& x : xs) {
    HV_REQUIRE(x.shape() == xs[0].shape(), "mean_of: shape mismatch ",
               x.shape().to_string(), " vs ", xs[0].shape().to_string());
    if (tape && x.needs_grad()) rec = true;
  }
  Tensor<T> out = detail::make_output<T>(xs[0].shape(), rec);
  const int64_t n = out.numel();
  const double inv = 1.0 / static_cast<double>(xs.size());
  std::vector<double> acc(static_cast<size_t>(n), 0.0);
  for (const auto& x : xs)
    for (int64_t i = 0; i < n; ++i) acc[i] += static_cast<double>(x.data()[i]);
  for (int64_t i = 0; i < n; ++i) out.data()[i] = static_cast<T>(acc[i] * inv);
  if (rec) {
    std::vector<std::shared_ptr<TensorImpl<T>>> impls;
    impls.reserve(xs.size());
    for (const auto& x : xs) impls.push_back(x.impl());
    auto oi = out.impl();
    const T invT = static_cast<T>(inv);
    tape->record(oi, [impls, oi, invT] {
      for (auto& xi : impls) {
        if (!xi->needs_grad) continue;
        xi->ensure_grad();
        for (size_t i = 0; i < oi->g.size(); ++i) xi->g[i] += oi->g[i] * invT;
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// softmax / losses
// ---------------------------------------------------------------------------

// Row softmax with max subtraction; exp sums accumulate in double so f32
// rows still sum to 1 within 1e-6.
template <class T>
Tensor<T> softmax(Tape<T>* tape, const Tensor<T>& x) {
  HV_REQUIRE(x.shape().rank() == 2, "softmax: expects rank-2 input, got ",
             x.shape().to_string());
  const int64_t b = x.shape()[0], k = x.shape()[1];
  const bool rec = detail::track(tape, {&x});
  Tensor<T> out = detail::make_output<T>(x.shape(), rec);
  const T* px = x.data();
  T* po = out.data();
  std::vector<double> e(static_cast<size_t>(k));
  for (int64_t r = 0; r < b; ++r) {
    const T* row = px + r * k;
    double m = static_cast<double>(row[0]);
    for (int64_t c = 1; c < k; ++c) m = std::max(m, static_cast<double>(row[c]));
    double s = 0.0;
    for (int64_t c = 0; c < k; ++c) {
      e[static_cast<size_t>(c)] = std::exp(static_cast<double>(row[c]) - m);
      s += e[static_cast<size_t>(c)];
    }
    for (int64_t c = 0; c < k; ++c)
      po[r * k + c] = static_cast<T>(e[static_cast<size_t>(c)] / s);
  }
  if (rec) {
    auto xi = x.impl();
    auto oi = out.impl();
    tape->record(oi, [xi, oi, b, k] {
      xi->ensure_grad();
      for (int64_t r = 0; r < b; ++r) {
        double dot = 0.0;
        for (int64_t c = 0; c < k; ++c)
          dot += static_cast<double>(oi->g[r * k + c]) *
                 static_cast<double>(oi->v[r * k + c]);
        for (int64_t c = 0; c < k; ++c)
          xi->g[r * k + c] += static_cast<T>(
              static_cast<double>(oi->v[r * k + c]) *
              (static_cast<double>(oi->g[r * k + c]) - dot));
      }
    });
  }
  return out;
}

inline constexpr double kProbFloor = 1e-12;

// Masked mean-over-batch negative log likelihood on probability rows.
// mask[r] in {0,1}; rows with mask 0 contribute nothing.
template <class T>
Tensor<T> cross_entropy_masked(Tape<T>* tape, const Tensor<T>& probs,
                               const std::vector<int64_t>& targets,
                               const std::vector<T>& mask) {
  HV_REQUIRE(probs.shape().rank() == 2, "cross_entropy: expects rank-2 probs, got ",
             probs.shape().to_string());
  const int64_t b = probs.shape()[0], k = probs.shape()[1];
  HV_REQUIRE(static_cast<int64_t>(targets.size()) == b,
             "cross_entropy: got ", targets.size(), " targets for batch ", b);
  HV_REQUIRE(static_cast<int64_t>(mask.size()) == b, "cross_entropy: got ",
             mask.size(), " mask entries for batch ", b);
  for (int64_t r = 0; r < b; ++r)
    HV_REQUIRE(targets[static_cast<size_t>(r)] >= 0 &&
                   targets[static_cast<size_t>(r)] < k,
               "cross_entropy: target ", targets[static_cast<size_t>(r)],
               " out of range [0,", k, ") at row ", r);
  const bool rec = detail::track(tape, {&probs});
  double acc = 0.0;
  const T* pp = probs.data();
  for (int64_t r = 0; r < b; ++r) {
    if (mask[static_cast<size_t>(r)] == T(0)) continue;
    const double p = std::max(
        static_cast<double>(pp[r * k + targets[static_cast<size_t>(r)]]),
        kProbFloor);
    acc -= std::log(p) * static_cast<double>(mask[static_cast<size_t>(r)]);
  }
  Tensor<T> out = detail::make_output<T>(Shape{1}, rec);
  out.data()[0] = static_cast<T>(acc / static_cast<double>(b));
  if (rec) {
    auto pi = probs.impl();
    auto oi = out.impl();
    tape->record(oi, [pi, oi, targets, mask, b, k] {
      pi->ensure_grad();
      const double gl = static_cast<double>(oi->g[0]);
      for (int64_t r = 0; r < b; ++r) {
        if (mask[static_cast<size_t>(r)] == T(0)) continue;
        const int64_t t = targets[static_cast<size_t>(r)];
        const double p = static_cast<double>(pi->v[r * k + t]);
        if (p > kProbFloor)
          pi->g[r * k + t] -= static_cast<T>(
              gl * static_cast<double>(mask[static_cast<size_t>(r)]) /
              (static_cast<double>(b) * p));
      }
    });
  }
  return out;
}

// Mean over the batch of -log probs[r, target_r], probabilities clamped at
// 1e-12 before the log.
template <class T>
Tensor<T> cross_entropy(Tape<T>* tape, const Tensor<T>& probs,
                        const std::vector<int64_t>& targets) {
  return cross_entropy_masked(
      tape, probs, targets,
      std::vector<T>(static_cast<size_t>(probs.shape()[0]), T(1)));
}

// ---------------------------------------------------------------------------
// gather
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> embedding(Tape<T>* tape, const Tensor<T>& table,
                    const std::vector<int64_t>& ids) {
  HV_REQUIRE(table.shape().rank() == 2, "embedding: table must be rank 2, got ",
             table.shape().to_string());
  HV_REQUIRE(!ids.empty(), "embedding: empty id sequence");
  const int64_t vocab = table.shape()[0], e = table.shape()[1];
  for (size_t i = 0; i < ids.size(); ++i)
    HV_REQUIRE(ids[i] >= 0 && ids[i] < vocab, "embedding: id ", ids[i],
               " out of range [0,", vocab, ") at position ", i);
  const bool rec = detail::track(tape, {&table});
  const int64_t l = static_cast<int64_t>(ids.size());
  Tensor<T> out = detail::make_output<T>(Shape{l, e}, rec);
  for (int64_t r = 0; r < l; ++r)
    std::memcpy(out.data() + r * e, table.data() + ids[static_cast<size_t>(r)] * e,
                sizeof(T) * e);
  if (rec) {
    auto ti = table.impl();
    auto oi = out.impl();
    tape->record(oi, [ti, oi, ids, e] {
      ti->ensure_grad();
      for (size_t r = 0; r < ids.size(); ++r)
        for (int64_t c = 0; c < e; ++c)
          ti->g[ids[r] * e + c] += oi->g[static_cast<int64_t>(r) * e + c];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// video kernels
// ---------------------------------------------------------------------------

namespace detail {

// Accumulates one 3x3 spatial stencil pass: out[h,w] += sum of 9 taps of
// `in` with coefficients c[dh*3+dw]. Missing rows are fed from zero_row so
// the interior loop stays branch-free and vectorizes over w.
template <class T>
void stencil3x3_add(T* out, const T* in, const T* c, int64_t h, int64_t w,
                    const T* zero_row) {
  const T c0 = c[0], c1 = c[1], c2 = c[2];
  const T c3 = c[3], c4 = c[4], c5 = c[5];
  const T c6 = c[6], c7 = c[7], c8 = c[8];
  for (int64_t hh = 0; hh < h; ++hh) {
    const T* r0 = hh > 0 ? in + (hh - 1) * w : zero_row;
    const T* r1 = in + hh * w;
    const T* r2 = hh + 1 < h ? in + (hh + 1) * w : zero_row;
    T* o = out + hh * w;
    o[0] += c1 * r0[0] + c2 * r0[1] + c4 * r1[0] + c5 * r1[1] + c7 * r2[0] +
            c8 * r2[1];
    for (int64_t ww = 1; ww < w - 1; ++ww)
      o[ww] += c0 * r0[ww - 1] + c1 * r0[ww] + c2 * r0[ww + 1] +
               c3 * r1[ww - 1] + c4 * r1[ww] + c5 * r1[ww + 1] +
               c6 * r2[ww - 1] + c7 * r2[ww] + c8 * r2[ww + 1];
    o[w - 1] += c0 * r0[w - 2] + c1 * r0[w - 1] + c3 * r1[w - 2] +
                c4 * r1[w - 1] + c6 * r2[w - 2] + c7 * r2[w - 1];
  }
}

// Dot product with manual lanes: vectorizes without -ffast-math and the
// reduction order is fixed, so results do not depend on the thread count.
template <class T>
T dot_lanes(const T* a, const T* b, int64_t n) {
  constexpr int kLanes = 16;
  T lanes[kLanes] = {};
  int64_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    for (int l = 0; l < kLanes; ++l) lanes[l] += a[i + l] * b[i + l];
  T tail = T(0);
  for (; i < n; ++i) tail += a[i] * b[i];
  T s = tail;
  for (int l = 0; l < kLanes; ++l) s += lanes[l];
  return s;
}

}  // namespace detail

// 3x3x3 convolution, zero padding 1, stride 1; output extents equal input
// extents. Direct stencil kernels: im2col+GEMM is memory-bound at the small
// channel counts this model runs with.
template <class T>
Tensor<T> conv3d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& kernel,
                 const Tensor<T>& bias) {
  HV_REQUIRE(x.shape().rank() == 5, "conv3d: input must be rank 5 [B,C,T,H,W], got ",
             x.shape().to_string());
  HV_REQUIRE(kernel.shape().rank() == 5, "conv3d: kernel must be rank 5, got ",
             kernel.shape().to_string());
  const int64_t b = x.shape()[0], cin = x.shape()[1], tt = x.shape()[2],
                h = x.shape()[3], w = x.shape()[4];
  const int64_t cout = kernel.shape()[0];
  HV_REQUIRE(kernel.shape()[1] == cin, "conv3d: kernel expects ",
             kernel.shape()[1], " input channels, input has ", cin);
  HV_REQUIRE(kernel.shape()[2] == 3 && kernel.shape()[3] == 3 &&
                 kernel.shape()[4] == 3,
             "conv3d: kernel extents must be 3x3x3, got ",
             kernel.shape().to_string());
  HV_REQUIRE(bias.shape().rank() == 1 && bias.shape()[0] == cout,
             "conv3d: bias length ", bias.shape().to_string(),
             " does not match ", cout, " output channels");

  const bool rec = detail::track(tape, {&x, &kernel, &bias});
  Tensor<T> out = detail::make_output<T>(Shape{b, cout, tt, h, w}, rec);

  const int64_t hw = h * w;
  const int64_t in_sample = cin * tt * hw;
  const int64_t out_sample = cout * tt * hw;

  const T* px = x.data();
  const T* pk = kernel.data();
  const T* pb = bias.data();
  T* po = out.data();

  parallel_for(b * tt, [&](int64_t begin, int64_t end) {
    const std::vector<T> zero_row(static_cast<size_t>(w), T(0));
    for (int64_t i = begin; i < end; ++i) {
      const int64_t bi = i / tt, t = i % tt;
      for (int64_t co = 0; co < cout; ++co) {
        T* oplane = po + bi * out_sample + (co * tt + t) * hw;
        std::fill(oplane, oplane + hw, pb[co]);
        for (int64_t ci = 0; ci < cin; ++ci)
          for (int64_t dt = 0; dt < 3; ++dt) {
            const int64_t st = t + dt - 1;
            if (st < 0 || st >= tt) continue;
            detail::stencil3x3_add(oplane,
                                   px + bi * in_sample + (ci * tt + st) * hw,
                                   pk + ((co * cin + ci) * 3 + dt) * 9, h, w,
                                   zero_row.data());
          }
      }
    }
  });

  if (rec) {
    auto xi = x.impl(), ki = kernel.impl(), bi_ = bias.impl(), oi = out.impl();
    tape->record(oi, [xi, ki, bi_, oi, b, cin, cout, tt, h, w] {
      const int64_t hw = h * w;
      const int64_t in_sample = cin * tt * hw;
      const int64_t out_sample = cout * tt * hw;

      if (xi->needs_grad) {
        xi->ensure_grad();
        // dIn plane (bi,ci,st) is the flipped-kernel stencil over dOut;
        // output planes are disjoint, so any partition is race-free.
        parallel_for(b * cin * tt, [&](int64_t begin, int64_t end) {
          const std::vector<T> zero_row(static_cast<size_t>(w), T(0));
          T flipped[9];
          for (int64_t i = begin; i < end; ++i) {
            const int64_t bi = i / (cin * tt);
            const int64_t ci = (i / tt) % cin;
            const int64_t st = i % tt;
            T* gplane = xi->g.data() + bi * in_sample + (ci * tt + st) * hw;
            for (int64_t co = 0; co < cout; ++co)
              for (int64_t dtp = 0; dtp < 3; ++dtp) {
                const int64_t t = st + dtp - 1;
                if (t < 0 || t >= tt) continue;
                const T* c =
                    ki->v.data() + ((co * cin + ci) * 3 + (2 - dtp)) * 9;
                for (int q = 0; q < 9; ++q) flipped[q] = c[8 - q];
                detail::stencil3x3_add(
                    gplane, oi->g.data() + bi * out_sample + (co * tt + t) * hw,
                    flipped, h, w, zero_row.data());
              }
          }
        });
      }

      if (ki->needs_grad || bi_->needs_grad) {
        // per-sample partials, reduced in sample order afterwards so results
        // do not depend on the thread count
        const int64_t ksize = cout * cin * 27;
        std::vector<double> dk_part(
            ki->needs_grad ? static_cast<size_t>(b * ksize) : 0, 0.0);
        std::vector<double> db_part(
            bi_->needs_grad ? static_cast<size_t>(b * cout) : 0, 0.0);
        const bool need_dk = ki->needs_grad, need_db = bi_->needs_grad;
        parallel_for(b, [&](int64_t begin, int64_t end) {
          for (int64_t bi = begin; bi < end; ++bi) {
            for (int64_t co = 0; co < cout; ++co) {
              for (int64_t t = 0; t < tt; ++t) {
                const T* gplane =
                    oi->g.data() + bi * out_sample + (co * tt + t) * hw;
                if (need_db) {
                  double acc = 0.0;
                  for (int64_t j = 0; j < hw; ++j)
                    acc += static_cast<double>(gplane[j]);
                  db_part[static_cast<size_t>(bi * cout + co)] += acc;
                }
                if (!need_dk) continue;
                for (int64_t ci = 0; ci < cin; ++ci)
                  for (int64_t dt = 0; dt < 3; ++dt) {
                    const int64_t st = t + dt - 1;
                    if (st < 0 || st >= tt) continue;
                    const T* iplane =
                        xi->v.data() + bi * in_sample + (ci * tt + st) * hw;
                    double* dk = dk_part.data() +
                                 (bi * cout * cin + co * cin + ci) * 27 + dt * 9;
                    // One flat dot per tap over the whole plane; terms the
                    // row edges must not contribute are subtracted after.
                    for (int64_t dh = 0; dh < 3; ++dh) {
                      const int64_t hlo = dh == 0 ? 1 : 0;
                      const int64_t hhi = dh == 2 ? h - 1 : h;
                      const int64_t rows = hhi - hlo;
                      const int64_t n = rows * w;
                      const T* a = gplane + hlo * w;
                      const T* bb = iplane + (hlo + dh - 1) * w;
                      double acc0 =
                          static_cast<double>(detail::dot_lanes(a + 1, bb, n - 1));
                      for (int64_t r = 1; r < rows; ++r)
                        acc0 -= static_cast<double>(a[r * w]) *
                                static_cast<double>(bb[r * w - 1]);
                      double acc1 =
                          static_cast<double>(detail::dot_lanes(a, bb, n));
                      double acc2 = static_cast<double>(
                          detail::dot_lanes(a, bb + 1, n - 1));
                      for (int64_t r = 0; r < rows - 1; ++r)
                        acc2 -= static_cast<double>(a[(r + 1) * w - 1]) *
                                static_cast<double>(bb[(r + 1) * w]);
                      dk[dh * 3 + 0] += acc0;
                      dk[dh * 3 + 1] += acc1;
                      dk[dh * 3 + 2] += acc2;
                    }
                  }
              }
            }
          }
        });
        if (need_dk) {
          ki->ensure_grad();
          for (int64_t bi = 0; bi < b; ++bi)
            for (int64_t j = 0; j < ksize; ++j)
              ki->g[static_cast<size_t>(j)] +=
                  static_cast<T>(dk_part[static_cast<size_t>(bi * ksize + j)]);
        }
        if (need_db) {
          bi_->ensure_grad();
          for (int64_t bi = 0; bi < b; ++bi)
            for (int64_t co = 0; co < cout; ++co)
              bi_->g[static_cast<size_t>(co)] += static_cast<T>(
                  db_part[static_cast<size_t>(bi * cout + co)]);
        }
      }
    });
  }
  return out;
}

// 2x2 spatial max pooling, stride 2, temporal extent unchanged. Ties break
// to the first element in row-major window order.
template <class T>
Tensor<T> maxpool_spatial(Tape<T>* tape, const Tensor<T>& x) {
  HV_REQUIRE(x.shape().rank() == 5, "maxpool_spatial: input must be rank 5, got ",
             x.shape().to_string());
  const int64_t b = x.shape()[0], c = x.shape()[1], tt = x.shape()[2],
                h = x.shape()[3], w = x.shape()[4];
  HV_REQUIRE(h % 2 == 0, "maxpool_spatial: H must be even, got ", h);
  HV_REQUIRE(w % 2 == 0, "maxpool_spatial: W must be even, got ", w);
  const int64_t oh = h / 2, ow = w / 2;
  const bool rec = detail::track(tape, {&x});
  Tensor<T> out = detail::make_output<T>(Shape{b, c, tt, oh, ow}, rec);

  auto argmax = std::make_shared<std::vector<int64_t>>(
      rec ? static_cast<size_t>(out.numel()) : 0);
  const int64_t planes = b * c * tt;
  const T* px = x.data();
  T* po = out.data();
  parallel_for(planes, [&](int64_t begin, int64_t end) {
    for (int64_t p = begin; p < end; ++p) {
      const T* in = px + p * h * w;
      T* op = po + p * oh * ow;
      for (int64_t i = 0; i < oh; ++i)
        for (int64_t j = 0; j < ow; ++j) {
          const int64_t base = (2 * i) * w + 2 * j;
          int64_t best = base;
          T bv = in[base];
          const int64_t cand[3] = {base + 1, base + w, base + w + 1};
          for (int64_t k = 0; k < 3; ++k)
            if (in[cand[k]] > bv) {
              bv = in[cand[k]];
              best = cand[k];
            }
          op[i * ow + j] = bv;
          if (rec) (*argmax)[static_cast<size_t>(p * oh * ow + i * ow + j)] =
              p * h * w + best;
        }
    }
  });

  if (rec) {
    auto xi = x.impl();
    auto oi = out.impl();
    tape->record(oi, [xi, oi, argmax] {
      xi->ensure_grad();
      for (size_t i = 0; i < oi->g.size(); ++i)
        xi->g[static_cast<size_t>((*argmax)[i])] += oi->g[i];
    });
  }
  return out;
}

// [B,C,T,H,W] -> [B,T,C]: mean over the spatial map per (sample, step).
template <class T>
Tensor<T> global_spatial_avg(Tape<T>* tape, const Tensor<T>& x) {
  HV_REQUIRE(x.shape().rank() == 5, "global_spatial_avg: input must be rank 5, got ",
             x.shape().to_string());
  const int64_t b = x.shape()[0], c = x.shape()[1], tt = x.shape()[2],
                h = x.shape()[3], w = x.shape()[4];
  const int64_t hw = h * w;
  const bool rec = detail::track(tape, {&x});
  Tensor<T> out = detail::make_output<T>(Shape{b, tt, c}, rec);
  const T* px = x.data();
  T* po = out.data();
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t ci = 0; ci < c; ++ci)
      for (int64_t t = 0; t < tt; ++t) {
        const T* plane = px + ((bi * c + ci) * tt + t) * hw;
        double acc = 0.0;
        for (int64_t j = 0; j < hw; ++j) acc += static_cast<double>(plane[j]);
        po[(bi * tt + t) * c + ci] = static_cast<T>(acc / static_cast<double>(hw));
      }
  if (rec) {
    auto xi = x.impl();
    auto oi = out.impl();
    tape->record(oi, [xi, oi, b, c, tt, hw] {
      xi->ensure_grad();
      const T inv = T(1) / static_cast<T>(hw);
      for (int64_t bi = 0; bi < b; ++bi)
        for (int64_t ci = 0; ci < c; ++ci)
          for (int64_t t = 0; t < tt; ++t) {
            const T g = oi->g[(bi * tt + t) * c + ci] * inv;
            T* plane = xi->g.data() + ((bi * c + ci) * tt + t) * hw;
            for (int64_t j = 0; j < hw; ++j) plane[j] += g;
          }
    });
  }
  return out;
}

// [B,T,C] -> [B,C] at one time step.
template <class T>
Tensor<T> select_time(Tape<T>* tape, const Tensor<T>& x, int64_t t) {
  HV_REQUIRE(x.shape().rank() == 3, "select_time: input must be rank 3, got ",
             x.shape().to_string());
  const int64_t b = x.shape()[0], tt = x.shape()[1], c = x.shape()[2];
  HV_REQUIRE(t >= 0 && t < tt, "select_time: step ", t, " out of range [0,", tt, ")");
  const bool rec = detail::track(tape, {&x});
  Tensor<T> out = detail::make_output<T>(Shape{b, c}, rec);
  for (int64_t bi = 0; bi < b; ++bi)
    std::memcpy(out.data() + bi * c, x.data() + (bi * tt + t) * c, sizeof(T) * c);
  if (rec) {
    auto xi = x.impl();
    auto oi = out.impl();
    tape->record(oi, [xi, oi, b, tt, c, t] {
      xi->ensure_grad();
      for (int64_t bi = 0; bi < b; ++bi)
        for (int64_t j = 0; j < c; ++j)
          xi->g[(bi * tt + t) * c + j] += oi->g[bi * c + j];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// recurrence
// ---------------------------------------------------------------------------

// One LSTM step. Gate layout in the fused matrices is [input, forget,
// candidate, output]; sigmoid gates, tanh candidate and output squash.
template <class T>
std::pair<Tensor<T>, Tensor<T>> lstm_step(Tape<T>* tape, const Tensor<T>& x,
                                          const Tensor<T>& h, const Tensor<T>& c,
                                          const Tensor<T>& w_ih,
                                          const Tensor<T>& w_hh,
                                          const Tensor<T>& bias) {
  HV_REQUIRE(x.shape().rank() == 2 && h.shape().rank() == 2 &&
                 c.shape().rank() == 2,
             "lstm_step: x/h/c must be rank 2");
  const int64_t hidden = h.shape()[1];
  HV_REQUIRE(h.shape() == c.shape(), "lstm_step: h shape ",
             h.shape().to_string(), " differs from c shape ",
             c.shape().to_string());
  HV_REQUIRE(x.shape()[0] == h.shape()[0], "lstm_step: batch mismatch: x has ",
             x.shape()[0], ", h has ", h.shape()[0]);
  HV_REQUIRE(w_ih.shape().rank() == 2 && w_ih.shape()[0] == x.shape()[1] &&
                 w_ih.shape()[1] == 4 * hidden,
             "lstm_step: w_ih shape ", w_ih.shape().to_string(),
             " does not match input width ", x.shape()[1], " and 4*hidden ",
             4 * hidden);
  HV_REQUIRE(w_hh.shape().rank() == 2 && w_hh.shape()[0] == hidden &&
                 w_hh.shape()[1] == 4 * hidden,
             "lstm_step: w_hh shape ", w_hh.shape().to_string(),
             " does not match hidden ", hidden);
  HV_REQUIRE(bias.shape().rank() == 1 && bias.shape()[0] == 4 * hidden,
             "lstm_step: bias shape ", bias.shape().to_string(),
             " does not match 4*hidden ", 4 * hidden);

  Tensor<T> gates =
      add(tape, affine(tape, x, w_ih, bias), matmul(tape, h, w_hh));
  Tensor<T> gi = pointwise(tape, slice_cols(tape, gates, 0, hidden), Pointwise::sigmoid);
  Tensor<T> gf = pointwise(tape, slice_cols(tape, gates, hidden, hidden), Pointwise::sigmoid);
  Tensor<T> gg = pointwise(tape, slice_cols(tape, gates, 2 * hidden, hidden), Pointwise::tanh);
  Tensor<T> go = pointwise(tape, slice_cols(tape, gates, 3 * hidden, hidden), Pointwise::sigmoid);
  Tensor<T> c_new = add(tape, mul(tape, gf, c), mul(tape, gi, gg));
  Tensor<T> h_new = mul(tape, go, pointwise(tape, c_new, Pointwise::tanh));
  return {h_new, c_new};
}

}  // namespace hiervid
