#include "hiervid/gradcheck.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <map>

#include "hiervid/ops.hpp"
#include "hiervid/rng.hpp"

namespace hiervid::gradcheck {

namespace {

using D = double;
using Tens = Tensor<D>;

Tens random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  auto t = Tens::zeros(shape);
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

// One finite-difference problem: differentiable inputs, a forward closure
// reading them by handle, and optional per-element exclusions.
struct Problem {
  std::vector<Tens> inputs;
  std::function<Tens(Tape<D>*)> forward;
  std::vector<std::vector<char>> skip;  // parallel to inputs; may be empty
};

// Scalar probe: sum of the output weighted by fixed random coefficients, so
// every output element influences the loss through a distinct factor.
Tens probe(Tape<D>* tape, const Tens& out, const Tens& coefs) {
  return sum_all(tape, mul(tape, out, coefs));
}

void run_problem(Problem& p, OpReport& rep) {
  for (auto& in : p.inputs) in.set_requires_grad(true);
  Tape<D> tape;
  Tens loss = p.forward(&tape);
  tape.backward(loss);

  std::vector<std::vector<D>> ad;
  ad.reserve(p.inputs.size());
  for (auto& in : p.inputs) ad.push_back(in.grad());

  for (size_t which = 0; which < p.inputs.size(); ++which) {
    Tens& in = p.inputs[which];
    for (int64_t e = 0; e < in.numel(); ++e) {
      if (!p.skip.empty() && !p.skip[which].empty() &&
          p.skip[which][static_cast<size_t>(e)])
        continue;
      const D orig = in.data()[e];
      in.data()[e] = orig + kStep;
      const D lp = p.forward(nullptr).item();
      in.data()[e] = orig - kStep;
      const D lm = p.forward(nullptr).item();
      in.data()[e] = orig;
      const D fd = (lp - lm) / (2.0 * kStep);
      const double err = rel_err(ad[which][static_cast<size_t>(e)], fd);
      rep.max_rel_err = std::max(rep.max_rel_err, err);
      ++rep.comparisons;
    }
  }
}

// --- problem builders, one per checked op -------------------------------

Problem make_conv3d(Rng& rng) {
  Problem p;
  auto x = random_tensor(Shape{1, 2, 3, 4, 4}, rng);
  auto k = random_tensor(Shape{2, 2, 3, 3, 3}, rng);
  auto b = random_tensor(Shape{2}, rng);
  auto coefs = random_tensor(Shape{1, 2, 3, 4, 4}, rng);
  p.inputs = {x, k, b};
  p.forward = [x, k, b, coefs](Tape<D>* tape) {
    return probe(tape, conv3d(tape, x, k, b), coefs);
  };
  return p;
}

Problem make_maxpool(Rng& rng) {
  Problem p;
  auto x = random_tensor(Shape{1, 2, 2, 4, 4}, rng);
  auto coefs = random_tensor(Shape{1, 2, 2, 2, 2}, rng);
  // exclude whole windows whose top two values are within 1e-3
  std::vector<char> skip(static_cast<size_t>(x.numel()), 0);
  const int64_t planes = 1 * 2 * 2;
  for (int64_t pl = 0; pl < planes; ++pl)
    for (int64_t i = 0; i < 2; ++i)
      for (int64_t j = 0; j < 2; ++j) {
        const int64_t base = pl * 16 + (2 * i) * 4 + 2 * j;
        const int64_t idx[4] = {base, base + 1, base + 4, base + 5};
        double best = -1e300, second = -1e300;
        for (int64_t q : idx) {
          const double v = x.data()[q];
          if (v > best) {
            second = best;
            best = v;
          } else if (v > second) {
            second = v;
          }
        }
        if (best - second < 1e-3)
          for (int64_t q : idx) skip[static_cast<size_t>(q)] = 1;
      }
  p.inputs = {x};
  p.skip = {skip};
  p.forward = [x, coefs](Tape<D>* tape) {
    return probe(tape, maxpool_spatial(tape, x), coefs);
  };
  return p;
}

Problem make_affine(Rng& rng) {
  Problem p;
  auto x = random_tensor(Shape{3, 4}, rng);
  auto w = random_tensor(Shape{4, 5}, rng);
  auto b = random_tensor(Shape{5}, rng);
  auto coefs = random_tensor(Shape{3, 5}, rng);
  p.inputs = {x, w, b};
  p.forward = [x, w, b, coefs](Tape<D>* tape) {
    return probe(tape, affine(tape, x, w, b), coefs);
  };
  return p;
}

Problem make_pointwise(Rng& rng, Pointwise kind) {
  Problem p;
  auto x = random_tensor(Shape{3, 7}, rng, -2.0, 2.0);
  auto coefs = random_tensor(Shape{3, 7}, rng);
  std::vector<char> skip(static_cast<size_t>(x.numel()), 0);
  if (kind == Pointwise::relu)
    for (int64_t i = 0; i < x.numel(); ++i)
      if (std::abs(x.data()[i]) <= 1e-3) skip[static_cast<size_t>(i)] = 1;
  p.inputs = {x};
  p.skip = {skip};
  p.forward = [x, coefs, kind](Tape<D>* tape) {
    return probe(tape, pointwise(tape, x, kind), coefs);
  };
  return p;
}

Problem make_softmax(Rng& rng) {
  Problem p;
  auto x = random_tensor(Shape{3, 5}, rng, -3.0, 3.0);
  auto coefs = random_tensor(Shape{3, 5}, rng);
  p.inputs = {x};
  p.forward = [x, coefs](Tape<D>* tape) {
    return probe(tape, softmax(tape, x), coefs);
  };
  return p;
}

Problem make_softmax_cross_entropy(Rng& rng) {
  Problem p;
  auto x = random_tensor(Shape{4, 6}, rng, -2.0, 2.0);
  std::vector<int64_t> targets;
  for (int i = 0; i < 4; ++i) targets.push_back(rng.uniform_int(6));
  p.inputs = {x};
  p.forward = [x, targets](Tape<D>* tape) {
    return cross_entropy(tape, softmax(tape, x), targets);
  };
  return p;
}

Problem make_concat(Rng& rng) {
  Problem p;
  auto a = random_tensor(Shape{2, 3}, rng);
  auto b = random_tensor(Shape{2, 4}, rng);
  auto coefs = random_tensor(Shape{2, 7}, rng);
  p.inputs = {a, b};
  p.forward = [a, b, coefs](Tape<D>* tape) {
    return probe(tape, concat(tape, a, b), coefs);
  };
  return p;
}

Problem make_mean_axis(Rng& rng) {
  Problem p;
  auto x = random_tensor(Shape{2, 3, 4}, rng);
  const int64_t axis = rng.uniform_int(3);
  std::vector<Extent> out_dims;
  for (int64_t i = 0; i < 3; ++i)
    if (i != axis) out_dims.push_back(x.shape()[i]);
  auto coefs = random_tensor(Shape(out_dims), rng);
  p.inputs = {x};
  p.forward = [x, coefs, axis](Tape<D>* tape) {
    return probe(tape, mean_axis(tape, x, axis), coefs);
  };
  return p;
}

Problem make_embedding(Rng& rng) {
  Problem p;
  auto table = random_tensor(Shape{5, 3}, rng);
  std::vector<int64_t> ids;
  for (int i = 0; i < 6; ++i) ids.push_back(rng.uniform_int(5));
  auto coefs = random_tensor(Shape{6, 3}, rng);
  p.inputs = {table};
  p.forward = [table, ids, coefs](Tape<D>* tape) {
    return probe(tape, embedding(tape, table, ids), coefs);
  };
  return p;
}

// Three chained steps so the recurrent path (h and c reuse) is exercised.
Problem make_lstm_step(Rng& rng) {
  Problem p;
  const int64_t n = 3, hidden = 2, batch = 2;
  auto x0 = random_tensor(Shape{batch, n}, rng);
  auto x1 = random_tensor(Shape{batch, n}, rng);
  auto x2 = random_tensor(Shape{batch, n}, rng);
  auto h0 = random_tensor(Shape{batch, hidden}, rng);
  auto c0 = random_tensor(Shape{batch, hidden}, rng);
  auto w_ih = random_tensor(Shape{n, 4 * hidden}, rng);
  auto w_hh = random_tensor(Shape{hidden, 4 * hidden}, rng);
  auto bias = random_tensor(Shape{4 * hidden}, rng);
  auto coefs_h = random_tensor(Shape{batch, hidden}, rng);
  auto coefs_c = random_tensor(Shape{batch, hidden}, rng);
  p.inputs = {x0, x1, x2, h0, c0, w_ih, w_hh, bias};
  p.forward = [=](Tape<D>* tape) {
    auto [h1, c1] = lstm_step(tape, x0, h0, c0, w_ih, w_hh, bias);
    auto [h2, c2] = lstm_step(tape, x1, h1, c1, w_ih, w_hh, bias);
    auto [h3, c3] = lstm_step(tape, x2, h2, c2, w_ih, w_hh, bias);
    return add(tape, probe(tape, h3, coefs_h), probe(tape, c3, coefs_c));
  };
  return p;
}

using Maker = std::function<Problem(Rng&)>;

const std::vector<std::pair<std::string, Maker>>& op_table() {
  static const std::vector<std::pair<std::string, Maker>> table = {
      {"conv3d", make_conv3d},
      {"maxpool_spatial", make_maxpool},
      {"affine", make_affine},
      {"relu", [](Rng& r) { return make_pointwise(r, Pointwise::relu); }},
      {"sigmoid", [](Rng& r) { return make_pointwise(r, Pointwise::sigmoid); }},
      {"tanh", [](Rng& r) { return make_pointwise(r, Pointwise::tanh); }},
      {"softmax", make_softmax},
      {"softmax_cross_entropy", make_softmax_cross_entropy},
      {"concat", make_concat},
      {"mean_axis", make_mean_axis},
      {"embedding", make_embedding},
      {"lstm_step", make_lstm_step},
  };
  return table;
}

}  // namespace

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3});
}

std::vector<std::string> op_names() {
  std::vector<std::string> names;
  for (const auto& [name, maker] : op_table()) names.push_back(name);
  names.push_back("full_model");
  names.push_back("caption_decoder");
  return names;
}


OpReport check_op(const std::string& name, int seeds) {
  if (name == "full_model") return check_full_model(seeds);
  if (name == "caption_decoder") return check_caption_decoder(seeds);
  for (const auto& [op, maker] : op_table()) {
    if (op != name) continue;
    OpReport rep{op};
    const auto start = std::chrono::steady_clock::now();
    for (int s = 0; s < seeds; ++s) {
      Rng rng(derive_seed(0xC0FFEEull, op, static_cast<uint64_t>(s)));
      Problem p = maker(rng);
      run_problem(p, rep);
    }
    rep.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    return rep;
  }
  HV_REQUIRE(false, "grad-check: unknown op '", name, "'");
  return {};
}

std::vector<OpReport> run_all(int seeds) {
  std::vector<OpReport> reports;
  for (const auto& name : op_names()) reports.push_back(check_op(name, seeds));
  return reports;
}

bool all_pass(const std::vector<OpReport>& reports, double tol) {
  for (const auto& r : reports)
    if (r.max_rel_err > tol || r.comparisons == 0) return false;
  return true;
}

}  // namespace hiervid::gradcheck
