#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "testutil.hpp"
#include "xlrec/adam.hpp"
#include "xlrec/autodiff.hpp"
#include "xlrec/errors.hpp"
#include "xlrec/tensor.hpp"

using namespace xlrec;
using testutil::group_rel_error;
using testutil::random_tensor;

TEST_CASE("matmul identity and zero") {
  const Tensor a = Tensor::matrix(2, 2, {1, 2, 3, 4});
  const Tensor eye = Tensor::matrix(2, 2, {1, 0, 0, 1});
  const Tensor zero = Tensor::matrix(2, 2, {0, 0, 0, 0});
  CHECK(matmul(eye, a).data == a.data);
  CHECK(matmul(a, zero).data == zero.data);
}

TEST_CASE("matmul hand-multiplication oracle") {
  const Tensor a = Tensor::matrix(2, 2, {1, 2, 3, 4});
  const Tensor b = Tensor::matrix(2, 2, {5, 6, 7, 8});
  // [[1*5+2*7, 1*6+2*8], [3*5+4*7, 3*6+4*8]]
  const Tensor c = matmul(a, b);
  CHECK(c.data == std::vector<double>{19, 22, 43, 50});
}

TEST_CASE("matmul shape mismatch names both shapes") {
  const Tensor a = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  const Tensor b = Tensor::matrix(2, 2, {1, 2, 3, 4});
  try {
    matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[2x2]") != std::string::npos);
  }
}

TEST_CASE("softmax uniform, singleton and closed form") {
  const Tensor uniform = softmax(Tensor::row({3.7, 3.7, 3.7, 3.7}));
  for (double v : uniform.data) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));

  CHECK(softmax(Tensor::row({42.0})).data[0] == doctest::Approx(1.0));

  // e^0 / (e^0 + e^{ln 2}) = 1/3
  const Tensor two = softmax(Tensor::row({0.0, std::log(2.0)}));
  CHECK(two.data[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(two.data[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("softmax sums to one and shift invariance") {
  Rng rng(11);
  for (int it = 0; it < 50; ++it) {
    const Tensor v = random_tensor({7}, rng, -30.0, 30.0);
    const Tensor s = softmax(v);
    double sum = 0.0;
    for (double x : s.data) sum += x;
    CHECK(std::abs(sum - 1.0) <= 1e-12);

    Tensor shifted = v;
    for (double& x : shifted.data) x += 123.456;
    const Tensor s2 = softmax(shifted);
    for (std::size_t i = 0; i < s.data.size(); ++i)
      CHECK(std::abs(s.data[i] - s2.data[i]) <= 1e-10);
  }
}

TEST_CASE("softmax rejects empty input") {
  Tensor empty;
  CHECK_THROWS_AS(softmax(empty), DimensionError);
}

TEST_CASE("backward: loss = x^2 at x = 3 gives gradient 6") {
  Tensor x = Tensor::scalar(3.0);
  Graph g;
  Var xv = g.param(0, x);
  Var loss = g.mul_elem(xv, xv);
  auto grads = g.backward(loss, {&x});
  CHECK(grads[0].data[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("backward: constant loss leaves all gradients zero") {
  Tensor w = Tensor::matrix(2, 2, {1, 2, 3, 4});
  Graph g;
  g.param(0, w);  // registered but unused by the loss
  Var loss = g.input(Tensor::scalar(5.0));
  auto grads = g.backward(loss, {&w});
  for (double v : grads[0].data) CHECK(v == 0.0);
}

TEST_CASE("backward rejects non-scalar losses") {
  Tensor w = Tensor::matrix(2, 2, {1, 2, 3, 4});
  Graph g;
  Var wv = g.param(0, w);
  CHECK_THROWS_AS(g.backward(g.add(wv, wv), {&w}), ContractError);
}

namespace {

// Three-layer composition touching every differentiable op.
double composite_loss(Graph& g, const std::vector<Tensor>& params,
                      std::vector<Tensor>* grads_out = nullptr) {
  Var w0 = g.param(0, params[0]);  // 4x3
  Var w1 = g.param(1, params[1]);  // 3x3
  Var w2 = g.param(2, params[2]);  // 1x3 row bias
  Var q = g.param(3, params[3]);   // 3x1

  Var table = g.param(4, params[4]);  // 6x4 embedding-style table
  Var x = g.lookup_rows(table, {0, 2, 5});

  Var h1 = g.tanh(g.matmul(x, w0));                       // 3x3
  Var h2 = g.add_rowvec(g.matmul(h1, w1), w2);            // 3x3
  Var att = g.softmax_rows(g.scale(g.matmul(h2, g.transpose(h2)), 0.5));
  Var mixed = g.matmul(att, h2);
  Var both = g.concat_cols({mixed, h1});                  // 3x6
  Var rows = g.concat_rows({both, g.scale(both, -1.0)});  // 6x6
  Var gated = g.mul_elem(rows, rows);
  Var scores = g.matmul(g.tanh(g.matmul(gated, g.concat_rows({w1, w1}))), q);
  Var loss = g.softmax_xent_rows(g.transpose(scores), {2});
  if (grads_out != nullptr) {
    std::vector<const Tensor*> ptrs;
    for (const Tensor& t : params) ptrs.push_back(&t);
    *grads_out = g.backward(loss, ptrs);
  }
  return g.value(loss).item();
}

}  // namespace

TEST_CASE("backward matches central finite differences on a 3-layer composition") {
  Rng rng(1234);
  std::vector<Tensor> params;
  params.push_back(random_tensor({4, 3}, rng));
  params.push_back(random_tensor({3, 3}, rng));
  params.push_back(random_tensor({1, 3}, rng));
  params.push_back(random_tensor({3, 1}, rng));
  params.push_back(random_tensor({6, 4}, rng));

  std::vector<Tensor> grads;
  {
    Graph g;
    composite_loss(g, params, &grads);
  }
  auto eval = [&]() {
    Graph g;
    return composite_loss(g, params);
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double rel = group_rel_error(params[i], grads[i], eval, rng);
    INFO("parameter ", i);
    CHECK(rel <= 1e-4);
  }
}

TEST_CASE("backward: parameters the loss ignores get exactly-zero gradients") {
  Rng rng(7);
  Tensor used = random_tensor({2, 2}, rng);
  Tensor unused = random_tensor({3, 3}, rng);
  Graph g;
  Var u = g.param(0, used);
  g.param(1, unused);
  Var loss = g.softmax_xent_rows(g.mul_elem(u, u), {1, 0});
  auto grads = g.backward(loss, {&used, &unused});
  bool any_nonzero = false;
  for (double v : grads[0].data) any_nonzero |= v != 0.0;
  CHECK(any_nonzero);
  for (double v : grads[1].data) CHECK(v == 0.0);
}

TEST_CASE("forward and backward are bit-reproducible") {
  Rng rng(99);
  std::vector<Tensor> params;
  params.push_back(random_tensor({4, 3}, rng));
  params.push_back(random_tensor({3, 3}, rng));
  params.push_back(random_tensor({1, 3}, rng));
  params.push_back(random_tensor({3, 1}, rng));
  params.push_back(random_tensor({6, 4}, rng));

  std::vector<Tensor> g1, g2;
  double v1, v2;
  {
    Graph g;
    v1 = composite_loss(g, params, &g1);
  }
  {
    Graph g;
    v2 = composite_loss(g, params, &g2);
  }
  CHECK(std::memcmp(&v1, &v2, sizeof(double)) == 0);
  for (std::size_t i = 0; i < g1.size(); ++i)
    CHECK(std::memcmp(g1[i].data.data(), g2[i].data.data(),
                      g1[i].data.size() * sizeof(double)) == 0);
}

TEST_CASE("adam: zero gradient with zero moments leaves parameters unchanged") {
  Tensor p = Tensor::row({1.5, -2.0});
  AdamState state = AdamState::init({&p});
  const std::vector<double> before = p.data;
  adam_step({&p}, {Tensor({1, 2})}, state, 0.001);
  CHECK(p.data == before);
  CHECK(state.step_count == 1);
}

TEST_CASE("adam: zero learning rate leaves parameters unchanged") {
  Tensor p = Tensor::row({1.5, -2.0});
  AdamState state = AdamState::init({&p});
  Tensor g = Tensor::row({0.3, -0.7});
  const std::vector<double> before = p.data;
  adam_step({&p}, {g}, state, 0.0);
  CHECK(p.data == before);
}

TEST_CASE("adam: bias-corrected first step is about lr * sign(g)") {
  Tensor p = Tensor::scalar(1.0);
  AdamState state = AdamState::init({&p});
  adam_step({&p}, {Tensor::scalar(2.0)}, state, 0.001);
  // First-step update: lr * g / (sqrt(g^2) + eps) ~= lr.
  CHECK(p.data[0] == doctest::Approx(1.0 - 0.001).epsilon(1e-7));
}

TEST_CASE("adam rejects negative learning rates and shape mismatches") {
  Tensor p = Tensor::scalar(1.0);
  AdamState state = AdamState::init({&p});
  CHECK_THROWS_AS(adam_step({&p}, {Tensor::scalar(1.0)}, state, -0.1),
                  ContractError);
  CHECK_THROWS_AS(adam_step({&p}, {Tensor::row({1.0, 2.0})}, state, 0.1),
                  DimensionError);
}

TEST_CASE("per-op gradients match finite differences on random inputs") {
  Rng rng(4321);
  // Each case wires a single op between parameters and a scalar readout.
  auto readout = [](Graph& g, Var m) {
    // sum of softmax-xent over a single row keeps the output scalar and
    // depends smoothly on every entry.
    const Tensor& t = g.value(m);
    Var flat = t.rows() == 1 ? m : g.transpose(m);
    if (g.value(flat).rows() != 1) {
      // General matrix: fold columns with a fixed non-uniform vector
      // (uniform folding would cancel softmax rows, which sum to 1).
      Tensor fold({g.value(m).cols(), 1});
      for (std::size_t i = 0; i < fold.data.size(); ++i)
        fold.data[i] = 0.25 * static_cast<double>(i + 1);
      flat = g.transpose(g.matmul(m, g.input(fold)));
    }
    return g.softmax_xent_rows(flat, {0});
  };

  for (int op = 0; op < 8; ++op) {
    std::vector<Tensor> params = {random_tensor({3, 4}, rng),
                                  random_tensor({4, 3}, rng)};
    auto build = [&](Graph& g, std::vector<Tensor>* grads) {
      Var a = g.param(0, params[0]);
      Var b = g.param(1, params[1]);
      Var y;
      switch (op) {
        case 0: y = g.matmul(a, b); break;
        case 1: y = g.tanh(a); break;
        case 2: y = g.softmax_rows(a); break;
        case 3: y = g.add(a, g.transpose(b)); break;
        case 4: y = g.mul_elem(a, g.transpose(b)); break;
        case 5: y = g.scale(a, -1.7); break;
        case 6: y = g.concat_cols({a, g.transpose(b)}); break;
        case 7: y = g.concat_rows({a, g.transpose(b)}); break;
      }
      Var loss = readout(g, y);
      if (grads != nullptr) {
        *grads = g.backward(loss, {&params[0], &params[1]});
      }
      return g.value(loss).item();
    };
    std::vector<Tensor> grads;
    {
      Graph g;
      build(g, &grads);
    }
    auto eval = [&]() {
      Graph g;
      return build(g, nullptr);
    };
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double rel = group_rel_error(params[i], grads[i], eval, rng);
      INFO("op ", op, " parameter ", i);
      CHECK(rel <= 1e-4);
    }
  }
}
