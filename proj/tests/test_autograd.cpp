#include <gtest/gtest.h>

#include <array>
#include <functional>
#include <random>

#include "sps/autograd.hpp"

namespace {

using sps::ad::Graph;
using sps::ad::Var;
using M = sps::ad::Mat<double>;

M random_matrix(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  M m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// Applies the op under test to the leaves.
using Builder = std::function<Var(Graph<double>&, const std::vector<Var>&)>;

// sum(out .* w) for a fixed random w, so every output entry is in play.
Var weighted_total(Graph<double>& g, Var out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const M& v = g.value(out);
  const M w = random_matrix(static_cast<int>(v.rows()), static_cast<int>(v.cols()), rng);
  M total(1, 1);
  total(0, 0) = (v.array() * w.array()).sum();
  return g.record(total, g.requires_grad(out), [out, w](Graph<double>& gg, const M& dy) {
    if (gg.requires_grad(out)) gg.accumulate(out, w * dy(0, 0));
  });
}

void check_gradients(const std::vector<M>& inputs, const Builder& build, double tol = 1e-6) {
  Graph<double> g;
  std::vector<Var> leaves;
  for (const auto& m : inputs) leaves.push_back(g.leaf(m, true));
  Var loss = weighted_total(g, build(g, leaves), 99);
  g.backward(loss);
  const double h = 1e-5;
  for (std::size_t li = 0; li < inputs.size(); ++li) {
    const M* analytic = g.grad(leaves[li]);
    ASSERT_NE(analytic, nullptr) << "input " << li;
    for (Eigen::Index e = 0; e < inputs[li].size(); ++e) {
      auto eval = [&](double delta) {
        std::vector<M> shifted = inputs;
        shifted[li].data()[e] += delta;
        Graph<double> g2;
        std::vector<Var> l2;
        for (const auto& m : shifted) l2.push_back(g2.leaf(m, false));
        return g2.value(weighted_total(g2, build(g2, l2), 99))(0, 0);
      };
      const double fd = (eval(h) - eval(-h)) / (2 * h);
      const double an = analytic->data()[e];
      EXPECT_NEAR(an, fd, tol * std::max(1.0, std::abs(fd))) << "input " << li << " entry " << e;
    }
  }
}

TEST(Autograd, MatmulAndLinear) {
  std::mt19937_64 rng(1);
  check_gradients({random_matrix(3, 4, rng), random_matrix(4, 2, rng)},
                  [](Graph<double>& g, const std::vector<Var>& v) { return g.matmul(v[0], v[1]); });
  check_gradients({random_matrix(3, 4, rng), random_matrix(5, 4, rng)},
                  [](Graph<double>& g, const std::vector<Var>& v) { return g.matmul_nt(v[0], v[1]); });
  check_gradients({random_matrix(3, 4, rng), random_matrix(2, 4, rng), random_matrix(1, 2, rng)},
                  [](Graph<double>& g, const std::vector<Var>& v) { return g.linear(v[0], v[1], v[2]); });
}

TEST(Autograd, ElementwiseOps) {
  std::mt19937_64 rng(2);
  check_gradients({random_matrix(3, 4, rng), random_matrix(1, 4, rng)},
                  [](Graph<double>& g, const std::vector<Var>& v) { return g.add(v[0], v[1]); });
  check_gradients({random_matrix(3, 4, rng)},
                  [](Graph<double>& g, const std::vector<Var>& v) { return g.gelu(v[0]); });
  check_gradients({random_matrix(3, 4, rng)},
                  [](Graph<double>& g, const std::vector<Var>& v) { return g.sigmoid(v[0]); });
  check_gradients({random_matrix(3, 4, rng)},
                  [](Graph<double>& g, const std::vector<Var>& v) { return g.scale(v[0], -2.5); });
}

TEST(Autograd, LayerNorm) {
  std::mt19937_64 rng(3);
  check_gradients({random_matrix(4, 6, rng), random_matrix(1, 6, rng), random_matrix(1, 6, rng)},
                  [](Graph<double>& g, const std::vector<Var>& v) { return g.layer_norm(v[0], v[1], v[2]); });
}

TEST(Autograd, Attention) {
  std::mt19937_64 rng(4);
  check_gradients({random_matrix(3, 8, rng), random_matrix(5, 8, rng), random_matrix(5, 8, rng)},
                  [](Graph<double>& g, const std::vector<Var>& v) { return g.attention(v[0], v[1], v[2], 2); });
}

TEST(Autograd, ShapeOps) {
  std::mt19937_64 rng(5);
  check_gradients({random_matrix(2, 3, rng), random_matrix(4, 3, rng)}, [](Graph<double>& g, const std::vector<Var>& v) {
    const std::array<Var, 2> parts{v[0], v[1]};
    return g.slice_rows(g.concat_rows(parts), 1, 4);
  });
  // 2x2 grid, factor 2, 3 channels: (4) x (2*2*3) -> (16) x 3
  check_gradients({random_matrix(4, 12, rng)},
                  [](Graph<double>& g, const std::vector<Var>& v) { return g.pixel_shuffle(v[0], 2, 2); });
}

TEST(Autograd, PixelShuffleLayout) {
  // One grid cell, factor 2, one channel: the 4 values land row-major in a
  // 2x2 block.
  Graph<double> g;
  M in(1, 4);
  in << 1, 2, 3, 4;
  const M out = g.value(g.pixel_shuffle(g.constant(in), 1, 2));
  ASSERT_EQ(out.rows(), 4);
  EXPECT_EQ(out(0, 0), 1);
  EXPECT_EQ(out(1, 0), 2);
  EXPECT_EQ(out(2, 0), 3);
  EXPECT_EQ(out(3, 0), 4);
}

TEST(Autograd, StopGradientBlocksFlow) {
  Graph<double> g;
  M a(1, 1);
  a << 2.0;
  Var x = g.leaf(a, true);
  Var y = g.matmul(g.stop_gradient(x), x);  // treated as c * x with c = x
  g.backward(y);
  ASSERT_NE(g.grad(x), nullptr);
  EXPECT_DOUBLE_EQ((*g.grad(x))(0, 0), 2.0);
}

TEST(Autograd, WeightedSum) {
  std::mt19937_64 rng(6);
  check_gradients({random_matrix(1, 1, rng), random_matrix(1, 1, rng)}, [](Graph<double>& g, const std::vector<Var>& v) {
    const std::array<Var, 2> terms{v[0], v[1]};
    const std::array<double, 2> w{0.5, -1.5};
    return g.weighted_sum(terms, w);
  });
}

TEST(Autograd, BackwardNeedsScalarRoot) {
  Graph<double> g;
  Var x = g.leaf(M::Ones(2, 2), true);
  EXPECT_THROW(g.backward(x), std::invalid_argument);
}

}  // namespace
