#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. A Graph records every operation applied to its nodes; calling
// backward() on a 1x1 node walks the record in reverse and accumulates
// gradients into every node that requires them.
//
// The graph is templated on the scalar so the same model code runs in float
// for training and in double for finite-difference gradient checks.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace sps::ad {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Handle to a node inside a Graph. Only meaningful for the graph that
/// produced it.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

template <class T>
class Graph {
 public:
  using Matrix = Mat<T>;
  using Backward = std::function<void(Graph&, const Matrix& out_grad)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Matrix value) { return push(std::move(value), false, nullptr); }
  Var leaf(Matrix value, bool requires_grad) {
    return push(std::move(value), requires_grad, nullptr);
  }

  /// Records a node computed outside the built-in op set. `backward` receives
  /// the node's output gradient and must accumulate into its inputs through
  /// accumulate(). It is dropped when `requires_grad` is false.
  Var record(Matrix value, bool requires_grad, Backward backward) {
    return push(std::move(value), requires_grad,
                requires_grad ? std::move(backward) : nullptr);
  }

  const Matrix& value(Var v) const { return node(v).value; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Accumulated gradient of a node, or nullptr when nothing reached it.
  const Matrix* grad(Var v) const {
    const Node& n = node(v);
    return n.grad.size() ? &n.grad : nullptr;
  }

  /// Adds `delta` into the gradient of `v` when v requires gradients.
  template <class Expr>
  void accumulate(Var v, const Expr& delta) {
    Node& n = node(v);
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = delta;
    } else {
      n.grad += delta;
    }
  }

  /// Reverse sweep from a scalar root.
  void backward(Var root) {
    Node& r = node(root);
    if (r.value.rows() != 1 || r.value.cols() != 1) {
      throw std::invalid_argument("backward() needs a 1x1 root");
    }
    if (!r.requires_grad) return;
    r.grad = Matrix::Ones(1, 1);
    for (int id = root.id; id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (n.backward && n.grad.size() != 0) {
        // The closure may push grads into lower ids only, so the reference
        // stays valid: nodes_ does not grow during backward.
        n.backward(*this, n.grad);
      }
    }
  }

  // ---- operations -------------------------------------------------------

  Var matmul(Var a, Var b) {
    Matrix out = value(a) * value(b);
    return record(std::move(out), any_grad(a, b),
                  [a, b](Graph& g, const Matrix& dy) {
                    if (g.requires_grad(a)) g.accumulate(a, dy * g.value(b).transpose());
                    if (g.requires_grad(b)) g.accumulate(b, g.value(a).transpose() * dy);
                  });
  }

  /// a * b^T
  Var matmul_nt(Var a, Var b) {
    Matrix out = value(a) * value(b).transpose();
    return record(std::move(out), any_grad(a, b),
                  [a, b](Graph& g, const Matrix& dy) {
                    if (g.requires_grad(a)) g.accumulate(a, dy * g.value(b));
                    if (g.requires_grad(b)) g.accumulate(b, dy.transpose() * g.value(a));
                  });
  }

  /// x * w^T + bias, with w stored (out x in) and bias a 1 x out row.
  Var linear(Var x, Var w, Var bias = {}) {
    Matrix out = value(x) * value(w).transpose();
    if (bias.valid()) out.rowwise() += value(bias).row(0);
    const bool rg = any_grad(x, w) || (bias.valid() && requires_grad(bias));
    return record(std::move(out), rg, [x, w, bias](Graph& g, const Matrix& dy) {
      if (g.requires_grad(x)) g.accumulate(x, dy * g.value(w));
      if (g.requires_grad(w)) g.accumulate(w, dy.transpose() * g.value(x));
      if (bias.valid() && g.requires_grad(bias)) g.accumulate(bias, dy.colwise().sum());
    });
  }

  /// Elementwise sum. `b` may also be a single row broadcast over a's rows.
  Var add(Var a, Var b) {
    const Matrix& av = value(a);
    const Matrix& bv = value(b);
    const bool broadcast = bv.rows() == 1 && av.rows() != 1;
    check_same_cols(av, bv);
    if (!broadcast && av.rows() != bv.rows()) throw std::invalid_argument("add: shape mismatch");
    Matrix out = av;
    if (broadcast) {
      out.rowwise() += bv.row(0);
    } else {
      out += bv;
    }
    return record(std::move(out), any_grad(a, b),
                  [a, b, broadcast](Graph& g, const Matrix& dy) {
                    g.accumulate(a, dy);
                    if (!g.requires_grad(b)) return;
                    if (broadcast) {
                      g.accumulate(b, dy.colwise().sum());
                    } else {
                      g.accumulate(b, dy);
                    }
                  });
  }

  Var scale(Var a, T s) {
    Matrix out = value(a) * s;
    return record(std::move(out), requires_grad(a),
                  [a, s](Graph& g, const Matrix& dy) { g.accumulate(a, dy * s); });
  }

  /// tanh approximation of GELU.
  Var gelu(Var a) {
    const Matrix& x = value(a);
    Matrix out(x.rows(), x.cols());
    const T c = static_cast<T>(0.7978845608028654);
    const T k = static_cast<T>(0.044715);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const T v = x.data()[i];
      out.data()[i] = T(0.5) * v * (T(1) + std::tanh(c * (v + k * v * v * v)));
    }
    return record(std::move(out), requires_grad(a), [a, c, k](Graph& g, const Matrix& dy) {
      const Matrix& x = g.value(a);
      Matrix dx(x.rows(), x.cols());
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        const T v = x.data()[i];
        const T t = std::tanh(c * (v + k * v * v * v));
        const T d = T(0.5) * (T(1) + t) + T(0.5) * v * (T(1) - t * t) * c * (T(1) + T(3) * k * v * v);
        dx.data()[i] = dy.data()[i] * d;
      }
      g.accumulate(a, dx);
    });
  }

  Var sigmoid(Var a) {
    Matrix out = value(a).unaryExpr([](T v) { return T(1) / (T(1) + std::exp(-v)); });
    const int out_id = static_cast<int>(nodes_.size());
    return record(std::move(out), requires_grad(a), [a, out_id](Graph& g, const Matrix& dy) {
      const Matrix& y = g.nodes_[static_cast<std::size_t>(out_id)].value;
      g.accumulate(a, dy.cwiseProduct(y.cwiseProduct((T(1) - y.array()).matrix())));
    });
  }

  /// Row-wise layer normalization with affine gain/bias rows.
  Var layer_norm(Var x, Var gamma, Var beta, T eps = T(1e-5)) {
    const Matrix& xv = value(x);
    const Eigen::Index n = xv.rows();
    const Eigen::Index d = xv.cols();
    auto xhat = std::make_shared<Matrix>(n, d);
    auto inv_std = std::make_shared<Eigen::Matrix<T, Eigen::Dynamic, 1>>(n);
    for (Eigen::Index r = 0; r < n; ++r) {
      const T mu = xv.row(r).mean();
      const T var = (xv.row(r).array() - mu).square().mean();
      const T is = T(1) / std::sqrt(var + eps);
      (*inv_std)(r) = is;
      xhat->row(r) = (xv.row(r).array() - mu) * is;
    }
    Matrix out = xhat->array().rowwise() * value(gamma).row(0).array();
    out.rowwise() += value(beta).row(0);
    const bool rg = requires_grad(x) || requires_grad(gamma) || requires_grad(beta);
    return record(std::move(out), rg,
                  [x, gamma, beta, xhat, inv_std](Graph& g, const Matrix& dy) {
                    const Matrix& xh = *xhat;
                    if (g.requires_grad(gamma)) g.accumulate(gamma, dy.cwiseProduct(xh).colwise().sum());
                    if (g.requires_grad(beta)) g.accumulate(beta, dy.colwise().sum());
                    if (!g.requires_grad(x)) return;
                    Matrix dxh = dy.array().rowwise() * g.value(gamma).row(0).array();
                    const T inv_d = T(1) / static_cast<T>(xh.cols());
                    Matrix dx(xh.rows(), xh.cols());
                    for (Eigen::Index r = 0; r < xh.rows(); ++r) {
                      const T m1 = dxh.row(r).sum() * inv_d;
                      const T m2 = dxh.row(r).dot(xh.row(r)) * inv_d;
                      dx.row(r) = (dxh.row(r).array() - m1 - xh.row(r).array() * m2) * (*inv_std)(r);
                    }
                    g.accumulate(x, dx);
                  });
  }

  /// Multi-head scaled dot-product attention. q is (Nq x D), k and v are
  /// (Nk x D); heads split D into contiguous column blocks.
  Var attention(Var q, Var k, Var v, int heads) {
    const Matrix& Q = value(q);
    const Matrix& K = value(k);
    const Matrix& V = value(v);
    const Eigen::Index dim = Q.cols();
    if (K.cols() != dim || V.cols() != dim || K.rows() != V.rows() || heads <= 0 || dim % heads != 0) {
      throw std::invalid_argument("attention: shape mismatch");
    }
    const Eigen::Index dh = dim / heads;
    const T s = T(1) / std::sqrt(static_cast<T>(dh));
    auto probs = std::make_shared<std::vector<Matrix>>(static_cast<std::size_t>(heads));
    Matrix out(Q.rows(), dim);
    for (int h = 0; h < heads; ++h) {
      Matrix& P = (*probs)[static_cast<std::size_t>(h)];
      P.noalias() = Q.middleCols(h * dh, dh) * K.middleCols(h * dh, dh).transpose();
      P *= s;
      for (Eigen::Index r = 0; r < P.rows(); ++r) {
        const T m = P.row(r).maxCoeff();
        P.row(r) = (P.row(r).array() - m).exp();
        P.row(r) /= P.row(r).sum();
      }
      out.middleCols(h * dh, dh).noalias() = P * V.middleCols(h * dh, dh);
    }
    const bool rg = requires_grad(q) || requires_grad(k) || requires_grad(v);
    return record(std::move(out), rg, [q, k, v, heads, dh, s, probs](Graph& g, const Matrix& dy) {
      const Matrix& Q = g.value(q);
      const Matrix& K = g.value(k);
      const Matrix& V = g.value(v);
      Matrix dq = Matrix::Zero(Q.rows(), Q.cols());
      Matrix dk = Matrix::Zero(K.rows(), K.cols());
      Matrix dv = Matrix::Zero(V.rows(), V.cols());
      Matrix dp;
      for (int h = 0; h < heads; ++h) {
        const Matrix& P = (*probs)[static_cast<std::size_t>(h)];
        const auto dyh = dy.middleCols(h * dh, dh);
        dv.middleCols(h * dh, dh).noalias() += P.transpose() * dyh;
        dp.noalias() = dyh * V.middleCols(h * dh, dh).transpose();
        const Eigen::Matrix<T, Eigen::Dynamic, 1> rs = dp.cwiseProduct(P).rowwise().sum();
        Matrix ds = P.cwiseProduct((dp.colwise() - rs));
        ds *= s;
        dq.middleCols(h * dh, dh).noalias() += ds * K.middleCols(h * dh, dh);
        dk.middleCols(h * dh, dh).noalias() += ds.transpose() * Q.middleCols(h * dh, dh);
      }
      g.accumulate(q, dq);
      g.accumulate(k, dk);
      g.accumulate(v, dv);
    });
  }

  Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
    Eigen::Index rows = 0;
    const Eigen::Index cols = value(parts[0]).cols();
    bool rg = false;
    for (Var p : parts) {
      if (value(p).cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
      rows += value(p).rows();
      rg = rg || requires_grad(p);
    }
    Matrix out(rows, cols);
    Eigen::Index at = 0;
    for (Var p : parts) {
      out.middleRows(at, value(p).rows()) = value(p);
      at += value(p).rows();
    }
    std::vector<Var> inputs(parts.begin(), parts.end());
    return record(std::move(out), rg, [inputs](Graph& g, const Matrix& dy) {
      Eigen::Index at = 0;
      for (Var p : inputs) {
        const Eigen::Index r = g.value(p).rows();
        g.accumulate(p, dy.middleRows(at, r));
        at += r;
      }
    });
  }

  Var slice_rows(Var a, Eigen::Index begin, Eigen::Index count) {
    const Matrix& av = value(a);
    if (begin < 0 || count < 0 || begin + count > av.rows()) {
      throw std::invalid_argument("slice_rows: out of range");
    }
    Matrix out = av.middleRows(begin, count);
    return record(std::move(out), requires_grad(a), [a, begin, count](Graph& g, const Matrix& dy) {
      const Matrix& av = g.value(a);
      Matrix full = Matrix::Zero(av.rows(), av.cols());
      full.middleRows(begin, count) = dy;
      g.accumulate(a, full);
    });
  }

  /// Rearranges a (grid^2 x factor^2*C) cell-major array into a
  /// ((grid*factor)^2 x C) pixel-major array: every cell expands into a
  /// factor x factor block of pixels.
  Var pixel_shuffle(Var a, int grid, int factor) {
    const Matrix& av = value(a);
    const Eigen::Index ff = static_cast<Eigen::Index>(factor) * factor;
    if (av.rows() != static_cast<Eigen::Index>(grid) * grid || av.cols() % ff != 0) {
      throw std::invalid_argument("pixel_shuffle: shape mismatch");
    }
    const Eigen::Index c = av.cols() / ff;
    const int side = grid * factor;
    Matrix out(static_cast<Eigen::Index>(side) * side, c);
    for_each_shuffle(grid, factor, [&](Eigen::Index src_row, Eigen::Index src_col, Eigen::Index dst_row) {
      out.row(dst_row) = av.row(src_row).segment(src_col, c);
    }, c);
    return record(std::move(out), requires_grad(a), [a, grid, factor, c](Graph& g, const Matrix& dy) {
      const Matrix& av = g.value(a);
      Matrix dx(av.rows(), av.cols());
      for_each_shuffle(grid, factor, [&](Eigen::Index src_row, Eigen::Index src_col, Eigen::Index dst_row) {
        dx.row(src_row).segment(src_col, c) = dy.row(dst_row);
      }, c);
      g.accumulate(a, dx);
    });
  }

  /// Same value, but gradients never flow back through it.
  Var stop_gradient(Var a) { return constant(value(a)); }

  /// Sum of 1x1 nodes weighted by `weights`.
  Var weighted_sum(std::span<const Var> terms, std::span<const T> weights) {
    if (terms.size() != weights.size() || terms.empty()) {
      throw std::invalid_argument("weighted_sum: size mismatch");
    }
    T total = 0;
    bool rg = false;
    for (std::size_t i = 0; i < terms.size(); ++i) {
      total += weights[i] * value(terms[i])(0, 0);
      rg = rg || requires_grad(terms[i]);
    }
    Matrix out(1, 1);
    out(0, 0) = total;
    std::vector<Var> ts(terms.begin(), terms.end());
    std::vector<T> ws(weights.begin(), weights.end());
    return record(std::move(out), rg, [ts, ws](Graph& g, const Matrix& dy) {
      for (std::size_t i = 0; i < ts.size(); ++i) g.accumulate(ts[i], dy * ws[i]);
    });
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
  };

  Var push(Matrix value, bool requires_grad, Backward backward) {
    nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, std::move(backward)});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Node& node(Var v) {
    if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) throw std::out_of_range("invalid Var");
    return nodes_[static_cast<std::size_t>(v.id)];
  }
  const Node& node(Var v) const {
    if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) throw std::out_of_range("invalid Var");
    return nodes_[static_cast<std::size_t>(v.id)];
  }

  bool any_grad(Var a, Var b) const { return requires_grad(a) || requires_grad(b); }

  static void check_same_cols(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw std::invalid_argument("shape mismatch");
  }

  template <class F>
  static void for_each_shuffle(int grid, int factor, F&& f, Eigen::Index c) {
    const Eigen::Index side = static_cast<Eigen::Index>(grid) * factor;
    for (int gr = 0; gr < grid; ++gr) {
      for (int gc = 0; gc < grid; ++gc) {
        const Eigen::Index src_row = static_cast<Eigen::Index>(gr) * grid + gc;
        for (int dr = 0; dr < factor; ++dr) {
          for (int dc = 0; dc < factor; ++dc) {
            const Eigen::Index dst_row = (static_cast<Eigen::Index>(gr) * factor + dr) * side +
                                         static_cast<Eigen::Index>(gc) * factor + dc;
            f(src_row, (static_cast<Eigen::Index>(dr) * factor + dc) * c, dst_row);
          }
        }
      }
    }
  }

  std::vector<Node> nodes_;
};

}  // namespace sps::ad
