// Minimal reverse-mode automatic differentiation over Eigen matrices.
// A Tape owns value/adjoint storage; ops append nodes and, when gradients
// are enabled, a backward closure. Node handles are plain ints. Gradients
// are validated against central finite differences in the test suite.
#pragma once

#include <Eigen/Dense>
#include <functional>
#include <utility>
#include <vector>

#include "csg/common.hpp"

namespace csg::ad {

using Mat = Eigen::MatrixXd;

class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {
    nodes_.reserve(256);
  }

  bool grad_enabled() const { return grad_enabled_; }

  /// Gradient-tracked leaf owning a copy of the value.
  int leaf(Mat value) {
    nodes_.push_back(Node{std::move(value), nullptr, {}, grad_enabled_});
    return last();
  }

  /// Gradient-tracked leaf referencing external storage. The referenced
  /// matrix must outlive the tape and stay unmodified while it is in use.
  int leaf_ref(const Mat* value) {
    nodes_.push_back(Node{Mat{}, value, {}, grad_enabled_});
    return last();
  }

  /// Untracked constant.
  int constant(Mat value) {
    nodes_.push_back(Node{std::move(value), nullptr, {}, false});
    return last();
  }

  const Mat& value(int id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return n.ext ? *n.ext : n.val;
  }

  /// Adjoint of a node after backward(); zero-sized if never touched.
  const Mat& adjoint(int id) const { return nodes_[static_cast<std::size_t>(id)].adj; }

  // ---- ops ----

  int add(int a, int b) {
    check_same_shape(a, b, "add");
    return unary_or_binary(value(a) + value(b), {a, b}, [this, a, b](const Mat& g) {
      accumulate(a, g);
      accumulate(b, g);
    });
  }

  int sub(int a, int b) {
    check_same_shape(a, b, "sub");
    return unary_or_binary(value(a) - value(b), {a, b}, [this, a, b](const Mat& g) {
      accumulate(a, g);
      accumulate(b, -g);
    });
  }

  int hadamard(int a, int b) {
    check_same_shape(a, b, "hadamard");
    return unary_or_binary(value(a).cwiseProduct(value(b)), {a, b}, [this, a, b](const Mat& g) {
      accumulate(a, g.cwiseProduct(value(b)));
      accumulate(b, g.cwiseProduct(value(a)));
    });
  }

  int scale(int a, double s) {
    return unary_or_binary(value(a) * s, {a}, [this, a, s](const Mat& g) { accumulate(a, g * s); });
  }

  int add_scalar(int a, double s) {
    Mat out = (value(a).array() + s).matrix();
    return unary_or_binary(std::move(out), {a}, [this, a](const Mat& g) { accumulate(a, g); });
  }

  int matmul(int a, int b) {
    return unary_or_binary(value(a) * value(b), {a, b}, [this, a, b](const Mat& g) {
      accumulate(a, g * value(b).transpose());
      accumulate(b, value(a).transpose() * g);
    });
  }

  int transpose(int a) {
    return unary_or_binary(value(a).transpose(), {a},
                           [this, a](const Mat& g) { accumulate(a, g.transpose()); });
  }

  /// Gather rows by index (embedding lookup); backward scatter-adds.
  int rows(int a, std::vector<int> idx) {
    Mat out(static_cast<Eigen::Index>(idx.size()), value(a).cols());
    for (std::size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = value(a).row(idx[k]);
    return unary_or_binary(std::move(out), {a}, [this, a, idx = std::move(idx)](const Mat& g) {
      Mat ga = Mat::Zero(value(a).rows(), value(a).cols());
      for (std::size_t k = 0; k < idx.size(); ++k) ga.row(idx[k]) += g.row(static_cast<Eigen::Index>(k));
      accumulate(a, ga);
    });
  }

  /// 1 x cols row: sum_k w[k] * A.row(k).
  int weighted_rowsum(int a, Eigen::VectorXd w) {
    require(w.size() == value(a).rows(), "weighted_rowsum: weight length mismatch");
    Mat out = w.transpose() * value(a);
    return unary_or_binary(std::move(out), {a}, [this, a, w = std::move(w)](const Mat& g) {
      accumulate(a, w * g);
    });
  }

  /// 1 x C -> n x C broadcast.
  int replicate_row(int a, int n) {
    require(value(a).rows() == 1, "replicate_row: input must be a row");
    return unary_or_binary(value(a).replicate(n, 1), {a}, [this, a](const Mat& g) {
      accumulate(a, g.colwise().sum());
    });
  }

  /// M + row broadcast over all rows of M.
  int add_rowvec(int a, int v) {
    require(value(v).rows() == 1 && value(v).cols() == value(a).cols(), "add_rowvec shape");
    Mat out = value(a);
    out.rowwise() += value(v).row(0);
    return unary_or_binary(std::move(out), {a, v}, [this, a, v](const Mat& g) {
      accumulate(a, g);
      accumulate(v, g.colwise().sum());
    });
  }

  int concat_cols(int a, int b) {
    require(value(a).rows() == value(b).rows(), "concat_cols: row mismatch");
    Mat out(value(a).rows(), value(a).cols() + value(b).cols());
    out << value(a), value(b);
    const Eigen::Index ca = value(a).cols();
    return unary_or_binary(std::move(out), {a, b}, [this, a, b, ca](const Mat& g) {
      accumulate(a, g.leftCols(ca));
      accumulate(b, g.rightCols(g.cols() - ca));
    });
  }

  /// P x C rows: out.row(p) = A.row(i_p) + A.row(j_p).
  int pair_rowsum(int a, std::vector<std::pair<int, int>> pairs) {
    Mat out(static_cast<Eigen::Index>(pairs.size()), value(a).cols());
    for (std::size_t p = 0; p < pairs.size(); ++p)
      out.row(static_cast<Eigen::Index>(p)) = value(a).row(pairs[p].first) + value(a).row(pairs[p].second);
    return unary_or_binary(std::move(out), {a}, [this, a, pairs = std::move(pairs)](const Mat& g) {
      Mat ga = Mat::Zero(value(a).rows(), value(a).cols());
      for (std::size_t p = 0; p < pairs.size(); ++p) {
        ga.row(pairs[p].first) += g.row(static_cast<Eigen::Index>(p));
        ga.row(pairs[p].second) += g.row(static_cast<Eigen::Index>(p));
      }
      accumulate(a, ga);
    });
  }

  /// P x 1 upper-triangle values -> symmetric L x L with zero diagonal.
  int scatter_upper_sym(int a, int L) {
    require(value(a).cols() == 1 && value(a).rows() == n_pairs_of(L), "scatter_upper_sym shape");
    Mat out = Mat::Zero(L, L);
    int p = 0;
    for (int i = 0; i < L; ++i)
      for (int j = i + 1; j < L; ++j, ++p) {
        out(i, j) = value(a)(p, 0);
        out(j, i) = value(a)(p, 0);
      }
    return unary_or_binary(std::move(out), {a}, [this, a, L](const Mat& g) {
      Mat ga(n_pairs_of(L), 1);
      int q = 0;
      for (int i = 0; i < L; ++i)
        for (int j = i + 1; j < L; ++j, ++q) ga(q, 0) = g(i, j) + g(j, i);
      accumulate(a, ga);
    });
  }

  int tanh_op(int a) {
    Mat out = value(a).array().tanh().matrix();
    int id = push(std::move(out), {a});
    if (tracked(id))
      set_backward(id, [this, a, id](const Mat& g) {
        accumulate(a, g.cwiseProduct((1.0 - value(id).array().square()).matrix()));
      });
    return id;
  }

  int sigmoid_op(int a) {
    Mat out = (1.0 / (1.0 + (-value(a).array()).exp())).matrix();
    int id = push(std::move(out), {a});
    if (tracked(id))
      set_backward(id, [this, a, id](const Mat& g) {
        const auto& y = value(id).array();
        accumulate(a, g.cwiseProduct((y * (1.0 - y)).matrix()));
      });
    return id;
  }

  /// Row-wise softmax with max-shift stabilization.
  int softmax_rows(int a) {
    Mat out = value(a);
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      Eigen::ArrayXd row = out.row(r).array();
      row -= row.maxCoeff();
      row = row.exp();
      out.row(r) = (row / row.sum()).matrix();
    }
    int id = push(std::move(out), {a});
    if (tracked(id))
      set_backward(id, [this, a, id](const Mat& g) {
        const Mat& y = value(id);
        Mat ga(y.rows(), y.cols());
        for (Eigen::Index r = 0; r < y.rows(); ++r) {
          double dot = g.row(r).dot(y.row(r));
          ga.row(r) = y.row(r).cwiseProduct(g.row(r)) - dot * y.row(r);
        }
        accumulate(a, ga);
      });
    return id;
  }

  /// log(max(x, floor)); the clamped region has zero derivative.
  int log_clamped(int a, double floor) {
    Mat out = value(a).cwiseMax(floor).array().log().matrix();
    return unary_or_binary(std::move(out), {a}, [this, a, floor](const Mat& g) {
      const Mat& x = value(a);
      Mat ga = g;
      for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.cols(); ++j)
          ga(i, j) = x(i, j) > floor ? g(i, j) / x(i, j) : 0.0;
      accumulate(a, ga);
    });
  }

  /// Gather scalar entries (i,j) into an n x 1 column.
  int pick(int a, std::vector<std::pair<int, int>> ij) {
    Mat out(static_cast<Eigen::Index>(ij.size()), 1);
    for (std::size_t k = 0; k < ij.size(); ++k) out(static_cast<Eigen::Index>(k), 0) = value(a)(ij[k].first, ij[k].second);
    return unary_or_binary(std::move(out), {a}, [this, a, ij = std::move(ij)](const Mat& g) {
      Mat ga = Mat::Zero(value(a).rows(), value(a).cols());
      for (std::size_t k = 0; k < ij.size(); ++k) ga(ij[k].first, ij[k].second) += g(static_cast<Eigen::Index>(k), 0);
      accumulate(a, ga);
    });
  }

  /// 1x1 total.
  int sum(int a) {
    Mat out(1, 1);
    out(0, 0) = value(a).sum();
    return unary_or_binary(std::move(out), {a}, [this, a](const Mat& g) {
      accumulate(a, Mat::Constant(value(a).rows(), value(a).cols(), g(0, 0)));
    });
  }

  double scalar(int a) const {
    require(value(a).size() == 1, "scalar: node is not 1x1");
    return value(a)(0, 0);
  }

  /// Reverse sweep from a 1x1 node. Adjoints accumulate; call once per tape
  /// unless intentional (RL reuses one tape with multiple seeds).
  void backward(int id, double seed = 1.0) {
    require(grad_enabled_, "backward: tape built with gradients disabled");
    require(value(id).size() == 1, "backward: seed node must be 1x1");
    accumulate(id, Mat::Constant(1, 1, seed));
    for (int k = static_cast<int>(nodes_.size()) - 1; k >= 0; --k) {
      Node& n = nodes_[static_cast<std::size_t>(k)];
      if (n.backward && n.adj.size() > 0) n.backward(n.adj);
    }
  }

 private:
  struct Node {
    Mat val;
    const Mat* ext = nullptr;
    std::function<void(const Mat&)> backward;
    bool tracked = false;
    Mat adj;
  };

  static Eigen::Index n_pairs_of(int L) { return static_cast<Eigen::Index>(L) * (L - 1) / 2; }

  void check_same_shape(int a, int b, const char* op) const {
    require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(),
            "tape ", op, ": shape mismatch (", value(a).rows(), "x", value(a).cols(), " vs ",
            value(b).rows(), "x", value(b).cols(), ")");
  }

  int last() const { return static_cast<int>(nodes_.size()) - 1; }

  bool tracked(int id) const { return nodes_[static_cast<std::size_t>(id)].tracked; }

  int push(Mat val, std::initializer_list<int> inputs) {
    bool any = false;
    if (grad_enabled_)
      for (int i : inputs) any = any || nodes_[static_cast<std::size_t>(i)].tracked;
    nodes_.push_back(Node{std::move(val), nullptr, {}, any});
    return last();
  }

  void set_backward(int id, std::function<void(const Mat&)> fn) {
    nodes_[static_cast<std::size_t>(id)].backward = std::move(fn);
  }

  template <typename Fn>
  int unary_or_binary(Mat val, std::initializer_list<int> inputs, Fn&& fn) {
    int id = push(std::move(val), inputs);
    if (tracked(id)) set_backward(id, std::forward<Fn>(fn));
    return id;
  }

  void accumulate(int id, const Mat& g) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.tracked) return;
    if (n.adj.size() == 0)
      n.adj = g;
    else
      n.adj += g;
  }

  bool grad_enabled_;
  std::vector<Node> nodes_;
};

}  // namespace csg::ad
