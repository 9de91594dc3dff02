#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "mcmult/common.hpp"

namespace mcmult {

class Tape;

struct Parameter;

/// Handle to one dense node on a gradient tape. Cheap to copy; the value and
/// gradient storage live on the tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  const Matrix& grad() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  int id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Define-by-run reverse-mode tape over dense double matrices. Nodes are
/// appended in topological order; backward() replays them in reverse.
/// One tape per forward pass; recording is not thread-safe.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Constant or input leaf. Receives a gradient but owns no parameter.
  Var leaf(Matrix value);

  /// Parameter leaf; backward() adds the accumulated node gradient into
  /// `p.grad`. Watch each parameter at most once per pass.
  Var watch(Parameter& p);

  /// Reverse pass from a 1x1 root. Populates grad on every node reachable
  /// from the root; unreachable nodes keep a zero gradient.
  void backward(const Var& root);

  void clear();
  std::size_t size() const { return nodes_.size(); }

  const Matrix& value(int id) const { return nodes_[id].value; }
  Matrix& grad(int id) { return nodes_[id].grad; }
  const Matrix& grad(int id) const { return nodes_[id].grad; }

  /// Marks `id` as receiving gradient flow; returns its grad buffer.
  Matrix& grad_for_accum(int id) {
    nodes_[id].reached = true;
    return nodes_[id].grad;
  }

  Var record(Matrix value, std::function<void(Tape&, int)> backprop);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::function<void(Tape&, int)> backprop;  // null for leaves
    Parameter* param = nullptr;
    bool reached = false;
  };

  std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }
inline const Matrix& Var::grad() const { return tape_->grad(id_); }

// ---- free-function ops ------------------------------------------------

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // elementwise
Var scale(const Var& a, double c);
Var add_constant(const Var& a, const Matrix& c);

/// Broadcast-add a 1xN row vector to every row of `x`.
Var add_rowvec(const Var& x, const Var& bias);

Var matmul(const Var& a, const Var& b);
/// a * b^T in one node.
Var matmul_nt(const Var& a, const Var& b);

/// y(i,0) = dot(a.row(i), b.row(i)).
Var rowwise_dot(const Var& a, const Var& b);
/// y.row(i) = w(i,0) * x.row(i).
Var scale_rows(const Var& x, const Var& w);

Var slice_cols(const Var& x, Index start, Index count);
Var concat_cols(const std::vector<Var>& parts);
Var row(const Var& x, Index i);
Var sum_all(const Var& x);

Var relu(const Var& x);

/// Row-wise softmax. Masked entries (mask false) receive exactly 0 and the
/// row normalizes over unmasked entries only. Throws MaskError when a row
/// has no unmasked entry.
Var softmax_rows(const Var& x, const BoolMask* mask = nullptr);

/// Per-row normalization over features: (x - mean) / sqrt(var + eps) * gain
/// + bias, with population variance. gain and bias are 1xN.
Var layer_norm(const Var& x, const Var& gain, const Var& bias,
               double eps = 1e-5);

/// Length-preserving 1-D convolution over time with symmetric zero padding.
/// x is T x d_in, kernel is (k*d_in) x d_out with tap-major rows, bias is
/// 1 x d_out. k must be odd.
Var conv1d_same(const Var& x, const Var& kernel, const Var& bias, int k);

/// Inverted dropout: in training each element is zeroed with probability
/// `rate` and survivors are scaled by 1/(1-rate); identity in eval mode.
Var dropout(const Var& x, double rate, bool training, Rng& rng);

/// -log softmax(logits)[label] for a 1xC logits row, stabilized.
Var cross_entropy_loss(const Var& logits, int label);

/// |pred - target| for a 1x1 prediction; subgradient sign(pred - target).
Var l1_loss(const Var& pred, double target);

}  // namespace mcmult
