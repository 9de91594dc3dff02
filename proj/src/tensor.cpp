#include "mcmult/tensor.hpp"

#include <cmath>
#include <limits>
#include <utility>

#include "mcmult/optim.hpp"

namespace mcmult {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_string(a) +
                         " and " + shape_string(b) + " differ");
  }
}

void require_same_tape(const Var& a, const Var& b) {
  if (a.tape() != b.tape()) {
    throw ContractError("operands recorded on different tapes");
  }
}

}  // namespace

Var Tape::leaf(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::watch(Parameter& p) {
  Node n;
  n.value = p.value;
  n.param = &p;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Matrix value, std::function<void(Tape&, int)> backprop) {
  Node n;
  n.value = std::move(value);
  n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::backward(const Var& root) {
  if (root.tape() != this) {
    throw ContractError("backward root recorded on a different tape");
  }
  const Matrix& rv = value(root.id());
  if (rv.rows() != 1 || rv.cols() != 1) {
    throw ContractError("backward root must be scalar, got " +
                        shape_string(rv));
  }
  for (auto& n : nodes_) {
    n.grad.setZero(n.value.rows(), n.value.cols());
    n.reached = false;
  }
  nodes_[root.id()].grad(0, 0) = 1.0;
  nodes_[root.id()].reached = true;
  for (int id = root.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.reached) continue;
    if (n.backprop) {
      n.backprop(*this, id);
    } else if (n.param != nullptr) {
      n.param->grad += n.grad;
    }
  }
}

void Tape::clear() { nodes_.clear(); }

// ---- arithmetic ---------------------------------------------------------

Var add(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  const int ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() + b.value(), [ia, ib](Tape& t, int id) {
    const Matrix& g = t.grad(id);
    t.grad_for_accum(ia) += g;
    t.grad_for_accum(ib) += g;
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  const int ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() - b.value(), [ia, ib](Tape& t, int id) {
    const Matrix& g = t.grad(id);
    t.grad_for_accum(ia) += g;
    t.grad_for_accum(ib) -= g;
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  const int ia = a.id(), ib = b.id();
  return a.tape()->record(
      a.value().cwiseProduct(b.value()), [ia, ib](Tape& t, int id) {
        const Matrix& g = t.grad(id);
        t.grad_for_accum(ia) += g.cwiseProduct(t.value(ib));
        t.grad_for_accum(ib) += g.cwiseProduct(t.value(ia));
      });
}

Var scale(const Var& a, double c) {
  const int ia = a.id();
  return a.tape()->record(a.value() * c, [ia, c](Tape& t, int id) {
    t.grad_for_accum(ia) += t.grad(id) * c;
  });
}

Var add_constant(const Var& a, const Matrix& c) {
  require_same_shape(a.value(), c, "add_constant");
  const int ia = a.id();
  return a.tape()->record(a.value() + c, [ia](Tape& t, int id) {
    t.grad_for_accum(ia) += t.grad(id);
  });
}

Var add_rowvec(const Var& x, const Var& bias) {
  require_same_tape(x, bias);
  if (bias.value().rows() != 1 || bias.value().cols() != x.value().cols()) {
    throw DimensionError("add_rowvec: bias " + shape_string(bias.value()) +
                         " does not broadcast over " +
                         shape_string(x.value()));
  }
  const int ix = x.id(), ib = bias.id();
  Matrix out = x.value();
  out.rowwise() += bias.value().row(0);
  return x.tape()->record(std::move(out), [ix, ib](Tape& t, int id) {
    const Matrix& g = t.grad(id);
    t.grad_for_accum(ix) += g;
    t.grad_for_accum(ib) += g.colwise().sum();
  });
}

// ---- products -----------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  require_same_tape(a, b);
  if (a.value().cols() != b.value().rows()) {
    throw DimensionError("matmul: inner extents disagree, " +
                         shape_string(a.value()) + " * " +
                         shape_string(b.value()));
  }
  const int ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() * b.value(), [ia, ib](Tape& t, int id) {
    const Matrix& g = t.grad(id);
    t.grad_for_accum(ia) += g * t.value(ib).transpose();
    t.grad_for_accum(ib) += t.value(ia).transpose() * g;
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  require_same_tape(a, b);
  if (a.value().cols() != b.value().cols()) {
    throw DimensionError("matmul_nt: trailing extents disagree, " +
                         shape_string(a.value()) + " * " +
                         shape_string(b.value()) + "^T");
  }
  const int ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() * b.value().transpose(),
                          [ia, ib](Tape& t, int id) {
                            const Matrix& g = t.grad(id);
                            t.grad_for_accum(ia) += g * t.value(ib);
                            t.grad_for_accum(ib) += g.transpose() * t.value(ia);
                          });
}

Var rowwise_dot(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "rowwise_dot");
  const int ia = a.id(), ib = b.id();
  Matrix out = a.value().cwiseProduct(b.value()).rowwise().sum();
  return a.tape()->record(std::move(out), [ia, ib](Tape& t, int id) {
    const Matrix& g = t.grad(id);  // Mx1
    t.grad_for_accum(ia) +=
        (t.value(ib).array().colwise() * g.col(0).array()).matrix();
    t.grad_for_accum(ib) +=
        (t.value(ia).array().colwise() * g.col(0).array()).matrix();
  });
}

Var scale_rows(const Var& x, const Var& w) {
  require_same_tape(x, w);
  if (w.value().cols() != 1 || w.value().rows() != x.value().rows()) {
    throw DimensionError("scale_rows: weight " + shape_string(w.value()) +
                         " does not match rows of " +
                         shape_string(x.value()));
  }
  const int ix = x.id(), iw = w.id();
  Matrix out = x.value().array().colwise() * w.value().col(0).array();
  return x.tape()->record(std::move(out), [ix, iw](Tape& t, int id) {
    const Matrix& g = t.grad(id);
    t.grad_for_accum(ix) +=
        (g.array().colwise() * t.value(iw).col(0).array()).matrix();
    t.grad_for_accum(iw) += g.cwiseProduct(t.value(ix)).rowwise().sum();
  });
}

// ---- shuffling ----------------------------------------------------------

Var slice_cols(const Var& x, Index start, Index count) {
  if (start < 0 || count <= 0 || start + count > x.value().cols()) {
    throw ContractError("slice_cols out of range");
  }
  const int ix = x.id();
  return x.tape()->record(x.value().middleCols(start, count),
                          [ix, start, count](Tape& t, int id) {
                            t.grad_for_accum(ix).middleCols(start, count) +=
                                t.grad(id);
                          });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: empty input");
  Tape* tape = parts[0].tape();
  Index rows = parts[0].rows();
  Index cols = 0;
  for (const auto& p : parts) {
    require_same_tape(parts[0], p);
    if (p.rows() != rows) {
      throw DimensionError("concat_cols: row extents disagree, " +
                           shape_string(parts[0].value()) + " vs " +
                           shape_string(p.value()));
    }
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<int> ids;
  std::vector<Index> widths;
  Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    ids.push_back(p.id());
    widths.push_back(p.cols());
    at += p.cols();
  }
  return tape->record(std::move(out), [ids, widths](Tape& t, int id) {
    const Matrix& g = t.grad(id);
    Index at = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      t.grad_for_accum(ids[i]) += g.middleCols(at, widths[i]);
      at += widths[i];
    }
  });
}

Var row(const Var& x, Index i) {
  if (i < 0 || i >= x.rows()) throw ContractError("row index out of range");
  const int ix = x.id();
  return x.tape()->record(x.value().row(i), [ix, i](Tape& t, int id) {
    t.grad_for_accum(ix).row(i) += t.grad(id).row(0);
  });
}

Var sum_all(const Var& x) {
  const int ix = x.id();
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  return x.tape()->record(std::move(out), [ix](Tape& t, int id) {
    t.grad_for_accum(ix).array() += t.grad(id)(0, 0);
  });
}

// ---- nonlinearities -------------------------------------------------------

Var relu(const Var& x) {
  const int ix = x.id();
  return x.tape()->record(x.value().cwiseMax(0.0), [ix](Tape& t, int id) {
    t.grad_for_accum(ix) +=
        (t.value(ix).array() > 0.0)
            .select(t.grad(id).array(), 0.0)
            .matrix();
  });
}

Var softmax_rows(const Var& x, const BoolMask* mask) {
  const Matrix& v = x.value();
  if (mask != nullptr &&
      (mask->rows() != v.rows() || mask->cols() != v.cols())) {
    throw DimensionError("softmax_rows: mask " +
                         shape_string(mask->rows(), mask->cols()) +
                         " does not match " + shape_string(v));
  }
  Matrix out(v.rows(), v.cols());
  for (Index i = 0; i < v.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < v.cols(); ++j) {
      if (mask == nullptr || (*mask)(i, j)) mx = std::max(mx, v(i, j));
    }
    if (!std::isfinite(mx)) {
      throw MaskError("softmax_rows: row " + std::to_string(i) +
                      " is fully masked");
    }
    double denom = 0.0;
    for (Index j = 0; j < v.cols(); ++j) {
      if (mask == nullptr || (*mask)(i, j)) {
        out(i, j) = std::exp(v(i, j) - mx);
        denom += out(i, j);
      } else {
        out(i, j) = 0.0;
      }
    }
    out.row(i) /= denom;
  }
  const int ix = x.id();
  return x.tape()->record(std::move(out), [ix](Tape& t, int id) {
    const Matrix& w = t.value(id);
    const Matrix& g = t.grad(id);
    // dx = w .* (g - rowwise dot(g, w)); masked entries have w == 0.
    Vector dots = g.cwiseProduct(w).rowwise().sum();
    t.grad_for_accum(ix) +=
        w.cwiseProduct(g - dots * Matrix::Ones(1, w.cols()));
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  require_same_tape(x, gain);
  require_same_tape(x, bias);
  const Matrix& v = x.value();
  const Index n = v.cols();
  if (n < 1) throw DimensionError("layer_norm: empty rows");
  if (gain.value().rows() != 1 || gain.value().cols() != n ||
      bias.value().rows() != 1 || bias.value().cols() != n) {
    throw DimensionError("layer_norm: gain/bias must be 1x" +
                         std::to_string(n));
  }
  Vector mean = v.rowwise().mean();
  Matrix centered = v.colwise() - mean;
  Vector var = centered.array().square().rowwise().mean();
  Vector inv_std = (var.array() + eps).sqrt().inverse();
  Matrix xhat = centered.array().colwise() * inv_std.array();
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array())
                   .rowwise() +
               bias.value().row(0).array();
  const int ix = x.id(), ig = gain.id(), ib = bias.id();
  // Captured copies keep the backward rule independent of later tape growth.
  return x.tape()->record(
      std::move(out),
      [ix, ig, ib, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](Tape& t, int id) {
        const Matrix& g = t.grad(id);
        t.grad_for_accum(ig) += g.cwiseProduct(xhat).colwise().sum();
        t.grad_for_accum(ib) += g.colwise().sum();
        Matrix dxhat = g.array().rowwise() * t.value(ig).row(0).array();
        Vector m1 = dxhat.rowwise().mean();
        Vector m2 = dxhat.cwiseProduct(xhat).rowwise().mean();
        Matrix dx = ((dxhat.colwise() - m1) -
                     (xhat.array().colwise() * m2.array()).matrix())
                        .array()
                        .colwise() *
                    inv_std.array();
        t.grad_for_accum(ix) += dx;
      });
}

Var conv1d_same(const Var& x, const Var& kernel, const Var& bias, int k) {
  require_same_tape(x, kernel);
  require_same_tape(x, bias);
  if (k <= 0 || k % 2 == 0) {
    throw ConfigError("conv1d_same: kernel width must be odd and positive, got " +
                      std::to_string(k));
  }
  const Matrix& xv = x.value();
  const Matrix& kv = kernel.value();
  const Index t_len = xv.rows();
  const Index d_in = xv.cols();
  if (kv.rows() != static_cast<Index>(k) * d_in) {
    throw DimensionError("conv1d_same: kernel " + shape_string(kv) +
                         " does not match k*d_in = " +
                         std::to_string(k * d_in));
  }
  const Index d_out = kv.cols();
  if (bias.value().rows() != 1 || bias.value().cols() != d_out) {
    throw DimensionError("conv1d_same: bias must be 1x" +
                         std::to_string(d_out));
  }
  const int half = (k - 1) / 2;
  Matrix out(t_len, d_out);
  for (Index t = 0; t < t_len; ++t) {
    for (Index o = 0; o < d_out; ++o) {
      double acc = bias.value()(0, o);
      for (int tap = 0; tap < k; ++tap) {
        const Index src = t + tap - half;
        if (src < 0 || src >= t_len) continue;
        for (Index i = 0; i < d_in; ++i) {
          acc += xv(src, i) * kv(tap * d_in + i, o);
        }
      }
      out(t, o) = acc;
    }
  }
  const int ix = x.id(), ik = kernel.id(), ib = bias.id();
  return x.tape()->record(
      std::move(out), [ix, ik, ib, k, half](Tape& t, int id) {
        const Matrix& g = t.grad(id);
        const Matrix& xv = t.value(ix);
        const Matrix& kv = t.value(ik);
        const Index t_len = xv.rows();
        const Index d_in = xv.cols();
        const Index d_out = kv.cols();
        Matrix& gx = t.grad_for_accum(ix);
        Matrix& gk = t.grad_for_accum(ik);
        Matrix& gb = t.grad_for_accum(ib);
        gb += g.colwise().sum();
        for (Index tt = 0; tt < t_len; ++tt) {
          for (int tap = 0; tap < k; ++tap) {
            const Index src = tt + tap - half;
            if (src < 0 || src >= t_len) continue;
            for (Index o = 0; o < d_out; ++o) {
              const double go = g(tt, o);
              for (Index i = 0; i < d_in; ++i) {
                gk(tap * d_in + i, o) += xv(src, i) * go;
                gx(src, i) += kv(tap * d_in + i, o) * go;
              }
            }
          }
        }
      });
}

Var dropout(const Var& x, double rate, bool training, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ConfigError("dropout: rate must be in [0,1), got " +
                      std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  Matrix keep(x.rows(), x.cols());
  for (Index i = 0; i < keep.rows(); ++i) {
    for (Index j = 0; j < keep.cols(); ++j) {
      keep(i, j) = uniform01(rng) >= rate ? keep_scale : 0.0;
    }
  }
  const int ix = x.id();
  Matrix out = x.value().cwiseProduct(keep);
  return x.tape()->record(std::move(out),
                          [ix, keep = std::move(keep)](Tape& t, int id) {
                            t.grad_for_accum(ix) +=
                                t.grad(id).cwiseProduct(keep);
                          });
}

// ---- losses ---------------------------------------------------------------

Var cross_entropy_loss(const Var& logits, int label) {
  const Matrix& z = logits.value();
  if (z.rows() != 1 || z.cols() < 2) {
    throw ContractError("cross_entropy_loss: logits must be 1xC with C >= 2");
  }
  if (label < 0 || label >= z.cols()) {
    throw ContractError("cross_entropy_loss: label " + std::to_string(label) +
                        " out of range for C = " + std::to_string(z.cols()));
  }
  const double mx = z.maxCoeff();
  Matrix probs = (z.array() - mx).exp();
  const double denom = probs.sum();
  probs /= denom;
  Matrix out(1, 1);
  out(0, 0) = std::log(denom) + mx - z(0, label);
  const int iz = logits.id();
  return logits.tape()->record(
      std::move(out), [iz, label, probs = std::move(probs)](Tape& t, int id) {
        const double g = t.grad(id)(0, 0);
        Matrix d = probs;
        d(0, label) -= 1.0;
        t.grad_for_accum(iz) += g * d;
      });
}

Var l1_loss(const Var& pred, double target) {
  const Matrix& p = pred.value();
  if (p.rows() != 1 || p.cols() != 1) {
    throw ContractError("l1_loss: prediction must be 1x1");
  }
  const double diff = p(0, 0) - target;
  Matrix out(1, 1);
  out(0, 0) = std::abs(diff);
  const double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
  const int ip = pred.id();
  return pred.tape()->record(std::move(out), [ip, sgn](Tape& t, int id) {
    t.grad_for_accum(ip)(0, 0) += sgn * t.grad(id)(0, 0);
  });
}

}  // namespace mcmult
