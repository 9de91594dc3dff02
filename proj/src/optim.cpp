#include "mcmult/optim.hpp"

#include <cmath>

namespace mcmult {

Parameter& ParameterStore::add(const std::string& name, Index rows,
                               Index cols, ParamInit init) {
  if (by_name_.count(name) != 0) {
    throw ContractError("parameter registered twice: " + name);
  }
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = Matrix::Zero(rows, cols);
  p->grad = Matrix::Zero(rows, cols);
  p->init = init;
  Parameter& ref = *p;
  by_name_[name] = p.get();
  params_.push_back(std::move(p));
  return ref;
}

Parameter& ParameterStore::at(const std::string& name) {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) {
    throw ContractError("unknown parameter: " + name);
  }
  return *it->second;
}

const Parameter& ParameterStore::at(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) {
    throw ContractError("unknown parameter: " + name);
  }
  return *it->second;
}

const Parameter* ParameterStore::find(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : it->second;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

void ParameterStore::zero_grads() {
  for (auto& p : params_) p->grad.setZero();
}

void ParameterStore::init_values(std::uint64_t seed) {
  Rng rng(seed);
  for (auto& p : params_) {
    switch (p->init) {
      case ParamInit::Zero:
        p->value.setZero();
        break;
      case ParamInit::One:
        p->value.setOnes();
        break;
      case ParamInit::Projection: {
        const double fan_in = static_cast<double>(p->value.rows());
        const double fan_out = static_cast<double>(p->value.cols());
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        for (Index i = 0; i < p->value.rows(); ++i) {
          for (Index j = 0; j < p->value.cols(); ++j) {
            p->value(i, j) = uniform_range(rng, -bound, bound);
          }
        }
        break;
      }
    }
  }
}

std::vector<Matrix> ParameterStore::snapshot_values() const {
  std::vector<Matrix> snap;
  snap.reserve(params_.size());
  for (const auto& p : params_) snap.push_back(p->value);
  return snap;
}

void ParameterStore::restore_values(const std::vector<Matrix>& snap) {
  if (snap.size() != params_.size()) {
    throw ContractError("snapshot size does not match parameter count");
  }
  for (std::size_t i = 0; i < snap.size(); ++i) params_[i]->value = snap[i];
}

void adam_step(ParameterStore& params, AdamState& state, double lr) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i] = Matrix::Zero(params[i].value.rows(), params[i].value.cols());
      state.v[i] = Matrix::Zero(params[i].value.rows(), params[i].value.cols());
    }
  }
  if (state.m.size() != params.size()) {
    throw DimensionError("adam state does not match parameter count");
  }
  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, state.step_count);
  const double bc2 = 1.0 - std::pow(state.beta2, state.step_count);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) {
      throw DimensionError("gradient shape " + shape_string(p.grad) +
                           " does not match parameter " +
                           shape_string(p.value) + " (" + p.name + ")");
    }
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * p.grad;
    state.v[i] = state.beta2 * state.v[i].array().matrix() +
                 (1.0 - state.beta2) * p.grad.cwiseProduct(p.grad);
    const Matrix m_hat = state.m[i] / bc1;
    const Matrix v_hat = state.v[i] / bc2;
    p.value.array() -=
        lr * m_hat.array() / (v_hat.array().sqrt() + state.epsilon);
  }
}

double clip_global_norm(ParameterStore& params, double max_norm) {
  if (max_norm <= 0.0) {
    throw ConfigError("clip_global_norm: max_norm must be positive");
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    sq += params[i].grad.squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (std::size_t i = 0; i < params.size(); ++i) params[i].grad *= s;
  }
  return norm;
}

double finite_diff_check(const std::function<double(const Matrix&)>& fn,
                         const Matrix& x, const Matrix& analytic_grad,
                         double eps) {
  if (analytic_grad.rows() != x.rows() || analytic_grad.cols() != x.cols()) {
    throw DimensionError("finite_diff_check: gradient " +
                         shape_string(analytic_grad) + " does not match " +
                         shape_string(x));
  }
  Matrix probe = x;
  double worst = 0.0;
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < x.cols(); ++j) {
      const double keep = probe(i, j);
      probe(i, j) = keep + eps;
      const double up = fn(probe);
      probe(i, j) = keep - eps;
      const double down = fn(probe);
      probe(i, j) = keep;
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = analytic_grad(i, j);
      const double denom =
          std::max({std::abs(numeric), std::abs(analytic), 1e-8});
      worst = std::max(worst, std::abs(numeric - analytic) / denom);
    }
  }
  return worst;
}

}  // namespace mcmult
