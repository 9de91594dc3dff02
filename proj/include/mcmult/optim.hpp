#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mcmult/common.hpp"

namespace mcmult {

enum class ParamInit { Projection, Zero, One };

/// A trainable dense matrix with a persistent gradient accumulator.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  ParamInit init = ParamInit::Projection;
};

/// Owns every parameter of one model instance. Registration order is the
/// canonical iteration order for initialization and optimizer state.
class ParameterStore {
 public:
  Parameter& add(const std::string& name, Index rows, Index cols,
                 ParamInit init);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  const Parameter* find(const std::string& name) const;

  std::size_t scalar_count() const;
  void zero_grads();

  /// Fills values in registration order: projections uniform in
  /// +-sqrt(6/(fan_in+fan_out)), biases zero, norm gains one.
  void init_values(std::uint64_t seed);

  std::vector<Matrix> snapshot_values() const;
  void restore_values(const std::vector<Matrix>& snap);

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, Parameter*> by_name_;
};

/// Adam moments, one slot per parameter in store order.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step_count = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
};

/// One Adam update with bias correction over every parameter gradient.
void adam_step(ParameterStore& params, AdamState& state, double lr = 1e-3);

/// Global L2-norm gradient clipping across all parameters; returns the
/// pre-clip norm.
double clip_global_norm(ParameterStore& params, double max_norm = 0.8);

/// Max relative error between `analytic_grad` and central finite differences
/// of `fn` at `x`. Relative error denominator is max(|a|,|b|,1e-8).
double finite_diff_check(const std::function<double(const Matrix&)>& fn,
                         const Matrix& x, const Matrix& analytic_grad,
                         double eps = 1e-4);

}  // namespace mcmult
