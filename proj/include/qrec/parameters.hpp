#pragma once

#include <iosfwd>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "qrec/autodiff.hpp"

namespace qrec {

// Named trainable tensors in registration order. Frozen parameters are kept
// in the store (and in checkpoints) but skipped by the optimizer.
class ParameterStore {
 public:
  // Glorot-uniform matrix; fan_in/fan_out are the two dimensions.
  ad::Tensor add_glorot(const std::string& name, std::size_t rows, std::size_t cols, ad::Rng& rng);
  ad::Tensor add_uniform(const std::string& name, ad::Shape shape, double limit, ad::Rng& rng);
  ad::Tensor add_zeros(const std::string& name, ad::Shape shape);
  ad::Tensor add(const std::string& name, ad::Tensor tensor);

  const ad::Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;
  const std::vector<std::pair<std::string, ad::Tensor>>& items() const { return items_; }

  void freeze(const std::string& name);
  bool frozen(const std::string& name) const { return frozen_.count(name) != 0; }
  std::vector<ad::Tensor> trainable() const;

  void zero_grad();
  std::size_t scalar_count() const;

  // Text checkpoint: magic "QRECCKPT1", count, then per tensor a
  // "name ndims d0 d1 ..." line followed by its row-major values.
  void save(std::ostream& out) const;
  void save(const std::string& path) const;
  // Loads values into the already-registered tensors; names and shapes must
  // match exactly. Throws DataError otherwise.
  void load(std::istream& in);
  void load(const std::string& path);

 private:
  std::vector<std::pair<std::string, ad::Tensor>> items_;
  std::set<std::string> frozen_;
};

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Per-parameter moment estimates and the shared step counter.
class Adam {
 public:
  Adam(std::vector<ad::Tensor> params, AdamOptions options);

  // Applies one bias-corrected update from the accumulated grads.
  // Parameters without a gradient are treated as having a zero gradient.
  void step();
  void zero_grad();

  std::int64_t steps() const { return step_; }
  const AdamOptions& options() const { return options_; }
  std::span<const double> first_moment(std::size_t i) const { return m_[i]; }
  std::span<const double> second_moment(std::size_t i) const { return v_[i]; }

 private:
  std::vector<ad::Tensor> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  AdamOptions options_;
  std::int64_t step_ = 0;
};

// Standalone update rule on raw buffers; Adam::step applies it per tensor.
void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                 std::int64_t step, const AdamOptions& options);

// Scales all gradients so their global L2 norm is at most max_norm. Returns
// the norm before clipping.
double clip_grad_norm(const std::vector<ad::Tensor>& params, double max_norm);

}  // namespace qrec
