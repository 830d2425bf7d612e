#pragma once

#include <cstdint>
#include <vector>

#include "wastegan/tensor.hpp"

namespace wastegan {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.0;
  double beta2 = 0.99;
  double epsilon = 1e-8;
};

// Adam over a fixed parameter list. step() reads the current gradients and
// leaves them in place; callers reset them with zero_grad().
template <typename T>
class Adam {
 public:
  Adam(std::vector<BasicTensor<T>> params, AdamConfig config);

  void step();
  void zero_grad();

  const AdamConfig& config() const { return config_; }
  std::uint64_t step_count() const { return step_count_; }
  void set_step_count(std::uint64_t n) { step_count_ = n; }
  std::size_t size() const { return params_.size(); }
  const std::vector<BasicTensor<T>>& params() const { return params_; }
  std::vector<T>& first_moment(std::size_t i) { return first_.at(i); }
  std::vector<T>& second_moment(std::size_t i) { return second_.at(i); }
  const std::vector<T>& first_moment(std::size_t i) const { return first_.at(i); }
  const std::vector<T>& second_moment(std::size_t i) const { return second_.at(i); }

 private:
  std::vector<BasicTensor<T>> params_;
  AdamConfig config_;
  std::vector<std::vector<T>> first_;
  std::vector<std::vector<T>> second_;
  std::uint64_t step_count_ = 0;
};

}  // namespace wastegan
