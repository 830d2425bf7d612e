#include "wastegan/adam.hpp"

#include <cmath>

#include "wastegan/errors.hpp"

namespace wastegan {

template <typename T>
Adam<T>::Adam(std::vector<BasicTensor<T>> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  if (!(config_.learning_rate >= 0.0) || !std::isfinite(config_.learning_rate)) {
    throw ConfigError("adam: learning rate must be finite and non-negative");
  }
  if (!(config_.beta1 >= 0.0 && config_.beta1 < 1.0) || !(config_.beta2 >= 0.0 && config_.beta2 < 1.0)) {
    throw ConfigError("adam: betas must lie in [0, 1)");
  }
  if (!(config_.epsilon > 0.0)) throw ConfigError("adam: epsilon must be positive");
  for (const auto& p : params_) {
    first_.emplace_back(p.numel(), T(0));
    second_.emplace_back(p.numel(), T(0));
  }
}

template <typename T>
void Adam<T>::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) {
      throw ContractError("adam: parameter " + std::to_string(i) + " has no gradient");
    }
  }
  ++step_count_;
  const T b1 = static_cast<T>(config_.beta1);
  const T b2 = static_cast<T>(config_.beta2);
  const T lr = static_cast<T>(config_.learning_rate);
  const T eps = static_cast<T>(config_.epsilon);
  const T c1 = T(1) - static_cast<T>(std::pow(config_.beta1, static_cast<double>(step_count_)));
  const T c2 = T(1) - static_cast<T>(std::pow(config_.beta2, static_cast<double>(step_count_)));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto p = params_[i].mutable_data();
    auto g = params_[i].grad();
    auto& m = first_[i];
    auto& v = second_[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      const T mhat = m[j] / c1;
      const T vhat = v[j] / c2;
      p[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template class Adam<float>;
template class Adam<double>;

}  // namespace wastegan
