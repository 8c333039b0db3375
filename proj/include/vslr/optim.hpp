#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vslr/tensor.hpp"

namespace vslr {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
};

// One bias-corrected update of `param` in place; increments state.step.
template <typename T>
void adam_step(std::span<T> param, std::span<const T> grad, AdamState& state, const AdamConfig& cfg);

// Adam over a fixed parameter list. Parameters that do not require gradients
// are left untouched; a missing gradient counts as zero.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>> params, AdamConfig cfg);

  void step();
  void zero_grad();

  const AdamConfig& config() const { return cfg_; }
  std::uint64_t steps() const { return steps_; }
  const std::vector<AdamState>& states() const { return states_; }

 private:
  std::vector<Tensor<T>> params_;
  std::vector<AdamState> states_;
  AdamConfig cfg_;
  std::uint64_t steps_ = 0;
};

// One training-log line: step, loss, lr, wall-clock milliseconds.
struct StepLog {
  std::uint64_t step = 0;
  double loss = 0;
  double lr = 0;
  double wall_ms = 0;
};

std::string format_step_log(const StepLog& s);

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace vslr
