#include "vslr/optim.hpp"

#include <cmath>
#include <cstdio>

#include "vslr/error.hpp"

namespace vslr {

template <typename T>
void adam_step(std::span<T> param, std::span<const T> grad, AdamState& state, const AdamConfig& cfg) {
  if (grad.size() != param.size()) {
    fail(errc::kShape, "adam: gradient has " + std::to_string(grad.size()) + " entries for a parameter of " +
                           std::to_string(param.size()));
  }
  if (state.m.empty()) {
    state.m.assign(param.size(), 0.0);
    state.v.assign(param.size(), 0.0);
  }
  if (state.m.size() != param.size()) fail(errc::kShape, "adam: moment buffers do not match the parameter");
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, double(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, double(state.step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = state.m[i] / c1, v_hat = state.v[i] / c2;
    param[i] = static_cast<T>(double(param[i]) - cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
  }
}

template <typename T>
Adam<T>::Adam(std::vector<Tensor<T>> params, AdamConfig cfg)
    : params_(std::move(params)), states_(params_.size()), cfg_(cfg) {}

template <typename T>
void Adam<T>::step() {
  ++steps_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor<T>& p = params_[i];
    if (!p.requires_grad()) continue;
    if (p.has_grad()) {
      adam_step<T>(p.mutable_data(), p.grad(), states_[i], cfg_);
    } else {
      const std::vector<T> zero(p.numel(), T(0));
      adam_step<T>(p.mutable_data(), zero, states_[i], cfg_);
    }
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (const auto& p : params_) p.zero_grad();
}

std::string format_step_log(const StepLog& s) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "step %llu loss %.6f lr %.3g wall-ms %.1f", static_cast<unsigned long long>(s.step),
                s.loss, s.lr, s.wall_ms);
  return buf;
}

template void adam_step<float>(std::span<float>, std::span<const float>, AdamState&, const AdamConfig&);
template void adam_step<double>(std::span<double>, std::span<const double>, AdamState&, const AdamConfig&);
template class Adam<float>;
template class Adam<double>;

}  // namespace vslr
