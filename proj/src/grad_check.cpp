#include "vslr/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "vslr/error.hpp"

namespace vslr {

double grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                  const Tensor<double>& x, double step) {
  Tensor<double> leaf = x.detach();
  leaf.set_requires_grad(true);
  return grad_check([&] { return f(leaf); }, {leaf}, step);
}

double grad_check(const std::function<Tensor<double>()>& f, std::vector<Tensor<double>> params,
                  double step) {
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  Tensor<double> loss = f();
  if (loss.numel() != 1) fail(errc::kShape, "grad_check: function is not scalar-valued");
  loss.backward();

  double worst = 0.0;
  for (auto& p : params) {
    std::vector<double> analytic = p.has_grad() ? std::vector<double>(p.grad().begin(), p.grad().end())
                                                : std::vector<double>(p.numel(), 0.0);
    auto values = p.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double orig = values[i];
      double up, down;
      {
        NoGradGuard guard;
        values[i] = orig + step;
        up = f().item();
        values[i] = orig - step;
        down = f().item();
        values[i] = orig;
      }
      const double numeric = (up - down) / (2.0 * step);
      const double denom = std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
    p.zero_grad();
  }
  return worst;
}

}  // namespace vslr
