#include "amorph/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "amorph/errors.hpp"

namespace amorph {

namespace {

template <typename T>
double evaluate(const std::function<Tensor<T>()>& loss) {
  NoGrad<T> guard;
  const double v = static_cast<double>(loss().item());
  if (!std::isfinite(v)) throw NumericError("finite_difference_check: loss is not finite");
  return v;
}

}  // namespace

template <typename T>
GradCheckReport finite_difference_check(const std::function<Tensor<T>()>& loss, std::vector<Tensor<T>> params,
                                        double eps, std::size_t max_entries_per_param) {
  if (!(eps > 0)) throw std::invalid_argument("finite_difference_check: eps must be positive");
  zero_grads(params);
  {
    Tape<T> tape;
    Recording<T> rec(tape);
    Tensor<T> value = loss();
    if (!std::isfinite(static_cast<double>(value.item()))) {
      throw NumericError("finite_difference_check: loss is not finite");
    }
    tape.backward(value);
  }

  GradCheckReport report;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor<T>& param = params[p];
    const std::vector<T> analytic(param.grad().begin(), param.grad().end());
    const std::size_t n = param.size();
    std::size_t step = 1;
    if (max_entries_per_param > 0 && n > max_entries_per_param) step = n / max_entries_per_param;
    for (std::size_t i = 0; i < n; i += step) {
      T& slot = param.values_mut()[i];
      const T saved = slot;
      slot = static_cast<T>(saved + eps);
      const double up = evaluate(loss);
      slot = static_cast<T>(saved - eps);
      const double down = evaluate(loss);
      slot = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = static_cast<double>(analytic[i]);
      const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      ++report.entries_checked;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_param = p;
        report.worst_entry = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

template <typename T>
void zero_grads(std::vector<Tensor<T>>& params) {
  for (auto& p : params) p.zero_grad();
}

template <typename T>
double grad_norm(const std::vector<Tensor<T>>& params) {
  double total = 0.0;
  for (const auto& p : params) {
    for (T g : p.grad()) total += static_cast<double>(g) * static_cast<double>(g);
  }
  return std::sqrt(total);
}

template <typename T>
double clip_grad_norm(std::vector<Tensor<T>>& params, double max_norm) {
  const double norm = grad_norm(params);
  if (norm > max_norm) {
    const T factor = static_cast<T>(max_norm / norm);
    for (auto& p : params) {
      if (!p.has_grad()) continue;
      for (T& g : p.grad_mut()) g *= factor;
    }
  }
  return norm;
}

#define AMORPH_INSTANTIATE_GRADCHECK(T)                                                                   \
  template GradCheckReport finite_difference_check<T>(const std::function<Tensor<T>()>&,                \
                                                      std::vector<Tensor<T>>, double, std::size_t);       \
  template void zero_grads<T>(std::vector<Tensor<T>>&);                                                 \
  template double grad_norm<T>(const std::vector<Tensor<T>>&);                                          \
  template double clip_grad_norm<T>(std::vector<Tensor<T>>&, double);

AMORPH_INSTANTIATE_GRADCHECK(float)
AMORPH_INSTANTIATE_GRADCHECK(double)

}  // namespace amorph
