#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "amorph/tensor.hpp"

namespace amorph {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_entry = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
};

/// Compares reverse-mode gradients of `loss` with central differences.
///
/// The per-entry error is |analytic - numeric| / max(1e-8, |analytic| + |numeric|)
/// and the report carries the maximum. With `max_entries_per_param` > 0 only
/// that many evenly spaced entries of each parameter are probed (for very wide
/// layers); 0 probes every entry. Throws NumericError if `loss` is not finite.
template <typename T>
GradCheckReport finite_difference_check(const std::function<Tensor<T>()>& loss, std::vector<Tensor<T>> params,
                                        double eps = 1e-5, std::size_t max_entries_per_param = 0);

template <typename T>
void zero_grads(std::vector<Tensor<T>>& params);

/// Global L2 norm of all gradients.
template <typename T>
double grad_norm(const std::vector<Tensor<T>>& params);

/// Rescales all gradients so their global norm is at most `max_norm`.
/// Gradients are untouched when the norm is already within the threshold.
/// Returns the norm measured before clipping.
template <typename T>
double clip_grad_norm(std::vector<Tensor<T>>& params, double max_norm);

}  // namespace amorph
