#pragma once

// Central finite-difference oracle for reverse-mode gradients.

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "glean/autograd.hpp"
#include "glean/rng.hpp"

namespace glean::testing {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst;
  std::size_t checked = 0;
};

/// Scalar sum(y ⊙ R) with fixed random R, so every output entry influences
/// the checked scalar with an O(1) weight.
inline ag::Var project(const ag::Var& y, std::uint64_t seed = 99) {
  const int n = static_cast<int>(y.value().numel());
  CounterRng rng(seed, 0x9ec7);
  const ag::Var r(normal_tensor({1, n}, rng));
  return ag::linear(ag::reshape(y, {1, n}), r, ag::Var());
}

/// Compares analytic gradients of `f()` with respect to each listed leaf
/// against (f(x+h) − f(x−h)) / 2h. The error of one leaf is
/// ‖analytic − numeric‖₂ / max(‖analytic‖₂, ‖numeric‖₂); at most
/// `max_entries` entries per leaf are probed (evenly strided). When `oracle`
/// is given, the differences are taken of it instead of `f`; it must agree
/// with `f` at the current leaf values.
inline GradCheckReport check_gradients(const std::function<ag::Var()>& f,
                                       const std::vector<std::pair<std::string, ag::Var>>& leaves, double h = 1e-3,
                                       std::size_t max_entries = 4096,
                                       const std::function<ag::Var()>& oracle = {}) {
  const std::function<ag::Var()>& g = oracle ? oracle : f;
  std::vector<bool> saved;
  for (const auto& [name, v] : leaves) {
    saved.push_back(v.requires_grad());
    ag::Var(v).set_requires_grad(true);
    ag::Var(v).zero_grad();
  }
  ag::backward(f());

  GradCheckReport report;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    ag::Var v = leaves[li].second;
    const Tensor analytic_full = v.grad().empty() ? Tensor(v.shape()) : v.grad();
    const std::size_t n = v.value().numel();
    const std::size_t stride = n > max_entries ? (n + max_entries - 1) / max_entries : 1;
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    ag::NoGradGuard guard;
    for (std::size_t i = 0; i < n; i += stride) {
      float& x = v.mutable_value()[i];
      const float orig = x;
      x = static_cast<float>(orig + h);
      const double fp = g().value()[0];
      x = static_cast<float>(orig - h);
      const double fm = g().value()[0];
      x = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double analytic = analytic_full[i];
      diff2 += (analytic - numeric) * (analytic - numeric);
      a2 += analytic * analytic;
      n2 += numeric * numeric;
      ++report.checked;
    }
    const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
    const double rel = std::sqrt(diff2) / denom;
    if (rel >= report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst = leaves[li].first;
    }
  }
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    ag::Var v = leaves[li].second;
    v.set_requires_grad(saved[li]);
    v.zero_grad();
  }
  return report;
}

}  // namespace glean::testing
