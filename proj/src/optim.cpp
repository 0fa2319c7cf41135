#include "glean/optim.hpp"

#include <cmath>
#include <numbers>

#include "glean/errors.hpp"

namespace glean {

double cosine_lr(long step, long total, double lr_init, double lr_min) {
  if (total <= 0) throw InvalidArgument("cosine_lr: total must be positive");
  if (step < 0 || step > total) {
    throw InvalidArgument("cosine_lr: step " + std::to_string(step) + " outside [0, " + std::to_string(total) + "]");
  }
  const double phase = std::numbers::pi * static_cast<double>(step) / static_cast<double>(total);
  return lr_min + 0.5 * (lr_init - lr_min) * (1.0 + std::cos(phase));
}

Adam::Adam(ParamList params, AdamOptions options) : params_(std::move(params)), opt_(options) {
  for (const auto& [name, p] : params_) {
    if (!p.requires_grad()) throw ContractViolation("optimizer given non-trainable parameter '" + name + "'");
    m_.emplace_back(p.shape());
    v_.emplace_back(p.shape());
  }
}

void Adam::zero_grad() {
  for (auto& [name, p] : params_) p.zero_grad();
}

void Adam::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  const float b1 = static_cast<float>(opt_.beta1), b2 = static_cast<float>(opt_.beta2);
  const float step_size = static_cast<float>(lr / bc1);
  const float inv_bc2 = static_cast<float>(1.0 / bc2);
  const float eps = static_cast<float>(opt_.eps);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ag::Var& p = params_[i].second;
    const Tensor& g = p.grad();
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    Tensor& w = p.mutable_value();
    const bool has_grad = !g.empty();
    for (std::size_t j = 0; j < w.numel(); ++j) {
      const float gj = has_grad ? g[j] : 0.0f;
      m[j] = b1 * m[j] + (1.0f - b1) * gj;
      v[j] = b2 * v[j] + (1.0f - b2) * gj * gj;
      w[j] -= step_size * m[j] / (std::sqrt(v[j] * inv_bc2) + eps);
    }
  }
}

}  // namespace glean
