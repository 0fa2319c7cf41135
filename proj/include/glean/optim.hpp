#pragma once

#include <vector>

#include "glean/blocks.hpp"

namespace glean {

/// lr_min + ½(lr_init − lr_min)(1 + cos(π·step/total)); step must lie in [0, total].
double cosine_lr(long step, long total, double lr_init, double lr_min);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
};

/// Adam over a fixed parameter list. Parameters without an accumulated
/// gradient are treated as having a zero gradient.
class Adam {
 public:
  Adam(ParamList params, AdamOptions options = {});

  void zero_grad();
  void step(double lr);

  const ParamList& parameters() const { return params_; }
  long steps_taken() const { return t_; }

 private:
  ParamList params_;
  AdamOptions opt_;
  std::vector<Tensor> m_, v_;
  long t_ = 0;
};

}  // namespace glean
