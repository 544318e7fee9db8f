#pragma once

#include "structfusion/autodiff.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace structfusion {

/// Supervised training settings. Defaults follow the published setup.
struct Hyperparams {
  int epochs = 20;
  double lr = 5e-3;
  int batch_size = 64;
  double clip_norm = 5.0;
  Index embed_dim = 50;
  Index hidden_dim = 150;
  std::uint64_t seed = 1;
  int max_len = 50;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Parameters flagged non-trainable are never
/// touched, whatever their gradient.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig config);

  void step();
  void zero_grad();
  long steps_taken() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig config_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  long t_ = 0;
};

double global_grad_norm(std::span<Parameter* const> params);

/// Rescales gradients so their global L2 norm is at most max_norm. Returns
/// the norm before clipping.
double clip_grad_norm(std::span<Parameter* const> params, double max_norm);

}  // namespace structfusion
