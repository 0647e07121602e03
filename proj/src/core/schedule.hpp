#pragma once

#include "tensor.hpp"

namespace ipa {

// Variance-preserving schedule: alpha[t]^2 + sigma[t]^2 = 1 for all t,
// alpha[0] = 1, sigma[0] = 0, alpha non-increasing.
struct NoiseSchedule {
    int T = 0;
    std::vector<float> alpha;      // size T+1
    std::vector<float> sigma;      // size T+1
    std::vector<float> alpha_bar;  // size T+1, cumulative signal power
};

enum class ScheduleKind { linear_beta, cosine };

NoiseSchedule build_schedule(int T, ScheduleKind kind);

// x_t = alpha_t * x0 + sigma_t * eps
Tensor add_noise(const Tensor& x0, const Tensor& eps, int t, const NoiseSchedule& s);

// w * eps_cond + (1 - w) * eps_uncond, with the exact-identity cases
// (w == 1, w == 0, equal inputs) short-circuited so the affine identities
// hold bitwise in f32.
Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, float w);

// One reverse transition t -> t_prev. eta = 0 is deterministic and needs no
// noise tensor.
Tensor ddim_step(const Tensor& x_t, const Tensor& eps_pred, int t, int t_prev,
                 const NoiseSchedule& s, float eta, const Tensor* noise);

// Strictly decreasing timestep grid starting at T; the final transition to 0
// is implicit.
std::vector<int> make_step_grid(int T, int steps);

}  // namespace ipa
