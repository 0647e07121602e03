#include "schedule.hpp"

#include <cmath>

namespace ipa {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kBetaStart = 1e-4;
constexpr double kBetaEnd = 2e-2;
}  // namespace

NoiseSchedule build_schedule(int T, ScheduleKind kind) {
    require(T >= 2, ErrCode::BadT, "schedule needs T >= 2, got " + std::to_string(T));
    NoiseSchedule s;
    s.T = T;
    s.alpha.resize(T + 1);
    s.sigma.resize(T + 1);
    s.alpha_bar.resize(T + 1);
    s.alpha[0] = 1.0f;
    s.sigma[0] = 0.0f;
    s.alpha_bar[0] = 1.0f;
    if (kind == ScheduleKind::linear_beta) {
        double prod = 1.0;
        for (int t = 1; t <= T; ++t) {
            const double beta = kBetaStart + (kBetaEnd - kBetaStart) *
                                                 static_cast<double>(t - 1) /
                                                 static_cast<double>(T - 1);
            prod *= 1.0 - beta;
            s.alpha_bar[t] = static_cast<float>(prod);
            s.alpha[t] = static_cast<float>(std::sqrt(prod));
            s.sigma[t] = static_cast<float>(std::sqrt(1.0 - prod));
        }
    } else {
        const double offset = 0.008;
        auto f = [&](double t) {
            const double z = (t / T + offset) / (1.0 + offset) * kPi / 2.0;
            const double c = std::cos(z);
            return c * c;
        };
        const double f0 = f(0.0);
        double prev = 1.0;
        for (int t = 1; t <= T; ++t) {
            double ab = f(static_cast<double>(t)) / f0;
            // clamp the per-step drop like the usual cosine schedule does
            ab = std::max(ab, prev * 0.001);
            ab = std::min(ab, prev);
            prev = ab;
            s.alpha_bar[t] = static_cast<float>(ab);
            s.alpha[t] = static_cast<float>(std::sqrt(ab));
            s.sigma[t] = static_cast<float>(std::sqrt(1.0 - ab));
        }
    }
    return s;
}

Tensor add_noise(const Tensor& x0, const Tensor& eps, int t, const NoiseSchedule& s) {
    require(x0.shape() == eps.shape(), ErrCode::ShapeMismatch,
            "add_noise shapes differ: " + shape_str(x0.shape()) + " vs " +
                shape_str(eps.shape()));
    require(t >= 0 && t <= s.T, ErrCode::BadTimestep, "timestep out of range: " + std::to_string(t));
    const float a = s.alpha[t];
    const float sg = s.sigma[t];
    std::vector<float> out(x0.numel());
    const float* xv = x0.data();
    const float* ev = eps.data();
    for (int64_t i = 0; i < x0.numel(); ++i) {
        out[i] = std::fmaf(a, xv[i], sg * ev[i]);
    }
    return Tensor::from_data(x0.shape(), std::move(out));
}

Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, float w) {
    require(eps_cond.shape() == eps_uncond.shape(), ErrCode::ShapeMismatch,
            "cfg_combine shapes differ");
    if (w == 1.0f) {
        return eps_cond.detach_copy();
    }
    if (w == 0.0f) {
        return eps_uncond.detach_copy();
    }
    const float wu = 1.0f - w;
    std::vector<float> out(eps_cond.numel());
    const float* c = eps_cond.data();
    const float* u = eps_uncond.data();
    for (int64_t i = 0; i < eps_cond.numel(); ++i) {
        // explicit fma pins the rounding so the elementwise formula is
        // reproducible independent of compiler contraction choices
        out[i] = c[i] == u[i] ? c[i] : std::fmaf(w, c[i], wu * u[i]);
    }
    return Tensor::from_data(eps_cond.shape(), std::move(out));
}

Tensor ddim_step(const Tensor& x_t, const Tensor& eps_pred, int t, int t_prev,
                 const NoiseSchedule& s, float eta, const Tensor* noise) {
    require(t > t_prev && t_prev >= 0 && t <= s.T, ErrCode::BadTimestepOrder,
            "ddim_step needs T >= t > t_prev >= 0, got t=" + std::to_string(t) +
                " t_prev=" + std::to_string(t_prev));
    require(x_t.shape() == eps_pred.shape(), ErrCode::ShapeMismatch, "ddim_step shapes differ");
    const float a_t = s.alpha[t];
    const float sg_t = s.sigma[t];
    const float a_prev = s.alpha[t_prev];
    const float sg_prev = s.sigma[t_prev];
    double tau = 0.0;
    if (eta > 0.0f && t_prev > 0) {
        const double ratio = static_cast<double>(a_t) * a_t /
                             (static_cast<double>(a_prev) * a_prev);
        tau = static_cast<double>(eta) * sg_prev / sg_t * std::sqrt(std::max(0.0, 1.0 - ratio));
    }
    const float tau_f = static_cast<float>(tau);
    const double dir2 = static_cast<double>(sg_prev) * sg_prev - tau * tau;
    const float dir = static_cast<float>(std::sqrt(std::max(0.0, dir2)));
    if (tau_f > 0.0f) {
        require(noise != nullptr && noise->shape() == x_t.shape(), ErrCode::BadArg,
                "ddim_step with eta > 0 needs a noise tensor");
    }

    std::vector<float> out(x_t.numel());
    const float* xv = x_t.data();
    const float* ev = eps_pred.data();
    const float* nv = tau_f > 0.0f ? noise->data() : nullptr;
    for (int64_t i = 0; i < x_t.numel(); ++i) {
        const float x0_hat = (xv[i] - sg_t * ev[i]) / a_t;
        float acc = a_prev * x0_hat;
        if (dir != 0.0f) {
            acc += dir * ev[i];
        }
        if (nv != nullptr) {
            acc += tau_f * nv[i];
        }
        out[i] = acc;
    }
    return Tensor::from_data(x_t.shape(), std::move(out));
}

std::vector<int> make_step_grid(int T, int steps) {
    require(steps >= 1 && steps <= T, ErrCode::BadSteps,
            "steps must be in [1, T], got " + std::to_string(steps));
    std::vector<int> grid(steps);
    for (int i = 0; i < steps; ++i) {
        grid[i] = static_cast<int>(std::llround(static_cast<double>(T) *
                                                static_cast<double>(steps - i) /
                                                static_cast<double>(steps)));
    }
    for (int i = 0; i < steps; ++i) {
        require(grid[i] >= 1 && grid[i] <= T && (i == 0 || grid[i] < grid[i - 1]),
                ErrCode::Internal, "step grid is not strictly decreasing");
    }
    require(grid[0] == T, ErrCode::Internal, "step grid must start at T");
    return grid;
}

}  // namespace ipa
