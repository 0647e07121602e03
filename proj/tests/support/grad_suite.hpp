#pragma once

// Finite-difference gradient suite shared by the unit tests and the
// acceptance runner. Analytic f32 gradients are compared against central
// differences of the double-precision reference ops (step 1e-3, entries with
// |fd| <= 1e-4 skipped).

#include <functional>

#include "adapter.hpp"
#include "ops.hpp"
#include "param_store.hpp"
#include "ref_unet.hpp"
#include "test_util.hpp"

namespace gradsuite {

struct GradCase {
    std::string name;
    double max_rel = 0.0;
    int checked = 0;
};

namespace detail {

inline double weighted(const ref::dvec& out, const ref::dvec& w) {
    double acc = 0.0;
    for (size_t i = 0; i < out.size(); ++i) {
        acc += out[i] * w[i];
    }
    return acc;
}

inline GradCase run_case(const std::string& name, std::vector<ipa::Tensor> params,
                         const std::function<ipa::Tensor()>& impl_loss,
                         const std::function<double()>& ref_loss) {
    for (ipa::Tensor& p : params) {
        p.set_requires_grad(true);
        p.zero_grad();
    }
    ipa::Tensor loss = impl_loss();
    ipa::backward(loss);
    GradCase result{name, 0.0, 0};
    for (ipa::Tensor& p : params) {
        const testutil::FdResult fd = testutil::fd_check(
            p.values(), p.grad(), [&](const std::vector<float>&) { return ref_loss(); });
        result.max_rel = std::max(result.max_rel, fd.max_rel);
        result.checked += fd.checked;
    }
    return result;
}

}  // namespace detail

inline std::vector<GradCase> run_op_grad_suite(uint64_t seed) {
    using namespace ipa;
    using ref::dvec;
    std::vector<GradCase> results;
    Rng rng(mix64(seed, 0x92ad5));

    {
        Tensor a = testutil::random_tensor(rng, {4, 6});
        Tensor b = testutil::random_tensor(rng, {6, 5});
        Tensor w = testutil::random_tensor(rng, {4, 5});
        results.push_back(detail::run_case(
            "matmul", {a, b},
            [&] { return sum_all(mul(reshape(matmul(a, b), {20}), reshape(w, {20}))); },
            [&] {
                return detail::weighted(
                    ref::matmul(ref::widen(a.values()), ref::widen(b.values()), 4, 6, 5),
                    ref::widen(w.values()));
            }));
    }
    {
        Tensor x = testutil::random_tensor(rng, {4, 7});
        Tensor w = testutil::random_tensor(rng, {4, 7});
        results.push_back(detail::run_case(
            "softmax_rows", {x}, [&] { return sum_all(mul(softmax_rows(x), w)); },
            [&] {
                return detail::weighted(ref::softmax_rows_stable(ref::widen(x.values()), 7),
                                        ref::widen(w.values()));
            }));
    }
    {
        Tensor x = testutil::random_tensor(rng, {4, 9});
        Tensor w = testutil::random_tensor(rng, {4, 9});
        results.push_back(detail::run_case(
            "log_softmax_rows", {x}, [&] { return sum_all(mul(log_softmax_rows(x), w)); },
            [&] {
                return detail::weighted(ref::log_softmax_rows(ref::widen(x.values()), 9),
                                        ref::widen(w.values()));
            }));
    }
    {
        Tensor x = testutil::random_tensor(rng, {4, 8});
        Tensor g = testutil::random_tensor(rng, {8});
        Tensor b = testutil::random_tensor(rng, {8});
        Tensor w = testutil::random_tensor(rng, {4, 8});
        results.push_back(detail::run_case(
            "layer_norm", {x, g, b}, [&] { return sum_all(mul(layer_norm(x, g, b), w)); },
            [&] {
                return detail::weighted(
                    ref::layer_norm(ref::widen(x.values()), ref::widen(g.values()),
                                    ref::widen(b.values()), 8, 1e-5),
                    ref::widen(w.values()));
            }));
    }
    {
        Tensor x = testutil::random_tensor(rng, {2, 8, 3, 3});
        Tensor g = testutil::random_tensor(rng, {8});
        Tensor b = testutil::random_tensor(rng, {8});
        Tensor w = testutil::random_tensor(rng, {2, 8, 3, 3});
        results.push_back(detail::run_case(
            "group_norm", {x, g, b}, [&] { return sum_all(mul(group_norm(x, 4, g, b), w)); },
            [&] {
                return detail::weighted(
                    ref::group_norm(ref::widen(x.values()), 4, ref::widen(g.values()),
                                    ref::widen(b.values()), 2, 8, 9, 1e-5),
                    ref::widen(w.values()));
            }));
    }
    {
        Tensor x = testutil::random_tensor(rng, {40});
        Tensor w = testutil::random_tensor(rng, {40});
        results.push_back(detail::run_case(
            "silu", {x}, [&] { return sum_all(mul(silu(x), w)); },
            [&] {
                return detail::weighted(ref::silu(ref::widen(x.values())),
                                        ref::widen(w.values()));
            }));
    }
    {
        Tensor x = testutil::random_tensor(rng, {5, 6});
        Tensor w = testutil::random_tensor(rng, {5, 6});
        results.push_back(detail::run_case(
            "l2_normalize_rows", {x}, [&] { return sum_all(mul(l2_normalize_rows(x), w)); },
            [&] {
                return detail::weighted(
                    ref::l2_normalize_rows(ref::widen(x.values()), 6, 1e-12),
                    ref::widen(w.values()));
            }));
    }
    {
        Tensor q = testutil::random_tensor(rng, {1, 2, 3, 5});
        Tensor k = testutil::random_tensor(rng, {1, 2, 4, 5});
        Tensor v = testutil::random_tensor(rng, {1, 2, 4, 5});
        Tensor w = testutil::random_tensor(rng, {1, 2, 3, 5});
        results.push_back(detail::run_case(
            "attention", {q, k, v}, [&] { return sum_all(mul(attention(q, k, v), w)); },
            [&] {
                return detail::weighted(
                    ref::attention(ref::widen(q.values()), ref::widen(k.values()),
                                   ref::widen(v.values()), 1, 2, 3, 4, 5),
                    ref::widen(w.values()));
            }));
    }
    {
        Tensor x = testutil::random_tensor(rng, {2, 3, 6, 6});
        Tensor cw = testutil::random_tensor(rng, {4, 3, 3, 3}, 0.4f);
        Tensor cb = testutil::random_tensor(rng, {4}, 0.2f);
        Tensor w = testutil::random_tensor(rng, {2, 4, 3, 3});
        results.push_back(detail::run_case(
            "conv2d", {x, cw, cb},
            [&] {
                return sum_all(mul(conv2d(x, cw, cb, 2, 1), w));
            },
            [&] {
                const ref::dvec bias = ref::widen(cb.values());
                return detail::weighted(
                    ref::conv2d(ref::widen(x.values()), ref::widen(cw.values()), &bias, 2, 3, 6,
                                6, 4, 3, 3, 2, 1),
                    ref::widen(w.values()));
            }));
    }
    {
        Tensor table = testutil::random_tensor(rng, {6, 4});
        const std::vector<int> ids = {1, 0, 5, 2};
        Tensor w = testutil::random_tensor(rng, {4, 4});
        results.push_back(detail::run_case(
            "embedding", {table}, [&] { return sum_all(mul(embedding(table, ids), w)); },
            [&] {
                const ref::dvec t = ref::widen(table.values());
                ref::dvec out(ids.size() * 4);
                for (size_t i = 0; i < ids.size(); ++i) {
                    for (int64_t j = 0; j < 4; ++j) {
                        out[i * 4 + j] = t[ids[i] * 4 + j];
                    }
                }
                return detail::weighted(out, ref::widen(w.values()));
            }));
    }
    {
        Tensor x = testutil::random_tensor(rng, {1, 3, 4, 4});
        Tensor w = testutil::random_tensor(rng, {1, 3, 8, 8});
        results.push_back(detail::run_case(
            "upsample_nearest2", {x}, [&] { return sum_all(mul(upsample_nearest2(x), w)); },
            [&] {
                return detail::weighted(ref::upsample_nearest2(ref::widen(x.values()), 3, 4, 4),
                                        ref::widen(w.values()));
            }));
    }
    {
        Tensor x = testutil::random_tensor(rng, {2, 3, 4});
        Tensor w = testutil::random_tensor(rng, {4, 2, 3});
        results.push_back(detail::run_case(
            "permute", {x}, [&] { return sum_all(mul(permute(x, {2, 0, 1}), w)); },
            [&] {
                const ref::dvec xv = ref::widen(x.values());
                ref::dvec out(24);
                for (int64_t a = 0; a < 2; ++a) {
                    for (int64_t b = 0; b < 3; ++b) {
                        for (int64_t c = 0; c < 4; ++c) {
                            out[(c * 2 + a) * 3 + b] = xv[(a * 3 + b) * 4 + c];
                        }
                    }
                }
                return detail::weighted(out, ref::widen(w.values()));
            }));
    }
    {
        Tensor a = testutil::random_tensor(rng, {2, 3, 4});
        Tensor b = testutil::random_tensor(rng, {2, 2, 4});
        Tensor w = testutil::random_tensor(rng, {2, 5, 4});
        results.push_back(detail::run_case(
            "concat", {a, b}, [&] { return sum_all(mul(concat({a, b}, 1), w)); },
            [&] {
                const ref::dvec av = ref::widen(a.values());
                const ref::dvec bv = ref::widen(b.values());
                ref::dvec out(40);
                for (int64_t o = 0; o < 2; ++o) {
                    std::copy(av.begin() + o * 12, av.begin() + (o + 1) * 12,
                              out.begin() + o * 20);
                    std::copy(bv.begin() + o * 8, bv.begin() + (o + 1) * 8,
                              out.begin() + o * 20 + 12);
                }
                return detail::weighted(out, ref::widen(w.values()));
            }));
    }
    {
        Tensor a = testutil::random_tensor(rng, {3, 1, 5});
        Tensor b = testutil::random_tensor(rng, {4, 5});
        Tensor w = testutil::random_tensor(rng, {3, 4, 5});
        auto ref_broadcast = [&](bool is_add) {
            const ref::dvec av = ref::widen(a.values());
            const ref::dvec bv = ref::widen(b.values());
            ref::dvec out(60);
            for (int64_t i = 0; i < 3; ++i) {
                for (int64_t j = 0; j < 4; ++j) {
                    for (int64_t k = 0; k < 5; ++k) {
                        const double x = av[i * 5 + k];
                        const double y = bv[j * 5 + k];
                        out[(i * 4 + j) * 5 + k] = is_add ? x + y : x * y;
                    }
                }
            }
            return detail::weighted(out, ref::widen(w.values()));
        };
        results.push_back(detail::run_case(
            "broadcast_add", {a, b}, [&] { return sum_all(mul(add(a, b), w)); },
            [&] { return ref_broadcast(true); }));
        results.push_back(detail::run_case(
            "broadcast_mul", {a, b}, [&] { return sum_all(mul(mul(a, b), w)); },
            [&] { return ref_broadcast(false); }));
    }
    {
        Tensor x = testutil::random_tensor(rng, {3, 7});
        Tensor w = testutil::random_tensor(rng, {3, 7});
        results.push_back(detail::run_case(
            "scale_mean", {x}, [&] { return mean_all(mul(scale(x, 1.75f), w)); },
            [&] {
                const ref::dvec xv = ref::widen(x.values());
                const ref::dvec wv = ref::widen(w.values());
                double acc = 0.0;
                for (size_t i = 0; i < xv.size(); ++i) {
                    acc += 1.75 * xv[i] * wv[i];
                }
                return acc / static_cast<double>(xv.size());
            }));
    }
    return results;
}

inline ipa::UNetConfig tiny_unet_config() {
    ipa::UNetConfig cfg;
    cfg.image_size = 8;
    cfg.in_channels = 3;
    cfg.base_channels = 8;
    cfg.channel_mult = {1};
    cfg.attn_resolutions = {8};
    cfg.heads = 2;
    cfg.d_ctx = 16;
    return cfg;
}

// Full-model check: every parameter tensor is probed at a sampled subset of
// entries (the exhaustive per-op checks above cover the kernels).
inline GradCase run_tiny_unet_grad(uint64_t seed, bool decoupled) {
    using namespace ipa;
    const UNetConfig cfg = tiny_unet_config();
    BaseModel model = BaseModel::init(cfg, mix64(seed, 0x77), 50, ScheduleKind::linear_beta);
    // zero-initialized tensors give zero finite differences; nudge them so
    // every path carries signal
    Rng nudge(mix64(seed, 0x99));
    for (const std::string& name : model.params.names()) {
        Tensor& p = model.params.at(name);
        bool all_zero = true;
        for (float v : p.values()) {
            if (v != 0.0f) {
                all_zero = false;
                break;
            }
        }
        if (all_zero) {
            for (float& v : p.values()) {
                v = nudge.normal_f32() * 0.05f;
            }
        }
    }

    std::optional<AdapterWeights> adapter;
    std::optional<AdapterParams> adapter_params;
    Rng rng(mix64(seed, 0x1234));
    const int m = 5;
    const int n_img = 4;
    CondBundle cond;
    cond.text_tokens = testutil::random_tensor(rng, {1, m, cfg.d_ctx});
    cond.lambda_weight = 0.7f;
    if (decoupled) {
        adapter = init_adapter(model, AdapterVariant::global, mix64(seed, 0x55));
        adapter_params.emplace(*adapter, CrossAttnMode::decoupled);
        cond.image_tokens = testutil::random_tensor(rng, {1, n_img, cfg.d_ctx});
    }

    Tensor x = testutil::random_tensor(rng, {1, 3, 8, 8});
    Tensor w = testutil::random_tensor(rng, {1, 3, 8, 8});
    const int t = 7;

    auto impl_loss = [&] {
        Tensor eps =
            unet_forward(model, adapter_params ? &*adapter_params : nullptr, x, {t}, cond,
                         nullptr);
        return sum_all(mul(eps, w));
    };

    refunet::Ctx ctx;
    ctx.params = &model.params;
    ctx.cfg = &cfg;
    ctx.c_t = ref::widen(cond.text_tokens.values());
    ctx.m = m;
    if (decoupled) {
        ctx.adapter = &adapter->params;
        ctx.c_i = ref::widen(cond.image_tokens.values());
        ctx.n_img = n_img;
        ctx.lambda_weight = 0.7;
    }
    const ref::dvec wref = ref::widen(w.values());
    const ref::dvec xref = ref::widen(x.values());
    auto ref_loss = [&] {
        // re-widen adapter tokens each call: c_i is constant here, but the
        // store tensors under test are mutated in place by fd_check
        return detail::weighted(refunet::forward(ctx, xref, t), wref);
    };

    ParamStore& checked = decoupled ? adapter->params : model.params;
    for (const std::string& name : checked.names()) {
        checked.at(name).zero_grad();
    }
    Tensor loss = impl_loss();
    backward(loss);

    GradCase result{decoupled ? "tiny_unet_decoupled" : "tiny_unet_text", 0.0, 0};
    Rng pick(mix64(seed, 0xfd));
    for (const std::string& name : checked.names()) {
        if (decoupled && name.rfind("adapter/site", 0) != 0) {
            // image tokens are fed directly here, so only the per-site
            // W'_k/W'_v pairs participate in this composition
            continue;
        }
        Tensor& p = checked.at(name);
        require(p.has_grad(), ErrCode::MissingGradient, "no grad for " + name);
        std::vector<float>& theta = p.values();
        const std::vector<float>& grad = p.grad();
        const int probes = std::min<int64_t>(6, p.numel());
        for (int probe = 0; probe < probes; ++probe) {
            const int64_t i = pick.uniform_int(0, p.numel() - 1);
            const float keep = theta[i];
            theta[i] = keep + 1e-3f;
            const double fp = ref_loss();
            theta[i] = keep - 1e-3f;
            const double fm = ref_loss();
            theta[i] = keep;
            const double fd = (fp - fm) / 2e-3;
            if (std::fabs(fd) <= 1e-4) {
                continue;
            }
            ++result.checked;
            result.max_rel = std::max(result.max_rel, std::fabs(fd - grad[i]) / std::fabs(fd));
        }
    }
    return result;
}

}  // namespace gradsuite
