#pragma once

// Naive double-precision reference implementations used as independent
// oracles: value checks against the f32 kernels and central finite
// differences for gradient checks. Deliberately written as plain loops with
// no code shared with the library.

#include <cmath>
#include <cstdint>
#include <vector>

namespace ref {

using dvec = std::vector<double>;

inline dvec widen(const std::vector<float>& v) { return dvec(v.begin(), v.end()); }

// c[m,n] = a[m,k] * b[k,n], triple loop
inline dvec matmul(const dvec& a, const dvec& b, int64_t m, int64_t k, int64_t n) {
    dvec c(m * n, 0.0);
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int64_t kk = 0; kk < k; ++kk) {
                acc += a[i * k + kk] * b[kk * n + j];
            }
            c[i * n + j] = acc;
        }
    }
    return c;
}

// direct exp/sum per row, no max subtraction
inline dvec softmax_rows(const dvec& x, int64_t d) {
    const int64_t rows = static_cast<int64_t>(x.size()) / d;
    dvec y(x.size());
    for (int64_t r = 0; r < rows; ++r) {
        double sum = 0.0;
        for (int64_t i = 0; i < d; ++i) {
            sum += std::exp(x[r * d + i]);
        }
        for (int64_t i = 0; i < d; ++i) {
            y[r * d + i] = std::exp(x[r * d + i]) / sum;
        }
    }
    return y;
}

// max-subtracted variant for large-magnitude rows
inline dvec softmax_rows_stable(const dvec& x, int64_t d) {
    const int64_t rows = static_cast<int64_t>(x.size()) / d;
    dvec y(x.size());
    for (int64_t r = 0; r < rows; ++r) {
        double mx = x[r * d];
        for (int64_t i = 1; i < d; ++i) {
            mx = std::max(mx, x[r * d + i]);
        }
        double sum = 0.0;
        for (int64_t i = 0; i < d; ++i) {
            sum += std::exp(x[r * d + i] - mx);
        }
        for (int64_t i = 0; i < d; ++i) {
            y[r * d + i] = std::exp(x[r * d + i] - mx) / sum;
        }
    }
    return y;
}

inline dvec log_softmax_rows(const dvec& x, int64_t d) {
    dvec p = softmax_rows_stable(x, d);
    for (double& v : p) {
        v = std::log(v);
    }
    return p;
}

inline dvec layer_norm(const dvec& x, const dvec& gamma, const dvec& beta, int64_t d,
                       double eps) {
    const int64_t rows = static_cast<int64_t>(x.size()) / d;
    dvec y(x.size());
    for (int64_t r = 0; r < rows; ++r) {
        double mean = 0.0;
        for (int64_t i = 0; i < d; ++i) {
            mean += x[r * d + i];
        }
        mean /= d;
        double var = 0.0;
        for (int64_t i = 0; i < d; ++i) {
            var += (x[r * d + i] - mean) * (x[r * d + i] - mean);
        }
        var /= d;
        const double rstd = 1.0 / std::sqrt(var + eps);
        for (int64_t i = 0; i < d; ++i) {
            y[r * d + i] = (x[r * d + i] - mean) * rstd * gamma[i] + beta[i];
        }
    }
    return y;
}

inline dvec group_norm(const dvec& x, int groups, const dvec& gamma, const dvec& beta,
                       int64_t b, int64_t c, int64_t hw, double eps) {
    dvec y(x.size());
    const int64_t cpg = c / groups;
    for (int64_t ib = 0; ib < b; ++ib) {
        for (int64_t g = 0; g < groups; ++g) {
            double mean = 0.0;
            for (int64_t j = 0; j < cpg; ++j) {
                for (int64_t i = 0; i < hw; ++i) {
                    mean += x[((ib * c + g * cpg + j) * hw) + i];
                }
            }
            mean /= static_cast<double>(cpg * hw);
            double var = 0.0;
            for (int64_t j = 0; j < cpg; ++j) {
                for (int64_t i = 0; i < hw; ++i) {
                    const double dlt = x[((ib * c + g * cpg + j) * hw) + i] - mean;
                    var += dlt * dlt;
                }
            }
            var /= static_cast<double>(cpg * hw);
            const double rstd = 1.0 / std::sqrt(var + eps);
            for (int64_t j = 0; j < cpg; ++j) {
                const int64_t ch = g * cpg + j;
                for (int64_t i = 0; i < hw; ++i) {
                    const int64_t idx = (ib * c + ch) * hw + i;
                    y[idx] = (x[idx] - mean) * rstd * gamma[ch] + beta[ch];
                }
            }
        }
    }
    return y;
}

inline dvec silu(const dvec& x) {
    dvec y(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        y[i] = x[i] / (1.0 + std::exp(-x[i]));
    }
    return y;
}

inline dvec l2_normalize_rows(const dvec& x, int64_t d, double eps) {
    const int64_t rows = static_cast<int64_t>(x.size()) / d;
    dvec y(x.size());
    for (int64_t r = 0; r < rows; ++r) {
        double ss = 0.0;
        for (int64_t i = 0; i < d; ++i) {
            ss += x[r * d + i] * x[r * d + i];
        }
        const double rn = 1.0 / std::sqrt(ss + eps);
        for (int64_t i = 0; i < d; ++i) {
            y[r * d + i] = x[r * d + i] * rn;
        }
    }
    return y;
}

// per-element loops over [b,h,s,dh] x [b,h,m,dh], optional additive mask
// bias per (b, m)
inline dvec attention(const dvec& q, const dvec& k, const dvec& v, int64_t b, int64_t h,
                      int64_t s, int64_t m, int64_t dh, const dvec* mask_bm = nullptr) {
    dvec out(b * h * s * dh, 0.0);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int64_t ib = 0; ib < b; ++ib) {
        for (int64_t ih = 0; ih < h; ++ih) {
            const int64_t qoff = (ib * h + ih) * s * dh;
            const int64_t koff = (ib * h + ih) * m * dh;
            for (int64_t is = 0; is < s; ++is) {
                dvec logits(m);
                for (int64_t im = 0; im < m; ++im) {
                    double dot = 0.0;
                    for (int64_t id = 0; id < dh; ++id) {
                        dot += q[qoff + is * dh + id] * k[koff + im * dh + id];
                    }
                    logits[im] = dot * scale;
                    if (mask_bm) {
                        logits[im] += (*mask_bm)[ib * m + im];
                    }
                }
                dvec p = softmax_rows_stable(logits, m);
                for (int64_t id = 0; id < dh; ++id) {
                    double acc = 0.0;
                    for (int64_t im = 0; im < m; ++im) {
                        acc += p[im] * v[koff + im * dh + id];
                    }
                    out[qoff + is * dh + id] = acc;
                }
            }
        }
    }
    return out;
}

inline dvec conv2d(const dvec& x, const dvec& w, const dvec* bias, int64_t b, int64_t ic,
                   int64_t hh, int64_t ww, int64_t oc, int64_t kh, int64_t kw, int stride,
                   int pad) {
    const int64_t oh = (hh + 2 * pad - kh) / stride + 1;
    const int64_t ow = (ww + 2 * pad - kw) / stride + 1;
    dvec y(b * oc * oh * ow, 0.0);
    for (int64_t ib = 0; ib < b; ++ib) {
        for (int64_t io = 0; io < oc; ++io) {
            for (int64_t oy = 0; oy < oh; ++oy) {
                for (int64_t ox = 0; ox < ow; ++ox) {
                    double acc = bias ? (*bias)[io] : 0.0;
                    for (int64_t ii = 0; ii < ic; ++ii) {
                        for (int64_t ky = 0; ky < kh; ++ky) {
                            for (int64_t kx = 0; kx < kw; ++kx) {
                                const int64_t iy = oy * stride - pad + ky;
                                const int64_t ix = ox * stride - pad + kx;
                                if (iy < 0 || iy >= hh || ix < 0 || ix >= ww) {
                                    continue;
                                }
                                acc += x[((ib * ic + ii) * hh + iy) * ww + ix] *
                                       w[((io * ic + ii) * kh + ky) * kw + kx];
                            }
                        }
                    }
                    y[((ib * oc + io) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    return y;
}

inline dvec upsample_nearest2(const dvec& x, int64_t bc, int64_t h, int64_t w) {
    dvec y(bc * 4 * h * w);
    for (int64_t p = 0; p < bc; ++p) {
        for (int64_t iy = 0; iy < 2 * h; ++iy) {
            for (int64_t ix = 0; ix < 2 * w; ++ix) {
                y[p * 4 * h * w + iy * 2 * w + ix] = x[p * h * w + (iy / 2) * w + (ix / 2)];
            }
        }
    }
    return y;
}

}  // namespace ref
