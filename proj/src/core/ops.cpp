#include "ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "gemm.hpp"

namespace ipa {

namespace {

Shape broadcast_shapes(const Shape& a, const Shape& b) {
    const size_t rank = std::max(a.size(), b.size());
    Shape out(rank);
    for (size_t i = 0; i < rank; ++i) {
        const int64_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
        const int64_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
        if (da != db && da != 1 && db != 1) {
            fail(ErrCode::ShapeMismatch,
                 "cannot broadcast " + shape_str(a) + " with " + shape_str(b));
        }
        out[i] = std::max(da, db);
    }
    return out;
}

// Row-major strides with 0 on broadcast (size-1) extents, right-aligned to
// the output rank.
std::vector<int64_t> broadcast_strides(const Shape& in, const Shape& out) {
    std::vector<int64_t> strides(out.size(), 0);
    int64_t stride = 1;
    for (int i = static_cast<int>(in.size()) - 1; i >= 0; --i) {
        const size_t oi = out.size() - in.size() + i;
        strides[oi] = in[i] == 1 ? 0 : stride;
        stride *= in[i];
    }
    return strides;
}

// Calls f(out_index, a_index, b_index) over every element of `out`.
template <class F>
void for_each_broadcast2(const Shape& out, const Shape& sa, const Shape& sb, F&& f) {
    const int64_t total = numel_of(out);
    if (sa == out && sb == out) {
        for (int64_t i = 0; i < total; ++i) {
            f(i, i, i);
        }
        return;
    }
    const auto stra = broadcast_strides(sa, out);
    const auto strb = broadcast_strides(sb, out);
    const size_t rank = out.size();
    std::vector<int64_t> idx(rank, 0);
    int64_t ia = 0;
    int64_t ib = 0;
    for (int64_t i = 0; i < total; ++i) {
        f(i, ia, ib);
        for (int d = static_cast<int>(rank) - 1; d >= 0; --d) {
            ++idx[d];
            ia += stra[d];
            ib += strb[d];
            if (idx[d] < out[d]) {
                break;
            }
            idx[d] = 0;
            ia -= stra[d] * out[d];
            ib -= strb[d] * out[d];
        }
    }
}

template <class FwdF, class BwdF>
Tensor broadcast_binary(const Tensor& a, const Tensor& b, FwdF&& fwd, BwdF&& bwd) {
    const Shape out_shape = broadcast_shapes(a.shape(), b.shape());
    std::vector<float> out(numel_of(out_shape));
    const float* av = a.data();
    const float* bv = b.data();
    for_each_broadcast2(out_shape, a.shape(), b.shape(),
                        [&](int64_t i, int64_t ia, int64_t ib) { out[i] = fwd(av[ia], bv[ib]); });
    Tensor ta = a;
    Tensor tb = b;
    Shape shape_copy = out_shape;
    return make_op_result(
        out_shape, std::move(out), {a, b}, [ta, tb, shape_copy, bwd](TensorNode& self) {
            const bool need_a = ta.node()->requires_grad || ta.node()->backward_fn;
            const bool need_b = tb.node()->requires_grad || tb.node()->backward_fn;
            if (need_a) {
                ta.node()->accum_grad_alloc();
            }
            if (need_b) {
                tb.node()->accum_grad_alloc();
            }
            float* ga = need_a ? ta.node()->grad.data() : nullptr;
            float* gb = need_b ? tb.node()->grad.data() : nullptr;
            const float* av = ta.data();
            const float* bv = tb.data();
            const float* g = self.grad.data();
            for_each_broadcast2(shape_copy, ta.shape(), tb.shape(),
                                [&](int64_t i, int64_t ia, int64_t ib) {
                                    bwd(g[i], av[ia], bv[ib], ga ? ga + ia : nullptr,
                                        gb ? gb + ib : nullptr);
                                });
        });
}

bool needs_grad(const Tensor& t) {
    return t.defined() && (t.node()->requires_grad || t.node()->backward_fn);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return broadcast_binary(
        a, b, [](float x, float y) { return x + y; },
        [](float g, float, float, float* ga, float* gb) {
            if (ga) {
                *ga += g;
            }
            if (gb) {
                *gb += g;
            }
        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return broadcast_binary(
        a, b, [](float x, float y) { return x - y; },
        [](float g, float, float, float* ga, float* gb) {
            if (ga) {
                *ga += g;
            }
            if (gb) {
                *gb -= g;
            }
        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return broadcast_binary(
        a, b, [](float x, float y) { return x * y; },
        [](float g, float x, float y, float* ga, float* gb) {
            if (ga) {
                *ga += g * y;
            }
            if (gb) {
                *gb += g * x;
            }
        });
}

Tensor scale(const Tensor& a, float s) {
    std::vector<float> out(a.values());
    for (float& v : out) {
        v *= s;
    }
    Tensor ta = a;
    return make_op_result(a.shape(), std::move(out), {a}, [ta, s](TensorNode& self) {
        if (!needs_grad(ta)) {
            return;
        }
        ta.node()->accum_grad_alloc();
        float* ga = ta.node()->grad.data();
        const float* g = self.grad.data();
        const int64_t n = ta.numel();
        for (int64_t i = 0; i < n; ++i) {
            ga[i] += g[i] * s;
        }
    });
}

namespace {

struct MatmulDims {
    Shape batch;           // broadcast batch shape
    int64_t m, k, n;
    Shape batch_a, batch_b;
};

MatmulDims matmul_dims(const Tensor& a, const Tensor& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    require(sa.size() >= 2 && sb.size() >= 2, ErrCode::ShapeMismatch,
            "matmul needs rank >= 2, got " + shape_str(sa) + " and " + shape_str(sb));
    MatmulDims d;
    d.m = sa[sa.size() - 2];
    d.k = sa[sa.size() - 1];
    const int64_t kb = sb[sb.size() - 2];
    d.n = sb[sb.size() - 1];
    require(d.k == kb, ErrCode::ShapeMismatch,
            "matmul inner extents differ: " + shape_str(sa) + " @ " + shape_str(sb));
    d.batch_a.assign(sa.begin(), sa.end() - 2);
    d.batch_b.assign(sb.begin(), sb.end() - 2);
    d.batch = broadcast_shapes(d.batch_a, d.batch_b);
    return d;
}

template <class F>
void for_each_batch(const MatmulDims& d, F&& f) {
    const int64_t batches = numel_of(d.batch);
    if (batches == 1) {
        f(0, 0, 0);
        return;
    }
    const auto stra = broadcast_strides(d.batch_a, d.batch);
    const auto strb = broadcast_strides(d.batch_b, d.batch);
    const size_t rank = d.batch.size();
    std::vector<int64_t> idx(rank, 0);
    int64_t ia = 0;
    int64_t ib = 0;
    for (int64_t i = 0; i < batches; ++i) {
        f(i, ia, ib);
        for (int dd = static_cast<int>(rank) - 1; dd >= 0; --dd) {
            ++idx[dd];
            ia += stra[dd];
            ib += strb[dd];
            if (idx[dd] < d.batch[dd]) {
                break;
            }
            idx[dd] = 0;
            ia -= stra[dd] * d.batch[dd];
            ib -= strb[dd] * d.batch[dd];
        }
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    const MatmulDims d = matmul_dims(a, b);
    Shape out_shape = d.batch;
    out_shape.push_back(d.m);
    out_shape.push_back(d.n);
    std::vector<float> out(numel_of(out_shape), 0.0f);
    const float* av = a.data();
    const float* bv = b.data();
    const int64_t a_block = d.m * d.k;
    const int64_t b_block = d.k * d.n;
    const int64_t c_block = d.m * d.n;
    for_each_batch(d, [&](int64_t ic, int64_t ia, int64_t ib) {
        gemm_acc(av + ia * a_block, bv + ib * b_block, out.data() + ic * c_block, d.m, d.k, d.n);
    });

    Tensor ta = a;
    Tensor tb = b;
    return make_op_result(out_shape, std::move(out), {a, b}, [ta, tb, d](TensorNode& self) {
        const bool need_a = needs_grad(ta);
        const bool need_b = needs_grad(tb);
        if (need_a) {
            ta.node()->accum_grad_alloc();
        }
        if (need_b) {
            tb.node()->accum_grad_alloc();
        }
        const float* av = ta.data();
        const float* bv = tb.data();
        const float* g = self.grad.data();
        const int64_t a_block = d.m * d.k;
        const int64_t b_block = d.k * d.n;
        const int64_t c_block = d.m * d.n;
        std::vector<float> scratch(std::max(b_block, a_block));
        for_each_batch(d, [&](int64_t ic, int64_t ia, int64_t ib) {
            const float* gslice = g + ic * c_block;
            if (need_a) {
                // dA += dC @ B^T
                transpose(bv + ib * b_block, scratch.data(), d.k, d.n);
                gemm_acc(gslice, scratch.data(), ta.node()->grad.data() + ia * a_block, d.m, d.n,
                         d.k);
            }
            if (need_b) {
                // dB += A^T @ dC
                transpose(av + ia * a_block, scratch.data(), d.m, d.k);
                gemm_acc(scratch.data(), gslice, tb.node()->grad.data() + ib * b_block, d.k, d.m,
                         d.n);
            }
        });
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    require(numel_of(shape) == x.numel(), ErrCode::ShapeMismatch,
            "reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
    Tensor tx = x;
    return make_op_result(std::move(shape), x.values(), {x}, [tx](TensorNode& self) {
        if (!needs_grad(tx)) {
            return;
        }
        tx.node()->accum_grad_alloc();
        float* gx = tx.node()->grad.data();
        const float* g = self.grad.data();
        const int64_t n = tx.numel();
        for (int64_t i = 0; i < n; ++i) {
            gx[i] += g[i];
        }
    });
}

namespace {

std::vector<int64_t> contiguous_strides(const Shape& s) {
    std::vector<int64_t> strides(s.size());
    int64_t acc = 1;
    for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
        strides[i] = acc;
        acc *= s[i];
    }
    return strides;
}

void permute_into(const float* in, float* out, const Shape& in_shape,
                  const std::vector<int>& perm, bool accumulate) {
    const size_t rank = in_shape.size();
    Shape out_shape(rank);
    for (size_t i = 0; i < rank; ++i) {
        out_shape[i] = in_shape[perm[i]];
    }
    const auto in_strides = contiguous_strides(in_shape);
    std::vector<int64_t> strides(rank);
    for (size_t i = 0; i < rank; ++i) {
        strides[i] = in_strides[perm[i]];
    }
    std::vector<int64_t> idx(rank, 0);
    const int64_t total = numel_of(in_shape);
    int64_t src = 0;
    for (int64_t i = 0; i < total; ++i) {
        if (accumulate) {
            out[i] += in[src];
        } else {
            out[i] = in[src];
        }
        for (int d = static_cast<int>(rank) - 1; d >= 0; --d) {
            ++idx[d];
            src += strides[d];
            if (idx[d] < out_shape[d]) {
                break;
            }
            idx[d] = 0;
            src -= strides[d] * out_shape[d];
        }
    }
}

}  // namespace

Tensor permute(const Tensor& x, const std::vector<int>& perm) {
    const Shape& in_shape = x.shape();
    require(perm.size() == in_shape.size(), ErrCode::ShapeMismatch, "permute rank mismatch");
    Shape out_shape(perm.size());
    for (size_t i = 0; i < perm.size(); ++i) {
        out_shape[i] = in_shape[perm[i]];
    }
    std::vector<float> out(x.numel());
    permute_into(x.data(), out.data(), in_shape, perm, false);

    // Inverse permutation maps output axes back to input axes.
    std::vector<int> inv(perm.size());
    for (size_t i = 0; i < perm.size(); ++i) {
        inv[perm[i]] = static_cast<int>(i);
    }
    Tensor tx = x;
    Shape out_copy = out_shape;
    return make_op_result(std::move(out_shape), std::move(out), {x},
                          [tx, inv, out_copy](TensorNode& self) {
                              if (!needs_grad(tx)) {
                                  return;
                              }
                              tx.node()->accum_grad_alloc();
                              permute_into(self.grad.data(), tx.node()->grad.data(), out_copy,
                                           inv, true);
                          });
}

Tensor concat(const std::vector<Tensor>& xs, int axis) {
    require(!xs.empty(), ErrCode::BadArg, "concat of zero tensors");
    const Shape& first = xs[0].shape();
    const size_t rank = first.size();
    if (axis < 0) {
        axis += static_cast<int>(rank);
    }
    require(axis >= 0 && axis < static_cast<int>(rank), ErrCode::BadArg, "concat axis");
    Shape out_shape = first;
    int64_t axis_total = 0;
    for (const Tensor& t : xs) {
        const Shape& s = t.shape();
        require(s.size() == rank, ErrCode::ShapeMismatch, "concat rank mismatch");
        for (size_t i = 0; i < rank; ++i) {
            require(static_cast<int>(i) == axis || s[i] == first[i], ErrCode::ShapeMismatch,
                    "concat extent mismatch at axis " + std::to_string(i));
        }
        axis_total += s[axis];
    }
    out_shape[axis] = axis_total;

    int64_t outer = 1;
    for (int i = 0; i < axis; ++i) {
        outer *= first[i];
    }
    int64_t inner = 1;
    for (size_t i = axis + 1; i < rank; ++i) {
        inner *= first[i];
    }

    std::vector<float> out(numel_of(out_shape));
    const int64_t out_row = axis_total * inner;
    int64_t offset = 0;
    for (const Tensor& t : xs) {
        const int64_t rows = t.shape()[axis] * inner;
        const float* src = t.data();
        for (int64_t o = 0; o < outer; ++o) {
            std::memcpy(out.data() + o * out_row + offset, src + o * rows,
                        rows * sizeof(float));
        }
        offset += rows;
    }

    std::vector<Tensor> parents = xs;
    return make_op_result(std::move(out_shape), std::move(out), parents,
                          [parents, outer, out_row](TensorNode& self) {
                              const float* g = self.grad.data();
                              int64_t offset = 0;
                              for (const Tensor& t : parents) {
                                  const int64_t rows = t.numel() / outer;
                                  if (needs_grad(t) && rows > 0) {
                                      Tensor tp = t;
                                      tp.node()->accum_grad_alloc();
                                      float* gp = tp.node()->grad.data();
                                      for (int64_t o = 0; o < outer; ++o) {
                                          const float* gsrc = g + o * out_row + offset;
                                          float* gdst = gp + o * rows;
                                          for (int64_t i = 0; i < rows; ++i) {
                                              gdst[i] += gsrc[i];
                                          }
                                      }
                                  }
                                  offset += rows;
                              }
                          });
}

Tensor upsample_nearest2(const Tensor& x) {
    const Shape& s = x.shape();
    require(s.size() == 4, ErrCode::ShapeMismatch, "upsample expects [b,c,h,w]");
    const int64_t b = s[0], c = s[1], h = s[2], w = s[3];
    Shape out_shape = {b, c, 2 * h, 2 * w};
    std::vector<float> out(numel_of(out_shape));
    const float* in = x.data();
    for (int64_t bc = 0; bc < b * c; ++bc) {
        const float* plane = in + bc * h * w;
        float* oplane = out.data() + bc * 4 * h * w;
        for (int64_t y = 0; y < h; ++y) {
            for (int64_t xx = 0; xx < w; ++xx) {
                const float v = plane[y * w + xx];
                float* row0 = oplane + (2 * y) * 2 * w + 2 * xx;
                float* row1 = row0 + 2 * w;
                row0[0] = v;
                row0[1] = v;
                row1[0] = v;
                row1[1] = v;
            }
        }
    }
    Tensor tx = x;
    return make_op_result(std::move(out_shape), std::move(out), {x},
                          [tx, b, c, h, w](TensorNode& self) {
                              if (!needs_grad(tx)) {
                                  return;
                              }
                              tx.node()->accum_grad_alloc();
                              float* gx = tx.node()->grad.data();
                              const float* g = self.grad.data();
                              for (int64_t bc = 0; bc < b * c; ++bc) {
                                  float* gplane = gx + bc * h * w;
                                  const float* goplane = g + bc * 4 * h * w;
                                  for (int64_t y = 0; y < h; ++y) {
                                      for (int64_t xx = 0; xx < w; ++xx) {
                                          const float* row0 = goplane + (2 * y) * 2 * w + 2 * xx;
                                          const float* row1 = row0 + 2 * w;
                                          gplane[y * w + xx] +=
                                              ((row0[0] + row0[1]) + row1[0]) + row1[1];
                                      }
                                  }
                              }
                          });
}

namespace {

struct ConvDims {
    int64_t b, ic, h, w, oc, kh, kw, oh, ow;
    int stride, pad;
    int64_t cols_rows() const { return oh * ow; }
    int64_t cols_k() const { return ic * kh * kw; }
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad) {
    const Shape& xs = x.shape();
    const Shape& ws = w.shape();
    require(xs.size() == 4 && ws.size() == 4, ErrCode::ShapeMismatch,
            "conv2d expects x[b,c,h,w], w[oc,ic,kh,kw]");
    require(xs[1] == ws[1], ErrCode::ShapeMismatch,
            "conv2d channel mismatch: " + shape_str(xs) + " vs " + shape_str(ws));
    ConvDims d;
    d.b = xs[0];
    d.ic = xs[1];
    d.h = xs[2];
    d.w = xs[3];
    d.oc = ws[0];
    d.kh = ws[2];
    d.kw = ws[3];
    d.stride = stride;
    d.pad = pad;
    d.oh = (d.h + 2 * pad - d.kh) / stride + 1;
    d.ow = (d.w + 2 * pad - d.kw) / stride + 1;
    require(d.oh >= 1 && d.ow >= 1, ErrCode::ShapeMismatch, "conv2d output collapses to zero");
    return d;
}

void im2col(const float* x, float* cols, const ConvDims& d) {
    // cols[p, k] with p = oy*ow + ox, k = (c*kh + ky)*kw + kx
    for (int64_t oy = 0; oy < d.oh; ++oy) {
        for (int64_t ox = 0; ox < d.ow; ++ox) {
            float* row = cols + (oy * d.ow + ox) * d.cols_k();
            for (int64_t c = 0; c < d.ic; ++c) {
                const float* plane = x + c * d.h * d.w;
                for (int64_t ky = 0; ky < d.kh; ++ky) {
                    const int64_t iy = oy * d.stride - d.pad + ky;
                    for (int64_t kx = 0; kx < d.kw; ++kx) {
                        const int64_t ix = ox * d.stride - d.pad + kx;
                        const bool in_bounds = iy >= 0 && iy < d.h && ix >= 0 && ix < d.w;
                        *row++ = in_bounds ? plane[iy * d.w + ix] : 0.0f;
                    }
                }
            }
        }
    }
}

void col2im_acc(const float* cols, float* gx, const ConvDims& d) {
    for (int64_t oy = 0; oy < d.oh; ++oy) {
        for (int64_t ox = 0; ox < d.ow; ++ox) {
            const float* row = cols + (oy * d.ow + ox) * d.cols_k();
            for (int64_t c = 0; c < d.ic; ++c) {
                float* plane = gx + c * d.h * d.w;
                for (int64_t ky = 0; ky < d.kh; ++ky) {
                    const int64_t iy = oy * d.stride - d.pad + ky;
                    for (int64_t kx = 0; kx < d.kw; ++kx) {
                        const int64_t ix = ox * d.stride - d.pad + kx;
                        if (iy >= 0 && iy < d.h && ix >= 0 && ix < d.w) {
                            plane[iy * d.w + ix] += row[(c * d.kh + ky) * d.kw + kx];
                        } else {
                            // padding region, gradient discarded
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const std::optional<Tensor>& bias, int stride,
              int pad) {
    const ConvDims d = conv_dims(x, w, stride, pad);
    if (bias) {
        require(bias->shape() == Shape{d.oc}, ErrCode::ShapeMismatch, "conv2d bias shape");
    }
    Shape out_shape = {d.b, d.oc, d.oh, d.ow};
    std::vector<float> out(numel_of(out_shape), 0.0f);

    const int64_t p_rows = d.cols_rows();
    const int64_t k_cols = d.cols_k();
    std::vector<float> cols(p_rows * k_cols);
    std::vector<float> cols_t(k_cols * p_rows);
    const float* xv = x.data();
    const float* wv = w.data();
    for (int64_t ib = 0; ib < d.b; ++ib) {
        im2col(xv + ib * d.ic * d.h * d.w, cols.data(), d);
        transpose(cols.data(), cols_t.data(), p_rows, k_cols);
        float* oslice = out.data() + ib * d.oc * p_rows;
        gemm_acc(wv, cols_t.data(), oslice, d.oc, k_cols, p_rows);
        if (bias) {
            const float* bv = bias->data();
            for (int64_t c = 0; c < d.oc; ++c) {
                float* orow = oslice + c * p_rows;
                const float b = bv[c];
                for (int64_t p = 0; p < p_rows; ++p) {
                    orow[p] += b;
                }
            }
        }
    }

    Tensor tx = x;
    Tensor tw = w;
    std::vector<Tensor> parents = {x, w};
    std::optional<Tensor> tb = bias;
    if (tb) {
        parents.push_back(*tb);
    }
    return make_op_result(std::move(out_shape), std::move(out), parents,
                          [tx, tw, tb, d](TensorNode& self) {
        const bool need_x = needs_grad(tx);
        const bool need_w = needs_grad(tw);
        const bool need_b = tb && needs_grad(*tb);
        if (!need_x && !need_w && !need_b) {
            return;
        }
        const int64_t p_rows = d.cols_rows();
        const int64_t k_cols = d.cols_k();
        std::vector<float> cols(p_rows * k_cols);
        std::vector<float> gout_t(p_rows * d.oc);
        std::vector<float> gcols;
        if (need_x) {
            tx.node()->accum_grad_alloc();
            gcols.assign(p_rows * k_cols, 0.0f);
        }
        if (need_w) {
            tw.node()->accum_grad_alloc();
        }
        if (need_b) {
            tb->node()->accum_grad_alloc();
        }
        const float* g = self.grad.data();
        const float* xv = tx.data();
        for (int64_t ib = 0; ib < d.b; ++ib) {
            const float* gslice = g + ib * d.oc * p_rows;
            if (need_w || need_x) {
                im2col(xv + ib * d.ic * d.h * d.w, cols.data(), d);
            }
            if (need_w) {
                // dW[oc,k] += dOut[oc,p] @ cols[p,k]
                gemm_acc(gslice, cols.data(), tw.node()->grad.data(), d.oc, p_rows, k_cols);
            }
            if (need_x) {
                // dcols[p,k] = dOut^T[p,oc] @ W[oc,k], then scatter back
                transpose(gslice, gout_t.data(), d.oc, p_rows);
                std::fill(gcols.begin(), gcols.end(), 0.0f);
                gemm_acc(gout_t.data(), tw.data(), gcols.data(), p_rows, d.oc, k_cols);
                col2im_acc(gcols.data(), tx.node()->grad.data() + ib * d.ic * d.h * d.w, d);
            }
            if (need_b) {
                float* gb = tb->node()->grad.data();
                for (int64_t c = 0; c < d.oc; ++c) {
                    const float* grow = gslice + c * p_rows;
                    float acc = 0.0f;
                    for (int64_t p = 0; p < p_rows; ++p) {
                        acc += grow[p];
                    }
                    gb[c] += acc;
                }
            }
        }
    });
}

Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
    const Shape& ts = table.shape();
    require(ts.size() == 2, ErrCode::ShapeMismatch, "embedding table must be [vocab, dim]");
    const int64_t vocab = ts[0];
    const int64_t dim = ts[1];
    const int64_t n = static_cast<int64_t>(ids.size());
    std::vector<float> out(n * dim);
    const float* tv = table.data();
    for (int64_t i = 0; i < n; ++i) {
        const int id = ids[i];
        require(id >= 0 && id < vocab, ErrCode::BadArg, "token id out of range");
        std::memcpy(out.data() + i * dim, tv + static_cast<int64_t>(id) * dim,
                    dim * sizeof(float));
    }
    Tensor tt = table;
    std::vector<int> ids_copy = ids;
    return make_op_result({n, dim}, std::move(out), {table}, [tt, ids_copy, dim](TensorNode& self) {
        if (!needs_grad(tt)) {
            return;
        }
        tt.node()->accum_grad_alloc();
        float* gt = tt.node()->grad.data();
        const float* g = self.grad.data();
        for (size_t i = 0; i < ids_copy.size(); ++i) {
            float* dst = gt + static_cast<int64_t>(ids_copy[i]) * dim;
            const float* src = g + static_cast<int64_t>(i) * dim;
            for (int64_t j = 0; j < dim; ++j) {
                dst[j] += src[j];
            }
        }
    });
}

Tensor softmax_rows(const Tensor& x) {
    const Shape& s = x.shape();
    require(!s.empty() && s.back() >= 1, ErrCode::ShapeMismatch, "softmax needs a last axis");
    const int64_t d = s.back();
    const int64_t rows = x.numel() / d;
    std::vector<float> out(x.numel());
    const float* xv = x.data();
    for (int64_t r = 0; r < rows; ++r) {
        const float* row = xv + r * d;
        float* orow = out.data() + r * d;
        float mx = row[0];
        for (int64_t i = 1; i < d; ++i) {
            mx = std::max(mx, row[i]);
        }
        float sum = 0.0f;
        for (int64_t i = 0; i < d; ++i) {
            orow[i] = std::exp(row[i] - mx);
            sum += orow[i];
        }
        const float inv = 1.0f / sum;
        for (int64_t i = 0; i < d; ++i) {
            orow[i] *= inv;
        }
    }
    Tensor tx = x;
    return make_op_result(s, std::move(out), {x}, [tx, d, rows](TensorNode& self) {
        if (!needs_grad(tx)) {
            return;
        }
        tx.node()->accum_grad_alloc();
        float* gx = tx.node()->grad.data();
        const float* y = self.values.data();
        const float* g = self.grad.data();
        for (int64_t r = 0; r < rows; ++r) {
            const float* yrow = y + r * d;
            const float* grow = g + r * d;
            float dot = 0.0f;
            for (int64_t i = 0; i < d; ++i) {
                dot += grow[i] * yrow[i];
            }
            float* gxrow = gx + r * d;
            for (int64_t i = 0; i < d; ++i) {
                gxrow[i] += yrow[i] * (grow[i] - dot);
            }
        }
    });
}

Tensor log_softmax_rows(const Tensor& x) {
    const Shape& s = x.shape();
    require(!s.empty() && s.back() >= 1, ErrCode::ShapeMismatch, "log_softmax needs a last axis");
    const int64_t d = s.back();
    const int64_t rows = x.numel() / d;
    std::vector<float> out(x.numel());
    const float* xv = x.data();
    for (int64_t r = 0; r < rows; ++r) {
        const float* row = xv + r * d;
        float* orow = out.data() + r * d;
        float mx = row[0];
        for (int64_t i = 1; i < d; ++i) {
            mx = std::max(mx, row[i]);
        }
        float sum = 0.0f;
        for (int64_t i = 0; i < d; ++i) {
            sum += std::exp(row[i] - mx);
        }
        const float lse = mx + std::log(sum);
        for (int64_t i = 0; i < d; ++i) {
            orow[i] = row[i] - lse;
        }
    }
    Tensor tx = x;
    return make_op_result(s, std::move(out), {x}, [tx, d, rows](TensorNode& self) {
        if (!needs_grad(tx)) {
            return;
        }
        tx.node()->accum_grad_alloc();
        float* gx = tx.node()->grad.data();
        const float* y = self.values.data();
        const float* g = self.grad.data();
        for (int64_t r = 0; r < rows; ++r) {
            const float* yrow = y + r * d;
            const float* grow = g + r * d;
            float gsum = 0.0f;
            for (int64_t i = 0; i < d; ++i) {
                gsum += grow[i];
            }
            float* gxrow = gx + r * d;
            for (int64_t i = 0; i < d; ++i) {
                gxrow[i] += grow[i] - std::exp(yrow[i]) * gsum;
            }
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
    const Shape& s = x.shape();
    require(!s.empty(), ErrCode::ShapeMismatch, "layer_norm on scalar");
    const int64_t d = s.back();
    require(gamma.shape() == Shape{d} && beta.shape() == Shape{d}, ErrCode::ShapeMismatch,
            "layer_norm gamma/beta must be [" + std::to_string(d) + "]");
    require(eps > 0.0f, ErrCode::BadArg, "layer_norm eps must be positive");
    const int64_t rows = x.numel() / d;
    std::vector<float> out(x.numel());
    std::vector<float> means(rows);
    std::vector<float> rstds(rows);
    const float* xv = x.data();
    const float* gm = gamma.data();
    const float* bt = beta.data();
    for (int64_t r = 0; r < rows; ++r) {
        const float* row = xv + r * d;
        float mean = 0.0f;
        for (int64_t i = 0; i < d; ++i) {
            mean += row[i];
        }
        mean /= static_cast<float>(d);
        float var = 0.0f;
        for (int64_t i = 0; i < d; ++i) {
            const float c = row[i] - mean;
            var += c * c;
        }
        var /= static_cast<float>(d);
        const float rstd = 1.0f / std::sqrt(var + eps);
        means[r] = mean;
        rstds[r] = rstd;
        float* orow = out.data() + r * d;
        for (int64_t i = 0; i < d; ++i) {
            orow[i] = (row[i] - mean) * rstd * gm[i] + bt[i];
        }
    }
    Tensor tx = x;
    Tensor tg = gamma;
    Tensor tb = beta;
    return make_op_result(
        s, std::move(out), {x, gamma, beta},
        [tx, tg, tb, d, rows, means, rstds](TensorNode& self) {
            const bool need_x = needs_grad(tx);
            const bool need_g = needs_grad(tg);
            const bool need_b = needs_grad(tb);
            if (need_x) {
                tx.node()->accum_grad_alloc();
            }
            if (need_g) {
                tg.node()->accum_grad_alloc();
            }
            if (need_b) {
                tb.node()->accum_grad_alloc();
            }
            const float* xv = tx.data();
            const float* gm = tg.data();
            const float* g = self.grad.data();
            for (int64_t r = 0; r < rows; ++r) {
                const float* row = xv + r * d;
                const float* grow = g + r * d;
                const float mean = means[r];
                const float rstd = rstds[r];
                float sum1 = 0.0f;
                float sum2 = 0.0f;
                for (int64_t i = 0; i < d; ++i) {
                    const float xhat = (row[i] - mean) * rstd;
                    const float dxhat = grow[i] * gm[i];
                    sum1 += dxhat;
                    sum2 += dxhat * xhat;
                }
                const float invd = 1.0f / static_cast<float>(d);
                if (need_x) {
                    float* gxrow = tx.node()->grad.data() + r * d;
                    for (int64_t i = 0; i < d; ++i) {
                        const float xhat = (row[i] - mean) * rstd;
                        const float dxhat = grow[i] * gm[i];
                        gxrow[i] += rstd * (dxhat - sum1 * invd - xhat * sum2 * invd);
                    }
                }
                if (need_g || need_b) {
                    float* gg = need_g ? tg.node()->grad.data() : nullptr;
                    float* gb = need_b ? tb.node()->grad.data() : nullptr;
                    for (int64_t i = 0; i < d; ++i) {
                        const float xhat = (row[i] - mean) * rstd;
                        if (gg) {
                            gg[i] += grow[i] * xhat;
                        }
                        if (gb) {
                            gb[i] += grow[i];
                        }
                    }
                }
            }
        });
}

Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta,
                  float eps) {
    const Shape& s = x.shape();
    require(s.size() == 4, ErrCode::ShapeMismatch, "group_norm expects [b,c,h,w]");
    const int64_t b = s[0], c = s[1], hw = s[2] * s[3];
    require(groups >= 1 && c % groups == 0, ErrCode::BadArg, "group_norm channel/group mismatch");
    require(gamma.shape() == Shape{c} && beta.shape() == Shape{c}, ErrCode::ShapeMismatch,
            "group_norm gamma/beta must be [" + std::to_string(c) + "]");
    const int64_t cpg = c / groups;
    const int64_t gsize = cpg * hw;
    std::vector<float> out(x.numel());
    std::vector<float> means(b * groups);
    std::vector<float> rstds(b * groups);
    const float* xv = x.data();
    const float* gm = gamma.data();
    const float* bt = beta.data();
    for (int64_t ib = 0; ib < b; ++ib) {
        for (int64_t ig = 0; ig < groups; ++ig) {
            const float* gx = xv + (ib * c + ig * cpg) * hw;
            float mean = 0.0f;
            for (int64_t i = 0; i < gsize; ++i) {
                mean += gx[i];
            }
            mean /= static_cast<float>(gsize);
            float var = 0.0f;
            for (int64_t i = 0; i < gsize; ++i) {
                const float d = gx[i] - mean;
                var += d * d;
            }
            var /= static_cast<float>(gsize);
            const float rstd = 1.0f / std::sqrt(var + eps);
            means[ib * groups + ig] = mean;
            rstds[ib * groups + ig] = rstd;
            float* go = out.data() + (ib * c + ig * cpg) * hw;
            for (int64_t j = 0; j < cpg; ++j) {
                const float gmc = gm[ig * cpg + j];
                const float btc = bt[ig * cpg + j];
                const float* src = gx + j * hw;
                float* dst = go + j * hw;
                for (int64_t i = 0; i < hw; ++i) {
                    dst[i] = (src[i] - mean) * rstd * gmc + btc;
                }
            }
        }
    }
    Tensor tx = x;
    Tensor tg = gamma;
    Tensor tb = beta;
    const int64_t groups64 = groups;
    return make_op_result(
        s, std::move(out), {x, gamma, beta},
        [tx, tg, tb, b, c, hw, cpg, groups64, means, rstds](TensorNode& self) {
            const bool need_x = needs_grad(tx);
            const bool need_g = needs_grad(tg);
            const bool need_b = needs_grad(tb);
            if (need_x) {
                tx.node()->accum_grad_alloc();
            }
            if (need_g) {
                tg.node()->accum_grad_alloc();
            }
            if (need_b) {
                tb.node()->accum_grad_alloc();
            }
            const float* xv = tx.data();
            const float* gm = tg.data();
            const float* g = self.grad.data();
            const int64_t gsize = cpg * hw;
            for (int64_t ib = 0; ib < b; ++ib) {
                for (int64_t ig = 0; ig < groups64; ++ig) {
                    const float* gx = xv + (ib * c + ig * cpg) * hw;
                    const float* gg = g + (ib * c + ig * cpg) * hw;
                    const float mean = means[ib * groups64 + ig];
                    const float rstd = rstds[ib * groups64 + ig];
                    float sum1 = 0.0f;
                    float sum2 = 0.0f;
                    for (int64_t j = 0; j < cpg; ++j) {
                        const float gmc = gm[ig * cpg + j];
                        const float* src = gx + j * hw;
                        const float* grow = gg + j * hw;
                        for (int64_t i = 0; i < hw; ++i) {
                            const float xhat = (src[i] - mean) * rstd;
                            const float dxhat = grow[i] * gmc;
                            sum1 += dxhat;
                            sum2 += dxhat * xhat;
                        }
                    }
                    const float invn = 1.0f / static_cast<float>(gsize);
                    for (int64_t j = 0; j < cpg; ++j) {
                        const int64_t ch = ig * cpg + j;
                        const float gmc = gm[ch];
                        const float* src = gx + j * hw;
                        const float* grow = gg + j * hw;
                        if (need_x) {
                            float* gxrow =
                                tx.node()->grad.data() + (ib * c + ch) * hw;
                            for (int64_t i = 0; i < hw; ++i) {
                                const float xhat = (src[i] - mean) * rstd;
                                const float dxhat = grow[i] * gmc;
                                gxrow[i] += rstd * (dxhat - sum1 * invn - xhat * sum2 * invn);
                            }
                        }
                        if (need_g || need_b) {
                            float acc_g = 0.0f;
                            float acc_b = 0.0f;
                            for (int64_t i = 0; i < hw; ++i) {
                                const float xhat = (src[i] - mean) * rstd;
                                acc_g += grow[i] * xhat;
                                acc_b += grow[i];
                            }
                            if (need_g) {
                                tg.node()->grad[ch] += acc_g;
                            }
                            if (need_b) {
                                tb.node()->grad[ch] += acc_b;
                            }
                        }
                    }
                }
            }
        });
}

Tensor silu(const Tensor& x) {
    std::vector<float> out(x.numel());
    std::vector<float> sig(x.numel());
    const float* xv = x.data();
    for (int64_t i = 0; i < x.numel(); ++i) {
        const float s = 1.0f / (1.0f + std::exp(-xv[i]));
        sig[i] = s;
        out[i] = xv[i] * s;
    }
    Tensor tx = x;
    return make_op_result(x.shape(), std::move(out), {x}, [tx, sig](TensorNode& self) {
        if (!needs_grad(tx)) {
            return;
        }
        tx.node()->accum_grad_alloc();
        float* gx = tx.node()->grad.data();
        const float* xv = tx.data();
        const float* g = self.grad.data();
        for (size_t i = 0; i < sig.size(); ++i) {
            const float s = sig[i];
            gx[i] += g[i] * (s * (1.0f + xv[i] * (1.0f - s)));
        }
    });
}

Tensor l2_normalize_rows(const Tensor& x, float eps) {
    const Shape& s = x.shape();
    const int64_t d = s.back();
    const int64_t rows = x.numel() / d;
    std::vector<float> out(x.numel());
    std::vector<float> rnorms(rows);
    const float* xv = x.data();
    for (int64_t r = 0; r < rows; ++r) {
        const float* row = xv + r * d;
        float ss = 0.0f;
        for (int64_t i = 0; i < d; ++i) {
            ss += row[i] * row[i];
        }
        const float rn = 1.0f / std::sqrt(ss + eps);
        rnorms[r] = rn;
        float* orow = out.data() + r * d;
        for (int64_t i = 0; i < d; ++i) {
            orow[i] = row[i] * rn;
        }
    }
    Tensor tx = x;
    return make_op_result(s, std::move(out), {x}, [tx, d, rows, rnorms](TensorNode& self) {
        if (!needs_grad(tx)) {
            return;
        }
        tx.node()->accum_grad_alloc();
        float* gx = tx.node()->grad.data();
        const float* xv = tx.data();
        const float* g = self.grad.data();
        for (int64_t r = 0; r < rows; ++r) {
            const float* row = xv + r * d;
            const float* grow = g + r * d;
            const float rn = rnorms[r];
            float dot = 0.0f;
            for (int64_t i = 0; i < d; ++i) {
                dot += grow[i] * row[i];
            }
            const float rn3 = rn * rn * rn;
            float* gxrow = gx + r * d;
            for (int64_t i = 0; i < d; ++i) {
                gxrow[i] += rn * grow[i] - rn3 * dot * row[i];
            }
        }
    });
}

Tensor sum_all(const Tensor& x) {
    double acc = 0.0;
    for (float v : x.values()) {
        acc += v;
    }
    Tensor tx = x;
    return make_op_result({1}, {static_cast<float>(acc)}, {x}, [tx](TensorNode& self) {
        if (!needs_grad(tx)) {
            return;
        }
        tx.node()->accum_grad_alloc();
        const float g = self.grad[0];
        for (float& v : tx.node()->grad) {
            v += g;
        }
    });
}

Tensor mean_all(const Tensor& x) {
    const int64_t n = x.numel();
    double acc = 0.0;
    for (float v : x.values()) {
        acc += v;
    }
    Tensor tx = x;
    return make_op_result({1}, {static_cast<float>(acc / static_cast<double>(n))}, {x},
                          [tx, n](TensorNode& self) {
                              if (!needs_grad(tx)) {
                                  return;
                              }
                              tx.node()->accum_grad_alloc();
                              const float g = self.grad[0] / static_cast<float>(n);
                              for (float& v : tx.node()->grad) {
                                  v += g;
                              }
                          });
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 const std::optional<Tensor>& mask_bias) {
    const Shape& qs = q.shape();
    const Shape& ks = k.shape();
    const Shape& vs = v.shape();
    require(qs.size() == 4 && ks.size() == 4 && vs.size() == 4, ErrCode::ShapeMismatch,
            "attention expects [b,h,s,dh] operands");
    require(ks[2] == vs[2], ErrCode::ShapeMismatch,
            "key/value sequence extents differ: " + shape_str(ks) + " vs " + shape_str(vs));
    require(qs[3] == ks[3], ErrCode::ShapeMismatch, "query/key head dims differ");
    const int64_t dh = qs[3];
    Tensor kt = permute(k, {0, 1, 3, 2});
    Tensor scores = scale(matmul(q, kt), 1.0f / std::sqrt(static_cast<float>(dh)));
    if (mask_bias) {
        scores = add(scores, *mask_bias);
    }
    Tensor p = softmax_rows(scores);
    return matmul(p, v);
}

Tensor linear(const Tensor& x, const Tensor& w, const std::optional<Tensor>& b) {
    Tensor y = matmul(x, w);
    if (b) {
        y = add(y, *b);
    }
    return y;
}

Tensor mse(const Tensor& a, const Tensor& b) {
    Tensor d = sub(a, b);
    return mean_all(mul(d, d));
}

}  // namespace ipa
