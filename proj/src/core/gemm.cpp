#include "gemm.hpp"

namespace ipa {

// ikj loop order with a 4-wide k unroll: the j loop vectorizes cleanly and
// each c[i,j] is accumulated in a fixed k order.
void gemm_acc(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const float* arow = a + i * k;
        float* crow = c + i * n;
        int64_t kk = 0;
        for (; kk + 4 <= k; kk += 4) {
            const float a0 = arow[kk + 0];
            const float a1 = arow[kk + 1];
            const float a2 = arow[kk + 2];
            const float a3 = arow[kk + 3];
            const float* b0 = b + (kk + 0) * n;
            const float* b1 = b + (kk + 1) * n;
            const float* b2 = b + (kk + 2) * n;
            const float* b3 = b + (kk + 3) * n;
            for (int64_t j = 0; j < n; ++j) {
                crow[j] += ((a0 * b0[j] + a1 * b1[j]) + a2 * b2[j]) + a3 * b3[j];
            }
        }
        for (; kk < k; ++kk) {
            const float av = arow[kk];
            const float* brow = b + kk * n;
            for (int64_t j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
}

void transpose(const float* in, float* out, int64_t m, int64_t n) {
    constexpr int64_t kBlock = 32;
    for (int64_t ib = 0; ib < m; ib += kBlock) {
        const int64_t imax = ib + kBlock < m ? ib + kBlock : m;
        for (int64_t jb = 0; jb < n; jb += kBlock) {
            const int64_t jmax = jb + kBlock < n ? jb + kBlock : n;
            for (int64_t i = ib; i < imax; ++i) {
                for (int64_t j = jb; j < jmax; ++j) {
                    out[j * m + i] = in[i * n + j];
                }
            }
        }
    }
}

}  // namespace ipa
