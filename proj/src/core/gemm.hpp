#pragma once

#include <cstdint>

namespace ipa {

// c[m,n] += a[m,k] * b[k,n], all row-major. The accumulation order per output
// element is fixed (k ascending), so results are bitwise reproducible.
void gemm_acc(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n);

// out[n,m] = in[m,n]
void transpose(const float* in, float* out, int64_t m, int64_t n);

}  // namespace ipa
