// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.

#include <immintrin.h>

#include "mudoc/simd/kernels.hpp"

namespace mudoc::simd::detail {
namespace {

inline float hsum(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 shuf = _mm_movehdup_ps(lo);
    __m128 sums = _mm_add_ps(lo, shuf);
    shuf = _mm_movehl_ps(shuf, sums);
    sums = _mm_add_ss(sums, shuf);
    return _mm_cvtss_f32(sums);
}

float dot_avx2(const float* a, const float* b, std::size_t n) {
    __m256 acc0 = _mm256_setzero_ps();
    __m256 acc1 = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16) {
        acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
        acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
    }
    for (; i + 8 <= n; i += 8)
        acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    float acc = hsum(_mm256_add_ps(acc0, acc1));
    for (; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

float sum_squares_avx2(const float* a, std::size_t n) { return dot_avx2(a, a, n); }

void scale_avx2(float* v, float factor, std::size_t n) {
    const __m256 f = _mm256_set1_ps(factor);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) _mm256_storeu_ps(v + i, _mm256_mul_ps(_mm256_loadu_ps(v + i), f));
    for (; i < n; ++i) v[i] *= factor;
}

void mean2_avx2(const float* a, const float* b, float* out, std::size_t n) {
    const __m256 half = _mm256_set1_ps(0.5f);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 s = _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
        _mm256_storeu_ps(out + i, _mm256_mul_ps(s, half));
    }
    for (; i < n; ++i) out[i] = (a[i] + b[i]) / 2.0f;
}

void dot_rows_avx2(const float* query, const float* rows, std::size_t dim, std::size_t row_count,
                   float* out) {
    for (std::size_t r = 0; r < row_count; ++r) out[r] = dot_avx2(query, rows + r * dim, dim);
}

}  // namespace

const KernelTable& avx2_table() {
    static const KernelTable table{Isa::Avx2, dot_avx2,   sum_squares_avx2,
                                   scale_avx2, mean2_avx2, dot_rows_avx2};
    return table;
}

}  // namespace mudoc::simd::detail
