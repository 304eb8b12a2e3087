#include <arm_neon.h>

#include "mudoc/simd/kernels.hpp"

namespace mudoc::simd::detail {
namespace {

float dot_neon(const float* a, const float* b, std::size_t n) {
    float32x4_t acc0 = vdupq_n_f32(0.0f);
    float32x4_t acc1 = vdupq_n_f32(0.0f);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = vfmaq_f32(acc0, vld1q_f32(a + i), vld1q_f32(b + i));
        acc1 = vfmaq_f32(acc1, vld1q_f32(a + i + 4), vld1q_f32(b + i + 4));
    }
    for (; i + 4 <= n; i += 4) acc0 = vfmaq_f32(acc0, vld1q_f32(a + i), vld1q_f32(b + i));
    float acc = vaddvq_f32(vaddq_f32(acc0, acc1));
    for (; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

float sum_squares_neon(const float* a, std::size_t n) { return dot_neon(a, a, n); }

void scale_neon(float* v, float factor, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) vst1q_f32(v + i, vmulq_n_f32(vld1q_f32(v + i), factor));
    for (; i < n; ++i) v[i] *= factor;
}

void mean2_neon(const float* a, const float* b, float* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        vst1q_f32(out + i, vmulq_n_f32(vaddq_f32(vld1q_f32(a + i), vld1q_f32(b + i)), 0.5f));
    for (; i < n; ++i) out[i] = (a[i] + b[i]) / 2.0f;
}

void dot_rows_neon(const float* query, const float* rows, std::size_t dim, std::size_t row_count,
                   float* out) {
    for (std::size_t r = 0; r < row_count; ++r) out[r] = dot_neon(query, rows + r * dim, dim);
}

}  // namespace

const KernelTable& neon_table() {
    static const KernelTable table{Isa::Neon, dot_neon,   sum_squares_neon,
                                   scale_neon, mean2_neon, dot_rows_neon};
    return table;
}

}  // namespace mudoc::simd::detail
