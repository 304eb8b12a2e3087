#include "mudoc/simd/kernels.hpp"

namespace mudoc::simd::detail {
namespace {

float dot_scalar(const float* a, const float* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(a[i]) * b[i];
    return static_cast<float>(acc);
}

float sum_squares_scalar(const float* a, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(a[i]) * a[i];
    return static_cast<float>(acc);
}

void scale_scalar(float* v, float factor, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) v[i] *= factor;
}

void mean2_scalar(const float* a, const float* b, float* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = (a[i] + b[i]) / 2.0f;
}

void dot_rows_scalar(const float* query, const float* rows, std::size_t dim,
                     std::size_t row_count, float* out) {
    for (std::size_t r = 0; r < row_count; ++r) out[r] = dot_scalar(query, rows + r * dim, dim);
}

}  // namespace

const KernelTable& scalar_table() {
    static const KernelTable table{Isa::Scalar,  dot_scalar,  sum_squares_scalar,
                                   scale_scalar, mean2_scalar, dot_rows_scalar};
    return table;
}

}  // namespace mudoc::simd::detail
