#pragma once

// Dense-vector kernels used by embedding storage and retrieval scoring.
//
// Every kernel has a scalar reference implementation. Vectorized variants
// (AVX2+FMA on x86-64, NEON on AArch64) are selected once at startup based on
// what the CPU reports; `MUDOC_SIMD=scalar|avx2|neon` forces a variant.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace mudoc::simd {

enum class Isa { Scalar, Avx2, Neon };

std::string_view to_string(Isa isa);

struct KernelTable {
    Isa isa;
    float (*dot)(const float* a, const float* b, std::size_t n);
    float (*sum_squares)(const float* a, std::size_t n);
    void (*scale)(float* v, float factor, std::size_t n);
    // out[i] = (a[i] + b[i]) / 2, exact in IEEE arithmetic.
    void (*mean2)(const float* a, const float* b, float* out, std::size_t n);
    // out[r] = dot(query, rows + r * dim) for r in [0, row_count).
    void (*dot_rows)(const float* query, const float* rows, std::size_t dim,
                     std::size_t row_count, float* out);
};

bool isa_supported(Isa isa);

// Kernel table for a specific ISA. Throws std::invalid_argument when the ISA
// is not compiled in or not supported by the running CPU.
const KernelTable& kernels_for(Isa isa);

// The dispatched table for this process.
const KernelTable& kernels();

namespace detail {
const KernelTable& scalar_table();
#if defined(MUDOC_HAVE_AVX2)
const KernelTable& avx2_table();
#endif
#if defined(MUDOC_HAVE_NEON)
const KernelTable& neon_table();
#endif
}  // namespace detail

// Convenience wrappers over the dispatched table.

float dot(std::span<const float> a, std::span<const float> b);
float l2_norm(std::span<const float> v);

// Scales v to unit L2 norm in place and returns the original norm. A zero
// vector is left untouched.
float normalize(std::span<float> v);

std::vector<float> mean2(std::span<const float> a, std::span<const float> b);

// Cosine similarity; 0 when either vector has zero norm.
double cosine(std::span<const float> a, std::span<const float> b);

}  // namespace mudoc::simd
