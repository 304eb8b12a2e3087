#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "mudoc/simd/kernels.hpp"

namespace mudoc::simd {

std::string_view to_string(Isa isa) {
    switch (isa) {
        case Isa::Scalar: return "scalar";
        case Isa::Avx2: return "avx2";
        case Isa::Neon: return "neon";
    }
    return "unknown";
}

bool isa_supported(Isa isa) {
    switch (isa) {
        case Isa::Scalar: return true;
        case Isa::Avx2:
#if defined(MUDOC_HAVE_AVX2)
            __builtin_cpu_init();
            return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
            return false;
#endif
        case Isa::Neon:
#if defined(MUDOC_HAVE_NEON)
            return true;
#else
            return false;
#endif
    }
    return false;
}

const KernelTable& kernels_for(Isa isa) {
    if (!isa_supported(isa))
        throw std::invalid_argument("simd variant not available: " + std::string(to_string(isa)));
    switch (isa) {
#if defined(MUDOC_HAVE_AVX2)
        case Isa::Avx2: return detail::avx2_table();
#endif
#if defined(MUDOC_HAVE_NEON)
        case Isa::Neon: return detail::neon_table();
#endif
        default: return detail::scalar_table();
    }
}

namespace {

const KernelTable& select() {
    if (const char* forced = std::getenv("MUDOC_SIMD")) {
        const std::string_view name{forced};
        for (Isa isa : {Isa::Scalar, Isa::Avx2, Isa::Neon})
            if (name == to_string(isa) && isa_supported(isa)) return kernels_for(isa);
    }
    for (Isa isa : {Isa::Avx2, Isa::Neon})
        if (isa_supported(isa)) return kernels_for(isa);
    return detail::scalar_table();
}

}  // namespace

const KernelTable& kernels() {
    static const KernelTable& table = select();
    return table;
}

float dot(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: dimension mismatch");
    return kernels().dot(a.data(), b.data(), a.size());
}

float l2_norm(std::span<const float> v) {
    return std::sqrt(kernels().sum_squares(v.data(), v.size()));
}

float normalize(std::span<float> v) {
    const float norm = l2_norm(v);
    if (norm > 0.0f) kernels().scale(v.data(), 1.0f / norm, v.size());
    return norm;
}

std::vector<float> mean2(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) throw std::invalid_argument("mean2: dimension mismatch");
    std::vector<float> out(a.size());
    kernels().mean2(a.data(), b.data(), out.data(), a.size());
    return out;
}

double cosine(std::span<const float> a, std::span<const float> b) {
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    const double c = dot(a, b) / (na * nb);
    return std::clamp(c, -1.0, 1.0);
}

}  // namespace mudoc::simd
