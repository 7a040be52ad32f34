#include "mscal/simd/kernels.hpp"

#include "mscal/error.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

namespace mscal::simd {

namespace {

Isa probe()
{
#if defined(MSCAL_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
    if (const char* env = std::getenv("MSCAL_FORCE_SCALAR"); env && std::strcmp(env, "0") != 0)
        return Isa::Scalar;
    __builtin_cpu_init();
    if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
        return Isa::Avx2;
#endif
    return Isa::Scalar;
}

// -1: auto, otherwise static_cast<int>(Isa)
std::atomic<int> g_override{-1};

}  // namespace

const char* to_string(Isa isa)
{
    return isa == Isa::Avx2 ? "avx2" : "scalar";
}

Isa detected_isa()
{
    static const Isa isa = probe();
    return isa;
}

Isa active_isa()
{
    int o = g_override.load(std::memory_order_relaxed);
    return o < 0 ? detected_isa() : static_cast<Isa>(o);
}

void set_isa_override(std::optional<Isa> isa)
{
    if (!isa) {
        g_override.store(-1);
        return;
    }
    if (*isa == Isa::Avx2 && detected_isa() != Isa::Avx2)
        throw Error(ErrorCode::InvalidArgument, "AVX2 kernels are not available on this CPU/build");
    g_override.store(static_cast<int>(*isa));
}

LocalMoments local_moments(const double* x, const double* y, const double* w, std::size_t n, double x0,
                           double inv_h)
{
#if defined(MSCAL_HAVE_AVX2)
    if (active_isa() == Isa::Avx2)
        return avx2::local_moments(x, y, w, n, x0, inv_h);
#endif
    return scalar::local_moments(x, y, w, n, x0, inv_h);
}

double weighted_dot(const double* a, const double* b, const double* c, std::size_t n)
{
#if defined(MSCAL_HAVE_AVX2)
    if (active_isa() == Isa::Avx2)
        return avx2::weighted_dot(a, b, c, n);
#endif
    return scalar::weighted_dot(a, b, c, n);
}

}  // namespace mscal::simd
