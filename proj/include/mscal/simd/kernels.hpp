#pragma once

// Data-parallel inner loops used by the smoothers and regression solvers.
//
// Every kernel has a portable scalar reference in mscal::simd::scalar and,
// on x86-64, an AVX2+FMA variant in mscal::simd::avx2. The free functions in
// mscal::simd dispatch at runtime on CPU support. The two variants sum in a
// different order, so they agree to rounding, not bitwise.

#include <cstddef>
#include <optional>

namespace mscal::simd {

enum class Isa { Scalar, Avx2 };

const char* to_string(Isa isa);

/// Best variant this CPU and build support.
Isa detected_isa();

/// Variant the dispatchers currently use.
Isa active_isa();

/// Pins dispatch to one variant (tests, benchmarks); nullopt restores
/// auto-detection. Requesting Avx2 on a CPU without it throws.
void set_isa_override(std::optional<Isa> isa);

/// Tricube-weighted local polynomial moments around x0:
///   u_j = (x_j - x0) * inv_h,  k_j = w_j * (1 - |u_j|^3)^3 for |u_j| < 1, else 0
///   s[a] = sum k_j u_j^a  (a = 0..4),   t[a] = sum k_j y_j u_j^a  (a = 0..2)
struct LocalMoments {
    double s[5] = {0, 0, 0, 0, 0};
    double t[3] = {0, 0, 0};
};

LocalMoments local_moments(const double* x, const double* y, const double* w, std::size_t n, double x0,
                           double inv_h);

/// sum a_j * b_j * c_j
double weighted_dot(const double* a, const double* b, const double* c, std::size_t n);

namespace scalar {
LocalMoments local_moments(const double* x, const double* y, const double* w, std::size_t n, double x0,
                           double inv_h);
double weighted_dot(const double* a, const double* b, const double* c, std::size_t n);
}  // namespace scalar

#if defined(MSCAL_HAVE_AVX2)
namespace avx2 {
LocalMoments local_moments(const double* x, const double* y, const double* w, std::size_t n, double x0,
                           double inv_h);
double weighted_dot(const double* a, const double* b, const double* c, std::size_t n);
}  // namespace avx2
#endif

}  // namespace mscal::simd
