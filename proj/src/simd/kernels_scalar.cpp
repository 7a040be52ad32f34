#include "mscal/simd/kernels.hpp"

#include <cmath>

namespace mscal::simd::scalar {

LocalMoments local_moments(const double* x, const double* y, const double* w, std::size_t n, double x0,
                           double inv_h)
{
    LocalMoments m;
    for (std::size_t j = 0; j < n; ++j) {
        const double u = (x[j] - x0) * inv_h;
        const double d = std::abs(u);
        if (!(d < 1.0))
            continue;
        const double r = 1.0 - d * d * d;
        const double k = w[j] * r * r * r;
        const double ku = k * u;
        const double ku2 = ku * u;
        m.s[0] += k;
        m.s[1] += ku;
        m.s[2] += ku2;
        m.s[3] += ku2 * u;
        m.s[4] += ku2 * u * u;
        m.t[0] += k * y[j];
        m.t[1] += ku * y[j];
        m.t[2] += ku2 * y[j];
    }
    return m;
}

double weighted_dot(const double* a, const double* b, const double* c, std::size_t n)
{
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j)
        s += a[j] * b[j] * c[j];
    return s;
}

}  // namespace mscal::simd::scalar
