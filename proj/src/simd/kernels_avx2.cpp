// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.

#include "mscal/simd/kernels.hpp"

#include <immintrin.h>

#include <cmath>

namespace mscal::simd::avx2 {

namespace {

inline double hsum(__m256d v)
{
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

}  // namespace

LocalMoments local_moments(const double* x, const double* y, const double* w, std::size_t n, double x0,
                           double inv_h)
{
    const __m256d vx0 = _mm256_set1_pd(x0);
    const __m256d vh = _mm256_set1_pd(inv_h);
    const __m256d one = _mm256_set1_pd(1.0);
    const __m256d absmask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fffffffffffffffLL));

    __m256d s0 = _mm256_setzero_pd(), s1 = s0, s2 = s0, s3 = s0, s4 = s0;
    __m256d t0 = s0, t1 = s0, t2 = s0;

    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
        const __m256d u = _mm256_mul_pd(_mm256_sub_pd(_mm256_loadu_pd(x + j), vx0), vh);
        const __m256d d = _mm256_and_pd(u, absmask);
        const __m256d inside = _mm256_cmp_pd(d, one, _CMP_LT_OQ);
        const __m256d d3 = _mm256_mul_pd(_mm256_mul_pd(d, d), d);
        const __m256d r = _mm256_sub_pd(one, d3);
        const __m256d r3 = _mm256_mul_pd(_mm256_mul_pd(r, r), r);
        const __m256d k = _mm256_and_pd(_mm256_mul_pd(_mm256_loadu_pd(w + j), r3), inside);
        const __m256d vy = _mm256_loadu_pd(y + j);

        const __m256d ku = _mm256_mul_pd(k, u);
        const __m256d ku2 = _mm256_mul_pd(ku, u);
        const __m256d ku3 = _mm256_mul_pd(ku2, u);
        s0 = _mm256_add_pd(s0, k);
        s1 = _mm256_add_pd(s1, ku);
        s2 = _mm256_add_pd(s2, ku2);
        s3 = _mm256_add_pd(s3, ku3);
        s4 = _mm256_fmadd_pd(ku3, u, s4);
        t0 = _mm256_fmadd_pd(k, vy, t0);
        t1 = _mm256_fmadd_pd(ku, vy, t1);
        t2 = _mm256_fmadd_pd(ku2, vy, t2);
    }

    LocalMoments m;
    m.s[0] = hsum(s0);
    m.s[1] = hsum(s1);
    m.s[2] = hsum(s2);
    m.s[3] = hsum(s3);
    m.s[4] = hsum(s4);
    m.t[0] = hsum(t0);
    m.t[1] = hsum(t1);
    m.t[2] = hsum(t2);

    if (j < n) {
        auto tail = scalar::local_moments(x + j, y + j, w + j, n - j, x0, inv_h);
        for (int a = 0; a < 5; ++a)
            m.s[a] += tail.s[a];
        for (int a = 0; a < 3; ++a)
            m.t[a] += tail.t[a];
    }
    return m;
}

double weighted_dot(const double* a, const double* b, const double* c, std::size_t n)
{
    __m256d acc0 = _mm256_setzero_pd(), acc1 = acc0;
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_mul_pd(_mm256_loadu_pd(a + j), _mm256_loadu_pd(b + j)),
                               _mm256_loadu_pd(c + j), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_mul_pd(_mm256_loadu_pd(a + j + 4), _mm256_loadu_pd(b + j + 4)),
                               _mm256_loadu_pd(c + j + 4), acc1);
    }
    for (; j + 4 <= n; j += 4)
        acc0 = _mm256_fmadd_pd(_mm256_mul_pd(_mm256_loadu_pd(a + j), _mm256_loadu_pd(b + j)),
                               _mm256_loadu_pd(c + j), acc0);
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; j < n; ++j)
        s += a[j] * b[j] * c[j];
    return s;
}

}  // namespace mscal::simd::avx2
