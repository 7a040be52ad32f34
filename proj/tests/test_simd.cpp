#include "mscal/simd/kernels.hpp"
#include "mscal/smoothers.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

using namespace mscal;

namespace {

struct Data {
    std::vector<double> x, y, w;
};

Data random_vector(std::size_t n, unsigned seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Data d;
    for (std::size_t i = 0; i < n; ++i) {
        d.x.push_back(u(rng));
        d.y.push_back(std::sin(6.0 * d.x.back()) + 0.3 * u(rng));
        d.w.push_back(0.5 + u(rng));
    }
    return d;
}

bool close(double a, double b, double rel)
{
    return std::abs(a - b) <= rel * std::max({1.0, std::abs(a), std::abs(b)});
}

struct IsaReset {
    ~IsaReset() { simd::set_isa_override(std::nullopt); }
};

}  // namespace

TEST_CASE("scalar kernels against a direct evaluation")
{
    const auto d = random_vector(37, 3);
    const double x0 = 0.4, inv_h = 1.0 / 0.35;
    double s[5] = {}, t[3] = {};
    for (std::size_t j = 0; j < d.x.size(); ++j) {
        const double u = (d.x[j] - x0) * inv_h;
        if (std::abs(u) >= 1.0)
            continue;
        const double c = 1.0 - std::abs(u) * u * u;
        const double k = d.w[j] * c * c * c;
        for (int a = 0; a < 5; ++a)
            s[a] += k * std::pow(u, a);
        for (int a = 0; a < 3; ++a)
            t[a] += k * d.y[j] * std::pow(u, a);
    }
    const auto m = simd::scalar::local_moments(d.x.data(), d.y.data(), d.w.data(), d.x.size(), x0, inv_h);
    for (int a = 0; a < 5; ++a)
        CHECK(close(m.s[a], s[a], 1e-13));
    for (int a = 0; a < 3; ++a)
        CHECK(close(m.t[a], t[a], 1e-13));
}

#if defined(MSCAL_HAVE_AVX2)
TEST_CASE("avx2 kernels agree with the scalar reference")
{
    if (simd::detected_isa() != simd::Isa::Avx2) {
        MESSAGE("CPU lacks AVX2; skipping");
        return;
    }
    for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 8u, 13u, 64u, 1001u}) {
        const auto d = random_vector(n, static_cast<unsigned>(n) + 1);
        for (double x0 : {-0.2, 0.0, 0.37, 1.0}) {
            for (double inv_h : {0.0, 0.5, 4.0, 40.0}) {
                const auto a = simd::scalar::local_moments(d.x.data(), d.y.data(), d.w.data(), n, x0, inv_h);
                const auto b = simd::avx2::local_moments(d.x.data(), d.y.data(), d.w.data(), n, x0, inv_h);
                for (int k = 0; k < 5; ++k)
                    CHECK(close(a.s[k], b.s[k], 1e-12));
                for (int k = 0; k < 3; ++k)
                    CHECK(close(a.t[k], b.t[k], 1e-12));
            }
        }
        const double s1 = simd::scalar::weighted_dot(d.x.data(), d.y.data(), d.w.data(), n);
        const double s2 = simd::avx2::weighted_dot(d.x.data(), d.y.data(), d.w.data(), n);
        CHECK(close(s1, s2, 1e-12));
    }
}

TEST_CASE("loess is the same under either dispatch target")
{
    if (simd::detected_isa() != simd::Isa::Avx2)
        return;
    IsaReset reset;
    const auto d = random_vector(2000, 9);
    simd::set_isa_override(simd::Isa::Scalar);
    CHECK(simd::active_isa() == simd::Isa::Scalar);
    const auto a = loess(d.x, d.y, d.w, 0.3);
    simd::set_isa_override(simd::Isa::Avx2);
    CHECK(simd::active_isa() == simd::Isa::Avx2);
    const auto b = loess(d.x, d.y, d.w, 0.3);
    for (std::size_t i = 0; i < d.x.size(); ++i)
        CHECK(close(a.fitted[i], b.fitted[i], 1e-10));
}
#endif

TEST_CASE("dispatch falls back to detection")
{
    simd::set_isa_override(std::nullopt);
    CHECK(simd::active_isa() == simd::detected_isa());
    const auto d = random_vector(10, 1);
    CHECK(close(simd::weighted_dot(d.x.data(), d.y.data(), d.w.data(), 10),
                simd::scalar::weighted_dot(d.x.data(), d.y.data(), d.w.data(), 10), 1e-12));
}
