#include "mscal/error.hpp"
#include "mscal/smoothers.hpp"

#include <doctest.h>

#include <Eigen/LU>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace mscal;

namespace {

std::vector<double> uniform(std::size_t n, unsigned seed, double lo = 0.0, double hi = 1.0)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v)
        x = u(rng);
    return v;
}

ErrorCode code_of(auto&& fn)
{
    try {
        fn();
    }
    catch (const Error& e) {
        return e.code();
    }
    FAIL("no error thrown");
    return ErrorCode::Io;
}

// Weighted least squares at x0 over the q nearest neighbours, solved through
// the normal equations.
double loess_oracle(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& w,
                    double span, int degree, double x0)
{
    const std::size_t n = x.size();
    const auto q = static_cast<std::size_t>(std::ceil(span * static_cast<double>(n) - 1e-9));
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return std::abs(x[a] - x0) < std::abs(x[b] - x0); });
    const double h = std::abs(x[idx[q - 1]] - x0);
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(degree + 1, degree + 1);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(degree + 1);
    for (std::size_t r = 0; r < q; ++r) {
        const std::size_t j = idx[r];
        const double u = std::abs(x[j] - x0) / h;
        const double k = u < 1.0 ? w[j] * std::pow(1.0 - u * u * u, 3) : 0.0;
        Eigen::VectorXd phi(degree + 1);
        for (int a = 0; a <= degree; ++a)
            phi[a] = std::pow(x[j] - x0, a);
        A += k * phi * phi.transpose();
        b += k * y[j] * phi;
    }
    return A.fullPivLu().solve(b)[0];
}

}  // namespace

TEST_CASE("loess reproduces affine data exactly")
{
    const auto x = uniform(300, 1);
    std::vector<double> y, w = uniform(300, 2, 0.5, 2.0);
    for (double v : x)
        y.push_back(2.0 * v + 1.0);
    for (int degree : {1, 2}) {
        for (double span : {0.1, 0.5, 1.0}) {
            const auto fit = loess(x, y, w, span, degree);
            for (std::size_t i = 0; i < x.size(); ++i)
                CHECK(fit.fitted[i] == doctest::Approx(y[i]).epsilon(1e-10));
        }
    }
}

TEST_CASE("loess of a constant is that constant")
{
    const auto x = uniform(100, 3);
    const std::vector<double> y(100, 0.37), w(100, 1.0);
    const auto fit = loess(x, y, w, 0.4);
    for (double f : fit.fitted)
        CHECK(f == doctest::Approx(0.37).epsilon(1e-12));
}

TEST_CASE("loess agrees with a normal-equations oracle")
{
    const auto x = uniform(400, 4);
    const auto w = uniform(400, 5, 0.2, 3.0);
    std::vector<double> y;
    const auto noise = uniform(400, 6, -0.2, 0.2);
    for (std::size_t i = 0; i < x.size(); ++i)
        y.push_back(std::sin(5.0 * x[i]) + noise[i]);
    for (int degree : {1, 2}) {
        const auto fit = loess(x, y, w, 0.3, degree);
        for (std::size_t i : {0u, 17u, 123u, 250u, 399u})
            CHECK(std::abs(fit.fitted[i] - loess_oracle(x, y, w, 0.3, degree, x[i])) < 1e-10);
    }
}

TEST_CASE("loess is affine-equivariant in y and invariant to weight scale")
{
    const auto x = uniform(200, 7);
    const auto y = uniform(200, 8);
    const auto w = uniform(200, 9, 0.5, 1.5);
    std::vector<double> y2, w2;
    for (std::size_t i = 0; i < y.size(); ++i) {
        y2.push_back(3.0 * y[i] - 2.0);
        w2.push_back(2.0 * w[i]);
    }
    const auto a = loess(x, y, w, 0.5);
    const auto b = loess(x, y2, w, 0.5);
    const auto c = loess(x, y, w2, 0.5);
    for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(b.fitted[i] == doctest::Approx(3.0 * a.fitted[i] - 2.0).epsilon(1e-10));
        CHECK(c.fitted[i] == doctest::Approx(a.fitted[i]).epsilon(1e-10));
    }
}

TEST_CASE("loess argument checks")
{
    const std::vector<double> x{0.1, 0.2, 0.3}, y{1, 2, 3}, w{1, 1, 1};
    CHECK(code_of([&] { loess(x, y, w, 0.0); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([&] { loess(x, y, w, 1.5); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([&] { loess(x, y, w, 0.5, 3); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([&] { loess(std::vector<double>{0.1, 0.2}, std::vector<double>{1, 2},
                              std::vector<double>{1, 1}, 1.0, 1); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("natural spline basis spans linear functions")
{
    const auto x = uniform(200, 10, -2.0, 3.0);
    for (int df : {2, 4, 6}) {
        const auto sb = natural_spline_basis(x, df);
        CHECK(sb.basis.cols() == df);
        Eigen::MatrixXd D(static_cast<Eigen::Index>(x.size()), df + 1);
        D.col(0).setOnes();
        D.rightCols(df) = sb.basis;
        Eigen::VectorXd target(D.rows());
        for (Eigen::Index i = 0; i < D.rows(); ++i)
            target[i] = 0.7 - 1.3 * x[static_cast<std::size_t>(i)];
        const Eigen::VectorXd c = D.colPivHouseholderQr().solve(target);
        CHECK((D * c - target).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("natural spline basis is linear beyond the boundary knots")
{
    const auto x = uniform(150, 11);
    const auto sb = natural_spline_basis(x, 5);
    const Eigen::VectorXd coef = Eigen::VectorXd::LinSpaced(5, -1.0, 2.0);
    const double h = 0.01;
    for (double x0 : {sb.lower - 0.5, sb.lower - 0.05, sb.upper + 0.05, sb.upper + 1.0}) {
        const std::vector<double> pts{x0 - h, x0, x0 + h};
        const Eigen::VectorXd f = sb.evaluate(pts) * coef;
        CHECK(std::abs((f[0] - 2.0 * f[1] + f[2]) / (h * h)) < 1e-8);
    }
    const Eigen::MatrixXd again = sb.evaluate(x);
    CHECK((again - sb.basis).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("natural spline basis needs enough distinct values")
{
    std::vector<double> x;
    for (int i = 0; i < 30; ++i)
        x.push_back(i % 3);
    CHECK(code_of([&] { natural_spline_basis(x, 4); }) == ErrorCode::TooFewDistinct);
    CHECK(code_of([&] { natural_spline_basis(uniform(20, 1), 1); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("intercept-only logistic fits the logit of the mean")
{
    const Eigen::MatrixXd X = Eigen::MatrixXd::Ones(8, 1);
    const std::vector<double> w(8, 1.0);
    const std::vector<double> half{1, 0, 1, 0, 1, 0, 1, 0};
    CHECK(std::abs(weighted_logistic(X, half, w).coef[0]) < 1e-10);
    const std::vector<double> quarter{1, 0, 0, 0, 1, 0, 0, 0};
    CHECK(weighted_logistic(X, quarter, w).coef[0] == doctest::Approx(std::log(1.0 / 3.0)).epsilon(1e-10));
    const std::vector<double> ones(8, 1.0);
    CHECK(code_of([&] { weighted_logistic(X, ones, w); }) == ErrorCode::DivergedToInfinity);
}

TEST_CASE("logistic fit detects separation and rank deficiency")
{
    Eigen::MatrixXd X(6, 2);
    X << 1, -3, 1, -2, 1, -1, 1, 1, 1, 2, 1, 3;
    const std::vector<double> y{0, 0, 0, 1, 1, 1}, w(6, 1.0);
    CHECK(code_of([&] { weighted_logistic(X, y, w); }) == ErrorCode::DivergedToInfinity);
    Eigen::MatrixXd Xd(6, 2);
    Xd.col(0).setOnes();
    Xd.col(1).setConstant(2.0);
    const std::vector<double> y2{0, 1, 0, 1, 1, 0};
    CHECK(code_of([&] { weighted_logistic(Xd, y2, w); }) == ErrorCode::FitSingular);
}

TEST_CASE("logistic score matches finite differences and vanishes at convergence")
{
    const std::size_t n = 500;
    const auto x1 = uniform(n, 12, -2, 2);
    const auto x2 = uniform(n, 13, -1, 1);
    const auto u = uniform(n, 14);
    const auto w = uniform(n, 15, 0.5, 3.0);
    const auto off = uniform(n, 16, -0.3, 0.3);
    Eigen::MatrixXd X(static_cast<Eigen::Index>(n), 3);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        X(r, 0) = 1.0;
        X(r, 1) = x1[i];
        X(r, 2) = x2[i];
        y[i] = u[i] < expit(-0.4 + 0.8 * x1[i] - 1.1 * x2[i]) ? 1.0 : 0.0;
    }
    const auto fit = weighted_logistic(X, y, w, off);
    CHECK(fit.gradient.cwiseAbs().maxCoeff() < 1e-8);

    const Eigen::Vector3d b(0.3, -0.2, 0.5);
    const Eigen::VectorXd g = logistic_score(X, y, w, off, b);
    for (int k = 0; k < 3; ++k) {
        const double h = 1e-5;
        Eigen::VectorXd bp = b, bm = b;
        bp[k] += h;
        bm[k] -= h;
        const double fd = (logistic_loglik(X, y, w, off, bp) - logistic_loglik(X, y, w, off, bm)) / (2 * h);
        CHECK(std::abs(fd - g[k]) <= 1e-5 * std::abs(g[k]));
    }
}

TEST_CASE("multinomial intercepts are the log frequency ratios")
{
    std::vector<int> cat;
    for (int i = 0; i < 100; ++i)
        cat.push_back(i < 50 ? 1 : (i < 80 ? 2 : 3));
    const std::vector<double> w(100, 1.0);
    const std::vector<Eigen::MatrixXd> designs(2, Eigen::MatrixXd::Ones(100, 1));
    const auto fit = weighted_multinomial(designs, cat, w);
    CHECK(fit.coef[0][0] == doctest::Approx(std::log(0.3 / 0.5)).epsilon(1e-9));
    CHECK(fit.coef[1][0] == doctest::Approx(std::log(0.2 / 0.5)).epsilon(1e-9));
    CHECK(fit.coef[0][0] == doctest::Approx(-0.5108).epsilon(1e-4));
    CHECK(fit.coef[1][0] == doctest::Approx(-0.9163).epsilon(1e-4));
}

TEST_CASE("two-category multinomial equals binary logistic")
{
    const std::size_t n = 400;
    const auto x = uniform(n, 20, -2, 2);
    const auto u = uniform(n, 21);
    const auto w = uniform(n, 22, 0.5, 4.0);
    Eigen::MatrixXd X(static_cast<Eigen::Index>(n), 2);
    std::vector<double> y(n);
    std::vector<int> cat(n);
    for (std::size_t i = 0; i < n; ++i) {
        X(static_cast<Eigen::Index>(i), 0) = 1.0;
        X(static_cast<Eigen::Index>(i), 1) = x[i];
        y[i] = u[i] < expit(0.2 + 0.9 * x[i]) ? 1.0 : 0.0;
        cat[i] = y[i] == 1.0 ? 2 : 1;
    }
    const auto lf = weighted_logistic(X, y, w);
    const auto mf = weighted_multinomial({X}, cat, w);
    CHECK(std::abs(lf.coef[0] - mf.coef[0][0]) < 1e-8);
    CHECK(std::abs(lf.coef[1] - mf.coef[0][1]) < 1e-8);
}

TEST_CASE("multinomial fit: normalised rows, score, convergence")
{
    const std::size_t n = 600;
    const auto x = uniform(n, 30, -1.5, 1.5);
    const auto u = uniform(n, 31);
    const auto w = uniform(n, 32, 0.5, 2.0);
    Eigen::MatrixXd X(static_cast<Eigen::Index>(n), 2);
    std::vector<int> cat(n);
    for (std::size_t i = 0; i < n; ++i) {
        X(static_cast<Eigen::Index>(i), 0) = 1.0;
        X(static_cast<Eigen::Index>(i), 1) = x[i];
        const double e2 = std::exp(-0.5 + x[i]), e3 = std::exp(-1.0 - 0.7 * x[i]);
        const double p1 = 1.0 / (1.0 + e2 + e3), p2 = e2 / (1.0 + e2 + e3);
        cat[i] = u[i] < p1 ? 1 : (u[i] < p1 + p2 ? 2 : 3);
    }
    std::vector<Eigen::VectorXd> off{Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), 0.1),
                                     Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), -0.2)};
    const auto fit = weighted_multinomial({X, X}, cat, w, off);
    CHECK(fit.gradient.cwiseAbs().maxCoeff() < 1e-8);
    CHECK((fit.fitted.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);

    const std::vector<Eigen::VectorXd> b{Eigen::Vector2d(0.1, 0.4), Eigen::Vector2d(-0.3, 0.2)};
    const Eigen::VectorXd g = multinomial_score({X, X}, cat, w, off, b);
    int k = 0;
    for (std::size_t e = 0; e < 2; ++e) {
        for (Eigen::Index j = 0; j < 2; ++j, ++k) {
            const double h = 1e-5;
            auto bp = b, bm = b;
            bp[e][j] += h;
            bm[e][j] -= h;
            const double fd =
                (multinomial_loglik({X, X}, cat, w, off, bp) - multinomial_loglik({X, X}, cat, w, off, bm)) / (2 * h);
            CHECK(std::abs(fd - g[k]) <= 1e-5 * std::abs(g[k]));
        }
    }
}

TEST_CASE("score is below 1e-8 at convergence across seeds and sizes")
{
    for (unsigned seed = 40; seed < 52; ++seed) {
        const std::size_t n = 400 + 300 * (seed % 4);
        const auto x = uniform(n, seed, -2.0, 2.0);
        const auto u = uniform(n, seed + 100);
        const auto w = uniform(n, seed + 200, 0.5, 2.5);
        const auto off = uniform(n, seed + 300, -0.2, 0.2);
        Eigen::MatrixXd X(static_cast<Eigen::Index>(n), 2);
        std::vector<double> y(n);
        std::vector<int> cat(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto r = static_cast<Eigen::Index>(i);
            X(r, 0) = 1.0;
            X(r, 1) = x[i];
            y[i] = u[i] < expit(-0.3 + 0.9 * x[i]) ? 1.0 : 0.0;
            const double e2 = std::exp(-0.5 + x[i]), e3 = std::exp(-1.0 - 0.7 * x[i]);
            const double v = u[i] * (1.0 + e2 + e3);
            cat[i] = v < 1.0 ? 1 : (v < 1.0 + e2 ? 2 : 3);
        }
        const Eigen::VectorXd o = Eigen::Map<const Eigen::VectorXd>(off.data(), static_cast<Eigen::Index>(n));
        CHECK(weighted_logistic(X, y, w, off).gradient.cwiseAbs().maxCoeff() < 1e-8);
        const auto mf = weighted_multinomial({X, X}, cat, w, {o, Eigen::VectorXd::Zero(o.size())});
        CHECK(mf.gradient.cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("multinomial with an empty category diverges")
{
    const std::vector<int> cat{1, 2, 1, 2};
    const std::vector<double> w(4, 1.0);
    const std::vector<Eigen::MatrixXd> designs(2, Eigen::MatrixXd::Ones(4, 1));
    CHECK(code_of([&] { weighted_multinomial(designs, cat, w); }) == ErrorCode::DivergedToInfinity);
}

TEST_CASE("independent columns drop aliased copies")
{
    Eigen::MatrixXd X(5, 4);
    X << 1, 2, 2, 0, 1, 3, 3, 1, 1, 4, 4, 0, 1, 5, 5, 1, 1, 6, 6, 0;
    CHECK(independent_columns(X) == std::vector<int>{0, 1, 3});
}

TEST_CASE("type-7 quantiles")
{
    const std::vector<double> v{1, 2, 3, 4};
    CHECK(quantile7(v, 0.0) == 1.0);
    CHECK(quantile7(v, 0.5) == 2.5);
    CHECK(quantile7(v, 1.0) == 4.0);
    CHECK(quantile7(v, 0.25) == doctest::Approx(1.75));
}
