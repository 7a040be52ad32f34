#include "mscal/smoothers.hpp"

#include "mscal/error.hpp"
#include "mscal/parallel.hpp"
#include "mscal/simd/kernels.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mscal {

double logit(double p)
{
    return std::log(p / (1.0 - p));
}

double expit(double x)
{
    if (x >= 0.0)
        return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

namespace {

void check_sizes(std::size_t n, std::size_t m, const char* what)
{
    if (n != m)
        throw Error(ErrorCode::DimensionMismatch, std::string(what) + " length differs from the number of rows");
}

void check_weights(std::span<const double> w)
{
    for (double v : w)
        if (!(v >= 0.0) || !std::isfinite(v))
            throw Error(ErrorCode::InvalidArgument, "weights must be finite and non-negative");
}

}  // namespace

// Loess -------------------------------------------------------------------------------

LoessFit loess(std::span<const double> x, std::span<const double> y, std::span<const double> w, double span,
               int degree)
{
    const std::size_t n = x.size();
    check_sizes(n, y.size(), "y");
    check_sizes(n, w.size(), "w");
    if (degree != 1 && degree != 2)
        throw Error(ErrorCode::InvalidArgument, "loess degree must be 1 or 2");
    if (!(span > 0.0) || !(span <= 1.0))
        throw Error(ErrorCode::InvalidArgument, "loess span must lie in (0, 1]");
    check_weights(w);
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(x[i]) || !std::isfinite(y[i]))
            throw Error(ErrorCode::InvalidArgument, "loess inputs must be finite");
    const auto q = static_cast<std::size_t>(std::ceil(span * static_cast<double>(n) - 1e-9));
    if (n < static_cast<std::size_t>(degree + 2) || q < static_cast<std::size_t>(degree + 2))
        throw Error(ErrorCode::InvalidArgument, "too few points for the loess neighbourhood");

    LoessFit fit;
    fit.span = span;
    fit.degree = degree;
    fit.order.resize(n);
    std::iota(fit.order.begin(), fit.order.end(), std::size_t{0});
    std::stable_sort(fit.order.begin(), fit.order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> xs(n), ys(n), ws(n);
    for (std::size_t r = 0; r < n; ++r) {
        xs[r] = x[fit.order[r]];
        ys[r] = y[fit.order[r]];
        ws[r] = w[fit.order[r]];
    }

    // Window start for each sorted point: the q nearest points are contiguous.
    std::vector<std::size_t> start(n);
    std::size_t lo = 0;
    for (std::size_t i = 0; i < n; ++i) {
        while (lo + q < n && xs[lo + q] - xs[i] < xs[i] - xs[lo])
            ++lo;
        start[i] = lo;
    }

    std::vector<double> fitted_sorted(n);
    std::vector<unsigned char> flagged(n, 0);
    constexpr std::size_t kBlock = 512;
    const std::size_t n_blocks = (n + kBlock - 1) / kBlock;
    parallel_for(n_blocks, [&](std::size_t b) {
        const std::size_t end = std::min(n, (b + 1) * kBlock);
        for (std::size_t i = b * kBlock; i < end; ++i) {
            const std::size_t a = start[i];
            const double x0 = xs[i];
            const double h = std::max(x0 - xs[a], xs[a + q - 1] - x0);
            const double inv_h = h > 0.0 ? 1.0 / h : 0.0;
            const auto m = simd::local_moments(xs.data() + a, ys.data() + a, ws.data() + a, q, x0, inv_h);
            double value = std::numeric_limits<double>::quiet_NaN();
            bool ok = false;
            if (m.s[0] > 0.0) {
                if (degree == 2) {
                    Eigen::Matrix3d A;
                    A << m.s[0], m.s[1], m.s[2], m.s[1], m.s[2], m.s[3], m.s[2], m.s[3], m.s[4];
                    Eigen::FullPivLU<Eigen::Matrix3d> lu(A);
                    lu.setThreshold(1e-10);
                    if (lu.rank() == 3) {
                        value = lu.solve(Eigen::Vector3d(m.t[0], m.t[1], m.t[2]))[0];
                        ok = true;
                    }
                }
                else {
                    Eigen::Matrix2d A;
                    A << m.s[0], m.s[1], m.s[1], m.s[2];
                    Eigen::FullPivLU<Eigen::Matrix2d> lu(A);
                    lu.setThreshold(1e-10);
                    if (lu.rank() == 2) {
                        value = lu.solve(Eigen::Vector2d(m.t[0], m.t[1]))[0];
                        ok = true;
                    }
                }
                if (!ok)
                    value = m.t[0] / m.s[0];
            }
            else {
                // Every neighbour carries zero kernel weight.
                double sum = 0.0;
                for (std::size_t j = a; j < a + q; ++j)
                    sum += ys[j];
                value = sum / static_cast<double>(q);
            }
            fitted_sorted[i] = value;
            flagged[i] = ok ? 0 : 1;
        }
    });

    fit.fitted.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
        fit.fitted[fit.order[r]] = fitted_sorted[r];
        fit.n_degenerate += flagged[r];
    }
    fit.x_sorted = std::move(xs);
    return fit;
}

// Natural cubic splines ------------------------------------------------------------------

double quantile7(std::span<const double> sorted, double p)
{
    if (sorted.empty())
        throw Error(ErrorCode::InvalidArgument, "quantile of an empty sample");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

namespace {

double cube_plus(double v)
{
    return v > 0.0 ? v * v * v : 0.0;
}

}  // namespace

Eigen::MatrixXd SplineBasis::evaluate(std::span<const double> x) const
{
    // Knots on the unit scale: 0, interior..., 1.
    std::vector<double> xi;
    xi.reserve(knots.size() + 2);
    const double range = upper - lower;
    xi.push_back(0.0);
    for (double k : knots)
        xi.push_back((k - lower) / range);
    xi.push_back(1.0);
    const std::size_t K = xi.size();

    Eigen::MatrixXd B(static_cast<Eigen::Index>(x.size()), df);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = (x[i] - lower) / range;
        auto d = [&](std::size_t k) {
            return (cube_plus(v - xi[k]) - cube_plus(v - xi[K - 1])) / (xi[K - 1] - xi[k]);
        };
        const auto r = static_cast<Eigen::Index>(i);
        B(r, 0) = v;
        const double last = d(K - 2);
        for (std::size_t k = 0; k + 2 < K; ++k)
            B(r, static_cast<Eigen::Index>(k + 1)) = d(k) - last;
    }
    return B;
}

SplineBasis natural_spline_basis(std::span<const double> x, int df)
{
    if (df < 2)
        throw Error(ErrorCode::InvalidArgument, "spline df must be at least 2");
    if (x.empty())
        throw Error(ErrorCode::TooFewDistinct, "no values to place knots on");
    std::vector<double> sorted(x.begin(), x.end());
    for (double v : sorted)
        if (!std::isfinite(v))
            throw Error(ErrorCode::InvalidArgument, "spline inputs must be finite");
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> uniq = sorted;
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    if (static_cast<int>(uniq.size()) < df + 1)
        throw Error(ErrorCode::TooFewDistinct,
                    "need at least " + std::to_string(df + 1) + " distinct values, got " + std::to_string(uniq.size()));

    SplineBasis basis;
    basis.df = df;
    basis.lower = sorted.front();
    basis.upper = sorted.back();
    double prev = basis.lower;
    for (int k = 1; k < df; ++k) {
        const double q = quantile7(sorted, static_cast<double>(k) / df);
        if (!(q > prev) || !(q < basis.upper))
            throw Error(ErrorCode::TooFewDistinct, "interior knots are not strictly inside the data range");
        basis.knots.push_back(q);
        prev = q;
    }
    basis.basis = basis.evaluate(x);
    return basis;
}

// Linear algebra helpers ---------------------------------------------------------------

std::vector<int> independent_columns(const Eigen::MatrixXd& X, double tolerance)
{
    if (X.cols() == 0)
        return {};
    // Scale columns to unit norm so the threshold is relative.
    Eigen::MatrixXd S = X;
    for (Eigen::Index c = 0; c < S.cols(); ++c) {
        const double nrm = S.col(c).norm();
        if (nrm > 0.0)
            S.col(c) /= nrm;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(S);
    qr.setThreshold(tolerance);
    const auto rank = qr.rank();
    std::vector<int> keep;
    for (Eigen::Index k = 0; k < rank; ++k)
        keep.push_back(static_cast<int>(qr.colsPermutation().indices()[k]));
    std::sort(keep.begin(), keep.end());
    return keep;
}

namespace {

// Rows with positive weight, for rank checks.
Eigen::MatrixXd positive_rows(const Eigen::MatrixXd& X, std::span<const double> w)
{
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < w.size(); ++i)
        if (w[i] > 0.0)
            rows.push_back(static_cast<Eigen::Index>(i));
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), X.cols());
    for (std::size_t r = 0; r < rows.size(); ++r)
        out.row(static_cast<Eigen::Index>(r)) = X.row(rows[r]);
    return out;
}

// X_a^T diag(v) X_b via the dispatching kernel.
void accumulate_cross(const Eigen::MatrixXd& Xa, const Eigen::MatrixXd& Xb, const Eigen::VectorXd& v,
                      Eigen::MatrixXd& H, Eigen::Index ra, Eigen::Index rb, bool symmetric_block)
{
    const auto n = static_cast<std::size_t>(Xa.rows());
    for (Eigen::Index c = 0; c < Xa.cols(); ++c)
        for (Eigen::Index d = symmetric_block ? c : 0; d < Xb.cols(); ++d) {
            const double val = simd::weighted_dot(Xa.col(c).data(), Xb.col(d).data(), v.data(), n);
            H(ra + c, rb + d) = val;
            H(rb + d, ra + c) = val;
        }
}

// Solves H step = g for a (should-be) positive definite H after Jacobi
// scaling. Returns false if H is not positive definite.
bool spd_solve(const Eigen::MatrixXd& H, const Eigen::VectorXd& g, Eigen::VectorXd& step)
{
    const Eigen::Index p = H.rows();
    Eigen::VectorXd d(p);
    for (Eigen::Index k = 0; k < p; ++k) {
        if (!(H(k, k) > 0.0) || !std::isfinite(H(k, k)))
            return false;
        d[k] = 1.0 / std::sqrt(H(k, k));
    }
    const Eigen::MatrixXd S = d.asDiagonal() * H * d.asDiagonal();
    Eigen::LLT<Eigen::MatrixXd> llt(S);
    if (llt.info() != Eigen::Success)
        return false;
    // Reject numerically semi-definite systems.
    const Eigen::VectorXd diag = llt.matrixLLT().diagonal();
    if (diag.minCoeff() < 1e-7 * diag.maxCoeff())
        return false;
    step = d.asDiagonal() * llt.solve(d.asDiagonal() * g);
    return step.allFinite();
}

double log_expit(double eta)
{
    // log(1 / (1 + exp(-eta)))
    return eta >= 0.0 ? -std::log1p(std::exp(-eta)) : eta - std::log1p(std::exp(eta));
}

constexpr int kMaxIterations = 100;
constexpr double kRelTol = 1e-10;
constexpr double kScoreTol = 1e-8;

}  // namespace

// Binary logistic ---------------------------------------------------------------------

double logistic_loglik(const Eigen::MatrixXd& X, std::span<const double> y, std::span<const double> w,
                       std::span<const double> offset, const Eigen::VectorXd& coef)
{
    const Eigen::VectorXd eta = X * coef;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const auto u = static_cast<std::size_t>(i);
        if (w[u] == 0.0)
            continue;
        const double e = eta[i] + (offset.empty() ? 0.0 : offset[u]);
        ll += w[u] * (y[u] * log_expit(e) + (1.0 - y[u]) * log_expit(-e));
    }
    return ll;
}

LogisticFit weighted_logistic(const Eigen::MatrixXd& X, std::span<const double> y, std::span<const double> w,
                              std::span<const double> offset)
{
    const auto n = static_cast<std::size_t>(X.rows());
    check_sizes(n, y.size(), "y");
    check_sizes(n, w.size(), "w");
    if (!offset.empty())
        check_sizes(n, offset.size(), "offset");
    check_weights(w);

    double w_total = 0.0, w_one = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(y[i] >= 0.0 && y[i] <= 1.0))
            throw Error(ErrorCode::InvalidArgument, "binary outcomes must lie in [0, 1]");
        w_total += w[i];
        w_one += w[i] * y[i];
    }
    if (!(w_total > 0.0))
        throw Error(ErrorCode::EmptyCohort, "all weights are zero");
    if (w_one <= 0.0 || w_one >= w_total)
        throw Error(ErrorCode::DivergedToInfinity, "outcome is constant among weighted rows");

    const Eigen::Index p = X.cols();
    if (p > 0 && static_cast<Eigen::Index>(independent_columns(positive_rows(X, w)).size()) < p)
        throw Error(ErrorCode::FitSingular, "design matrix is rank deficient");

    Eigen::VectorXd coef = Eigen::VectorXd::Zero(p);
    auto deviance = [&](const Eigen::VectorXd& b) { return -2.0 * logistic_loglik(X, y, w, offset, b); };
    const double null_scale = deviance(Eigen::VectorXd::Zero(p)) + 0.1;
    double dev = deviance(coef);

    Eigen::VectorXd mu(static_cast<Eigen::Index>(n)), v(static_cast<Eigen::Index>(n));
    auto score = [&](const Eigen::VectorXd& b, Eigen::VectorXd& g, Eigen::MatrixXd& H) {
        const Eigen::VectorXd eta = X * b;
        Eigen::VectorXd r(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) {
            const auto k = static_cast<Eigen::Index>(i);
            mu[k] = expit(eta[k] + (offset.empty() ? 0.0 : offset[i]));
            v[k] = w[i] * mu[k] * (1.0 - mu[k]);
            r[k] = w[i] * (y[i] - mu[k]);
        }
        g = X.transpose() * r;
        H.resize(p, p);
        accumulate_cross(X, X, v, H, 0, 0, true);
    };

    LogisticFit fit;
    Eigen::VectorXd g;
    Eigen::MatrixXd H;
    bool converged = false;
    bool stable = false;
    double change = 1.0;
    for (int it = 1; it <= kMaxIterations && p > 0; ++it) {
        fit.iterations = it;
        score(coef, g, H);
        if (stable && (g.cwiseAbs().maxCoeff() < kScoreTol || change == 0.0)) {
            converged = true;
            break;
        }
        Eigen::VectorXd step;
        if (!spd_solve(H, g, step)) {
            if (dev < 1e-8 * null_scale)
                throw Error(ErrorCode::DivergedToInfinity, "fitted probabilities reached 0 or 1");
            throw Error(ErrorCode::FitSingular, "information matrix is singular");
        }
        Eigen::VectorXd trial = coef + step;
        double trial_dev = deviance(trial);
        for (int h = 0; h < 30 && !(trial_dev <= dev + 1e-12 * (std::abs(dev) + 1.0)); ++h) {
            step *= 0.5;
            trial = coef + step;
            trial_dev = deviance(trial);
        }
        if (!(trial_dev <= dev + 1e-12 * (std::abs(dev) + 1.0)) && !std::isfinite(trial_dev))
            throw Error(ErrorCode::FitDiverged, "deviance is not finite");
        change = std::abs(dev - trial_dev);
        coef = trial;
        dev = std::min(trial_dev, dev);
        stable = change < kRelTol * (std::abs(dev) + 0.1);
    }
    converged = converged || stable;
    if (p == 0)
        converged = true;
    if (!converged || dev < 1e-8 * null_scale) {
        if (dev < 1e-6 * null_scale || coef.cwiseAbs().maxCoeff() > 30.0)
            throw Error(ErrorCode::DivergedToInfinity, "coefficients diverge (separation)");
        throw Error(ErrorCode::FitDiverged, "IRLS did not converge");
    }
    fit.coef = coef;
    fit.gradient = logistic_score(X, y, w, offset, coef);
    fit.deviance = dev;
    return fit;
}

Eigen::VectorXd logistic_score(const Eigen::MatrixXd& X, std::span<const double> y, std::span<const double> w,
                               std::span<const double> offset, const Eigen::VectorXd& coef)
{
    const Eigen::VectorXd eta = X * coef;
    Eigen::VectorXd r(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const auto u = static_cast<std::size_t>(i);
        r[i] = w[u] * (y[u] - expit(eta[i] + (offset.empty() ? 0.0 : offset[u])));
    }
    return X.transpose() * r;
}

// Multinomial logistic -------------------------------------------------------------------

namespace {

// Category probabilities for every row; columns 0..K-1.
Eigen::MatrixXd softmax_rows(const std::vector<Eigen::MatrixXd>& designs, const std::vector<Eigen::VectorXd>& offsets,
                             const std::vector<Eigen::VectorXd>& coef, Eigen::Index n)
{
    const auto E = static_cast<Eigen::Index>(designs.size());
    Eigen::MatrixXd eta(n, E + 1);
    eta.col(0).setZero();
    for (Eigen::Index e = 0; e < E; ++e) {
        eta.col(e + 1) = designs[static_cast<std::size_t>(e)] * coef[static_cast<std::size_t>(e)];
        if (!offsets.empty())
            eta.col(e + 1) += offsets[static_cast<std::size_t>(e)];
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const double mx = eta.row(i).maxCoeff();
        double sum = 0.0;
        for (Eigen::Index k = 0; k <= E; ++k) {
            eta(i, k) = std::exp(eta(i, k) - mx);
            sum += eta(i, k);
        }
        eta.row(i) /= sum;
    }
    return eta;
}

}  // namespace

double multinomial_loglik(const std::vector<Eigen::MatrixXd>& designs, std::span<const int> category,
                          std::span<const double> w, const std::vector<Eigen::VectorXd>& offsets,
                          const std::vector<Eigen::VectorXd>& coef)
{
    const auto n = static_cast<Eigen::Index>(category.size());
    const auto E = static_cast<Eigen::Index>(designs.size());
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto u = static_cast<std::size_t>(i);
        if (w[u] == 0.0)
            continue;
        // log-sum-exp over the linear predictors, reference category at 0.
        std::vector<double> eta(static_cast<std::size_t>(E + 1), 0.0);
        for (Eigen::Index e = 0; e < E; ++e) {
            const auto ue = static_cast<std::size_t>(e);
            eta[ue + 1] = designs[ue].row(i).dot(coef[ue]) + (offsets.empty() ? 0.0 : offsets[ue][i]);
        }
        const double mx = *std::max_element(eta.begin(), eta.end());
        double sum = 0.0;
        for (double v : eta)
            sum += std::exp(v - mx);
        ll += w[u] * (eta[static_cast<std::size_t>(category[u] - 1)] - mx - std::log(sum));
    }
    return ll;
}

Eigen::VectorXd multinomial_score(const std::vector<Eigen::MatrixXd>& designs, std::span<const int> category,
                                  std::span<const double> w, const std::vector<Eigen::VectorXd>& offsets,
                                  const std::vector<Eigen::VectorXd>& coef)
{
    const auto N = static_cast<Eigen::Index>(category.size());
    const Eigen::MatrixXd mu = softmax_rows(designs, offsets, coef, N);
    Eigen::Index P = 0;
    for (const auto& X : designs)
        P += X.cols();
    Eigen::VectorXd g(P);
    Eigen::VectorXd r(N);
    Eigen::Index at = 0;
    for (std::size_t a = 0; a < designs.size(); ++a) {
        for (Eigen::Index i = 0; i < N; ++i) {
            const auto u = static_cast<std::size_t>(i);
            const double y = category[u] == static_cast<int>(a) + 2 ? 1.0 : 0.0;
            r[i] = w[u] * (y - mu(i, static_cast<Eigen::Index>(a) + 1));
        }
        g.segment(at, designs[a].cols()) = designs[a].transpose() * r;
        at += designs[a].cols();
    }
    return g;
}

MultinomialFit weighted_multinomial(const std::vector<Eigen::MatrixXd>& designs, std::span<const int> category,
                                    std::span<const double> w, const std::vector<Eigen::VectorXd>& offsets)
{
    const std::size_t n = category.size();
    const std::size_t E = designs.size();
    if (E == 0)
        throw Error(ErrorCode::InvalidArgument, "need at least two categories");
    check_sizes(n, w.size(), "w");
    for (const auto& X : designs)
        check_sizes(n, static_cast<std::size_t>(X.rows()), "design");
    if (!offsets.empty()) {
        if (offsets.size() != E)
            throw Error(ErrorCode::DimensionMismatch, "one offset per equation is required");
        for (const auto& o : offsets)
            check_sizes(n, static_cast<std::size_t>(o.size()), "offset");
    }
    check_weights(w);

    const auto K = static_cast<int>(E + 1);
    std::vector<double> cat_weight(E + 1, 0.0);
    double w_total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (category[i] < 1 || category[i] > K)
            throw Error(ErrorCode::InvalidArgument, "category outside 1.." + std::to_string(K));
        cat_weight[static_cast<std::size_t>(category[i] - 1)] += w[i];
        w_total += w[i];
    }
    if (!(w_total > 0.0))
        throw Error(ErrorCode::EmptyCohort, "all weights are zero");
    for (std::size_t k = 0; k <= E; ++k)
        if (cat_weight[k] <= 0.0)
            throw Error(ErrorCode::DivergedToInfinity,
                        "category " + std::to_string(k + 1) + " has no weighted observations");
    for (const auto& X : designs)
        if (X.cols() > 0 && static_cast<Eigen::Index>(independent_columns(positive_rows(X, w)).size()) < X.cols())
            throw Error(ErrorCode::FitSingular, "an equation's design matrix is rank deficient");

    std::vector<Eigen::Index> start(E + 1, 0);
    for (std::size_t e = 0; e < E; ++e)
        start[e + 1] = start[e] + designs[e].cols();
    const Eigen::Index P = start[E];
    const auto N = static_cast<Eigen::Index>(n);

    std::vector<Eigen::VectorXd> coef(E);
    for (std::size_t e = 0; e < E; ++e)
        coef[e] = Eigen::VectorXd::Zero(designs[e].cols());

    auto unpack = [&](const Eigen::VectorXd& flat) {
        std::vector<Eigen::VectorXd> out(E);
        for (std::size_t e = 0; e < E; ++e)
            out[e] = flat.segment(start[e], designs[e].cols());
        return out;
    };
    auto pack = [&](const std::vector<Eigen::VectorXd>& parts) {
        Eigen::VectorXd flat(P);
        for (std::size_t e = 0; e < E; ++e)
            flat.segment(start[e], designs[e].cols()) = parts[e];
        return flat;
    };
    auto deviance = [&](const std::vector<Eigen::VectorXd>& b) {
        return -2.0 * multinomial_loglik(designs, category, w, offsets, b);
    };

    MultinomialFit fit;
    auto score = [&](const std::vector<Eigen::VectorXd>& b, Eigen::VectorXd& g, Eigen::MatrixXd& H) {
        const Eigen::MatrixXd mu = softmax_rows(designs, offsets, b, N);
        g.resize(P);
        H.resize(P, P);
        Eigen::VectorXd r(N), v(N);
        for (std::size_t a = 0; a < E; ++a) {
            for (Eigen::Index i = 0; i < N; ++i) {
                const auto u = static_cast<std::size_t>(i);
                const double y = category[u] == static_cast<int>(a) + 2 ? 1.0 : 0.0;
                r[i] = w[u] * (y - mu(i, static_cast<Eigen::Index>(a) + 1));
            }
            g.segment(start[a], designs[a].cols()) = designs[a].transpose() * r;
            for (std::size_t b2 = a; b2 < E; ++b2) {
                for (Eigen::Index i = 0; i < N; ++i) {
                    const auto u = static_cast<std::size_t>(i);
                    const double ma = mu(i, static_cast<Eigen::Index>(a) + 1);
                    const double mb = mu(i, static_cast<Eigen::Index>(b2) + 1);
                    v[i] = w[u] * ma * ((a == b2 ? 1.0 : 0.0) - mb);
                }
                accumulate_cross(designs[a], designs[b2], v, H, start[a], start[b2], a == b2);
            }
        }
        return mu;
    };

    Eigen::VectorXd g;
    Eigen::MatrixXd H;
    double dev = deviance(coef);
    const double scale = dev + 0.1;
    bool converged = P == 0;
    bool stable = false;
    double change = 1.0;
    for (int it = 1; it <= kMaxIterations && P > 0; ++it) {
        fit.iterations = it;
        score(coef, g, H);
        if (stable && (g.cwiseAbs().maxCoeff() < kScoreTol || change == 0.0)) {
            converged = true;
            break;
        }
        Eigen::VectorXd step;
        if (!spd_solve(H, g, step)) {
            if (dev < 1e-8 * scale)
                throw Error(ErrorCode::DivergedToInfinity, "fitted probabilities reached 0 or 1");
            const double ridge = 1e-6 * std::max(1.0, H.diagonal().cwiseAbs().mean());
            Eigen::MatrixXd Hr = H;
            Hr.diagonal().array() += ridge;
            if (!spd_solve(Hr, g, step))
                throw Error(ErrorCode::FitSingular, "information matrix is singular even with a ridge");
            fit.ridge_used = true;
        }
        const Eigen::VectorXd flat = pack(coef);
        auto trial = unpack(flat + step);
        double trial_dev = deviance(trial);
        for (int h = 0; h < 30 && !(trial_dev <= dev + 1e-12 * (std::abs(dev) + 1.0)); ++h) {
            step *= 0.5;
            trial = unpack(flat + step);
            trial_dev = deviance(trial);
        }
        if (!std::isfinite(trial_dev))
            throw Error(ErrorCode::FitDiverged, "deviance is not finite");
        change = std::abs(dev - trial_dev);
        coef = std::move(trial);
        dev = std::min(dev, trial_dev);
        stable = change < kRelTol * (std::abs(dev) + 0.1);
    }
    converged = converged || stable;
    if (!converged || dev < 1e-8 * scale) {
        double largest = 0.0;
        for (const auto& c : coef)
            if (c.size() > 0)
                largest = std::max(largest, c.cwiseAbs().maxCoeff());
        if (dev < 1e-6 * scale || largest > 30.0)
            throw Error(ErrorCode::DivergedToInfinity, "coefficients diverge (separation)");
        throw Error(ErrorCode::FitDiverged, "Fisher scoring did not converge");
    }
    fit.fitted = softmax_rows(designs, offsets, coef, N);
    fit.gradient = multinomial_score(designs, category, w, offsets, coef);
    fit.coef = std::move(coef);
    fit.deviance = dev;
    return fit;
}

}  // namespace mscal
