#include "mscal/truth.hpp"

#include "mscal/error.hpp"
#include "mscal/parallel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace mscal {

namespace {

// 15-point Kronrod nodes/weights on [-1, 1] (non-negative half) and the
// embedded 7-point Gauss weights.
constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr std::array<double, 4> kWg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

constexpr int kMaxDepth = 40;

// QUADPACK error estimate for one G7K15 panel. `kron` and `gauss` are the
// unscaled rule sums, `half` the half-width.
double error_estimate(const std::array<double, 15>& fv, double kron, double gauss, double half)
{
    const double mean = 0.5 * kron;
    double resasc = kWgk[7] * std::abs(fv[7] - mean);
    for (std::size_t j = 0; j < 7; ++j)
        resasc += kWgk[j] * (std::abs(fv[j] - mean) + std::abs(fv[14 - j] - mean));
    resasc *= std::abs(half);
    double err = std::abs((kron - gauss) * half);
    if (resasc != 0.0 && err != 0.0)
        err = resasc * std::min(1.0, std::pow(200.0 * err / resasc, 1.5));
    return err;
}

}  // namespace

double state_survival(const DgmConfig& config, std::span<const double> z, StateId j, double t)
{
    if (t < 0.0)
        throw Error(ErrorCode::InvalidArgument, "time must be non-negative");
    double total = 0.0;
    for (StateId to : config.structure.targets(j))
        total += 1.0 / config.scale(j, to);
    if (total == 0.0)
        return 1.0;
    return std::exp(-t * config.hazard_multiplier(z) * total);
}

TransitionProbabilityEngine::TransitionProbabilityEngine(const DgmConfig& config, std::span<const double> z,
                                                         double tolerance)
{
    config.validate();
    if (!(tolerance > 0.0))
        throw Error(ErrorCode::InvalidArgument, "tolerance must be positive");
    n_states_ = config.structure.n_states();
    if (n_states_ > 16)
        throw Error(ErrorCode::InvalidArgument, "at most 16 states are supported");
    const double mult = config.hazard_multiplier(z);
    exit_rate_.assign(static_cast<std::size_t>(n_states_), 0.0);
    out_.resize(static_cast<std::size_t>(n_states_));
    for (const auto& tr : config.structure.transitions()) {
        const double r = mult / config.scale(tr.from, tr.to);
        out_[static_cast<std::size_t>(tr.from - 1)].push_back({tr.to - 1, r});
        exit_rate_[static_cast<std::size_t>(tr.from - 1)] += r;
    }
    // An error of e in every inner row adds at most e to the outer integral
    // (the integrand weights form a sub-probability density), so the level
    // tolerances add up along the longest path.
    int depth = 1;
    const auto& topo = config.structure.topological_order();
    std::vector<int> longest(static_cast<std::size_t>(n_states_), 0);
    for (auto it = topo.rbegin(); it != topo.rend(); ++it)
        for (StateId to : config.structure.targets(*it))
            longest[static_cast<std::size_t>(*it - 1)] =
                std::max(longest[static_cast<std::size_t>(*it - 1)], longest[static_cast<std::size_t>(to - 1)] + 1);
    depth = std::max(1, *std::max_element(longest.begin(), longest.end()));
    level_tol_ = 0.01 * tolerance / depth;
}

double TransitionProbabilityEngine::survival(StateId j, double s) const
{
    return std::exp(-exit_rate_[static_cast<std::size_t>(j - 1)] * s);
}

TransitionProbabilityEngine::Vec TransitionProbabilityEngine::row_vec(int i, double s) const
{
    Vec v = Vec::Zero(n_states_);
    const auto ui = static_cast<std::size_t>(i);
    v[i] = std::exp(-exit_rate_[ui] * s);
    if (out_[ui].empty() || s <= 0.0)
        return v;
    v += integral(i, s, 0.0, s, level_tol_, 0);
    return v;
}

// int_a^b sum_m lambda_im S_i(r) P_m(s - r) dr
TransitionProbabilityEngine::Vec TransitionProbabilityEngine::integral(int i, double s, double a, double b,
                                                                       double tol, int depth) const
{
    const auto ui = static_cast<std::size_t>(i);
    const double centre = 0.5 * (a + b), half = 0.5 * (b - a);
    auto f = [&](double r) {
        ++evaluations_;
        Vec acc = Vec::Zero(n_states_);
        const double si = std::exp(-exit_rate_[ui] * r);
        for (const auto& [m, rate] : out_[ui])
            acc += (rate * si) * row_vec(m, s - r);
        return acc;
    };
    std::array<Vec, 15> fv;
    fv[7] = f(centre);
    for (std::size_t j = 0; j < 7; ++j) {
        const double dx = half * kXgk[j];
        fv[j] = f(centre - dx);
        fv[14 - j] = f(centre + dx);
    }
    Vec kron = kWgk[7] * fv[7], gauss = kWg[3] * fv[7];
    for (std::size_t j = 0; j < 7; ++j) {
        const Vec sum = fv[j] + fv[14 - j];
        kron += kWgk[j] * sum;
        if (j % 2 == 1)
            gauss += kWg[j / 2] * sum;
    }
    double err = 0.0;
    for (int k = 0; k < n_states_; ++k) {
        std::array<double, 15> col;
        for (std::size_t j = 0; j < 15; ++j)
            col[j] = fv[j][k];
        err = std::max(err, error_estimate(col, kron[k], gauss[k], half));
    }
    kron *= half;
    if (err <= tol)
        return kron;
    if (depth >= kMaxDepth)
        throw Error(ErrorCode::ToleranceNotMet, "quadrature did not reach the requested tolerance");
    return integral(i, s, a, centre, 0.5 * tol, depth + 1) + integral(i, s, centre, b, 0.5 * tol, depth + 1);
}

Eigen::VectorXd TransitionProbabilityEngine::row(StateId from, double s) const
{
    if (from < 1 || from > n_states_)
        throw Error(ErrorCode::InvalidArgument, "state out of range");
    if (s < 0.0)
        throw Error(ErrorCode::InvalidArgument, "time must be non-negative");
    return Eigen::VectorXd(row_vec(from - 1, s));
}

double TransitionProbabilityEngine::route_probability(std::span<const StateId> route, double s) const
{
    if (route.empty())
        throw Error(ErrorCode::InvalidArgument, "empty route");
    for (std::size_t k = 0; k + 1 < route.size(); ++k) {
        const auto& targets = out_[static_cast<std::size_t>(route[k] - 1)];
        if (std::none_of(targets.begin(), targets.end(), [&](const auto& e) { return e.first == route[k + 1] - 1; }))
            throw Error(ErrorCode::IllegalTransition, "route uses a transition outside the structure");
    }
    if (route.size() == 1)
        return survival(route[0], s);
    if (s <= 0.0)
        return 0.0;
    return route_integral(route, s, 0.0, s, level_tol_, 0);
}

double TransitionProbabilityEngine::route_integral(std::span<const StateId> route, double s, double a, double b,
                                                   double tol, int depth) const
{
    const auto ui = static_cast<std::size_t>(route[0] - 1);
    double rate = 0.0;
    for (const auto& [m, r] : out_[ui])
        if (m == route[1] - 1)
            rate = r;
    const auto rest = route.subspan(1);
    auto f = [&](double r) {
        ++evaluations_;
        const double inner = rest.size() == 1 ? survival(rest[0], s - r)
                                              : (s - r > 0.0 ? route_integral(rest, s - r, 0.0, s - r, level_tol_, 0)
                                                             : 0.0);
        return rate * std::exp(-exit_rate_[ui] * r) * inner;
    };
    const double centre = 0.5 * (a + b), half = 0.5 * (b - a);
    std::array<double, 15> fv;
    fv[7] = f(centre);
    for (std::size_t j = 0; j < 7; ++j) {
        const double dx = half * kXgk[j];
        fv[j] = f(centre - dx);
        fv[14 - j] = f(centre + dx);
    }
    double kron = kWgk[7] * fv[7], gauss = kWg[3] * fv[7];
    for (std::size_t j = 0; j < 7; ++j) {
        const double sum = fv[j] + fv[14 - j];
        kron += kWgk[j] * sum;
        if (j % 2 == 1)
            gauss += kWg[j / 2] * sum;
    }
    const double err = error_estimate(fv, kron, gauss, half);
    kron *= half;
    if (err <= tol)
        return kron;
    if (depth >= kMaxDepth)
        throw Error(ErrorCode::ToleranceNotMet, "quadrature did not reach the requested tolerance");
    return route_integral(route, s, a, centre, 0.5 * tol, depth + 1)
           + route_integral(route, s, centre, b, 0.5 * tol, depth + 1);
}

double true_transition_prob(const DgmConfig& config, std::span<const double> z, StateId k, double t)
{
    TransitionProbabilityEngine engine(config, z);
    if (k < 1 || k > engine.n_states())
        throw Error(ErrorCode::InvalidArgument, "state out of range");
    return engine.probability(1, k, t);
}

PredictionMatrix true_probabilities(const DgmConfig& config, const std::vector<SubjectId>& ids,
                                    const Eigen::MatrixXd& Z, double t)
{
    if (static_cast<std::size_t>(Z.rows()) != ids.size())
        throw Error(ErrorCode::DimensionMismatch, "ids and covariate rows differ in number");
    if (static_cast<std::size_t>(Z.cols()) != config.n_covariates())
        throw Error(ErrorCode::DimensionMismatch, "covariate count does not match the configuration");
    PredictionMatrix out;
    out.horizon = t;
    out.ids = ids;
    out.probs.resize(Z.rows(), config.structure.n_states());
    parallel_for(ids.size(), [&](std::size_t i) {
        const auto r = static_cast<Eigen::Index>(i);
        const Eigen::VectorXd z = Z.row(r).transpose();
        TransitionProbabilityEngine engine(config, std::span<const double>(z.data(), static_cast<std::size_t>(z.size())));
        out.probs.row(r) = engine.row(1, t).transpose();
    });
    return out;
}

PredictionMatrix true_probabilities(const DgmConfig& config, const Cohort& cohort, double t)
{
    std::vector<SubjectId> ids;
    ids.reserve(cohort.size());
    for (const auto& s : cohort.subjects())
        ids.push_back(s.id);
    return true_probabilities(config, ids, cohort.covariate_matrix(), t);
}

Estimand compute_estimand(const PredictionMatrix& preds, const PredictionMatrix& truths)
{
    if (preds.probs.rows() != truths.probs.rows() || preds.probs.cols() != truths.probs.cols())
        throw Error(ErrorCode::DimensionMismatch, "predictions and truths differ in shape");
    if (preds.ids != truths.ids)
        throw Error(ErrorCode::DimensionMismatch, "predictions and truths refer to different subjects");
    const Eigen::Index n = preds.probs.rows(), K = preds.probs.cols();
    if (n == 0)
        throw Error(ErrorCode::EmptyCohort, "no subjects");
    Estimand e;
    e.mean = (truths.probs - preds.probs).colwise().mean().transpose();
    e.moderate.resize(static_cast<std::size_t>(K));
    for (Eigen::Index k = 0; k < K; ++k) {
        auto& pts = e.moderate[static_cast<std::size_t>(k)];
        pts.reserve(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i)
            pts.push_back({preds.probs(i, k), truths.probs(i, k)});
        std::sort(pts.begin(), pts.end(), [](const CalPoint& a, const CalPoint& b) {
            return a.predicted < b.predicted || (a.predicted == b.predicted && a.observed < b.observed);
        });
    }
    return e;
}

ReferenceCurve true_curve_reference(const Estimand& estimand, std::span<const double> query, StateId state)
{
    if (state < 1 || static_cast<std::size_t>(state) > estimand.moderate.size())
        throw Error(ErrorCode::InvalidArgument, "state out of range");
    const auto& pts = estimand.moderate[static_cast<std::size_t>(state - 1)];
    if (pts.empty())
        throw Error(ErrorCode::EmptyCohort, "no estimand points");
    // Collapse tied abscissae to their mean ordinate.
    std::vector<double> xs, ys;
    for (std::size_t a = 0; a < pts.size();) {
        std::size_t b = a;
        double sum = 0.0;
        for (; b < pts.size() && pts[b].predicted == pts[a].predicted; ++b)
            sum += pts[b].observed;
        xs.push_back(pts[a].predicted);
        ys.push_back(sum / static_cast<double>(b - a));
        a = b;
    }
    ReferenceCurve out;
    out.values.reserve(query.size());
    for (double q : query) {
        if (q <= xs.front()) {
            out.n_clipped += q < xs.front();
            out.values.push_back(ys.front());
            continue;
        }
        if (q >= xs.back()) {
            out.n_clipped += q > xs.back();
            out.values.push_back(ys.back());
            continue;
        }
        const auto hi = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), q) - xs.begin());
        const std::size_t lo = hi - 1;
        const double f = (q - xs[lo]) / (xs[hi] - xs[lo]);
        out.values.push_back(ys[lo] + f * (ys[hi] - ys[lo]));
    }
    return out;
}

}  // namespace mscal
