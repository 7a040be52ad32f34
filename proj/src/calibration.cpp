#include "mscal/calibration.hpp"

#include "mscal/error.hpp"
#include "mscal/parallel.hpp"
#include "mscal/smoothers.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <string>

namespace mscal {

namespace {

constexpr std::uint64_t kBootstrapSalt = 0xb0u;

std::string lower(std::string_view s)
{
    std::string out(s);
    for (auto& c : out)
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

void sort_points(std::vector<CalPoint>& pts)
{
    std::sort(pts.begin(), pts.end(), [](const CalPoint& a, const CalPoint& b) {
        return a.predicted < b.predicted || (a.predicted == b.predicted && a.observed < b.observed);
    });
}

void check_state(const PredictionMatrix& preds, StateId state)
{
    if (state < 1 || state > preds.n_states())
        throw Error(ErrorCode::InvalidArgument, "state " + std::to_string(state) + " out of range");
}

// Rows that enter the weighted analyses: state known at the horizon.
std::vector<std::size_t> analysis_rows(const PredictionMatrix& preds, const IndicatorMatrix& ind, const WeightVector& w)
{
    if (ind.included.size() != preds.rows() || w.size() != preds.rows())
        throw Error(ErrorCode::DimensionMismatch, "predictions, indicators and weights differ in length");
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < preds.rows(); ++i) {
        if (!ind.included[i])
            continue;
        if (!w.weights[i])
            throw Error(ErrorCode::InvalidArgument,
                        "subject in row " + std::to_string(i + 1) + " has a known state but no weight");
        rows.push_back(i);
    }
    if (rows.empty())
        throw Error(ErrorCode::EmptyCohort, "no subject has a known state at the horizon");
    return rows;
}

std::vector<double> weights_at(const WeightVector& w, const std::vector<std::size_t>& rows)
{
    std::vector<double> out;
    out.reserve(rows.size());
    for (auto r : rows)
        out.push_back(*w.weights[r]);
    return out;
}

Eigen::MatrixXd clamped(const PredictionMatrix& preds)
{
    return clamp_predictions(preds).probs;
}

double mean_column_difference(const Eigen::VectorXd& observed, const Eigen::VectorXd& predicted)
{
    return (observed - predicted).mean();
}

}  // namespace

std::string_view to_string(Method m)
{
    switch (m) {
    case Method::AJ: return "aj";
    case Method::PV: return "pv";
    case Method::BLR: return "blr";
    case Method::MLR: return "mlr";
    }
    return "?";
}

Method parse_method(std::string_view name)
{
    const auto n = lower(name);
    for (Method m : kAllMethods)
        if (n == to_string(m))
            return m;
    throw Error(ErrorCode::InvalidArgument, "unknown method '" + std::string(name) + "' (expected aj, pv, blr or mlr)");
}

std::string_view to_string(WeightScheme s)
{
    switch (s) {
    case WeightScheme::Estimated: return "estimated";
    case WeightScheme::Misspecified: return "misspecified";
    case WeightScheme::True: return "true";
    case WeightScheme::None: return "none";
    }
    return "?";
}

WeightScheme parse_weight_scheme(std::string_view name)
{
    const auto n = lower(name);
    for (auto s : {WeightScheme::Estimated, WeightScheme::Misspecified, WeightScheme::True, WeightScheme::None})
        if (n == to_string(s))
            return s;
    throw Error(ErrorCode::InvalidArgument, "unknown weight scheme '" + std::string(name) + "'");
}

// Pseudo-values ------------------------------------------------------------------------

PseudoValueMatrix pseudo_values(const Cohort& cohort, const PredictionMatrix& preds, int n_groups)
{
    if (preds.rows() != cohort.size())
        throw Error(ErrorCode::DimensionMismatch, "predictions and cohort differ in size");
    if (preds.n_states() != cohort.n_states())
        throw Error(ErrorCode::DimensionMismatch, "predictions and structure differ in state count");
    if (n_groups < 1 || cohort.size() / static_cast<std::size_t>(n_groups) < 2)
        throw Error(ErrorCode::GroupTooSmall, "every group needs at least two subjects");
    const int K = preds.n_states();
    const double t = preds.horizon;
    PseudoValueMatrix pv;
    pv.values.resize(static_cast<Eigen::Index>(cohort.size()), K);
    for (StateId k = 1; k <= K; ++k) {
        pv.groupings.push_back(make_risk_groups(preds, k, n_groups));
        const auto& grouping = pv.groupings.back();
        parallel_for(grouping.members.size(), [&](std::size_t g) {
            const auto& members = grouping.members[g];
            const double m = static_cast<double>(members.size());
            const double full = aalen_johansen(cohort, members, t).probs[k - 1];
            const Eigen::MatrixXd loo = aj_leave_one_out(cohort, members, t);
            for (std::size_t r = 0; r < members.size(); ++r)
                pv.values(static_cast<Eigen::Index>(members[r]), k - 1) =
                    m * full - (m - 1.0) * loo(static_cast<Eigen::Index>(r), k - 1);
        });
    }
    return pv;
}

CalibrationResult pv_moderate(const PseudoValueMatrix& pv, const PredictionMatrix& preds, StateId state, double span)
{
    check_state(preds, state);
    if (static_cast<std::size_t>(pv.values.rows()) != preds.rows())
        throw Error(ErrorCode::DimensionMismatch, "pseudo-values and predictions differ in length");
    const std::size_t n = preds.rows();
    std::vector<double> x(n), y(n), w(n, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = preds.probs(static_cast<Eigen::Index>(i), state - 1);
        y[i] = pv.values(static_cast<Eigen::Index>(i), state - 1);
    }
    const auto fit = loess(x, y, w, span);
    CalibrationResult res;
    res.method = Method::PV;
    res.state = state;
    res.horizon = preds.horizon;
    res.n_degenerate = fit.n_degenerate;
    res.points.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        res.points.push_back({x[i], fit.fitted[i]});
    sort_points(res.points);
    res.mean_calibration = pv_mean(pv, preds, state);
    res.weak = WeakCalibration{std::numeric_limits<double>::quiet_NaN(), pv_weak(pv, preds, state)};
    return res;
}

double pv_mean(const PseudoValueMatrix& pv, const PredictionMatrix& preds, StateId state)
{
    check_state(preds, state);
    return mean_column_difference(pv.values.col(state - 1), preds.probs.col(state - 1));
}

double pv_weak(const PseudoValueMatrix& pv, const PredictionMatrix& preds, StateId state)
{
    check_state(preds, state);
    const auto p = preds.probs.col(state - 1);
    const double denom = p.squaredNorm();
    if (!(denom > 0.0))
        throw Error(ErrorCode::FitSingular, "all predictions are zero");
    return p.dot(pv.values.col(state - 1)) / denom;
}

// BLR ---------------------------------------------------------------------------------------

CalibrationResult blr_moderate(const PredictionMatrix& preds, const IndicatorMatrix& ind, const WeightVector& w,
                               StateId state, double span)
{
    check_state(preds, state);
    const auto rows = analysis_rows(preds, ind, w);
    std::vector<double> x, y;
    x.reserve(rows.size());
    y.reserve(rows.size());
    for (auto r : rows) {
        x.push_back(preds.probs(static_cast<Eigen::Index>(r), state - 1));
        y.push_back(ind.indicators(static_cast<Eigen::Index>(r), state - 1));
    }
    const auto ww = weights_at(w, rows);
    const auto fit = loess(x, y, ww, span);
    CalibrationResult res;
    res.method = Method::BLR;
    res.state = state;
    res.horizon = preds.horizon;
    res.n_degenerate = fit.n_degenerate;
    res.points.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        res.points.push_back({x[i], std::clamp(fit.fitted[i], 0.0, 1.0)});
    sort_points(res.points);
    return res;
}

double blr_mean(const PredictionMatrix& preds, const IndicatorMatrix& ind, const WeightVector& w, StateId state)
{
    check_state(preds, state);
    const auto rows = analysis_rows(preds, ind, w);
    const Eigen::MatrixXd p = clamped(preds);
    std::vector<double> y, offset;
    for (auto r : rows) {
        y.push_back(ind.indicators(static_cast<Eigen::Index>(r), state - 1));
        offset.push_back(logit(p(static_cast<Eigen::Index>(r), state - 1)));
    }
    const auto ww = weights_at(w, rows);
    const Eigen::MatrixXd X = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(rows.size()), 1);
    const double alpha = weighted_logistic(X, y, ww, offset).coef[0];
    double sum = 0.0;
    for (Eigen::Index i = 0; i < p.rows(); ++i)
        sum += expit(alpha + logit(p(i, state - 1))) - preds.probs(i, state - 1);
    return sum / static_cast<double>(p.rows());
}

WeakCalibration blr_weak(const PredictionMatrix& preds, const IndicatorMatrix& ind, const WeightVector& w,
                         StateId state)
{
    check_state(preds, state);
    const auto rows = analysis_rows(preds, ind, w);
    const Eigen::MatrixXd p = clamped(preds);
    Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), 2);
    std::vector<double> y;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(rows[i]);
        X(static_cast<Eigen::Index>(i), 0) = 1.0;
        X(static_cast<Eigen::Index>(i), 1) = logit(p(r, state - 1));
        y.push_back(ind.indicators(r, state - 1));
    }
    const auto fit = weighted_logistic(X, y, weights_at(w, rows));
    return {fit.coef[0], fit.coef[1]};
}

// MLR ---------------------------------------------------------------------------------------

Eigen::MatrixXd log_ratios(const PredictionMatrix& preds)
{
    if (preds.n_states() < 2)
        throw Error(ErrorCode::InvalidArgument, "need at least two states");
    const Eigen::MatrixXd p = clamped(preds);
    Eigen::MatrixXd lp(p.rows(), p.cols() - 1);
    for (Eigen::Index i = 0; i < p.rows(); ++i)
        for (Eigen::Index h = 1; h < p.cols(); ++h)
            lp(i, h - 1) = std::log(p(i, h) / p(i, 0));
    return lp;
}

namespace {

std::vector<int> categories_at(const IndicatorMatrix& ind, const std::vector<std::size_t>& rows)
{
    std::vector<int> out;
    out.reserve(rows.size());
    for (auto r : rows)
        out.push_back(ind.category[r]);
    return out;
}

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& m, const std::vector<std::size_t>& rows)
{
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
    return out;
}

// obs_k = exp(eta_k) / (1 + sum_l exp(eta_l)) for k >= 2, obs_1 by complement.
Eigen::RowVectorXd softmax_with_reference(const Eigen::RowVectorXd& eta)
{
    const double mx = std::max(0.0, eta.maxCoeff());
    Eigen::RowVectorXd e = (eta.array() - mx).exp();
    const double denom = std::exp(-mx) + e.sum();
    Eigen::RowVectorXd out(eta.size() + 1);
    out.tail(eta.size()) = e / denom;
    out[0] = 1.0 - out.tail(eta.size()).sum();
    return out;
}

}  // namespace

MlrModerate mlr_moderate(const PredictionMatrix& preds, const IndicatorMatrix& ind, const WeightVector& w, int df,
                         double rank_tolerance)
{
    const auto rows = analysis_rows(preds, ind, w);
    const int K = preds.n_states();
    const Eigen::MatrixXd lp = rows_of(log_ratios(preds), rows);
    const auto n = static_cast<Eigen::Index>(rows.size());

    Eigen::MatrixXd design(n, 1 + (K - 1) * df);
    design.col(0).setOnes();
    for (int h = 0; h < K - 1; ++h) {
        std::vector<double> v(lp.col(h).data(), lp.col(h).data() + n);
        design.middleCols(1 + h * df, df) = natural_spline_basis(v, df).basis;
    }
    MlrModerate out;
    out.kept_columns = independent_columns(design, rank_tolerance);
    Eigen::MatrixXd reduced(n, static_cast<Eigen::Index>(out.kept_columns.size()));
    for (std::size_t c = 0; c < out.kept_columns.size(); ++c)
        reduced.col(static_cast<Eigen::Index>(c)) = design.col(out.kept_columns[c]);

    const std::vector<Eigen::MatrixXd> designs(static_cast<std::size_t>(K - 1), reduced);
    const auto cats = categories_at(ind, rows);
    const auto fit = weighted_multinomial(designs, cats, weights_at(w, rows));
    out.ridge_used = fit.ridge_used;
    out.rows = rows;
    out.observed = fit.fitted;
    out.observed.col(0) = Eigen::VectorXd::Ones(n) - fit.fitted.rightCols(K - 1).rowwise().sum();

    out.states.resize(static_cast<std::size_t>(K));
    for (StateId k = 1; k <= K; ++k) {
        auto& res = out.states[static_cast<std::size_t>(k - 1)];
        res.method = Method::MLR;
        res.state = k;
        res.horizon = preds.horizon;
        res.ridge_used = fit.ridge_used;
        res.points.reserve(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i)
            res.points.push_back(
                {preds.probs(static_cast<Eigen::Index>(rows[i]), k - 1), out.observed(static_cast<Eigen::Index>(i), k - 1)});
        sort_points(res.points);
    }
    return out;
}

Eigen::VectorXd mlr_mean(const PredictionMatrix& preds, const IndicatorMatrix& ind, const WeightVector& w)
{
    const auto rows = analysis_rows(preds, ind, w);
    const int K = preds.n_states();
    const Eigen::MatrixXd lp_all = log_ratios(preds);
    const Eigen::MatrixXd lp = rows_of(lp_all, rows);
    const auto n = static_cast<Eigen::Index>(rows.size());
    const std::vector<Eigen::MatrixXd> designs(static_cast<std::size_t>(K - 1), Eigen::MatrixXd::Ones(n, 1));
    std::vector<Eigen::VectorXd> offsets;
    for (int h = 0; h < K - 1; ++h)
        offsets.push_back(lp.col(h));
    const auto fit = weighted_multinomial(designs, categories_at(ind, rows), weights_at(w, rows), offsets);

    Eigen::RowVectorXd alpha(K - 1);
    for (int h = 0; h < K - 1; ++h)
        alpha[h] = fit.coef[static_cast<std::size_t>(h)][0];
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(K);
    for (Eigen::Index i = 0; i < lp_all.rows(); ++i)
        sum += (softmax_with_reference(alpha + lp_all.row(i)) - preds.probs.row(i)).transpose();
    return sum / static_cast<double>(lp_all.rows());
}

std::vector<WeakCalibration> mlr_weak(const PredictionMatrix& preds, const IndicatorMatrix& ind, const WeightVector& w)
{
    const auto rows = analysis_rows(preds, ind, w);
    const int K = preds.n_states();
    const Eigen::MatrixXd lp = rows_of(log_ratios(preds), rows);
    const auto n = static_cast<Eigen::Index>(rows.size());
    std::vector<Eigen::MatrixXd> designs;
    for (int h = 0; h < K - 1; ++h) {
        Eigen::MatrixXd X(n, 2);
        X.col(0).setOnes();
        X.col(1) = lp.col(h);
        designs.push_back(std::move(X));
    }
    const auto fit = weighted_multinomial(designs, categories_at(ind, rows), weights_at(w, rows));
    std::vector<WeakCalibration> out;
    for (const auto& c : fit.coef)
        out.push_back({c[0], c[1]});
    return out;
}

// Orchestration ----------------------------------------------------------------------------

WeightVector make_weights(const Cohort& cohort, double t, const CalibrationOptions& options)
{
    if (options.fixed_weights)
        return *options.fixed_weights;
    switch (options.weights) {
    case WeightScheme::Estimated: return compute_ipcw(cohort, fit_censoring_model(cohort), t, options.cap);
    case WeightScheme::Misspecified: return misspecified_weights(cohort, t, options.cap);
    case WeightScheme::True:
        if (!options.truth_config)
            throw Error(ErrorCode::InvalidArgument, "true weights need the generating configuration");
        return true_weights(cohort, *options.truth_config, t, options.cap);
    case WeightScheme::None: return unit_weights(cohort, t);
    }
    throw Error(ErrorCode::InvalidArgument, "unknown weight scheme");
}

namespace {

void check_alignment(const Cohort& cohort, const PredictionMatrix& preds)
{
    if (preds.rows() != cohort.size())
        throw Error(ErrorCode::DimensionMismatch, "predictions and cohort differ in size");
    if (preds.n_states() != cohort.n_states())
        throw Error(ErrorCode::DimensionMismatch, "predictions and structure differ in state count");
    for (std::size_t i = 0; i < cohort.size(); ++i)
        if (preds.ids[i] != cohort[i].id)
            throw Error(ErrorCode::DimensionMismatch, "prediction rows are not aligned with the cohort");
}

double aj_mean_from_points(const std::vector<CalPoint>& points, std::size_t n)
{
    double observed = 0.0, predicted = 0.0;
    for (std::size_t g = 0; g < points.size(); ++g) {
        const std::size_t lo = n * g / points.size();
        const std::size_t hi = n * (g + 1) / points.size();
        const double w = static_cast<double>(hi - lo) / static_cast<double>(n);
        observed += w * points[g].observed;
        predicted += w * points[g].predicted;
    }
    return observed - predicted;
}

}  // namespace

std::vector<CalibrationResult> calibrate(Method method, const Cohort& cohort, const PredictionMatrix& preds,
                                         const CalibrationOptions& options)
{
    check_alignment(cohort, preds);
    const int K = preds.n_states();
    const double t = preds.horizon;
    std::vector<CalibrationResult> out;
    switch (method) {
    case Method::AJ:
        for (StateId k = 1; k <= K; ++k) {
            CalibrationResult res;
            res.method = Method::AJ;
            res.state = k;
            res.horizon = t;
            res.points = aj_moderate_points(cohort, preds, k, options.groups);
            res.mean_calibration = aj_mean_from_points(res.points, preds.rows());
            out.push_back(std::move(res));
        }
        break;
    case Method::PV: {
        const auto pv = pseudo_values(cohort, preds, options.groups);
        for (StateId k = 1; k <= K; ++k)
            out.push_back(pv_moderate(pv, preds, k, options.span));
        break;
    }
    case Method::BLR: {
        const auto w = make_weights(cohort, t, options);
        const auto ind = indicator_matrix(cohort, t);
        for (StateId k = 1; k <= K; ++k) {
            auto res = blr_moderate(preds, ind, w, k, options.span);
            res.mean_calibration = blr_mean(preds, ind, w, k);
            res.weak = blr_weak(preds, ind, w, k);
            out.push_back(std::move(res));
        }
        break;
    }
    case Method::MLR: {
        const auto w = make_weights(cohort, t, options);
        const auto ind = indicator_matrix(cohort, t);
        auto moderate = mlr_moderate(preds, ind, w, options.df, options.rank_tolerance);
        const auto mean = mlr_mean(preds, ind, w);
        const auto weak = mlr_weak(preds, ind, w);
        for (StateId k = 1; k <= K; ++k) {
            auto res = std::move(moderate.states[static_cast<std::size_t>(k - 1)]);
            res.mean_calibration = mean[k - 1];
            if (k > 1)
                res.weak = weak[static_cast<std::size_t>(k - 2)];
            out.push_back(std::move(res));
        }
        break;
    }
    }
    return out;
}

Eigen::VectorXd mean_calibration(Method method, const Cohort& cohort, const PredictionMatrix& preds,
                                 const CalibrationOptions& options)
{
    check_alignment(cohort, preds);
    const int K = preds.n_states();
    const double t = preds.horizon;
    Eigen::VectorXd out(K);
    switch (method) {
    case Method::AJ:
        for (StateId k = 1; k <= K; ++k)
            out[k - 1] = aj_mean_calibration(cohort, preds, k, options.groups);
        break;
    case Method::PV: {
        const auto pv = pseudo_values(cohort, preds, options.groups);
        for (StateId k = 1; k <= K; ++k)
            out[k - 1] = pv_mean(pv, preds, k);
        break;
    }
    case Method::BLR: {
        const auto w = make_weights(cohort, t, options);
        const auto ind = indicator_matrix(cohort, t);
        for (StateId k = 1; k <= K; ++k)
            out[k - 1] = blr_mean(preds, ind, w, k);
        break;
    }
    case Method::MLR: {
        const auto w = make_weights(cohort, t, options);
        out = mlr_mean(preds, indicator_matrix(cohort, t), w);
        break;
    }
    }
    return out;
}

BootstrapResult bootstrap_se(const MeanStatistic& statistic, const Cohort& cohort, const PredictionMatrix& preds,
                             int replicates, std::uint64_t seed)
{
    if (replicates < 50)
        throw Error(ErrorCode::InvalidArgument, "at least 50 bootstrap replicates are required");
    if (cohort.empty())
        throw Error(ErrorCode::EmptyCohort, "no subjects");
    const std::size_t n = cohort.size();
    const auto B = static_cast<std::size_t>(replicates);
    std::vector<std::optional<Eigen::VectorXd>> stats(B);
    parallel_for(B, [&](std::size_t b) {
        Rng rng = stream_rng(seed, b, kBootstrapSalt);
        std::vector<std::size_t> rows(n);
        for (auto& r : rows) {
            const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max()
                                        - std::numeric_limits<std::uint64_t>::max() % n;
            std::uint64_t v;
            do
                v = rng();
            while (v >= limit);
            r = static_cast<std::size_t>(v % n);
        }
        try {
            stats[b] = statistic(cohort.subset(rows, true), preds.subset(rows, true));
        }
        catch (const Error&) {
            stats[b].reset();
        }
    });

    BootstrapResult out;
    out.replicates = replicates;
    std::vector<Eigen::VectorXd> ok;
    for (auto& s : stats) {
        if (s)
            ok.push_back(*s);
        else
            ++out.failures;
    }
    if (static_cast<double>(ok.size()) < 0.9 * replicates || ok.size() < 2)
        throw Error(ErrorCode::BootstrapUnstable,
                    std::to_string(out.failures) + " of " + std::to_string(replicates) + " replicates failed");
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(ok.front().size());
    for (const auto& s : ok)
        mean += s;
    mean /= static_cast<double>(ok.size());
    Eigen::VectorXd ss = Eigen::VectorXd::Zero(mean.size());
    for (const auto& s : ok)
        ss += (s - mean).cwiseAbs2();
    out.se = (ss / static_cast<double>(ok.size() - 1)).cwiseSqrt();
    return out;
}

}  // namespace mscal
