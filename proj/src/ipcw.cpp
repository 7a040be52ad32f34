#include "mscal/ipcw.hpp"

#include "mscal/csv.hpp"
#include "mscal/error.hpp"
#include "mscal/parallel.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

namespace mscal {

double CoxModel::baseline_cumhaz(double t) const
{
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    if (it == times.begin())
        return 0.0;
    return cumhaz[static_cast<std::size_t>(it - times.begin()) - 1];
}

double CoxModel::cumulative_hazard(std::span<const double> z, double t) const
{
    if (static_cast<Eigen::Index>(z.size()) != coefficients.size())
        throw Error(ErrorCode::DimensionMismatch, "covariate vector has the wrong length");
    double lp = 0.0;
    for (Eigen::Index k = 0; k < coefficients.size(); ++k)
        lp += coefficients[k] * (z[static_cast<std::size_t>(k)] - covariate_means[k]);
    return baseline_cumhaz(t) * std::exp(lp);
}

Eigen::VectorXd CoxModel::standard_errors() const
{
    if (coefficients.size() == 0)
        return {};
    return information.inverse().diagonal().cwiseSqrt();
}

namespace {

struct PartialLikelihood {
    double loglik = 0.0;
    Eigen::VectorXd score;
    Eigen::MatrixXd info;
};

// Subjects sorted by descending time; risk sets accumulate while walking.
PartialLikelihood evaluate(const std::vector<std::size_t>& order, std::span<const double> times,
                           std::span<const int> status, const Eigen::MatrixXd& Zc, const Eigen::VectorXd& beta)
{
    const Eigen::Index p = Zc.cols();
    PartialLikelihood out;
    out.score = Eigen::VectorXd::Zero(p);
    out.info = Eigen::MatrixXd::Zero(p, p);
    double s0 = 0.0;
    Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);
    const std::size_t n = order.size();
    for (std::size_t a = 0; a < n;) {
        const double t = times[order[a]];
        std::size_t b = a;
        int d = 0;
        Eigen::VectorXd zsum = Eigen::VectorXd::Zero(p);
        double lpsum = 0.0;
        for (; b < n && times[order[b]] == t; ++b) {
            const auto i = static_cast<Eigen::Index>(order[b]);
            const double lp = Zc.row(i).dot(beta);
            const double r = std::exp(lp);
            s0 += r;
            s1 += r * Zc.row(i).transpose();
            s2.noalias() += r * Zc.row(i).transpose() * Zc.row(i);
            if (status[order[b]] == 1) {
                ++d;
                zsum += Zc.row(i).transpose();
                lpsum += lp;
            }
        }
        if (d > 0) {
            const Eigen::VectorXd mean = s1 / s0;
            out.loglik += lpsum - d * std::log(s0);
            out.score += zsum - d * mean;
            out.info += d * (s2 / s0 - mean * mean.transpose());
        }
        a = b;
    }
    return out;
}

}  // namespace

CoxModel fit_cox(std::span<const double> times, std::span<const int> status, const Eigen::MatrixXd& Z)
{
    const std::size_t n = times.size();
    const Eigen::Index p = Z.cols();
    if (status.size() != n || static_cast<std::size_t>(Z.rows()) != n)
        throw Error(ErrorCode::DimensionMismatch, "times, status and covariates differ in length");
    if (n == 0)
        throw Error(ErrorCode::EmptyCohort, "no observations");
    if (static_cast<Eigen::Index>(n) <= p)
        throw Error(ErrorCode::InvalidArgument, "need more observations than covariates");
    int n_events = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(times[i] >= 0.0) || std::isnan(times[i]))
            throw Error(ErrorCode::InvalidArgument, "times must be non-negative");
        if (status[i] != 0 && status[i] != 1)
            throw Error(ErrorCode::InvalidArgument, "status must be 0 or 1");
        n_events += status[i];
    }

    CoxModel model;
    model.covariate_means = p > 0 ? Eigen::VectorXd(Z.colwise().mean().transpose()) : Eigen::VectorXd();
    model.coefficients = Eigen::VectorXd::Zero(p);
    model.information = Eigen::MatrixXd::Zero(p, p);
    model.score = Eigen::VectorXd::Zero(p);
    if (n_events == 0)
        return model;

    Eigen::MatrixXd Zc = Z;
    for (Eigen::Index k = 0; k < p; ++k) {
        Zc.col(k).array() -= model.covariate_means[k];
        if (Zc.col(k).cwiseAbs().maxCoeff() == 0.0)
            throw Error(ErrorCode::FitSingular, "covariate " + std::to_string(k + 1) + " is constant");
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return times[a] > times[b]; });

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    if (p > 0) {
        auto pl = evaluate(order, times, status, Zc, beta);
        constexpr int kMaxIterations = 50;
        std::string trace;
        bool converged = pl.score.cwiseAbs().maxCoeff() < 1e-8;
        while (!converged && model.iterations < kMaxIterations) {
            ++model.iterations;
            Eigen::LDLT<Eigen::MatrixXd> ldlt(pl.info);
            const double scale = pl.info.diagonal().cwiseAbs().maxCoeff();
            if (ldlt.info() != Eigen::Success || !(scale > 0.0)
                || ldlt.vectorD().minCoeff() <= 1e-12 * scale)
                throw Error(ErrorCode::FitSingular, "information matrix is singular");
            Eigen::VectorXd step = ldlt.solve(pl.score);
            Eigen::VectorXd trial = beta + step;
            auto next = evaluate(order, times, status, Zc, trial);
            for (int h = 0; h < 30 && !(next.loglik >= pl.loglik - 1e-12 * std::abs(pl.loglik)); ++h) {
                step *= 0.5;
                trial = beta + step;
                next = evaluate(order, times, status, Zc, trial);
            }
            if (!std::isfinite(next.loglik))
                throw Error(ErrorCode::FitDiverged, "partial likelihood is not finite");
            beta = trial;
            pl = std::move(next);
            trace += " " + std::to_string(pl.score.cwiseAbs().maxCoeff());
            converged = pl.score.cwiseAbs().maxCoeff() < 1e-8;
            if (beta.cwiseAbs().maxCoeff() > 50.0)
                throw Error(ErrorCode::FitDiverged, "coefficients diverge (monotone likelihood); max|score| trace:" + trace);
        }
        if (!converged)
            throw Error(ErrorCode::FitDiverged, "no convergence in 50 iterations; max|score| trace:" + trace);
        model.information = pl.info;
        model.score = pl.score;
    }
    model.coefficients = beta;

    // Breslow increments in ascending time order.
    std::vector<double> risk(n);
    for (std::size_t i = 0; i < n; ++i)
        risk[i] = p > 0 ? std::exp(Zc.row(static_cast<Eigen::Index>(i)).dot(beta)) : 1.0;
    double s0 = 0.0;
    std::vector<std::pair<double, double>> increments; // (time, dLambda), descending
    for (std::size_t a = 0; a < n;) {
        const double t = times[order[a]];
        std::size_t b = a;
        int d = 0;
        for (; b < n && times[order[b]] == t; ++b) {
            s0 += risk[order[b]];
            d += status[order[b]];
        }
        if (d > 0)
            increments.push_back({t, d / s0});
        a = b;
    }
    std::reverse(increments.begin(), increments.end());
    double cum = 0.0;
    for (const auto& [t, dl] : increments) {
        cum += dl;
        model.times.push_back(t);
        model.cumhaz.push_back(cum);
    }
    return model;
}

double censoring_survival(const CoxModel& model, std::span<const double> z, double t)
{
    if (t < 0.0)
        throw Error(ErrorCode::InvalidArgument, "time must be non-negative");
    return std::exp(-model.cumulative_hazard(z, t));
}

CensoringData censoring_outcome(const Cohort& cohort)
{
    CensoringData d;
    d.time.reserve(cohort.size());
    d.status.reserve(cohort.size());
    const auto& structure = cohort.structure();
    for (const auto& s : cohort.subjects()) {
        if (structure.is_absorbing(s.last_state())) {
            d.time.push_back(s.last_entry_time());
            d.status.push_back(0);
        }
        else if (s.censor_time) {
            d.time.push_back(*s.censor_time);
            d.status.push_back(1);
        }
        else {
            d.time.push_back(s.last_entry_time());
            d.status.push_back(0);
        }
    }
    return d;
}

CoxModel fit_censoring_model(const Cohort& cohort)
{
    const auto d = censoring_outcome(cohort);
    return fit_cox(d.time, d.status, cohort.covariate_matrix());
}

namespace {

template <class Survival>
WeightVector make_weights(const Cohort& cohort, double t, double cap, Survival&& survival)
{
    if (!(cap >= 1.0))
        throw Error(ErrorCode::InvalidArgument, "weight cap must be at least 1");
    WeightVector out;
    out.cap = cap;
    out.weights.resize(cohort.size());
    std::vector<std::uint8_t> capped(cohort.size(), 0), zero(cohort.size(), 0);
    const auto& structure = cohort.structure();
    parallel_for(cohort.size(), [&](std::size_t i) {
        const auto& s = cohort[i];
        if (!state_at(s, t, structure))
            return;
        const double tau = weight_time(s, t, structure);
        const double sc = survival(s, tau);
        double w;
        if (!(sc > 0.0) || !std::isfinite(1.0 / sc)) {
            w = cap;
            zero[i] = 1;
        }
        else {
            w = std::max(1.0, 1.0 / sc);
            if (w > cap) {
                w = cap;
                capped[i] = 1;
            }
        }
        out.weights[i] = w;
    });
    for (std::size_t i = 0; i < cohort.size(); ++i) {
        out.n_capped += capped[i];
        out.n_zero_survival += zero[i];
    }
    return out;
}

}  // namespace

WeightVector compute_ipcw(const Cohort& cohort, const CoxModel& model, double t, double cap)
{
    return make_weights(cohort, t, cap, [&](const SubjectHistory& s, double tau) {
        if (model.coefficients.size() == 0)
            return std::exp(-model.baseline_cumhaz(tau));
        return censoring_survival(model, s.covariates, tau);
    });
}

WeightVector true_weights(const Cohort& cohort, const DgmConfig& config, double t, double cap)
{
    return make_weights(cohort, t, cap, [&](const SubjectHistory& s, double tau) {
        return std::exp(-config.censoring_rate(s.covariates) * tau);
    });
}

WeightVector misspecified_weights(const Cohort& cohort, double t, double cap)
{
    const auto d = censoring_outcome(cohort);
    const auto model = fit_cox(d.time, d.status, Eigen::MatrixXd(static_cast<Eigen::Index>(cohort.size()), 0));
    return compute_ipcw(cohort, model, t, cap);
}

WeightVector unit_weights(const Cohort& cohort, double t)
{
    return make_weights(cohort, t, std::numeric_limits<double>::infinity(),
                        [](const SubjectHistory&, double) { return 1.0; });
}

std::string write_weights(const Cohort& cohort, const WeightVector& w)
{
    if (w.size() != cohort.size())
        throw Error(ErrorCode::DimensionMismatch, "weights and cohort differ in size");
    std::string out = "id,weight\n";
    for (std::size_t i = 0; i < cohort.size(); ++i) {
        out += std::to_string(cohort[i].id);
        out += ',';
        if (w.weights[i])
            out += csv::format(*w.weights[i]);
        out += '\n';
    }
    return out;
}

WeightVector parse_weights(std::string_view text, const Cohort& cohort)
{
    const auto table = csv::parse(text);
    const int id_col = table.require_column("id");
    const int w_col = table.require_column("weight");
    std::unordered_map<SubjectId, std::size_t> pos;
    for (std::size_t i = 0; i < cohort.size(); ++i)
        pos[cohort[i].id] = i;
    WeightVector out;
    out.weights.resize(cohort.size());
    out.cap = std::numeric_limits<double>::infinity();
    std::vector<SubjectId> unknown;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const auto id = csv::to_int(row[static_cast<std::size_t>(id_col)], table.line_numbers[r]);
        const auto it = pos.find(id);
        if (it == pos.end()) {
            if (unknown.size() < 10)
                unknown.push_back(id);
            continue;
        }
        const auto field = row[static_cast<std::size_t>(w_col)];
        if (field.empty())
            continue;
        const double v = csv::to_double(field, table.line_numbers[r]);
        if (!(v >= 0.0))
            throw Error(ErrorCode::InvalidArgument, "negative weight on line " + std::to_string(table.line_numbers[r]));
        out.weights[it->second] = v;
    }
    if (!unknown.empty()) {
        std::string ids;
        for (auto id : unknown)
            ids += (ids.empty() ? "" : ", ") + std::to_string(id);
        throw Error(ErrorCode::DimensionMismatch, "weights for ids not in the cohort: " + ids);
    }
    return out;
}

}  // namespace mscal
