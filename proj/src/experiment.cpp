#include "mscal/experiment.hpp"

#include "mscal/csv.hpp"
#include "mscal/error.hpp"
#include "mscal/parallel.hpp"
#include "mscal/smoothers.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <mutex>
#include <sstream>

namespace mscal {

namespace {

std::string lower(std::string_view s)
{
    std::string out(s);
    for (auto& c : out)
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

PredictionMatrix make_predictions(const PredictionMatrix& truths, PredictionVariant v)
{
    const double shift = logit_shift(v);
    return shift == 0.0 ? truths : miscalibrate(truths, shift);
}

std::string field(const std::optional<double>& v)
{
    return v ? csv::format(*v) : std::string();
}

std::string format_or_empty(double v)
{
    return std::isnan(v) ? std::string() : csv::format(v);
}

// Messages go into a CSV column.
std::string sanitize(std::string s)
{
    for (auto& c : s)
        if (c == ',' || c == '\n' || c == '\r')
            c = ';';
    return s;
}

struct TruthEntry {
    Eigen::MatrixXd Z;
    PredictionMatrix truths;
};

std::mutex g_truth_mutex;
std::map<std::string, TruthEntry> g_truth_cache;

std::string truth_key(const DgmConfig& config, std::uint64_t seed)
{
    DgmConfig c = config;
    std::fill(c.beta_cens.begin(), c.beta_cens.end(), 0.0);
    c.lambda_cens = std::numeric_limits<double>::infinity();
    return c.to_json() + "#" + std::to_string(seed);
}

}  // namespace

std::string_view to_string(PredictionVariant v)
{
    switch (v) {
    case PredictionVariant::Perfect: return "perfect";
    case PredictionVariant::Over: return "over";
    case PredictionVariant::Under: return "under";
    }
    return "?";
}

PredictionVariant parse_prediction_variant(std::string_view name)
{
    const auto n = lower(name);
    for (auto v : {PredictionVariant::Perfect, PredictionVariant::Over, PredictionVariant::Under})
        if (n == to_string(v))
            return v;
    throw Error(ErrorCode::InvalidArgument, "unknown prediction variant '" + std::string(name) + "'");
}

double logit_shift(PredictionVariant v)
{
    switch (v) {
    case PredictionVariant::Perfect: return 0.0;
    case PredictionVariant::Over: return 0.5;
    case PredictionVariant::Under: return -0.5;
    }
    return 0.0;
}

void ExperimentSpec::validate() const
{
    config.validate();
    if (n < 2)
        throw Error(ErrorCode::InvalidArgument, "n must be at least 2");
    if (iterations < 1)
        throw Error(ErrorCode::InvalidArgument, "iterations must be positive");
    if (methods.empty())
        throw Error(ErrorCode::InvalidArgument, "no method requested");
    if (groups < 1)
        throw Error(ErrorCode::InvalidArgument, "groups must be positive");
    if (!(span > 0.0 && span <= 1.0))
        throw Error(ErrorCode::InvalidArgument, "span must lie in (0, 1]");
    if (!(cap >= 1.0))
        throw Error(ErrorCode::InvalidArgument, "weight cap must be at least 1");
    if (bootstrap != 0 && bootstrap < 50)
        throw Error(ErrorCode::InvalidArgument, "bootstrap needs at least 50 replicates");
}

CalibrationOptions ExperimentSpec::calibration_options() const
{
    CalibrationOptions o;
    o.groups = groups;
    o.span = span;
    o.df = df;
    o.weights = weights;
    o.cap = cap;
    o.truth_config = scenario_config();
    return o;
}

const BiasCell& BiasReport::at(Method method, StateId state) const
{
    for (const auto& c : cells)
        if (c.method == method && c.state == state)
            return c;
    throw Error(ErrorCode::InvalidArgument,
                "no report cell for " + std::string(to_string(method)) + " state " + std::to_string(state));
}

std::string BiasReport::to_csv() const
{
    std::ostringstream out;
    out << "method,state,bias,se,median,pct_2_5,pct_97_5,iterations,failures,error\n";
    for (const auto& c : cells)
        out << to_string(c.method) << ',' << c.state << ',' << format_or_empty(c.bias) << ',' << field(c.se) << ','
            << field(c.median) << ',' << field(c.pct_2_5) << ',' << field(c.pct_97_5) << ',' << c.iterations << ','
            << c.failures << ',' << sanitize(c.error) << '\n';
    return out.str();
}

std::string CurveTable::to_csv() const
{
    std::ostringstream out;
    out << "predicted,observed,reference\n";
    for (std::size_t i = 0; i < points.size(); ++i)
        out << csv::format(points[i].predicted) << ',' << csv::format(points[i].observed) << ','
            << csv::format(reference[i]) << '\n';
    return out.str();
}

PredictionMatrix cohort_truths(const DgmConfig& config, const Cohort& cohort, std::uint64_t seed)
{
    const Eigen::MatrixXd Z = cohort.covariate_matrix();
    const double t = config.horizon;
    const auto n = Z.rows();
    std::vector<SubjectId> ids;
    for (const auto& s : cohort.subjects())
        ids.push_back(s.id);

    const std::string key = truth_key(config, seed);
    PredictionMatrix cached;
    {
        std::lock_guard lock(g_truth_mutex);
        auto it = g_truth_cache.find(key);
        if (it != g_truth_cache.end()) {
            const auto m = std::min(n, it->second.Z.rows());
            if (it->second.Z.topRows(m) == Z.topRows(m)) {
                cached = it->second.truths;
                cached.probs.conservativeResize(m, Eigen::NoChange);
                cached.ids.resize(static_cast<std::size_t>(m));
            }
        }
    }
    const auto have = static_cast<Eigen::Index>(cached.rows());
    PredictionMatrix out;
    out.horizon = t;
    out.ids = ids;
    out.probs.resize(n, config.structure.n_states());
    if (have > 0)
        out.probs.topRows(have) = cached.probs;
    if (have < n) {
        std::vector<SubjectId> rest_ids(ids.begin() + have, ids.end());
        const auto rest = true_probabilities(config, rest_ids, Z.bottomRows(n - have), t);
        out.probs.bottomRows(n - have) = rest.probs;
        std::lock_guard lock(g_truth_mutex);
        auto& entry = g_truth_cache[key];
        if (entry.Z.rows() < n) {
            entry.Z = Z;
            entry.truths = out;
        }
    }
    return out;
}

double compare_curves(std::span<const CalPoint> estimated, std::span<const double> reference, double lo_pct,
                      double hi_pct)
{
    if (!(lo_pct >= 0.0 && hi_pct <= 100.0 && lo_pct < hi_pct))
        throw Error(ErrorCode::InvalidArgument, "density band must satisfy 0 <= lo < hi <= 100");
    if (estimated.size() != reference.size())
        throw Error(ErrorCode::DimensionMismatch, "curve and reference differ in length");
    if (estimated.empty())
        throw Error(ErrorCode::EmptyBand, "empty curve");
    std::vector<double> x;
    x.reserve(estimated.size());
    for (const auto& p : estimated)
        x.push_back(p.predicted);
    std::sort(x.begin(), x.end());
    const double lo = quantile7(x, lo_pct / 100.0);
    const double hi = quantile7(x, hi_pct / 100.0);
    double worst = -1.0;
    for (std::size_t i = 0; i < estimated.size(); ++i)
        if (estimated[i].predicted >= lo && estimated[i].predicted <= hi)
            worst = std::max(worst, std::abs(estimated[i].observed - reference[i]));
    if (worst < 0.0)
        throw Error(ErrorCode::EmptyBand, "no curve point inside the density band");
    return worst;
}

double compare_curves(const CurveTable& curve, double lo_pct, double hi_pct)
{
    return compare_curves(curve.points, curve.reference, lo_pct, hi_pct);
}

std::string density_csv(const PredictionMatrix& preds, StateId state)
{
    if (state < 1 || state > preds.n_states())
        throw Error(ErrorCode::InvalidArgument, "state out of range");
    std::vector<double> x(preds.probs.col(state - 1).data(), preds.probs.col(state - 1).data() + preds.rows());
    std::sort(x.begin(), x.end());
    std::ostringstream out;
    out << "percentile,predicted\n";
    for (int p = 0; p <= 100; ++p)
        out << p << ',' << csv::format(quantile7(x, p / 100.0)) << '\n';
    return out.str();
}

LargeSampleResult run_large_sample(const ExperimentSpec& spec)
{
    spec.validate();
    if (spec.iterations != 1)
        throw Error(ErrorCode::InvalidArgument, "a large-sample run has exactly one iteration");
    const DgmConfig config = spec.scenario_config();
    const Cohort cohort = simulate_cohort(config, spec.n, spec.seed);
    const PredictionMatrix truths = cohort_truths(config, cohort, spec.seed);

    LargeSampleResult out;
    out.predictions = make_predictions(truths, spec.prediction);
    out.estimand = compute_estimand(out.predictions, truths);
    auto options = spec.calibration_options();
    options.fixed_weights = make_weights(cohort, config.horizon, options);

    const int K = config.structure.n_states();
    for (Method m : spec.methods) {
        std::vector<BiasCell> cells(static_cast<std::size_t>(K));
        for (StateId k = 1; k <= K; ++k) {
            cells[static_cast<std::size_t>(k - 1)].method = m;
            cells[static_cast<std::size_t>(k - 1)].state = k;
            cells[static_cast<std::size_t>(k - 1)].iterations = 1;
        }
        try {
            const auto results = calibrate(m, cohort, out.predictions, options);
            for (const auto& r : results) {
                auto& cell = cells[static_cast<std::size_t>(r.state - 1)];
                cell.bias = r.mean_calibration - out.estimand.mean[r.state - 1];
                CurveTable curve;
                curve.method = m;
                curve.state = r.state;
                curve.points = r.points;
                std::vector<double> q;
                q.reserve(r.points.size());
                for (const auto& p : r.points)
                    q.push_back(p.predicted);
                auto ref = true_curve_reference(out.estimand, q, r.state);
                curve.reference = std::move(ref.values);
                curve.n_clipped = ref.n_clipped;
                out.curves.push_back(std::move(curve));
            }
            if (spec.bootstrap > 0) {
                auto boot_options = spec.calibration_options();
                const MeanStatistic stat = [m, boot_options](const Cohort& c, const PredictionMatrix& p) {
                    return mean_calibration(m, c, p, boot_options);
                };
                const auto boot = bootstrap_se(stat, cohort, out.predictions, spec.bootstrap, spec.seed);
                for (StateId k = 1; k <= K; ++k)
                    cells[static_cast<std::size_t>(k - 1)].se = boot.se[k - 1];
            }
        }
        catch (const Error& e) {
            for (auto& c : cells) {
                if (std::isnan(c.bias))
                    c.failures = 1;
                if (c.error.empty())
                    c.error = e.what();
            }
        }
        for (auto& c : cells)
            out.report.cells.push_back(std::move(c));
    }
    return out;
}

BiasReport run_small_sample(const ExperimentSpec& spec)
{
    spec.validate();
    if (spec.iterations < 2)
        throw Error(ErrorCode::InvalidArgument, "a small-sample run needs at least two iterations");
    if (spec.superpopulation < spec.n)
        throw Error(ErrorCode::InvalidArgument, "superpopulation smaller than the sample size");
    const DgmConfig config = spec.scenario_config();
    const Cohort superpop = simulate_cohort(config, spec.superpopulation, spec.seed);
    const PredictionMatrix super_truths = cohort_truths(config, superpop, spec.seed);
    const auto options = spec.calibration_options();
    const int K = config.structure.n_states();
    const std::size_t M = spec.methods.size();
    const auto iters = static_cast<std::size_t>(spec.iterations);

    struct IterationResult {
        std::vector<std::optional<Eigen::VectorXd>> bias; // per method
        std::vector<std::string> error;
    };
    std::vector<IterationResult> results(iters);
    parallel_for(iters, [&](std::size_t it) {
        auto& res = results[it];
        res.bias.resize(M);
        res.error.resize(M);
        const auto rows = sample_rows(spec.superpopulation, spec.n, spec.seed, it);
        const Cohort sample = superpop.subset(rows);
        const PredictionMatrix truths = super_truths.subset(rows);
        const PredictionMatrix preds = make_predictions(truths, spec.prediction);
        const Estimand est = compute_estimand(preds, truths);
        for (std::size_t m = 0; m < M; ++m) {
            try {
                res.bias[m] = mean_calibration(spec.methods[m], sample, preds, options) - est.mean;
            }
            catch (const Error& e) {
                res.error[m] = e.what();
            }
        }
    });

    BiasReport report;
    for (std::size_t m = 0; m < M; ++m) {
        for (StateId k = 1; k <= K; ++k) {
            BiasCell cell;
            cell.method = spec.methods[m];
            cell.state = k;
            cell.iterations = spec.iterations;
            std::vector<double> values;
            for (const auto& r : results) {
                if (r.bias[m])
                    values.push_back((*r.bias[m])[k - 1]);
                else {
                    ++cell.failures;
                    if (cell.error.empty())
                        cell.error = r.error[m];
                }
            }
            if (!values.empty()) {
                double sum = 0.0;
                for (double v : values)
                    sum += v;
                cell.bias = sum / static_cast<double>(values.size());
                std::sort(values.begin(), values.end());
                cell.median = quantile7(values, 0.5);
                cell.pct_2_5 = quantile7(values, 0.025);
                cell.pct_97_5 = quantile7(values, 0.975);
            }
            report.cells.push_back(std::move(cell));
        }
    }
    return report;
}

}  // namespace mscal
