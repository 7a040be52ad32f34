#include "manifest.hpp"
#include "svg.hpp"

#include "mscal/calibration.hpp"
#include "mscal/csv.hpp"
#include "mscal/error.hpp"
#include "mscal/experiment.hpp"
#include "mscal/parallel.hpp"
#include "mscal/truth.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#ifndef MSCAL_VERSION
#define MSCAL_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using namespace mscal;
using mscal::cli::RunManifest;

namespace {

DgmConfig load_config(RunManifest& manifest, const std::string& path)
{
    if (path.empty())
        return DgmConfig::breast_cancer();
    return DgmConfig::from_json(manifest.read_input(path));
}

std::string opt_field(double v)
{
    return std::isfinite(v) ? csv::format(v) : std::string();
}

nlohmann::ordered_json number_or_null(double v)
{
    return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

std::vector<double> column(const PredictionMatrix& preds, StateId state)
{
    const auto c = preds.probs.col(state - 1);
    return {c.data(), c.data() + preds.rows()};
}

// simulate -----------------------------------------------------------------------------------

struct SimulateArgs {
    std::string config;
    std::string scenario = "nic";
    std::size_t n = 0;
    std::uint64_t seed = 1;
    std::string out;
};

void run_simulate(const SimulateArgs& a)
{
    RunManifest manifest("simulate", a.out);
    const Scenario scenario = parse_scenario(a.scenario);
    const DgmConfig config = load_config(manifest, a.config).with_scenario(scenario);
    const Cohort cohort = simulate_cohort(config, a.n, a.seed);
    manifest.config()["scenario"] = std::string(to_string(scenario));
    manifest.config()["n"] = a.n;
    manifest.config()["dgm"] = nlohmann::ordered_json::parse(config.to_json());
    manifest.set_seed(a.seed);
    manifest.write_output("cohort.csv", write_long_format(cohort));
    manifest.write_output("covariates.csv", write_covariates(cohort));
    manifest.write_output("config.json", config.to_json());
    manifest.finish();
}

// truth --------------------------------------------------------------------------------------

struct TruthArgs {
    std::string config;
    std::string covariates;
    std::optional<double> horizon;
    std::string out;
};

void run_truth(const TruthArgs& a)
{
    RunManifest manifest("truth", a.out);
    const DgmConfig config = load_config(manifest, a.config);
    const auto rows = parse_covariates(manifest.read_input(a.covariates));
    const double t = a.horizon.value_or(config.horizon);
    Eigen::MatrixXd Z(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(config.n_covariates()));
    std::vector<SubjectId> ids;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].second.size() != config.n_covariates())
            throw Error(ErrorCode::DimensionMismatch, "subject " + std::to_string(rows[i].first) + " has " +
                                                          std::to_string(rows[i].second.size()) +
                                                          " covariates, the configuration expects " +
                                                          std::to_string(config.n_covariates()));
        ids.push_back(rows[i].first);
        for (std::size_t j = 0; j < rows[i].second.size(); ++j)
            Z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i].second[j];
    }
    manifest.config()["horizon"] = t;
    manifest.config()["dgm"] = nlohmann::ordered_json::parse(config.to_json());
    manifest.write_output("truth.csv", write_predictions(true_probabilities(config, ids, Z, t)));
    manifest.finish();
}

// calibrate ----------------------------------------------------------------------------------

struct CalibrateArgs {
    std::string data;
    std::string pred;
    std::string config;
    double horizon = 0.0;
    std::string method = "all";
    int groups = 20;
    double span = 0.75;
    int df = 4;
    std::string weights = "estimated";
    double cap = 10.0;
    int bootstrap = 0;
    std::uint64_t seed = 1;
    std::string out;
    bool svg = false;
};

int run_calibrate(const CalibrateArgs& a)
{
    RunManifest manifest("calibrate", a.out);
    const std::string data_text = manifest.read_input(a.data);
    const Cohort cohort = a.config.empty() ? parse_long_format(data_text)
                                           : parse_long_format(data_text, load_config(manifest, a.config).structure);
    const PredictionMatrix preds = align_predictions(parse_predictions(manifest.read_input(a.pred), a.horizon), cohort);
    if (preds.n_states() != cohort.n_states())
        throw Error(ErrorCode::DimensionMismatch, "prediction file has " + std::to_string(preds.n_states()) +
                                                      " states, the data have " + std::to_string(cohort.n_states()));

    std::vector<Method> methods;
    if (a.method == "all")
        methods.assign(std::begin(kAllMethods), std::end(kAllMethods));
    else
        methods.push_back(parse_method(a.method));

    CalibrationOptions options;
    options.groups = a.groups;
    options.span = a.span;
    options.df = a.df;
    options.cap = a.cap;
    bool weight_file = false;
    if (a.weights == "estimated")
        options.weights = WeightScheme::Estimated;
    else if (a.weights == "none")
        options.weights = WeightScheme::None;
    else {
        options.fixed_weights = parse_weights(manifest.read_input(a.weights), cohort);
        weight_file = true;
    }
    if (a.bootstrap > 0 && weight_file)
        throw Error(ErrorCode::InvalidArgument, "bootstrap standard errors need weights that can be refitted");

    const bool needs_weights = std::any_of(methods.begin(), methods.end(),
                                           [](Method m) { return m == Method::BLR || m == Method::MLR; });
    CalibrationOptions run_options = options;
    if (needs_weights) {
        run_options.fixed_weights = make_weights(cohort, a.horizon, options);
        manifest.write_output("weights.csv", write_weights(cohort, *run_options.fixed_weights));
    }

    manifest.config()["horizon"] = a.horizon;
    manifest.config()["method"] = a.method;
    manifest.config()["groups"] = a.groups;
    manifest.config()["span"] = a.span;
    manifest.config()["df"] = a.df;
    manifest.config()["weights"] = weight_file ? "file" : a.weights;
    manifest.config()["cap"] = number_or_null(a.cap);
    manifest.config()["bootstrap"] = a.bootstrap;
    if (a.bootstrap > 0)
        manifest.set_seed(a.seed);

    std::ostringstream summary;
    summary << "method,state,mean_calibration,se,intercept,slope\n";
    int status = 0;
    for (Method m : methods) {
        std::vector<CalibrationResult> results;
        std::optional<Eigen::VectorXd> se;
        try {
            results = calibrate(m, cohort, preds, run_options);
            if (a.bootstrap > 0) {
                const MeanStatistic stat = [m, options](const Cohort& c, const PredictionMatrix& p) {
                    return mean_calibration(m, c, p, options);
                };
                se = bootstrap_se(stat, cohort, preds, a.bootstrap, a.seed).se;
            }
        }
        catch (const Error& e) {
            if (methods.size() == 1)
                throw;
            std::cerr << "warning: " << to_string(m) << " failed: " << e.what() << '\n';
            status = std::max(status, exit_code_for(e.code()));
            continue;
        }
        std::ostringstream curve;
        curve << "state,predicted,observed\n";
        for (const auto& r : results) {
            summary << to_string(m) << ',' << r.state << ',' << csv::format(r.mean_calibration) << ','
                    << (se ? csv::format((*se)[r.state - 1]) : std::string()) << ','
                    << (r.weak ? opt_field(r.weak->intercept) : std::string()) << ','
                    << (r.weak ? opt_field(r.weak->slope) : std::string()) << '\n';
            for (const auto& p : r.points)
                curve << r.state << ',' << csv::format(p.predicted) << ',' << csv::format(p.observed) << '\n';
            if (a.svg) {
                cli::CalibrationPlot plot;
                plot.title = std::string(to_string(m)) + ", state " + std::to_string(r.state);
                plot.estimate = r.points;
                plot.scatter = m == Method::MLR;
                plot.rug = column(preds, r.state);
                manifest.write_output("curve_" + std::string(to_string(m)) + "_" + std::to_string(r.state) + ".svg",
                                      cli::render_svg(plot));
            }
        }
        manifest.write_output("curve_" + std::string(to_string(m)) + ".csv", curve.str());
    }
    manifest.write_output("summary.csv", summary.str());
    manifest.finish();
    return status;
}

// experiment ---------------------------------------------------------------------------------

struct ExperimentArgs {
    std::string config;
    std::string scenario = "nic";
    bool small = false;
    std::optional<std::size_t> n;
    std::optional<std::size_t> superpop;
    std::optional<int> iterations;
    std::vector<std::string> methods;
    std::string predictions = "perfect";
    std::string weights = "estimated";
    int groups = 20;
    double span = 0.75;
    int df = 4;
    double cap = std::numeric_limits<double>::infinity();
    int bootstrap = 0;
    std::uint64_t seed = 1;
    bool paper_scale = false;
    std::string out;
    bool svg = false;
};

void run_experiment(const ExperimentArgs& a)
{
    RunManifest manifest("experiment", a.out);
    ExperimentSpec spec;
    spec.config = load_config(manifest, a.config);
    spec.scenario = parse_scenario(a.scenario);
    spec.n = a.n.value_or(a.paper_scale ? 200000 : (a.small ? 3000 : 20000));
    spec.superpopulation = a.superpop.value_or(a.paper_scale ? 1000000 : 100000);
    spec.iterations = a.small ? a.iterations.value_or(a.paper_scale ? 1000 : 200) : 1;
    if (!a.small && a.iterations && *a.iterations != 1)
        throw Error(ErrorCode::InvalidArgument, "--iterations applies to --small runs");
    if (!a.methods.empty()) {
        spec.methods.clear();
        for (const auto& m : a.methods) {
            if (m == "all")
                spec.methods.assign(std::begin(kAllMethods), std::end(kAllMethods));
            else
                spec.methods.push_back(parse_method(m));
        }
    }
    else if (a.small)
        spec.methods = {Method::AJ, Method::BLR, Method::MLR};
    spec.prediction = parse_prediction_variant(a.predictions);
    spec.weights = parse_weight_scheme(a.weights);
    spec.groups = a.groups;
    spec.span = a.span;
    spec.df = a.df;
    spec.cap = a.cap;
    spec.bootstrap = a.bootstrap;
    spec.seed = a.seed;
    spec.validate();

    const bool paper = spec.n >= 200000 || (a.small && spec.superpopulation >= 1000000);
    if (a.paper_scale) {
        const double subjects = static_cast<double>(a.small ? spec.superpopulation : spec.n);
        const double minutes = subjects * 5e-4 / static_cast<double>(max_threads()) / 60.0;
        std::cerr << "warning: paper-scale run; the true probabilities alone take about " << std::ceil(minutes)
                  << " min on " << max_threads() << " thread(s)";
        if (a.small)
            std::cerr << ", followed by " << spec.iterations << " calibration iterations";
        std::cerr << '\n';
    }

    auto& cfg = manifest.config();
    cfg["scenario"] = std::string(to_string(spec.scenario));
    cfg["design"] = a.small ? "small-sample" : "large-sample";
    cfg["scale"] = paper ? "paper" : "desk";
    cfg["n"] = spec.n;
    if (a.small)
        cfg["superpopulation"] = spec.superpopulation;
    cfg["iterations"] = spec.iterations;
    nlohmann::ordered_json ms = nlohmann::ordered_json::array();
    for (Method m : spec.methods)
        ms.push_back(std::string(to_string(m)));
    cfg["methods"] = ms;
    cfg["predictions"] = std::string(to_string(spec.prediction));
    cfg["weights"] = std::string(to_string(spec.weights));
    cfg["groups"] = spec.groups;
    cfg["span"] = spec.span;
    cfg["df"] = spec.df;
    cfg["cap"] = number_or_null(spec.cap);
    cfg["bootstrap"] = spec.bootstrap;
    cfg["dgm"] = nlohmann::ordered_json::parse(spec.scenario_config().to_json());
    manifest.set_seed(spec.seed);

    if (a.small) {
        manifest.write_output("bias_report.csv", run_small_sample(spec).to_csv());
        manifest.finish();
        return;
    }
    const auto result = run_large_sample(spec);
    manifest.write_output("bias_report.csv", result.report.to_csv());
    for (const auto& c : result.curves) {
        const std::string stem = "curve_" + std::string(to_string(c.method)) + "_" + std::to_string(c.state);
        manifest.write_output(stem + ".csv", c.to_csv());
        if (a.svg) {
            cli::CalibrationPlot plot;
            plot.title = std::string(to_string(c.method)) + ", state " + std::to_string(c.state);
            plot.estimate = c.points;
            plot.scatter = c.method == Method::MLR;
            plot.reference = result.estimand.moderate[static_cast<std::size_t>(c.state - 1)];
            plot.rug = column(result.predictions, c.state);
            manifest.write_output(stem + ".svg", cli::render_svg(plot));
        }
    }
    for (StateId k = 1; k <= result.predictions.n_states(); ++k)
        manifest.write_output("density_" + std::to_string(k) + ".csv", density_csv(result.predictions, k));
    manifest.finish();
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Calibration of predicted multistate transition probabilities"};
    app.require_subcommand(1);
    app.set_version_flag("--version", MSCAL_VERSION);
    unsigned threads = 0;
    app.add_option("--threads", threads, "Worker threads (0: all cores)");

    const auto scenarios = CLI::IsMember({"nic", "wic", "sic"}, CLI::ignore_case);

    SimulateArgs sim;
    auto* c_sim = app.add_subcommand("simulate", "Simulate a cohort in long format");
    c_sim->add_option("--config", sim.config, "DGM configuration JSON (default: five-state structure)");
    c_sim->add_option("--scenario", sim.scenario, "Censoring scenario")->check(scenarios)->capture_default_str();
    c_sim->add_option("--n", sim.n, "Number of subjects")->required()->check(CLI::PositiveNumber);
    c_sim->add_option("--seed", sim.seed, "Random seed")->capture_default_str();
    c_sim->add_option("--out", sim.out, "Output directory")->required();

    TruthArgs tru;
    auto* c_tru = app.add_subcommand("truth", "True transition probabilities out of state 1");
    c_tru->add_option("--config", tru.config, "DGM configuration JSON (default: five-state structure)");
    c_tru->add_option("--covariates", tru.covariates, "CSV with id,z1..zp")->required()->check(CLI::ExistingFile);
    c_tru->add_option("--horizon", tru.horizon, "Horizon in days (default: from the configuration)");
    c_tru->add_option("--out", tru.out, "Output directory")->required();

    CalibrateArgs cal;
    auto* c_cal = app.add_subcommand("calibrate", "Assess calibration of predicted transition probabilities");
    c_cal->add_option("--data", cal.data, "Long-format cohort CSV")->required()->check(CLI::ExistingFile);
    c_cal->add_option("--pred", cal.pred, "Predictions CSV with id,p1..pK")->required()->check(CLI::ExistingFile);
    c_cal->add_option("--config", cal.config, "Configuration JSON whose structure overrides the inferred one");
    c_cal->add_option("--horizon", cal.horizon, "Prediction horizon")->required()->check(CLI::PositiveNumber);
    c_cal->add_option("--method", cal.method, "aj, pv, blr, mlr or all")
        ->check(CLI::IsMember({"aj", "pv", "blr", "mlr", "all"}, CLI::ignore_case))
        ->transform(CLI::IsMember({"aj", "pv", "blr", "mlr", "all"}, CLI::ignore_case))
        ->capture_default_str();
    c_cal->add_option("--groups", cal.groups, "Risk groups for aj and pv")->check(CLI::PositiveNumber)->capture_default_str();
    c_cal->add_option("--span", cal.span, "Loess span")->check(CLI::Range(1e-9, 1.0))->capture_default_str();
    c_cal->add_option("--df", cal.df, "Spline df per log-ratio for mlr")->check(CLI::Range(2, 20))->capture_default_str();
    c_cal->add_option("--weights", cal.weights, "estimated, none or a CSV with id,weight")->capture_default_str();
    c_cal->add_option("--cap", cal.cap, "Weight cap (inf for none)")->check(CLI::Range(1.0, std::numeric_limits<double>::infinity()))->capture_default_str();
    c_cal->add_option("--bootstrap", cal.bootstrap, "Replicates for mean-calibration SEs (0: none, else >= 50)")->capture_default_str();
    c_cal->add_option("--seed", cal.seed, "Bootstrap seed")->capture_default_str();
    c_cal->add_option("--out", cal.out, "Output directory")->required();
    c_cal->add_flag("--svg", cal.svg, "Also write one SVG plot per method and state");

    ExperimentArgs exp;
    auto* c_exp = app.add_subcommand("experiment", "Run a simulation study");
    c_exp->add_option("--config", exp.config, "DGM configuration JSON (default: five-state structure)");
    c_exp->add_option("--scenario", exp.scenario, "Censoring scenario")->check(scenarios)->capture_default_str();
    c_exp->add_flag("--small", exp.small, "Repeated small samples from a superpopulation");
    c_exp->add_option("--n", exp.n, "Validation sample size (default 20000, or 3000 with --small)");
    c_exp->add_option("--superpop", exp.superpop, "Superpopulation size for --small (default 100000)");
    c_exp->add_option("--iterations", exp.iterations, "Iterations for --small (default 200)")->check(CLI::PositiveNumber);
    c_exp->add_option("--methods", exp.methods, "Comma-separated methods or all")->delimiter(',');
    c_exp->add_option("--predictions", exp.predictions, "perfect, over or under")
        ->check(CLI::IsMember({"perfect", "over", "under"}, CLI::ignore_case))
        ->capture_default_str();
    c_exp->add_option("--weights", exp.weights, "estimated, misspecified, true or none")
        ->check(CLI::IsMember({"estimated", "misspecified", "true", "none"}, CLI::ignore_case))
        ->capture_default_str();
    c_exp->add_option("--groups", exp.groups, "Risk groups for aj and pv")->check(CLI::PositiveNumber)->capture_default_str();
    c_exp->add_option("--span", exp.span, "Loess span")->check(CLI::Range(1e-9, 1.0))->capture_default_str();
    c_exp->add_option("--df", exp.df, "Spline df per log-ratio for mlr")->check(CLI::Range(2, 20))->capture_default_str();
    c_exp->add_option("--cap", exp.cap, "Weight cap (default: none)")->check(CLI::Range(1.0, std::numeric_limits<double>::infinity()));
    c_exp->add_option("--bootstrap", exp.bootstrap, "Bootstrap replicates for large-sample SEs")->capture_default_str();
    c_exp->add_option("--seed", exp.seed, "Random seed")->capture_default_str();
    c_exp->add_flag("--paper-scale", exp.paper_scale, "Paper-scale defaults: n 200000, superpopulation 1000000, 1000 iterations");
    c_exp->add_option("--out", exp.out, "Output directory")->required();
    c_exp->add_flag("--svg", exp.svg, "Also write SVG plots");

    try {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    set_max_threads(threads);

    try {
        if (*c_sim)
            run_simulate(sim);
        else if (*c_tru)
            run_truth(tru);
        else if (*c_cal)
            return run_calibrate(cal);
        else if (*c_exp)
            run_experiment(exp);
        return 0;
    }
    catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e.code());
    }
    catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
