#pragma once

// Simulation studies: one large validation cohort with calibration curves and
// mean-calibration bias, or repeated small samples from a superpopulation with
// the spread of the bias across iterations.

#include "mscal/calibration.hpp"
#include "mscal/dgm.hpp"
#include "mscal/truth.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mscal {

enum class PredictionVariant { Perfect, Over, Under };

std::string_view to_string(PredictionVariant v);
PredictionVariant parse_prediction_variant(std::string_view name);

/// Logit shift applied to the true probabilities: 0, +0.5 or -0.5.
double logit_shift(PredictionVariant v);

struct ExperimentSpec {
    DgmConfig config = DgmConfig::breast_cancer();
    Scenario scenario = Scenario::NIC;
    std::size_t n = 20000;
    std::size_t superpopulation = 100000;
    int iterations = 1;
    std::vector<Method> methods{Method::AJ, Method::PV, Method::BLR, Method::MLR};
    PredictionVariant prediction = PredictionVariant::Perfect;
    WeightScheme weights = WeightScheme::Estimated;
    int groups = 20;
    double span = 0.75;
    int df = 4;
    double cap = std::numeric_limits<double>::infinity();
    int bootstrap = 0; // large-sample SE replicates, 0 for none
    std::uint64_t seed = 1;

    void validate() const;
    /// Configuration with the scenario's censoring coefficients.
    DgmConfig scenario_config() const { return config.with_scenario(scenario); }
    CalibrationOptions calibration_options() const;
};

struct BiasCell {
    Method method = Method::AJ;
    StateId state = 1;
    double bias = std::numeric_limits<double>::quiet_NaN(); // mean over successful iterations
    std::optional<double> se;
    std::optional<double> median;
    std::optional<double> pct_2_5;
    std::optional<double> pct_97_5;
    int iterations = 0;
    int failures = 0;
    std::string error; // first failure message

    double failure_rate() const { return iterations ? static_cast<double>(failures) / iterations : 0.0; }
};

struct BiasReport {
    std::vector<BiasCell> cells; // method-major, states ascending

    const BiasCell& at(Method method, StateId state) const;
    /// `method,state,bias,se,median,pct_2_5,pct_97_5,iterations,failures,error`
    std::string to_csv() const;
};

struct CurveTable {
    Method method = Method::AJ;
    StateId state = 1;
    std::vector<CalPoint> points;  // estimated curve, sorted by predicted
    std::vector<double> reference; // true curve at points[i].predicted
    std::size_t n_clipped = 0;

    /// `predicted,observed,reference`
    std::string to_csv() const;
};

struct LargeSampleResult {
    std::vector<CurveTable> curves; // only for methods that succeeded
    BiasReport report;
    PredictionMatrix predictions;
    Estimand estimand;
};

/// Simulate, compute truths, derive predictions, weight and calibrate with
/// every requested method. Method failures are recorded in the report.
LargeSampleResult run_large_sample(const ExperimentSpec& spec);

/// Mean calibration only, on `iterations` without-replacement samples of size
/// n from a superpopulation simulated once.
BiasReport run_small_sample(const ExperimentSpec& spec);

/// Largest |observed - reference| over points whose predicted value lies
/// between the lo_pct and hi_pct percentiles of all predicted values.
double compare_curves(std::span<const CalPoint> estimated, std::span<const double> reference, double lo_pct,
                      double hi_pct);
double compare_curves(const CurveTable& curve, double lo_pct = 5.0, double hi_pct = 95.0);

/// `percentile,predicted` for percentiles 0..100 of column `state`: a compact rug.
std::string density_csv(const PredictionMatrix& preds, StateId state);

/// Truths for subjects 1..n of simulate_cohort(config, n, seed). Covariates
/// depend only on (seed, subject), so results are cached per transition
/// model and seed and shared across scenarios and sample sizes.
PredictionMatrix cohort_truths(const DgmConfig& config, const Cohort& cohort, std::uint64_t seed);

}  // namespace mscal
