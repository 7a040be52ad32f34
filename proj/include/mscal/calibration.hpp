#pragma once

// Calibration of predicted transition probabilities out of state 1: grouped
// Aalen-Johansen (AJ), pseudo-values (PV), binary logistic/loess with IPC
// weights (BLR) and multinomial logistic with IPC weights (MLR).

#include "mscal/aalen_johansen.hpp"
#include "mscal/data.hpp"
#include "mscal/dgm.hpp"
#include "mscal/ipcw.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

namespace mscal {

enum class Method { AJ, PV, BLR, MLR };

std::string_view to_string(Method m);
/// Case-insensitive "aj", "pv", "blr", "mlr".
Method parse_method(std::string_view name);
inline constexpr Method kAllMethods[] = {Method::AJ, Method::PV, Method::BLR, Method::MLR};

struct WeakCalibration {
    double intercept = 0.0; // NaN for the no-intercept pseudo-value fit
    double slope = 1.0;
};

struct CalibrationResult {
    Method method = Method::AJ;
    StateId state = 1;
    double horizon = 0.0;
    std::vector<CalPoint> points; // sorted by predicted
    double mean_calibration = 0.0;
    std::optional<WeakCalibration> weak;
    std::size_t n_degenerate = 0; // loess neighbourhoods that fell back to a mean
    bool ridge_used = false;      // MLR information matrix needed a ridge
};

// Pseudo-values ------------------------------------------------------------------------

struct PseudoValueMatrix {
    Eigen::MatrixXd values; // n x K; column k was computed within the grouping of state k
    std::vector<RiskGrouping> groupings;
};

/// theta_k^i = m theta_k - (m - 1) theta_k^{-i} within groups of size m
/// formed on predicted risk of state k.
PseudoValueMatrix pseudo_values(const Cohort& cohort, const PredictionMatrix& preds, int n_groups);

CalibrationResult pv_moderate(const PseudoValueMatrix& pv, const PredictionMatrix& preds, StateId state,
                              double span = 0.75);
double pv_mean(const PseudoValueMatrix& pv, const PredictionMatrix& preds, StateId state);
/// No-intercept least-squares slope of pseudo-values on predictions.
double pv_weak(const PseudoValueMatrix& pv, const PredictionMatrix& preds, StateId state);

// Binary logistic / loess with IPC weights ----------------------------------------------------

/// Loess of I_k(t) on p_hat_k over subjects with a known state and a weight,
/// kernel weights multiplied by the IPC weights; fitted values clipped to [0, 1].
CalibrationResult blr_moderate(const PredictionMatrix& preds, const IndicatorMatrix& ind, const WeightVector& w,
                               StateId state, double span = 0.75);
/// Intercept-only weighted logistic model with offset logit(p_hat_k); returns
/// the mean over every row of preds of expit(alpha + logit p_hat) - p_hat.
double blr_mean(const PredictionMatrix& preds, const IndicatorMatrix& ind, const WeightVector& w, StateId state);
WeakCalibration blr_weak(const PredictionMatrix& preds, const IndicatorMatrix& ind, const WeightVector& w,
                         StateId state);

// Multinomial logistic with IPC weights ------------------------------------------------------

/// Log-ratios ln(p_hat_h / p_hat_1), h = 2..K (n x (K-1)).
Eigen::MatrixXd log_ratios(const PredictionMatrix& preds);

struct MlrModerate {
    std::vector<CalibrationResult> states; // one per state, points only
    Eigen::MatrixXd observed;              // included subjects x K, rows sum to 1
    std::vector<std::size_t> rows;         // prediction rows of `observed`
    std::vector<int> kept_columns;         // design columns surviving the rank check
    bool ridge_used = false;
};

/// Multinomial model with intercept and a natural spline (df per log-ratio) of
/// every log-ratio in every equation. Aliased design columns are dropped.
MlrModerate mlr_moderate(const PredictionMatrix& preds, const IndicatorMatrix& ind, const WeightVector& w,
                         int df = 4, double rank_tolerance = 1e-9);
/// Intercepts with offsets LP_k; per-state mean over every row of preds of
/// obs_k - p_hat_k, state 1 through the complement.
Eigen::VectorXd mlr_mean(const PredictionMatrix& preds, const IndicatorMatrix& ind, const WeightVector& w);
/// Free (alpha_k, beta_k) on LP_k for k = 2..K; entry k-2 belongs to state k.
std::vector<WeakCalibration> mlr_weak(const PredictionMatrix& preds, const IndicatorMatrix& ind,
                                      const WeightVector& w);

// Orchestration --------------------------------------------------------------------------

enum class WeightScheme { Estimated, Misspecified, True, None };

std::string_view to_string(WeightScheme s);
WeightScheme parse_weight_scheme(std::string_view name);

struct CalibrationOptions {
    int groups = 20;
    double span = 0.75;
    int df = 4;
    double rank_tolerance = 1e-9; // MLR design columns below this relative size are dropped
    WeightScheme weights = WeightScheme::Estimated;
    double cap = 10.0;
    std::optional<DgmConfig> truth_config; // required for WeightScheme::True
    std::optional<WeightVector> fixed_weights; // overrides `weights` when set
};

WeightVector make_weights(const Cohort& cohort, double t, const CalibrationOptions& options);

/// All states for one method. Predictions must be aligned with the cohort.
std::vector<CalibrationResult> calibrate(Method method, const Cohort& cohort, const PredictionMatrix& preds,
                                         const CalibrationOptions& options);

/// Mean calibration for every state (cheaper than calibrate: no curves).
Eigen::VectorXd mean_calibration(Method method, const Cohort& cohort, const PredictionMatrix& preds,
                                 const CalibrationOptions& options);

using MeanStatistic = std::function<Eigen::VectorXd(const Cohort&, const PredictionMatrix&)>;

struct BootstrapResult {
    Eigen::VectorXd se;
    int replicates = 0;
    int failures = 0;
};

/// Resamples subjects with replacement (ids renumbered), recomputing the
/// statistic, weights included, on every replicate.
BootstrapResult bootstrap_se(const MeanStatistic& statistic, const Cohort& cohort, const PredictionMatrix& preds,
                             int replicates, std::uint64_t seed);

}  // namespace mscal
