#pragma once

// Aalen-Johansen estimation of the state occupation probabilities out of
// state 1, its leave-one-out variant (for pseudo-values), and grouped
// mean/moderate calibration within strata of predicted risk.

#include "mscal/data.hpp"

#include <Eigen/Core>

#include <span>
#include <vector>

namespace mscal {

struct OccupationEstimate {
    double horizon = 0.0;
    Eigen::VectorXd probs;   // P(X(t) = k | X(0) = 1), k = 1..K
    int n_events = 0;        // distinct event times <= horizon
    int skipped_factors = 0; // event times with an empty risk set
};

/// Product integral prod_{s <= t} (I + dA(s)), first row. Transitions tied
/// at s share one factor; censorings at s leave the risk set after events at s.
OccupationEstimate aalen_johansen(const Cohort& cohort, double t);

/// Estimate restricted to the subjects at `members`.
OccupationEstimate aalen_johansen(const Cohort& cohort, std::span<const std::size_t> members, double t);

/// Row r is the estimate with members[r] removed. Uses risk-set downdating of
/// one shared event table; bit-identical to recomputing on the reduced set.
Eigen::MatrixXd aj_leave_one_out(const Cohort& cohort, std::span<const std::size_t> members, double t);
Eigen::MatrixXd aj_leave_one_out(const Cohort& cohort, double t);

struct RiskGrouping {
    StateId state = 1;
    int n_groups = 1;
    std::vector<int> assignment;                   // per subject, 0-based group
    std::vector<std::vector<std::size_t>> members; // per group, ascending predicted risk
};

/// Sorts subjects by predicted risk of `state` (ties by id) and cuts the order
/// into `n_groups` blocks whose sizes differ by at most one.
RiskGrouping make_risk_groups(const PredictionMatrix& preds, StateId state, int n_groups);

/// Size-weighted average of within-group estimates for `state` minus the mean
/// prediction. n_groups = 1 gives the ungrouped contrast.
double aj_mean_calibration(const Cohort& cohort, const PredictionMatrix& preds, StateId state,
                           int n_groups);

/// One point per group: (mean prediction, within-group estimate).
std::vector<CalPoint> aj_moderate_points(const Cohort& cohort, const PredictionMatrix& preds,
                                         StateId state, int n_groups);

}  // namespace mscal
