#pragma once

// Multistate cohort data model: transition structures, subject histories,
// prediction matrices, horizon-state resolution and long-format CSV I/O.
//
// States are 1-indexed throughout, time is in days.

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mscal {

using StateId = int;
using SubjectId = std::int64_t;

/// Seven years in days. ln(1/0.9) * 24267 ~= 2557, which is what makes the
/// baseline scales of the standard simulation structure exact.
inline constexpr double kSevenYears = 2557.0;

struct Transition {
    StateId from;
    StateId to;

    friend bool operator==(const Transition&, const Transition&) = default;
    friend auto operator<=>(const Transition&, const Transition&) = default;
};

/// Directed acyclic state graph. State 1 is the unique initial state.
class TransitionStructure {
public:
    TransitionStructure() = default;
    TransitionStructure(int n_states, std::vector<Transition> transitions);

    int n_states() const noexcept { return n_states_; }

    /// Transitions sorted by (from, to).
    const std::vector<Transition>& transitions() const noexcept { return transitions_; }

    /// Index of `from -> to` in transitions(), or -1.
    int transition_index(StateId from, StateId to) const;
    bool allows(StateId from, StateId to) const { return transition_index(from, to) >= 0; }

    /// Allowed targets out of `from`, ascending.
    const std::vector<StateId>& targets(StateId from) const { return targets_.at(from - 1); }

    bool is_absorbing(StateId s) const { return targets(s).empty(); }
    std::vector<StateId> absorbing() const;

    /// States ordered so every transition goes from an earlier to a later entry.
    const std::vector<StateId>& topological_order() const noexcept { return topo_; }

    friend bool operator==(const TransitionStructure& a, const TransitionStructure& b)
    {
        return a.n_states_ == b.n_states_ && a.transitions_ == b.transitions_;
    }

    /// 1->2, 1->3, 1->5, 2->4, 2->5, 3->4, 3->5, 4->5.
    static TransitionStructure breast_cancer();
    /// 1->2, 1->3, 1->6, 2->4, 2->6, 3->5, 3->6, 4->6, 5->6.
    static TransitionStructure six_state();
    /// 1->2, 1->3, 2->3.
    static TransitionStructure illness_death();
    /// 1->2.
    static TransitionStructure two_state();

private:
    int n_states_ = 0;
    std::vector<Transition> transitions_;
    std::vector<std::vector<StateId>> targets_;
    std::vector<StateId> topo_;
};

struct PathEntry {
    StateId state;
    double entry_time;

    friend bool operator==(const PathEntry&, const PathEntry&) = default;
};

struct SubjectHistory {
    SubjectId id = 0;
    std::vector<PathEntry> path;
    std::optional<double> censor_time;
    std::vector<double> covariates;

    StateId last_state() const { return path.back().state; }
    double last_entry_time() const { return path.back().entry_time; }

    friend bool operator==(const SubjectHistory&, const SubjectHistory&) = default;
};

/// Validated collection of subject histories sharing one structure.
class Cohort {
public:
    Cohort() = default;
    Cohort(TransitionStructure structure, std::vector<SubjectHistory> subjects);

    const TransitionStructure& structure() const noexcept { return structure_; }
    const std::vector<SubjectHistory>& subjects() const noexcept { return subjects_; }
    const SubjectHistory& operator[](std::size_t i) const { return subjects_[i]; }
    std::size_t size() const noexcept { return subjects_.size(); }
    bool empty() const noexcept { return subjects_.empty(); }
    int n_states() const noexcept { return structure_.n_states(); }
    int n_covariates() const noexcept;

    /// Subjects at the given positions, in that order. Positions may repeat
    /// only when `renumber` is true, in which case ids become 1..m.
    Cohort subset(std::span<const std::size_t> rows, bool renumber = false) const;

    /// n x p matrix of baseline covariates.
    Eigen::MatrixXd covariate_matrix() const;

    friend bool operator==(const Cohort& a, const Cohort& b)
    {
        return a.structure_ == b.structure_ && a.subjects_ == b.subjects_;
    }

private:
    TransitionStructure structure_;
    std::vector<SubjectHistory> subjects_;
};

/// Predicted transition probabilities out of state 1 at a fixed horizon,
/// one row per subject in cohort order.
struct PredictionMatrix {
    double horizon = kSevenYears;
    std::vector<SubjectId> ids;
    Eigen::MatrixXd probs;      // n x K
    bool row_normalized = true; // cleared by miscalibrate()
    bool clamped = false;       // set by clamp_predictions() when anything moved

    std::size_t rows() const noexcept { return static_cast<std::size_t>(probs.rows()); }
    int n_states() const noexcept { return static_cast<int>(probs.cols()); }

    PredictionMatrix subset(std::span<const std::size_t> rows, bool renumber = false) const;
};

/// One point of a calibration plot.
struct CalPoint {
    double predicted;
    double observed;

    friend bool operator==(const CalPoint&, const CalPoint&) = default;
};

/// State occupied at the horizon, if it is observable.
using HorizonState = std::optional<StateId>;

HorizonState state_at(const SubjectHistory& subject, double t, const TransitionStructure& structure);

/// Time at which the censoring probability for an IPC weight is evaluated:
/// the absorption time for subjects absorbed by t, otherwise t.
double weight_time(const SubjectHistory& subject, double t, const TransitionStructure& structure);

struct IndicatorMatrix {
    std::vector<std::uint8_t> included;
    Eigen::MatrixXd indicators; // n x K, 0/1
    std::vector<StateId> category; // occupied state, 0 when excluded

    std::size_t n_included() const;
};

IndicatorMatrix indicator_matrix(const Cohort& cohort, double t);

PredictionMatrix clamp_predictions(const PredictionMatrix& m, double eps = 1e-10);

// CSV ------------------------------------------------------------------------

/// Long format: `id,from,to,tstart,tstop,status,z1..zp`, one row per at-risk
/// interval. Rows sharing an interval (one per candidate target) are merged.
Cohort parse_long_format(std::string_view text, const TransitionStructure& structure);

/// Same, inferring the structure from the transitions that appear in the file.
Cohort parse_long_format(std::string_view text);

std::string write_long_format(const Cohort& cohort);

/// `id,z1..zp`.
std::string write_covariates(const Cohort& cohort);
std::vector<std::pair<SubjectId, std::vector<double>>> parse_covariates(std::string_view text);

/// `id,p1..pK`.
PredictionMatrix parse_predictions(std::string_view text, double horizon);
std::string write_predictions(const PredictionMatrix& m);

/// Reorders prediction rows to follow cohort order. Throws DimensionMismatch
/// listing up to ten offending ids when the id sets differ.
PredictionMatrix align_predictions(const PredictionMatrix& preds, const Cohort& cohort);

}  // namespace mscal
