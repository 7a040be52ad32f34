#include "mscal/aalen_johansen.hpp"

#include "mscal/error.hpp"
#include "mscal/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mscal {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// One sojourn in a state: at risk for event times s with entry < s <= exit.
struct Stay {
    StateId state;
    double entry;
    double exit; // inf when follow-up never ends
    StateId to;  // 0 unless the stay ended with a transition
};

void append_stays(const SubjectHistory& s, std::vector<Stay>& out)
{
    for (std::size_t i = 0; i + 1 < s.path.size(); ++i)
        out.push_back({s.path[i].state, s.path[i].entry_time, s.path[i + 1].entry_time, s.path[i + 1].state});
    // The final state's stay ends at censoring (absorbing states never matter).
    out.push_back({s.last_state(), s.last_entry_time(), s.censor_time.value_or(kInf), 0});
}

struct Count {
    StateId from;
    StateId to;
    int events;
    int at_risk; // in `from` just before the event time
};

// Transitions <= horizon grouped by distinct time, sorted by (from, to).
struct EventTable {
    int n_states = 0;
    std::vector<double> times;
    std::vector<std::size_t> offsets; // times.size() + 1 entries into counts
    std::vector<Count> counts;
};

EventTable build_table(const Cohort& cohort, std::span<const std::size_t> members, double t)
{
    if (members.empty())
        throw Error(ErrorCode::EmptyCohort, "no subjects");
    const int K = cohort.n_states();

    std::vector<Stay> stays;
    stays.reserve(members.size() * 2);
    for (auto m : members)
        append_stays(cohort[m], stays);

    bool any_at_risk = false;
    for (const auto& st : stays)
        if (st.state == 1 && st.exit > 0.0)
            any_at_risk = true;
    if (!any_at_risk)
        throw Error(ErrorCode::NoRiskSet, "nobody at risk in state 1 after time 0");

    // Per-state sorted entry and exit times give Y_j(s) = #{entry < s} - #{exit < s}.
    std::vector<std::vector<double>> entries(K), exits(K);
    struct Ev {
        double time;
        StateId from, to;
    };
    std::vector<Ev> events;
    for (const auto& st : stays) {
        entries[st.state - 1].push_back(st.entry);
        exits[st.state - 1].push_back(st.exit);
        if (st.to != 0 && st.exit <= t)
            events.push_back({st.exit, st.state, st.to});
    }
    for (int j = 0; j < K; ++j) {
        std::sort(entries[j].begin(), entries[j].end());
        std::sort(exits[j].begin(), exits[j].end());
    }
    std::sort(events.begin(), events.end(), [](const Ev& a, const Ev& b) {
        if (a.time != b.time)
            return a.time < b.time;
        if (a.from != b.from)
            return a.from < b.from;
        return a.to < b.to;
    });

    auto at_risk = [&](StateId j, double s) {
        const auto& en = entries[j - 1];
        const auto& ex = exits[j - 1];
        auto a = std::lower_bound(en.begin(), en.end(), s) - en.begin();
        auto b = std::lower_bound(ex.begin(), ex.end(), s) - ex.begin();
        return static_cast<int>(a - b);
    };

    EventTable table;
    table.n_states = K;
    table.offsets.push_back(0);
    for (std::size_t i = 0; i < events.size();) {
        const double s = events[i].time;
        table.times.push_back(s);
        while (i < events.size() && events[i].time == s) {
            std::size_t j = i;
            while (j < events.size() && events[j].time == s && events[j].from == events[i].from
                   && events[j].to == events[i].to)
                ++j;
            table.counts.push_back(
                {events[i].from, events[i].to, static_cast<int>(j - i), at_risk(events[i].from, s)});
            i = j;
        }
        table.offsets.push_back(table.counts.size());
    }
    return table;
}

// Product-integral sweep. `removed` are the stays of a subject to drop from
// the risk sets and event counts (empty for the plain estimator).
OccupationEstimate sweep(const EventTable& table, std::span<const Stay> removed, double t)
{
    OccupationEstimate est;
    est.horizon = t;
    est.probs = Eigen::VectorXd::Zero(table.n_states);
    est.probs[0] = 1.0;
    std::vector<double> flow;
    for (std::size_t m = 0; m < table.times.size(); ++m) {
        const double s = table.times[m];
        const std::size_t lo = table.offsets[m], hi = table.offsets[m + 1];
        flow.assign(hi - lo, 0.0);
        bool any = false;
        for (std::size_t c = lo; c < hi; ++c) {
            const auto& e = table.counts[c];
            int d = e.events, y = e.at_risk;
            for (const auto& st : removed) {
                if (st.state != e.from)
                    continue;
                if (st.entry < s && s <= st.exit)
                    --y;
                if (st.to == e.to && st.exit == s)
                    --d;
            }
            if (d == 0)
                continue;
            if (y <= 0) {
                ++est.skipped_factors;
                continue;
            }
            flow[c - lo] = est.probs[e.from - 1] * static_cast<double>(d) / static_cast<double>(y);
            any = true;
        }
        if (!any)
            continue;
        ++est.n_events;
        for (std::size_t c = lo; c < hi; ++c) {
            if (flow[c - lo] == 0.0)
                continue;
            const auto& e = table.counts[c];
            est.probs[e.from - 1] -= flow[c - lo];
            est.probs[e.to - 1] += flow[c - lo];
        }
    }
    return est;
}

std::vector<std::size_t> all_rows(const Cohort& cohort)
{
    std::vector<std::size_t> rows(cohort.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return rows;
}

}  // namespace

OccupationEstimate aalen_johansen(const Cohort& cohort, std::span<const std::size_t> members, double t)
{
    return sweep(build_table(cohort, members, t), {}, t);
}

OccupationEstimate aalen_johansen(const Cohort& cohort, double t)
{
    auto rows = all_rows(cohort);
    return aalen_johansen(cohort, rows, t);
}

Eigen::MatrixXd aj_leave_one_out(const Cohort& cohort, std::span<const std::size_t> members, double t)
{
    if (members.size() < 2)
        throw Error(ErrorCode::InvalidArgument, "leave-one-out needs at least 2 subjects");
    const auto table = build_table(cohort, members, t);
    Eigen::MatrixXd out(static_cast<Eigen::Index>(members.size()), cohort.n_states());
    std::vector<Stay> removed;
    for (std::size_t r = 0; r < members.size(); ++r) {
        removed.clear();
        append_stays(cohort[members[r]], removed);
        out.row(static_cast<Eigen::Index>(r)) = sweep(table, removed, t).probs.transpose();
    }
    return out;
}

Eigen::MatrixXd aj_leave_one_out(const Cohort& cohort, double t)
{
    auto rows = all_rows(cohort);
    return aj_leave_one_out(cohort, rows, t);
}

RiskGrouping make_risk_groups(const PredictionMatrix& preds, StateId state, int n_groups)
{
    const std::size_t n = preds.rows();
    if (n_groups < 1 || static_cast<std::size_t>(n_groups) > n)
        throw Error(ErrorCode::InvalidArgument, "number of groups must lie in [1, n]");
    if (state < 1 || state > preds.n_states())
        throw Error(ErrorCode::InvalidArgument, "state out of range");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto& p = preds.probs;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double pa = p(static_cast<Eigen::Index>(a), state - 1);
        const double pb = p(static_cast<Eigen::Index>(b), state - 1);
        if (pa != pb)
            return pa < pb;
        return preds.ids[a] < preds.ids[b];
    });

    RiskGrouping g;
    g.state = state;
    g.n_groups = n_groups;
    g.assignment.assign(n, 0);
    g.members.resize(static_cast<std::size_t>(n_groups));
    for (int k = 0; k < n_groups; ++k) {
        const std::size_t lo = n * static_cast<std::size_t>(k) / static_cast<std::size_t>(n_groups);
        const std::size_t hi = n * static_cast<std::size_t>(k + 1) / static_cast<std::size_t>(n_groups);
        for (std::size_t r = lo; r < hi; ++r) {
            g.members[static_cast<std::size_t>(k)].push_back(order[r]);
            g.assignment[order[r]] = k;
        }
    }
    return g;
}

std::vector<CalPoint> aj_moderate_points(const Cohort& cohort, const PredictionMatrix& preds,
                                         StateId state, int n_groups)
{
    if (preds.rows() != cohort.size())
        throw Error(ErrorCode::DimensionMismatch, "predictions and cohort differ in size");
    const auto groups = make_risk_groups(preds, state, n_groups);
    const double t = preds.horizon;
    std::vector<CalPoint> points(groups.members.size());
    parallel_for(groups.members.size(), [&](std::size_t g) {
        const auto& members = groups.members[g];
        double mean_pred = 0.0;
        for (auto m : members)
            mean_pred += preds.probs(static_cast<Eigen::Index>(m), state - 1);
        mean_pred /= static_cast<double>(members.size());
        points[g] = {mean_pred, aalen_johansen(cohort, members, t).probs[state - 1]};
    });
    return points;
}

double aj_mean_calibration(const Cohort& cohort, const PredictionMatrix& preds, StateId state,
                           int n_groups)
{
    const auto points = aj_moderate_points(cohort, preds, state, n_groups);
    const auto n = static_cast<double>(preds.rows());
    // Group sizes follow the same floor rule as make_risk_groups.
    double observed = 0.0, predicted = 0.0;
    for (std::size_t g = 0; g < points.size(); ++g) {
        const std::size_t lo = preds.rows() * g / points.size();
        const std::size_t hi = preds.rows() * (g + 1) / points.size();
        const double w = static_cast<double>(hi - lo) / n;
        observed += w * points[g].observed;
        predicted += w * points[g].predicted;
    }
    return observed - predicted;
}

}  // namespace mscal
