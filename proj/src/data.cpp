#include "mscal/data.hpp"

#include "mscal/csv.hpp"
#include "mscal/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace mscal {

// TransitionStructure ---------------------------------------------------------

TransitionStructure::TransitionStructure(int n_states, std::vector<Transition> transitions)
    : n_states_(n_states), transitions_(std::move(transitions))
{
    if (n_states_ < 2)
        throw Error(ErrorCode::InvalidStructure, "need at least 2 states");
    std::sort(transitions_.begin(), transitions_.end());
    if (std::adjacent_find(transitions_.begin(), transitions_.end()) != transitions_.end())
        throw Error(ErrorCode::InvalidStructure, "duplicate transition");

    targets_.assign(n_states_, {});
    std::vector<int> indegree(n_states_, 0);
    for (const auto& tr : transitions_) {
        if (tr.from < 1 || tr.from > n_states_ || tr.to < 1 || tr.to > n_states_ || tr.from == tr.to)
            throw Error(ErrorCode::InvalidStructure, "transition " + std::to_string(tr.from) + "->"
                                                         + std::to_string(tr.to) + " out of range");
        if (tr.to == 1)
            throw Error(ErrorCode::InvalidStructure, "state 1 must have no incoming transitions");
        targets_[tr.from - 1].push_back(tr.to);
        ++indegree[tr.to - 1];
    }

    // Kahn's algorithm; leftover states mean a cycle.
    std::queue<StateId> ready;
    for (StateId s = 1; s <= n_states_; ++s)
        if (indegree[s - 1] == 0)
            ready.push(s);
    while (!ready.empty()) {
        StateId s = ready.front();
        ready.pop();
        topo_.push_back(s);
        for (StateId t : targets_[s - 1])
            if (--indegree[t - 1] == 0)
                ready.push(t);
    }
    if (static_cast<int>(topo_.size()) != n_states_)
        throw Error(ErrorCode::InvalidStructure, "transition graph has a cycle");

    std::vector<char> seen(n_states_, 0);
    std::vector<StateId> stack{1};
    seen[0] = 1;
    while (!stack.empty()) {
        StateId s = stack.back();
        stack.pop_back();
        for (StateId t : targets_[s - 1])
            if (!seen[t - 1]) {
                seen[t - 1] = 1;
                stack.push_back(t);
            }
    }
    for (StateId s = 1; s <= n_states_; ++s)
        if (!seen[s - 1])
            throw Error(ErrorCode::InvalidStructure,
                        "state " + std::to_string(s) + " is not reachable from state 1");
}

int TransitionStructure::transition_index(StateId from, StateId to) const
{
    auto it = std::lower_bound(transitions_.begin(), transitions_.end(), Transition{from, to});
    if (it == transitions_.end() || *it != Transition{from, to})
        return -1;
    return static_cast<int>(it - transitions_.begin());
}

std::vector<StateId> TransitionStructure::absorbing() const
{
    std::vector<StateId> out;
    for (StateId s = 1; s <= n_states_; ++s)
        if (is_absorbing(s))
            out.push_back(s);
    return out;
}

TransitionStructure TransitionStructure::breast_cancer()
{
    return {5, {{1, 2}, {1, 3}, {1, 5}, {2, 4}, {2, 5}, {3, 4}, {3, 5}, {4, 5}}};
}

TransitionStructure TransitionStructure::six_state()
{
    return {6, {{1, 2}, {1, 3}, {1, 6}, {2, 4}, {2, 6}, {3, 5}, {3, 6}, {4, 6}, {5, 6}}};
}

TransitionStructure TransitionStructure::illness_death()
{
    return {3, {{1, 2}, {1, 3}, {2, 3}}};
}

TransitionStructure TransitionStructure::two_state()
{
    return {2, {{1, 2}}};
}

// Cohort ----------------------------------------------------------------------

namespace {

void validate_subject(const SubjectHistory& s, const TransitionStructure& structure, std::size_t n_cov)
{
    const auto id = std::to_string(s.id);
    if (s.path.empty() || s.path.front().state != 1 || s.path.front().entry_time != 0.0)
        throw Error(ErrorCode::MalformedHistory, "subject " + id + ": path must start with (1, 0)");
    for (std::size_t i = 0; i < s.path.size(); ++i) {
        const auto& e = s.path[i];
        if (e.state < 1 || e.state > structure.n_states())
            throw Error(ErrorCode::MalformedHistory,
                        "subject " + id + ": state " + std::to_string(e.state) + " out of range");
        if (!std::isfinite(e.entry_time))
            throw Error(ErrorCode::MalformedHistory, "subject " + id + ": non-finite entry time");
        if (i == 0)
            continue;
        const auto& prev = s.path[i - 1];
        if (!(e.entry_time > prev.entry_time))
            throw Error(ErrorCode::MalformedHistory, "subject " + id + ": entry times not increasing");
        if (!structure.allows(prev.state, e.state))
            throw Error(ErrorCode::IllegalTransition, "subject " + id + ": "
                                                          + std::to_string(prev.state) + "->"
                                                          + std::to_string(e.state));
    }
    if (s.censor_time && !(*s.censor_time >= s.last_entry_time()))
        throw Error(ErrorCode::MalformedHistory, "subject " + id + ": censored before last entry");
    if (s.covariates.size() != n_cov)
        throw Error(ErrorCode::CovariateConflict, "subject " + id + ": covariate count differs");
}

}  // namespace

Cohort::Cohort(TransitionStructure structure, std::vector<SubjectHistory> subjects)
    : structure_(std::move(structure)), subjects_(std::move(subjects))
{
    const std::size_t n_cov = subjects_.empty() ? 0 : subjects_.front().covariates.size();
    std::unordered_set<SubjectId> ids;
    ids.reserve(subjects_.size());
    for (auto& s : subjects_) {
        validate_subject(s, structure_, n_cov);
        if (!ids.insert(s.id).second)
            throw Error(ErrorCode::MalformedHistory, "duplicate id " + std::to_string(s.id));
        // Censoring after absorption carries no information.
        if (structure_.is_absorbing(s.last_state()))
            s.censor_time.reset();
    }
}

int Cohort::n_covariates() const noexcept
{
    return subjects_.empty() ? 0 : static_cast<int>(subjects_.front().covariates.size());
}

Cohort Cohort::subset(std::span<const std::size_t> rows, bool renumber) const
{
    std::vector<SubjectHistory> out;
    out.reserve(rows.size());
    SubjectId next = 1;
    for (auto r : rows) {
        out.push_back(subjects_.at(r));
        if (renumber)
            out.back().id = next++;
    }
    Cohort c;
    c.structure_ = structure_;
    c.subjects_ = std::move(out);
    if (!renumber) {
        std::unordered_set<SubjectId> ids;
        for (const auto& s : c.subjects_)
            if (!ids.insert(s.id).second)
                throw Error(ErrorCode::InvalidArgument, "subset repeats a subject without renumbering");
    }
    return c;
}

Eigen::MatrixXd Cohort::covariate_matrix() const
{
    const int p = n_covariates();
    Eigen::MatrixXd z(static_cast<Eigen::Index>(size()), p);
    for (std::size_t i = 0; i < size(); ++i)
        for (int j = 0; j < p; ++j)
            z(static_cast<Eigen::Index>(i), j) = subjects_[i].covariates[j];
    return z;
}

PredictionMatrix PredictionMatrix::subset(std::span<const std::size_t> rows, bool renumber) const
{
    PredictionMatrix out;
    out.horizon = horizon;
    out.row_normalized = row_normalized;
    out.clamped = clamped;
    out.probs.resize(static_cast<Eigen::Index>(rows.size()), probs.cols());
    out.ids.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.probs.row(static_cast<Eigen::Index>(i)) = probs.row(static_cast<Eigen::Index>(rows[i]));
        out.ids.push_back(renumber ? static_cast<SubjectId>(i + 1) : ids.at(rows[i]));
    }
    return out;
}

// Horizon state -----------------------------------------------------------------

HorizonState state_at(const SubjectHistory& subject, double t, const TransitionStructure& structure)
{
    const auto& path = subject.path;
    if (structure.is_absorbing(subject.last_state()) && subject.last_entry_time() <= t)
        return subject.last_state();
    if (subject.censor_time && *subject.censor_time < t)
        return std::nullopt;
    // Entry at exactly t counts as occupying the new state.
    auto it = std::upper_bound(path.begin(), path.end(), t,
                               [](double v, const PathEntry& e) { return v < e.entry_time; });
    return std::prev(it)->state;
}

double weight_time(const SubjectHistory& subject, double t, const TransitionStructure& structure)
{
    if (structure.is_absorbing(subject.last_state()) && subject.last_entry_time() <= t)
        return subject.last_entry_time();
    return t;
}

std::size_t IndicatorMatrix::n_included() const
{
    return static_cast<std::size_t>(std::count(included.begin(), included.end(), 1));
}

IndicatorMatrix indicator_matrix(const Cohort& cohort, double t)
{
    const auto n = static_cast<Eigen::Index>(cohort.size());
    IndicatorMatrix out;
    out.included.assign(cohort.size(), 0);
    out.category.assign(cohort.size(), 0);
    out.indicators = Eigen::MatrixXd::Zero(n, cohort.n_states());
    for (Eigen::Index i = 0; i < n; ++i) {
        auto h = state_at(cohort[static_cast<std::size_t>(i)], t, cohort.structure());
        if (!h)
            continue;
        out.included[static_cast<std::size_t>(i)] = 1;
        out.category[static_cast<std::size_t>(i)] = *h;
        out.indicators(i, *h - 1) = 1.0;
    }
    return out;
}

PredictionMatrix clamp_predictions(const PredictionMatrix& m, double eps)
{
    if (!(eps > 0.0 && eps <= 1e-3))
        throw Error(ErrorCode::InvalidArgument, "clamp eps must lie in (0, 1e-3]");
    PredictionMatrix out = m;
    bool moved = false;
    for (Eigen::Index i = 0; i < out.probs.rows(); ++i)
        for (Eigen::Index k = 0; k < out.probs.cols(); ++k) {
            double& v = out.probs(i, k);
            double c = std::clamp(v, eps, 1.0 - eps);
            if (c != v) {
                v = c;
                moved = true;
            }
        }
    out.clamped = m.clamped || moved;
    return out;
}

// Long-format CSV -----------------------------------------------------------------

namespace {

struct Interval {
    StateId from;
    StateId to;
    double tstart;
    double tstop;
    int status;
    std::size_t line;
};

struct RawSubject {
    SubjectId id;
    std::vector<Interval> rows;
    std::vector<double> covariates;
    std::size_t first_line;
};

std::vector<int> covariate_columns(const csv::Table& table)
{
    // z1..zp in numeric order
    std::map<int, int> by_index;
    for (std::size_t c = 0; c < table.header.size(); ++c) {
        const auto& h = table.header[c];
        if (h.size() >= 2 && h[0] == 'z' && std::all_of(h.begin() + 1, h.end(), ::isdigit))
            by_index[std::stoi(h.substr(1))] = static_cast<int>(c);
    }
    std::vector<int> cols;
    int expect = 1;
    for (auto [idx, col] : by_index) {
        if (idx != expect++)
            throw Error(ErrorCode::Io, "covariate columns must be z1..zp without gaps");
        cols.push_back(col);
    }
    return cols;
}

std::vector<RawSubject> read_raw(std::string_view text)
{
    auto table = csv::parse(text);
    const int c_id = table.require_column("id");
    const int c_from = table.require_column("from");
    const int c_to = table.require_column("to");
    const int c_start = table.require_column("tstart");
    const int c_stop = table.require_column("tstop");
    const int c_status = table.require_column("status");
    const auto cov_cols = covariate_columns(table);

    std::vector<RawSubject> subjects;
    std::unordered_map<SubjectId, std::size_t> index;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const auto line = table.line_numbers[r];
        Interval iv{static_cast<StateId>(csv::to_int(row[c_from], line)),
                    static_cast<StateId>(csv::to_int(row[c_to], line)),
                    csv::to_double(row[c_start], line),
                    csv::to_double(row[c_stop], line),
                    static_cast<int>(csv::to_int(row[c_status], line)),
                    line};
        if (iv.status != 0 && iv.status != 1)
            throw Error(ErrorCode::Io, "line " + std::to_string(line) + ": status must be 0 or 1");
        std::vector<double> z;
        for (int c : cov_cols)
            z.push_back(csv::to_double(row[c], line));

        const SubjectId id = csv::to_int(row[c_id], line);
        auto [it, inserted] = index.try_emplace(id, subjects.size());
        if (inserted)
            subjects.push_back(RawSubject{id, {}, z, line});
        auto& subj = subjects[it->second];
        if (subj.covariates != z)
            throw Error(ErrorCode::CovariateConflict, "subject " + std::to_string(id));
        subj.rows.push_back(iv);
    }
    return subjects;
}

SubjectHistory assemble(RawSubject raw, const TransitionStructure& structure)
{
    const auto id = std::to_string(raw.id);
    for (const auto& iv : raw.rows) {
        if (iv.tstop < iv.tstart || iv.tstart < 0.0)
            throw Error(ErrorCode::MalformedHistory, "subject " + id + " (line "
                                                         + std::to_string(iv.line) + ")");
        if (iv.from < 1 || iv.from > structure.n_states() || !structure.allows(iv.from, iv.to))
            throw Error(ErrorCode::IllegalTransition, "subject " + id + ": " + std::to_string(iv.from)
                                                          + "->" + std::to_string(iv.to));
    }
    std::stable_sort(raw.rows.begin(), raw.rows.end(), [](const Interval& a, const Interval& b) {
        return a.tstart < b.tstart;
    });

    SubjectHistory s;
    s.id = raw.id;
    s.covariates = std::move(raw.covariates);
    s.path.push_back({1, 0.0});
    bool closed = false;
    std::size_t i = 0;
    while (i < raw.rows.size()) {
        // All rows for one at-risk interval (mstate-style expansion).
        std::size_t j = i;
        const Interval* event = nullptr;
        while (j < raw.rows.size() && raw.rows[j].tstart == raw.rows[i].tstart) {
            const auto& iv = raw.rows[j];
            if (iv.from != raw.rows[i].from || iv.tstop != raw.rows[i].tstop)
                throw Error(ErrorCode::MalformedHistory, "subject " + id + ": overlapping intervals");
            if (iv.status == 1) {
                if (event)
                    throw Error(ErrorCode::MalformedHistory, "subject " + id + ": two events at once");
                event = &iv;
            }
            ++j;
        }
        const auto& iv = raw.rows[i];
        if (closed || iv.from != s.last_state() || iv.tstart != s.last_entry_time())
            throw Error(ErrorCode::MalformedHistory, "subject " + id + " (line "
                                                         + std::to_string(iv.line)
                                                         + "): interval does not continue the path");
        if (event) {
            if (!(event->tstop > event->tstart))
                throw Error(ErrorCode::MalformedHistory, "subject " + id + ": zero-length transition");
            s.path.push_back({event->to, event->tstop});
        }
        else {
            if (std::isfinite(iv.tstop))
                s.censor_time = iv.tstop;
            closed = true;
        }
        i = j;
    }
    if (!closed && !structure.is_absorbing(s.last_state()))
        s.censor_time = s.last_entry_time(); // follow-up ends on entry
    return s;
}

}  // namespace

Cohort parse_long_format(std::string_view text, const TransitionStructure& structure)
{
    auto raw = read_raw(text);
    std::vector<SubjectHistory> subjects;
    subjects.reserve(raw.size());
    for (auto& r : raw)
        subjects.push_back(assemble(std::move(r), structure));
    return Cohort(structure, std::move(subjects));
}

Cohort parse_long_format(std::string_view text)
{
    auto raw = read_raw(text);
    std::set<Transition> seen;
    int n_states = 2;
    for (const auto& r : raw)
        for (const auto& iv : r.rows) {
            if (iv.from < 1 || iv.to < 1)
                throw Error(ErrorCode::IllegalTransition, "subject " + std::to_string(r.id));
            seen.insert({iv.from, iv.to});
            n_states = std::max({n_states, iv.from, iv.to});
        }
    TransitionStructure structure(n_states, {seen.begin(), seen.end()});
    std::vector<SubjectHistory> subjects;
    subjects.reserve(raw.size());
    for (auto& r : raw)
        subjects.push_back(assemble(std::move(r), structure));
    return Cohort(structure, std::move(subjects));
}

std::string write_long_format(const Cohort& cohort)
{
    std::string out = "id,from,to,tstart,tstop,status";
    for (int j = 1; j <= cohort.n_covariates(); ++j)
        out += ",z" + std::to_string(j);
    out += '\n';
    const auto& structure = cohort.structure();
    for (const auto& s : cohort.subjects()) {
        std::string zs;
        for (double z : s.covariates)
            zs += "," + csv::format(z);
        auto row = [&](StateId from, StateId to, double a, double b, int status) {
            out += std::to_string(s.id) + "," + std::to_string(from) + "," + std::to_string(to) + ","
                   + csv::format(a) + "," + csv::format(b) + "," + std::to_string(status) + zs + "\n";
        };
        for (std::size_t i = 1; i < s.path.size(); ++i)
            row(s.path[i - 1].state, s.path[i].state, s.path[i - 1].entry_time, s.path[i].entry_time, 1);
        const StateId last = s.last_state();
        if (!structure.is_absorbing(last)) {
            const double stop = s.censor_time ? *s.censor_time : std::numeric_limits<double>::infinity();
            row(last, structure.targets(last).front(), s.last_entry_time(), stop, 0);
        }
    }
    return out;
}

std::string write_covariates(const Cohort& cohort)
{
    std::string out = "id";
    for (int j = 1; j <= cohort.n_covariates(); ++j)
        out += ",z" + std::to_string(j);
    out += '\n';
    for (const auto& s : cohort.subjects()) {
        out += std::to_string(s.id);
        for (double z : s.covariates)
            out += "," + csv::format(z);
        out += '\n';
    }
    return out;
}

std::vector<std::pair<SubjectId, std::vector<double>>> parse_covariates(std::string_view text)
{
    auto table = csv::parse(text);
    const int c_id = table.require_column("id");
    const auto cols = covariate_columns(table);
    std::vector<std::pair<SubjectId, std::vector<double>>> out;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto line = table.line_numbers[r];
        std::vector<double> z;
        for (int c : cols)
            z.push_back(csv::to_double(table.rows[r][c], line));
        out.emplace_back(csv::to_int(table.rows[r][c_id], line), std::move(z));
    }
    return out;
}

PredictionMatrix parse_predictions(std::string_view text, double horizon)
{
    auto table = csv::parse(text);
    const int c_id = table.require_column("id");
    std::vector<int> cols;
    for (int k = 1;; ++k) {
        int c = table.column("p" + std::to_string(k));
        if (c < 0)
            break;
        cols.push_back(c);
    }
    if (cols.size() < 2)
        throw Error(ErrorCode::Io, "prediction file needs columns p1..pK with K >= 2");
    PredictionMatrix m;
    m.horizon = horizon;
    m.probs.resize(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto line = table.line_numbers[r];
        m.ids.push_back(csv::to_int(table.rows[r][c_id], line));
        double sum = 0.0;
        for (std::size_t k = 0; k < cols.size(); ++k) {
            double v = csv::to_double(table.rows[r][cols[k]], line);
            if (!(v >= 0.0 && v <= 1.0))
                throw Error(ErrorCode::Io, "line " + std::to_string(line) + ": probability outside [0,1]");
            m.probs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = v;
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-6)
            m.row_normalized = false;
    }
    return m;
}

std::string write_predictions(const PredictionMatrix& m)
{
    std::string out = "id";
    for (int k = 1; k <= m.n_states(); ++k)
        out += ",p" + std::to_string(k);
    out += '\n';
    for (Eigen::Index i = 0; i < m.probs.rows(); ++i) {
        out += std::to_string(m.ids.at(static_cast<std::size_t>(i)));
        for (Eigen::Index k = 0; k < m.probs.cols(); ++k)
            out += "," + csv::format(m.probs(i, k));
        out += '\n';
    }
    return out;
}

PredictionMatrix align_predictions(const PredictionMatrix& preds, const Cohort& cohort)
{
    if (preds.n_states() != cohort.n_states())
        throw Error(ErrorCode::DimensionMismatch, "prediction file has " + std::to_string(preds.n_states())
                                                      + " states, cohort has "
                                                      + std::to_string(cohort.n_states()));
    std::unordered_map<SubjectId, std::size_t> row_of;
    for (std::size_t r = 0; r < preds.ids.size(); ++r)
        row_of.emplace(preds.ids[r], r);

    std::vector<SubjectId> offenders;
    std::vector<std::size_t> rows;
    std::unordered_set<SubjectId> cohort_ids;
    for (const auto& s : cohort.subjects()) {
        cohort_ids.insert(s.id);
        auto it = row_of.find(s.id);
        if (it == row_of.end())
            offenders.push_back(s.id);
        else
            rows.push_back(it->second);
    }
    for (auto id : preds.ids)
        if (!cohort_ids.count(id))
            offenders.push_back(id);
    if (!offenders.empty()) {
        std::string msg = std::to_string(offenders.size()) + " ids not matched between data and predictions:";
        for (std::size_t i = 0; i < std::min<std::size_t>(10, offenders.size()); ++i)
            msg += " " + std::to_string(offenders[i]);
        throw Error(ErrorCode::DimensionMismatch, msg);
    }
    return preds.subset(rows);
}

}  // namespace mscal
