#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "causalkit/dataset.hpp"
#include "causalkit/graph.hpp"
#include "causalkit/linalg.hpp"
#include "causalkit/rng.hpp"

namespace causalkit {

// The observational expression a do-query reduces to under the graph.
struct Estimand {
    std::string treatment;
    std::string outcome;
    std::vector<std::string> adjustment_set;  // sorted
    bool identifiable = false;
    bool zero_effect = false;  // no directed treatment -> outcome path
    std::string expression;
};

namespace detail {

inline std::string adjustment_text(const std::vector<std::string>& set) {
    if (set.empty()) return "{}";
    std::string out = "{";
    for (std::size_t i = 0; i < set.size(); ++i) out += (i ? ", " : "") + set[i];
    return out + "}";
}

}  // namespace detail

// Backdoor identification of the effect of `treatment` on `outcome`.
// Returns the smallest valid adjustment set (lexicographically smallest among
// equal sizes): a set of non-descendants of the treatment that d-separates
// treatment and outcome in the graph with the treatment's outgoing edges
// removed. With `minimize` off, the treatment's parents are used instead.
inline Estimand identify_backdoor(const Dag& g, const std::string& treatment,
                                  const std::string& outcome, bool minimize = true) {
    if (treatment == outcome)
        throw std::invalid_argument("identify_backdoor: treatment equals outcome");
    g.node_index(treatment);
    g.node_index(outcome);

    Estimand e;
    e.treatment = treatment;
    e.outcome = outcome;

    if (!g.has_directed_path(treatment, outcome)) {
        e.identifiable = true;
        e.zero_effect = true;
        e.expression = "no directed path from " + treatment + " to " + outcome +
                       "; the causal effect is 0";
        return e;
    }

    const Dag backdoor_graph = g.without_outgoing(treatment);
    auto valid = [&](const std::set<std::string>& z) {
        return d_separated(backdoor_graph, treatment, outcome, z);
    };

    const std::set<std::string> descendants = g.descendants(treatment);
    std::vector<std::string> candidates;
    for (const auto& name : g.nodes())
        if (name != treatment && name != outcome && !descendants.count(name))
            candidates.push_back(name);
    std::sort(candidates.begin(), candidates.end());

    std::optional<std::vector<std::string>> chosen;
    if (minimize) {
        // sizes small to large; combinations in lexicographic order, so the
        // first hit is the smallest set with the smallest names
        for (std::size_t size = 0; size <= candidates.size() && !chosen; ++size) {
            std::vector<std::size_t> pick(size);
            for (std::size_t i = 0; i < size; ++i) pick[i] = i;
            for (;;) {
                std::set<std::string> z;
                for (std::size_t i : pick) z.insert(candidates[i]);
                if (valid(z)) {
                    chosen = std::vector<std::string>(z.begin(), z.end());
                    break;
                }
                // next combination
                std::size_t i = size;
                while (i > 0 && pick[i - 1] == candidates.size() - size + (i - 1)) --i;
                if (i == 0) break;
                ++pick[i - 1];
                for (std::size_t j = i; j < size; ++j) pick[j] = pick[j - 1] + 1;
            }
        }
    }
    if (!chosen) {
        // parents always satisfy the criterion in a fully observed DAG
        std::vector<std::string> parents = g.parents(treatment);
        std::sort(parents.begin(), parents.end());
        std::set<std::string> z(parents.begin(), parents.end());
        if (valid(z)) chosen = std::move(parents);
    }
    if (!chosen) {
        e.identifiable = false;
        e.expression = "no valid backdoor adjustment set found";
        return e;
    }

    e.identifiable = true;
    e.adjustment_set = *chosen;
    e.expression = "E[" + outcome + "|do(" + treatment + ")] adjusted for " +
                   detail::adjustment_text(e.adjustment_set);
    return e;
}

enum class PValueMethod { TTest, Bootstrap };

struct AteOptions {
    PValueMethod p_method = PValueMethod::TTest;
    int bootstrap_replicates = 200;
    std::uint64_t seed = 0;
};

struct AteEstimate {
    double value = 0.0;      // slope * (a - b)
    double std_error = 0.0;  // scaled the same way
    double p_value = 1.0;
    double slope = 0.0;      // treatment coefficient of the adjusted regression
    double a = 0.0;
    double b = 0.0;
    Eigen::Index n = 0;
    std::vector<std::string> adjustment_set;
    bool zero_effect = false;
    bool rank_deficient = false;
};

namespace detail {

struct SlopeFit {
    double slope = 0.0;
    double std_error = 0.0;
    double p_value = 1.0;
    bool rank_deficient = false;
};

// Slope of `treatment` in the least-squares regression of `outcome` on an
// intercept, the treatment, and the adjustment columns, with the
// homoscedastic t-test p-value.
inline SlopeFit adjusted_slope(const Dataset& d, const std::string& treatment,
                               const std::string& outcome,
                               const std::vector<std::string>& adjustment) {
    const Eigen::Index n = d.n_rows();
    const auto p = static_cast<Eigen::Index>(adjustment.size()) + 2;
    if (n <= p)
        throw std::invalid_argument("estimate_ate: need more rows than regressors");
    Eigen::MatrixXd X(n, p);
    X.col(0).setOnes();
    X.col(1) = d.column(treatment);
    for (std::size_t i = 0; i < adjustment.size(); ++i)
        X.col(static_cast<Eigen::Index>(i) + 2) = d.column(adjustment[i]);
    const Eigen::VectorXd y = d.column(outcome);

    const OlsFit fit = ols(X, y);
    SlopeFit out;
    out.slope = fit.coefficients[1];
    out.rank_deficient = fit.rank_deficient;

    const double dof = static_cast<double>(n - p);
    const double sigma2 = fit.rss / dof;
    const Eigen::MatrixXd xtx = X.transpose() * X;
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(xtx);
    const Eigen::MatrixXd inv = cod.pseudoInverse();
    const double var_slope = std::max(sigma2 * inv(1, 1), 0.0);
    out.std_error = std::sqrt(var_slope);
    if (out.std_error > 0.0) {
        out.p_value = student_t_p_value(out.slope / out.std_error, dof);
    } else {
        out.p_value = out.slope == 0.0 ? 1.0 : 0.0;
    }
    return out;
}

}  // namespace detail

// Average treatment effect between treatment levels a and b via the
// adjusted linear regression: value = slope * (a - b).
inline AteEstimate estimate_ate(const Dataset& d, const Estimand& e, double a, double b,
                                const AteOptions& options = {}) {
    if (!e.identifiable)
        throw std::invalid_argument("estimate_ate: estimand is not identifiable");
    AteEstimate out;
    out.a = a;
    out.b = b;
    out.n = d.n_rows();
    out.adjustment_set = e.adjustment_set;
    if (e.zero_effect) {
        out.zero_effect = true;
        out.value = 0.0;
        out.p_value = 1.0;
        return out;
    }
    d.column_index(e.treatment);
    d.column_index(e.outcome);
    for (const auto& z : e.adjustment_set) d.column_index(z);

    const detail::SlopeFit fit =
        detail::adjusted_slope(d, e.treatment, e.outcome, e.adjustment_set);
    out.slope = fit.slope;
    out.rank_deficient = fit.rank_deficient;
    out.value = fit.slope * (a - b);
    out.std_error = fit.std_error * std::abs(a - b);
    out.p_value = fit.p_value;

    if (options.p_method == PValueMethod::Bootstrap) {
        const int reps = std::max(options.bootstrap_replicates, 1);
        int not_above = 0;
        int not_below = 0;
        for (int r = 0; r < reps; ++r) {
            const Dataset resampled =
                bootstrap_resample(d, child_seed(options.seed, static_cast<std::uint64_t>(r)));
            const double slope =
                detail::adjusted_slope(resampled, e.treatment, e.outcome, e.adjustment_set).slope;
            if (slope <= 0.0) ++not_above;
            if (slope >= 0.0) ++not_below;
        }
        const double lo = static_cast<double>(std::min(not_above, not_below)) / reps;
        out.p_value = std::min(1.0, 2.0 * lo);
    }
    return out;
}

// Unadjusted contrast: regression of the outcome on the treatment alone,
// evaluated at a and b. The quantity that confounding distorts.
inline double naive_conditional_effect(const Dataset& d, const std::string& treatment,
                                       const std::string& outcome, double a, double b) {
    return detail::adjusted_slope(d, treatment, outcome, {}).slope * (a - b);
}

enum class QueryClass { Confirmed, Refuted, Inconclusive };

inline const char* query_class_name(QueryClass c) {
    switch (c) {
        case QueryClass::Confirmed: return "confirmed";
        case QueryClass::Refuted: return "refuted";
        case QueryClass::Inconclusive: return "inconclusive";
    }
    return "?";
}

inline const char* query_class_mark(QueryClass c) {
    switch (c) {
        case QueryClass::Confirmed: return "✓";   // check mark
        case QueryClass::Refuted: return "×";     // multiplication sign
        case QueryClass::Inconclusive: return "○";  // circle
    }
    return "?";
}

// Classify one estimate: a structural zero (no directed path) refutes the
// query outright; otherwise p > 0.05 is inconclusive, effects within epsilon
// of zero are refuted, and the rest are confirmed.
inline QueryClass classify_query(const AteEstimate& ate, double epsilon = 1e-3) {
    if (epsilon < 0.0) throw std::invalid_argument("classify_query: negative epsilon");
    if (ate.zero_effect) return QueryClass::Refuted;
    if (ate.p_value > 0.05) return QueryClass::Inconclusive;
    if (std::abs(ate.value) <= epsilon) return QueryClass::Refuted;
    return QueryClass::Confirmed;
}

struct QueryRequest {
    std::string treatment;
    std::string outcome;
};

struct QueryResult {
    QueryRequest query;
    Estimand estimand;
    AteEstimate estimate;
    QueryClass classification = QueryClass::Inconclusive;
    bool ok = false;
    std::string error;
};

// Run one identify / estimate / classify row per (treatment, outcome) pair.
// By default the contrast spans the observed range of the treatment column.
// Per-row failures are recorded and the suite continues.
inline std::vector<QueryResult> run_query_suite(const Dataset& d, const Dag& g,
                                                const std::vector<QueryRequest>& suite,
                                                double epsilon = 1e-3,
                                                const AteOptions& options = {}) {
    std::vector<QueryResult> out;
    out.reserve(suite.size());
    for (const QueryRequest& q : suite) {
        QueryResult row;
        row.query = q;
        try {
            row.estimand = identify_backdoor(g, q.treatment, q.outcome);
            const Eigen::VectorXd t = d.column(q.treatment);
            d.column_index(q.outcome);
            const double a = t.maxCoeff();
            const double b = t.minCoeff();
            row.estimate = estimate_ate(d, row.estimand, a, b, options);
            row.classification = classify_query(row.estimate, epsilon);
            row.ok = true;
        } catch (const std::exception& ex) {
            row.error = ex.what();
        }
        out.push_back(std::move(row));
    }
    return out;
}

// Query suite file: one `treatment -> outcome` pair per line, `#` comments.
inline std::vector<QueryRequest> parse_query_suite(std::istream& in,
                                                   const std::string& origin = "<stream>") {
    std::vector<QueryRequest> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ss(line);
        std::string from, arrow, to, extra;
        if (!(ss >> from)) continue;
        if (!(ss >> arrow >> to) || arrow != "->" || (ss >> extra))
            throw std::runtime_error("query suite: " + origin + ": line " +
                                     std::to_string(line_no) + ": expected 'treatment -> outcome'");
        out.push_back({from, to});
    }
    return out;
}

inline std::vector<QueryRequest> load_query_suite(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("query suite: cannot open '" + path + "'");
    return parse_query_suite(in, path);
}

// Result table in the attack/feature layout: one row per query with the
// estimate, its uncertainty, the contrast endpoints, the adjustment set and
// the classification.
inline void write_query_table(const std::vector<QueryResult>& rows, std::ostream& out) {
    out << "attack,feature,ate,std_error,p_value,a,b,n,adjustment_set,classification,mark\n";
    for (const QueryResult& row : rows) {
        out << row.query.outcome << ',' << row.query.treatment << ',';
        if (!row.ok) {
            std::string message = row.error;
            std::replace(message.begin(), message.end(), ',', ';');
            out << ",,,,,,,error: " << message << ",\n";
            continue;
        }
        const AteEstimate& ate = row.estimate;
        out << format_double(ate.value) << ',' << format_double(ate.std_error) << ','
            << format_double(ate.p_value) << ',' << format_double(ate.a) << ','
            << format_double(ate.b) << ',' << ate.n << ',';
        for (std::size_t i = 0; i < ate.adjustment_set.size(); ++i)
            out << (i ? " " : "") << ate.adjustment_set[i];
        out << ',' << query_class_name(row.classification) << ','
            << query_class_mark(row.classification) << '\n';
    }
}

inline void save_query_table(const std::vector<QueryResult>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_query_table: cannot open '" + path + "'");
    write_query_table(rows, out);
}

}  // namespace causalkit
