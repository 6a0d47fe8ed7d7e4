#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "causalkit/dataset.hpp"
#include "causalkit/graph.hpp"
#include "causalkit/rng.hpp"

namespace causalkit {

constexpr double kBicVarianceFloor = 1e-12;

// Decomposable Gaussian BIC over one dataset. Column means and the population
// covariance are computed once; each local score is a small solve on
// covariance blocks, cached by (node, parent set).
class BicScorer {
public:
    explicit BicScorer(const Dataset& d) : columns_(d.columns()), n_(d.n_rows()) {
        const Eigen::MatrixXd& v = d.values();
        means_ = v.colwise().mean();
        const Eigen::MatrixXd centered = v.rowwise() - means_;
        covariance_ = centered.transpose() * centered / static_cast<double>(n_);
    }

    Eigen::Index n_rows() const { return n_; }
    const std::vector<std::string>& columns() const { return columns_; }

    // BIC contribution of one node given a parent set:
    //   -(N/2) (ln(2 pi sigma^2) + 1) - (k/2) ln N,  k = |parents| + 2
    // with sigma^2 the least-squares residual variance floored at 1e-12.
    double local_score(int node, std::vector<int> parents) const {
        std::sort(parents.begin(), parents.end());
        if (n_ <= static_cast<Eigen::Index>(parents.size()) + 2)
            throw std::invalid_argument("bic_node_score: need more rows than parents + 2");
        const CacheKey key{node, parents};
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;

        double sigma2 = covariance_(node, node);
        if (!parents.empty()) {
            const auto p = static_cast<Eigen::Index>(parents.size());
            Eigen::MatrixXd cpp(p, p);
            Eigen::VectorXd cpy(p);
            for (Eigen::Index i = 0; i < p; ++i) {
                cpy[i] = covariance_(parents[static_cast<std::size_t>(i)], node);
                for (Eigen::Index j = 0; j < p; ++j)
                    cpp(i, j) = covariance_(parents[static_cast<std::size_t>(i)],
                                            parents[static_cast<std::size_t>(j)]);
            }
            // pseudo-inverse via COD covers rank-deficient parent blocks
            Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(cpp);
            sigma2 -= cpy.dot(cod.solve(cpy));
        }
        sigma2 = std::max(sigma2, kBicVarianceFloor);

        const double n = static_cast<double>(n_);
        const double k = static_cast<double>(parents.size()) + 2.0;
        const double score = -(n / 2.0) * (std::log(2.0 * M_PI * sigma2) + 1.0) -
                             (k / 2.0) * std::log(n);
        cache_.emplace(key, score);
        return score;
    }

private:
    using CacheKey = std::pair<int, std::vector<int>>;

    std::vector<std::string> columns_;
    Eigen::Index n_;
    Eigen::RowVectorXd means_;
    Eigen::MatrixXd covariance_;
    mutable std::map<CacheKey, double> cache_;
};

inline double bic_node_score(const Dataset& d, const std::string& node,
                             const std::vector<std::string>& parents) {
    BicScorer scorer(d);
    std::vector<int> idx;
    idx.reserve(parents.size());
    for (const auto& p : parents) idx.push_back(d.column_index(p));
    return scorer.local_score(d.column_index(node), std::move(idx));
}

struct ScoreReport {
    double total = 0.0;
    std::map<std::string, double> per_node;
};

inline ScoreReport score_graph(const Dataset& d, const Dag& g) {
    BicScorer scorer(d);
    ScoreReport report;
    for (const auto& name : g.nodes()) {
        std::vector<int> parents;
        for (const auto& p : g.parents(name)) parents.push_back(d.column_index(p));
        const double s = scorer.local_score(d.column_index(name), std::move(parents));
        report.per_node[name] = s;
        report.total += s;
    }
    return report;
}

struct HillClimbOptions {
    // Extra randomized starts with best-of selection. Plain greedy search gets
    // stuck in misorientation optima often enough to spoil averaged-graph
    // recovery, so a couple of restarts are on by default.
    int restarts = 2;
    double min_improvement = 1e-9;
};

namespace detail {

// Mutable adjacency used inside the search; nodes are column indices.
struct SearchGraph {
    std::vector<std::set<int>> parents;
    std::vector<std::set<int>> children;

    explicit SearchGraph(std::size_t n) : parents(n), children(n) {}

    bool has_edge(int u, int v) const { return children[static_cast<std::size_t>(u)].count(v) > 0; }
    void add_edge(int u, int v) {
        children[static_cast<std::size_t>(u)].insert(v);
        parents[static_cast<std::size_t>(v)].insert(u);
    }
    void remove_edge(int u, int v) {
        children[static_cast<std::size_t>(u)].erase(v);
        parents[static_cast<std::size_t>(v)].erase(u);
    }

    // Directed path from -> to, optionally pretending one edge is absent.
    bool reaches(int from, int to, int skip_u = -1, int skip_v = -1) const {
        if (from == to) return true;
        std::vector<bool> seen(parents.size(), false);
        std::vector<int> stack = {from};
        seen[static_cast<std::size_t>(from)] = true;
        while (!stack.empty()) {
            const int u = stack.back();
            stack.pop_back();
            for (int v : children[static_cast<std::size_t>(u)]) {
                if (u == skip_u && v == skip_v) continue;
                if (v == to) return true;
                if (!seen[static_cast<std::size_t>(v)]) {
                    seen[static_cast<std::size_t>(v)] = true;
                    stack.push_back(v);
                }
            }
        }
        return false;
    }
};

enum class MoveKind : int { Add = 0, Delete = 1, Reverse = 2 };

struct Move {
    MoveKind kind = MoveKind::Add;
    int from = -1;
    int to = -1;
    double delta = 0.0;
};

}  // namespace detail

// Greedy BIC hill-climbing under constraints. Starts from the graph holding
// exactly the enforced edges; repeatedly applies the best of add / delete /
// reverse among moves that keep the graph acyclic, never touch enforced
// edges, and never create forbidden ones; stops when no move improves the
// score. Ties break lexicographically on (operation, from, to).
inline Dag hill_climb(const Dataset& d, const ConstraintSet& c, std::uint64_t seed,
                      const HillClimbOptions& options = {}) {
    const auto& cols = d.columns();
    std::map<std::string, int> col_index;
    for (std::size_t i = 0; i < cols.size(); ++i) col_index[cols[i]] = static_cast<int>(i);
    for (const auto& name : c.referenced_nodes())
        if (!col_index.count(name))
            throw std::invalid_argument("hill_climb: constrained node '" + name +
                                        "' is not a column");

    const int n = static_cast<int>(cols.size());
    std::set<std::pair<int, int>> enforced;
    std::set<std::pair<int, int>> forbidden;
    for (const Edge& e : c.enforce()) enforced.emplace(col_index.at(e.from), col_index.at(e.to));
    for (const Edge& e : c.forbid()) forbidden.emplace(col_index.at(e.from), col_index.at(e.to));

    const BicScorer scorer(d);

    auto run_one = [&](const detail::SearchGraph& start) {
        detail::SearchGraph g = start;
        std::vector<double> node_score(static_cast<std::size_t>(n));
        double total = 0.0;
        for (int v = 0; v < n; ++v) {
            const auto& pa = g.parents[static_cast<std::size_t>(v)];
            node_score[static_cast<std::size_t>(v)] =
                scorer.local_score(v, std::vector<int>(pa.begin(), pa.end()));
            total += node_score[static_cast<std::size_t>(v)];
        }

        auto score_with = [&](int v, const std::set<int>& pa, int added, int removed) {
            std::vector<int> parents;
            parents.reserve(pa.size() + 1);
            for (int p : pa)
                if (p != removed) parents.push_back(p);
            if (added >= 0) parents.push_back(added);
            return scorer.local_score(v, std::move(parents));
        };

        for (;;) {
            detail::Move best;
            bool found = false;
            auto consider = [&](detail::MoveKind kind, int u, int v, double delta) {
                if (delta <= options.min_improvement) return;
                const auto key = std::make_tuple(static_cast<int>(kind), cols[static_cast<std::size_t>(u)],
                                                 cols[static_cast<std::size_t>(v)]);
                const auto best_key = std::make_tuple(static_cast<int>(best.kind),
                                                      cols[static_cast<std::size_t>(std::max(best.from, 0))],
                                                      cols[static_cast<std::size_t>(std::max(best.to, 0))]);
                if (!found || delta > best.delta + 1e-12 ||
                    (delta > best.delta - 1e-12 && key < best_key)) {
                    best = {kind, u, v, delta};
                    found = true;
                }
            };

            for (int u = 0; u < n; ++u) {
                for (int v = 0; v < n; ++v) {
                    if (u == v) continue;
                    if (!g.has_edge(u, v)) {
                        if (forbidden.count({u, v})) continue;
                        if (g.reaches(v, u)) continue;  // would close a cycle
                        const double delta =
                            score_with(v, g.parents[static_cast<std::size_t>(v)], u, -1) -
                            node_score[static_cast<std::size_t>(v)];
                        consider(detail::MoveKind::Add, u, v, delta);
                    } else {
                        if (enforced.count({u, v})) continue;
                        const double delete_delta =
                            score_with(v, g.parents[static_cast<std::size_t>(v)], -1, u) -
                            node_score[static_cast<std::size_t>(v)];
                        consider(detail::MoveKind::Delete, u, v, delete_delta);
                        if (!forbidden.count({v, u}) && !g.reaches(u, v, u, v)) {
                            const double delta =
                                delete_delta +
                                score_with(u, g.parents[static_cast<std::size_t>(u)], v, -1) -
                                node_score[static_cast<std::size_t>(u)];
                            consider(detail::MoveKind::Reverse, u, v, delta);
                        }
                    }
                }
            }

            if (!found) break;
            switch (best.kind) {
                case detail::MoveKind::Add:
                    g.add_edge(best.from, best.to);
                    break;
                case detail::MoveKind::Delete:
                    g.remove_edge(best.from, best.to);
                    break;
                case detail::MoveKind::Reverse:
                    g.remove_edge(best.from, best.to);
                    g.add_edge(best.to, best.from);
                    break;
            }
            for (int v : {best.from, best.to}) {
                const auto& pa = g.parents[static_cast<std::size_t>(v)];
                const double s = scorer.local_score(v, std::vector<int>(pa.begin(), pa.end()));
                total += s - node_score[static_cast<std::size_t>(v)];
                node_score[static_cast<std::size_t>(v)] = s;
            }
        }
        return std::make_pair(g, total);
    };

    detail::SearchGraph enforce_start(static_cast<std::size_t>(n));
    for (const auto& [u, v] : enforced) enforce_start.add_edge(u, v);

    auto [best_graph, best_score] = run_one(enforce_start);
    for (int r = 0; r < options.restarts; ++r) {
        // randomized start: enforced edges plus a sprinkle of legal extras
        Rng rng(child_seed(seed, static_cast<std::uint64_t>(r)));
        detail::SearchGraph start = enforce_start;
        std::vector<std::pair<int, int>> candidates;
        for (int u = 0; u < n; ++u)
            for (int v = 0; v < n; ++v)
                if (u != v && !forbidden.count({u, v})) candidates.emplace_back(u, v);
        rng.shuffle(candidates);
        for (const auto& [u, v] : candidates)
            if (rng.uniform() < 0.25 && !start.has_edge(u, v) && !start.has_edge(v, u) &&
                !start.reaches(v, u))
                start.add_edge(u, v);
        auto [graph, score] = run_one(start);
        if (score > best_score + 1e-12) {
            best_graph = graph;
            best_score = score;
        }
    }

    Dag result{cols};
    for (int u = 0; u < n; ++u)
        for (int v : best_graph.children[static_cast<std::size_t>(u)])
            result.add_edge(cols[static_cast<std::size_t>(u)], cols[static_cast<std::size_t>(v)]);
    return result;
}

// Fraction of bootstrap replicates in which each directed edge was learned.
struct EdgeStrengths {
    std::vector<std::string> nodes;
    std::map<Edge, double> strengths;  // edges absent from every replicate are omitted
    std::set<Edge> enforced;
    int replicates = 0;
};

namespace detail {

template <typename Fn>
inline void parallel_for(std::size_t count, int jobs, Fn&& fn) {
    if (jobs <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> threads;
    const int n_threads = std::min<int>(jobs, static_cast<int>(count));
    threads.reserve(static_cast<std::size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace detail

// Learn on `replicates` bootstrap resamples and record per-edge inclusion
// fractions. Replicate b always uses child seeds derived from (seed, b), so
// the result is identical under serial and parallel execution.
inline EdgeStrengths bootstrap_strengths(const Dataset& d, const ConstraintSet& c, int replicates,
                                         std::uint64_t seed, int jobs = 1,
                                         const HillClimbOptions& options = {}) {
    if (replicates < 1)
        throw std::invalid_argument("bootstrap_strengths: need at least one replicate");

    std::vector<std::vector<Edge>> learned(static_cast<std::size_t>(replicates));
    detail::parallel_for(static_cast<std::size_t>(replicates), jobs, [&](std::size_t b) {
        const Dataset resampled =
            bootstrap_resample(d, child_seed(seed, 2 * static_cast<std::uint64_t>(b)));
        const Dag g =
            hill_climb(resampled, c, child_seed(seed, 2 * static_cast<std::uint64_t>(b) + 1), options);
        learned[b] = g.edges();
    });

    EdgeStrengths result;
    result.nodes = d.columns();
    result.replicates = replicates;
    result.enforced = c.enforce();
    std::map<Edge, int> counts;
    for (const auto& edges : learned)
        for (const Edge& e : edges) ++counts[e];
    for (const auto& [edge, count] : counts)
        result.strengths[edge] = static_cast<double>(count) / static_cast<double>(replicates);
    return result;
}

namespace detail {

// Per unordered pair, the fraction of replicates containing the edge in
// either direction. A single replicate DAG cannot hold both directions, so
// presence is the sum of the two directed strengths (clamped for inputs that
// did not come from real replicates). Enforced pairs are excluded.
inline std::map<std::pair<std::string, std::string>, double> pair_presence(
    const EdgeStrengths& s) {
    std::map<std::pair<std::string, std::string>, double> presence;
    for (const auto& [edge, p] : s.strengths) {
        if (s.enforced.count(edge) || s.enforced.count({edge.to, edge.from})) continue;
        auto key = std::minmax(edge.from, edge.to);
        presence[{key.first, key.second}] =
            std::min(1.0, presence[{key.first, key.second}] + p);
    }
    return presence;
}

}  // namespace detail

// Significance threshold for edge-presence strengths: among the observed
// non-enforced pair presences, pick the cutoff whose induced "noise at low
// strength, signal at 1" step CDF is closest in L1 distance to the empirical
// CDF. Ties resolve toward the larger threshold.
inline double l1_threshold(const EdgeStrengths& s) {
    std::vector<double> strengths;
    for (const auto& [pair, p] : detail::pair_presence(s)) strengths.push_back(p);
    if (strengths.empty())
        throw std::invalid_argument("l1_threshold: no non-enforced strengths recorded");
    std::sort(strengths.begin(), strengths.end());
    const double k = static_cast<double>(strengths.size());

    // segment boundaries of the empirical CDF over [0, 1]
    std::vector<double> values;
    std::vector<double> cdf;  // CDF value on [values[i], values[i+1])
    for (double p : strengths) {
        if (values.empty() || p != values.back()) {
            values.push_back(p);
            cdf.push_back(0.0);
        }
    }
    {
        std::size_t i = 0;
        double cum = 0.0;
        for (std::size_t v = 0; v < values.size(); ++v) {
            while (i < strengths.size() && strengths[i] == values[v]) {
                cum += 1.0;
                ++i;
            }
            cdf[v] = cum / k;
        }
    }

    auto l1_distance = [&](double level) {
        double dist = values.front() * level;  // CDF is 0 below the smallest strength
        for (std::size_t v = 0; v < values.size(); ++v) {
            const double hi = v + 1 < values.size() ? values[v + 1] : 1.0;
            dist += (hi - values[v]) * std::abs(cdf[v] - level);
        }
        return dist;
    };

    double best_t = values.front();
    double best_dist = 0.0;
    bool first = true;
    for (double t : values) {
        double below = 0.0;
        for (double p : strengths)
            if (p < t) below += 1.0;
        const double dist = l1_distance(below / k);
        if (first || dist < best_dist - 1e-12 ||
            (dist < best_dist + 1e-12 && t > best_t)) {
            best_t = t;
            best_dist = dist;
            first = false;
        }
    }
    return best_t;
}

// Averaged graph: enforced edges first, then every pair whose presence
// reaches the threshold, inserted in decreasing-presence order and oriented
// toward the stronger direction, skipping forbidden edges and any edge that
// would close a cycle.
inline Dag averaged_graph(const EdgeStrengths& s, double threshold, const ConstraintSet& c) {
    std::vector<std::string> nodes = s.nodes;
    std::set<std::string> node_set(nodes.begin(), nodes.end());
    auto note = [&](const std::string& n) {
        if (node_set.insert(n).second) nodes.push_back(n);
    };
    for (const auto& [edge, p] : s.strengths) {
        note(edge.from);
        note(edge.to);
    }
    for (const auto& name : c.referenced_nodes()) note(name);

    Dag g(nodes);
    for (const Edge& e : c.enforce()) g.add_edge(e.from, e.to);

    struct Candidate {
        Edge edge;
        double presence;
    };
    auto directed_strength = [&](const std::string& from, const std::string& to) {
        auto it = s.strengths.find({from, to});
        return it == s.strengths.end() ? 0.0 : it->second;
    };
    std::vector<Candidate> candidates;
    for (const auto& [pair, presence] : detail::pair_presence(s)) {
        if (presence < threshold) continue;
        const double fwd = directed_strength(pair.first, pair.second);
        const double rev = directed_strength(pair.second, pair.first);
        // stronger direction wins; ties go to the lexicographically smaller edge
        Edge edge = fwd >= rev ? Edge{pair.first, pair.second} : Edge{pair.second, pair.first};
        if (c.forbids(edge.from, edge.to)) {
            edge = {edge.to, edge.from};
            if (directed_strength(edge.from, edge.to) <= 0.0 || c.forbids(edge.from, edge.to))
                continue;
        }
        candidates.push_back({edge, presence});
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.presence != b.presence) return a.presence > b.presence;
        return a.edge < b.edge;
    });

    for (const Candidate& cand : candidates) {
        if (g.has_edge(cand.edge.from, cand.edge.to) || g.has_edge(cand.edge.to, cand.edge.from))
            continue;
        if (g.has_directed_path(cand.edge.to, cand.edge.from)) continue;  // cycle
        g.add_edge(cand.edge.from, cand.edge.to);
    }
    return g;
}

inline void save_strengths(const EdgeStrengths& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_strengths: cannot open '" + path + "'");
    out << "from,to,strength\n";
    for (const auto& [edge, p] : s.strengths)
        out << edge.from << ',' << edge.to << ',' << format_double(p) << '\n';
}

inline EdgeStrengths load_strengths(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_strengths: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || detail::strip_cr(line) != "from,to,strength")
        throw std::runtime_error("load_strengths: " + path + ": expected header 'from,to,strength'");
    EdgeStrengths s;
    std::set<std::string> node_set;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = detail::strip_cr(line);
        if (line.empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != 3)
            throw std::runtime_error("load_strengths: " + path + ": line " +
                                     std::to_string(line_no) + ": expected 3 cells");
        char* end = nullptr;
        const double p = std::strtod(cells[2].c_str(), &end);
        if (end != cells[2].c_str() + cells[2].size() || !(p >= 0.0 && p <= 1.0))
            throw std::runtime_error("load_strengths: " + path + ": line " +
                                     std::to_string(line_no) + ": strength outside [0,1]");
        s.strengths[{cells[0], cells[1]}] = p;
        if (node_set.insert(cells[0]).second) s.nodes.push_back(cells[0]);
        if (node_set.insert(cells[1]).second) s.nodes.push_back(cells[1]);
    }
    return s;
}

}  // namespace causalkit
