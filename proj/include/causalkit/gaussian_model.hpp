#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "causalkit/dataset.hpp"
#include "causalkit/graph.hpp"
#include "causalkit/linalg.hpp"

namespace causalkit {

constexpr double kVarianceFloor = 1e-12;

struct NodeModel {
    double intercept = 0.0;
    std::map<std::string, double> coefficients;  // keyed by parent name
    double noise_variance = 0.0;
};

// A DAG where every node is a linear function of its parents plus Gaussian
// noise. Serves both as a fitted model and as a simulator ground truth.
class LinearGaussianNet {
public:
    LinearGaussianNet(Dag dag, std::vector<NodeModel> node_models)
        : dag_(std::move(dag)), node_models_(std::move(node_models)) {
        if (node_models_.size() != dag_.n_nodes())
            throw std::invalid_argument("LinearGaussianNet: one model per node required");
        for (std::size_t i = 0; i < node_models_.size(); ++i) {
            const auto& name = dag_.nodes()[i];
            const auto parents = dag_.parents(name);
            const auto& coef = node_models_[i].coefficients;
            if (coef.size() != parents.size())
                throw std::invalid_argument("LinearGaussianNet: node '" + name +
                                            "' coefficient count differs from parents");
            for (const auto& p : parents)
                if (!coef.count(p))
                    throw std::invalid_argument("LinearGaussianNet: node '" + name +
                                                "' missing coefficient for parent '" + p + "'");
            if (node_models_[i].noise_variance < 0.0)
                throw std::invalid_argument("LinearGaussianNet: negative noise variance at '" +
                                            name + "'");
        }
    }

    const Dag& dag() const { return dag_; }
    const NodeModel& node(const std::string& name) const {
        return node_models_[static_cast<std::size_t>(dag_.node_index(name))];
    }
    const std::vector<NodeModel>& node_models() const { return node_models_; }

private:
    Dag dag_;
    std::vector<NodeModel> node_models_;
};

struct JointGaussian {
    std::vector<std::string> nodes;
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;

    int index(const std::string& name) const {
        auto it = std::find(nodes.begin(), nodes.end(), name);
        if (it == nodes.end())
            throw std::invalid_argument("JointGaussian: unknown node '" + name + "'");
        return static_cast<int>(it - nodes.begin());
    }
};

// Maximum-likelihood fit of each node on its parents: least squares with an
// intercept, noise variance RSS/N floored at kVarianceFloor.
inline LinearGaussianNet fit(const Dataset& d, const Dag& g) {
    const Eigen::Index n = d.n_rows();
    std::size_t max_parents = 0;
    for (const auto& name : g.nodes()) {
        if (!d.has_column(name))
            throw std::invalid_argument("fit: graph node '" + name + "' is not a column");
        max_parents = std::max(max_parents, g.parents(name).size());
    }
    if (n <= static_cast<Eigen::Index>(max_parents) + 2)
        throw std::invalid_argument("fit: need more rows than parents + 2");

    std::vector<NodeModel> models;
    models.reserve(g.n_nodes());
    for (const auto& name : g.nodes()) {
        const auto parents = g.parents(name);
        Eigen::MatrixXd X(n, static_cast<Eigen::Index>(parents.size()) + 1);
        X.col(0).setOnes();
        for (std::size_t p = 0; p < parents.size(); ++p)
            X.col(static_cast<Eigen::Index>(p) + 1) = d.column(parents[p]);
        const OlsFit f = ols(X, d.column(name));
        NodeModel nm;
        nm.intercept = f.coefficients[0];
        for (std::size_t p = 0; p < parents.size(); ++p)
            nm.coefficients[parents[p]] = f.coefficients[static_cast<Eigen::Index>(p) + 1];
        nm.noise_variance = std::max(f.rss / static_cast<double>(n), kVarianceFloor);
        models.push_back(std::move(nm));
    }
    return LinearGaussianNet(g, std::move(models));
}

// Exact joint distribution implied by the net. With B the coefficient matrix
// in a topological order, mean = (I-B)^-1 b0 and covariance
// (I-B)^-1 diag(sigma^2) (I-B)^-T, permuted back to the net's node order.
inline JointGaussian to_joint(const LinearGaussianNet& net) {
    const Dag& g = net.dag();
    const auto order = g.topological_order();
    const auto k = static_cast<Eigen::Index>(order.size());

    std::map<std::string, Eigen::Index> topo_pos;
    for (Eigen::Index i = 0; i < k; ++i) topo_pos[order[static_cast<std::size_t>(i)]] = i;

    Eigen::MatrixXd coef = Eigen::MatrixXd::Zero(k, k);  // strictly lower triangular
    Eigen::VectorXd intercept(k);
    Eigen::VectorXd noise(k);
    for (Eigen::Index i = 0; i < k; ++i) {
        const auto& name = order[static_cast<std::size_t>(i)];
        const NodeModel& nm = net.node(name);
        intercept[i] = nm.intercept;
        noise[i] = nm.noise_variance;
        for (const auto& [parent, beta] : nm.coefficients) coef(i, topo_pos.at(parent)) = beta;
    }

    const Eigen::MatrixXd identity_minus = Eigen::MatrixXd::Identity(k, k) - coef;
    // unit lower triangular, so triangular solves are exact
    const Eigen::MatrixXd inv =
        identity_minus.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(k, k));
    Eigen::VectorXd mean = inv * intercept;
    Eigen::MatrixXd cov = inv * noise.asDiagonal() * inv.transpose();
    cov = ((cov + cov.transpose()) / 2.0).eval();

    // permute back to the net's node order
    JointGaussian joint;
    joint.nodes = g.nodes();
    const auto total = static_cast<Eigen::Index>(g.n_nodes());
    joint.mean.resize(total);
    joint.covariance.resize(total, total);
    std::vector<Eigen::Index> pos(static_cast<std::size_t>(total));
    for (Eigen::Index i = 0; i < total; ++i)
        pos[static_cast<std::size_t>(i)] = topo_pos.at(g.nodes()[static_cast<std::size_t>(i)]);
    for (Eigen::Index i = 0; i < total; ++i) {
        joint.mean[i] = mean[pos[static_cast<std::size_t>(i)]];
        for (Eigen::Index j = 0; j < total; ++j)
            joint.covariance(i, j) = cov(pos[static_cast<std::size_t>(i)], pos[static_cast<std::size_t>(j)]);
    }
    return joint;
}

// Conditional mean of one target given fixed evidence values, precomputed so
// that repeated predictions share the evidence-block factorization.
class GaussianConditioner {
public:
    GaussianConditioner(const JointGaussian& joint, std::vector<std::string> evidence_nodes,
                        const std::string& target)
        : evidence_nodes_(std::move(evidence_nodes)) {
        const int t = joint.index(target);
        for (const auto& e : evidence_nodes_)
            if (e == target)
                throw std::invalid_argument("predict: target '" + target + "' is in the evidence");
        const auto ne = static_cast<Eigen::Index>(evidence_nodes_.size());
        evidence_mean_.resize(ne);
        target_mean_ = joint.mean[t];
        if (ne == 0) return;

        Eigen::MatrixXd ee(ne, ne);
        Eigen::VectorXd te(ne);
        std::vector<int> idx(static_cast<std::size_t>(ne));
        for (Eigen::Index i = 0; i < ne; ++i) {
            idx[static_cast<std::size_t>(i)] = joint.index(evidence_nodes_[static_cast<std::size_t>(i)]);
            evidence_mean_[i] = joint.mean[idx[static_cast<std::size_t>(i)]];
        }
        for (Eigen::Index i = 0; i < ne; ++i) {
            te[i] = joint.covariance(t, idx[static_cast<std::size_t>(i)]);
            for (Eigen::Index j = 0; j < ne; ++j)
                ee(i, j) = joint.covariance(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
        }
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(ee);
        rank_deficient_ = cod.rank() < ne;
        weights_ = cod.solve(te);
    }

    bool rank_deficient() const { return rank_deficient_; }
    const std::vector<std::string>& evidence_nodes() const { return evidence_nodes_; }

    double predict(const Eigen::VectorXd& evidence_values) const {
        if (evidence_values.size() != evidence_mean_.size())
            throw std::invalid_argument("predict: evidence value count mismatch");
        if (evidence_mean_.size() == 0) return target_mean_;
        return target_mean_ + weights_.dot(evidence_values - evidence_mean_);
    }

private:
    std::vector<std::string> evidence_nodes_;
    Eigen::VectorXd evidence_mean_;
    Eigen::VectorXd weights_;
    double target_mean_ = 0.0;
    bool rank_deficient_ = false;
};

// Exact conditional mean of `target` given the evidence assignment. A
// singular evidence block falls back to the pseudo-inverse; pass
// `rank_deficient` to observe that.
inline double predict(const LinearGaussianNet& net, const std::map<std::string, double>& evidence,
                      const std::string& target, bool* rank_deficient = nullptr) {
    std::vector<std::string> nodes;
    Eigen::VectorXd values(static_cast<Eigen::Index>(evidence.size()));
    Eigen::Index i = 0;
    for (const auto& [name, value] : evidence) {
        nodes.push_back(name);
        values[i++] = value;
    }
    const GaussianConditioner cond(to_joint(net), std::move(nodes), target);
    if (rank_deficient) *rank_deficient = cond.rank_deficient();
    return cond.predict(values);
}

struct PredictiveReport {
    double mean_correlation = 0.0;
    double mean_mse = 0.0;
    int runs = 0;     // runs included in the means
    int skipped = 0;  // runs dropped for a degenerate test target
};

struct RunMetrics {
    int run = 0;
    double correlation = 0.0;
    double mse = 0.0;
    bool skipped = false;
};

// Cross-validated predictive power of the graph for one target: refit the
// parameters on each train split (structure fixed), predict the target on the
// test split from all its other columns, and score correlation and MSE.
inline PredictiveReport cv_predictive_metrics(const Dataset& d, const Dag& g,
                                              const std::string& target, const SplitPlan& plan,
                                              std::vector<RunMetrics>* per_run = nullptr) {
    if (!g.has_node(target))
        throw std::invalid_argument("cv_predictive_metrics: target '" + target +
                                    "' is not in the graph");
    std::vector<std::string> evidence_cols;
    for (const auto& name : g.nodes())
        if (name != target) evidence_cols.push_back(name);

    PredictiveReport report;
    double corr_sum = 0.0;
    double mse_sum = 0.0;
    const auto splits = cv_splits(d, plan);
    for (std::size_t run = 0; run < splits.size(); ++run) {
        const auto& [train, test] = splits[run];
        const LinearGaussianNet net = fit(train, g);
        const GaussianConditioner cond(to_joint(net), evidence_cols, target);

        Eigen::VectorXd evidence(static_cast<Eigen::Index>(evidence_cols.size()));
        Eigen::VectorXd predicted(test.n_rows());
        for (Eigen::Index r = 0; r < test.n_rows(); ++r) {
            for (std::size_t e = 0; e < evidence_cols.size(); ++e)
                evidence[static_cast<Eigen::Index>(e)] =
                    test.values()(r, test.column_index(evidence_cols[e]));
            predicted[r] = cond.predict(evidence);
        }
        const Eigen::VectorXd observed = test.column(target);

        RunMetrics rm;
        rm.run = static_cast<int>(run);
        const double obs_spread = (observed.array() - observed.mean()).square().sum();
        if (obs_spread <= 0.0) {
            rm.skipped = true;
            ++report.skipped;
        } else {
            // a constant prediction vector shows no linear relation at all
            rm.correlation = pearson(predicted, observed).value_or(0.0);
            rm.mse = (predicted - observed).squaredNorm() / static_cast<double>(test.n_rows());
            corr_sum += rm.correlation;
            mse_sum += rm.mse;
            ++report.runs;
        }
        if (per_run) per_run->push_back(rm);
    }
    if (report.runs > 0) {
        report.mean_correlation = corr_sum / report.runs;
        report.mean_mse = mse_sum / report.runs;
    }
    return report;
}

struct CorrelationEntry {
    std::string variable;
    double correlation = 0.0;
    bool constant = false;  // zero-variance column, correlation reported as 0
};

// Pearson correlation of every other column with the target.
inline std::vector<CorrelationEntry> pearson_baseline(const Dataset& d, const std::string& target) {
    const Eigen::VectorXd y = d.column(target);
    std::vector<CorrelationEntry> out;
    for (const auto& name : d.columns()) {
        if (name == target) continue;
        CorrelationEntry entry;
        entry.variable = name;
        const auto r = pearson(d.column(name), y);
        if (r) {
            entry.correlation = *r;
        } else {
            entry.constant = true;
        }
        out.push_back(std::move(entry));
    }
    return out;
}

// Net serialization: a coefficient CSV (node,parent,coefficient) and a
// parameter CSV (node,intercept,variance). Node and parent cells hold names,
// so these files are not trace tables.
inline void save_net(const LinearGaussianNet& net, const std::string& coeffs_path,
                     const std::string& params_path) {
    std::ofstream coeffs(coeffs_path);
    if (!coeffs) throw std::runtime_error("save_net: cannot open '" + coeffs_path + "'");
    coeffs << "node,parent,coefficient\n";
    for (const auto& name : net.dag().nodes())
        for (const auto& [parent, beta] : net.node(name).coefficients)
            coeffs << name << ',' << parent << ',' << format_double(beta) << '\n';

    std::ofstream params(params_path);
    if (!params) throw std::runtime_error("save_net: cannot open '" + params_path + "'");
    params << "node,intercept,variance\n";
    for (const auto& name : net.dag().nodes()) {
        const NodeModel& nm = net.node(name);
        params << name << ',' << format_double(nm.intercept) << ','
               << format_double(nm.noise_variance) << '\n';
    }
}

inline LinearGaussianNet load_net(const std::string& coeffs_path, const std::string& params_path) {
    auto read_rows = [](const std::string& path, std::size_t n_cols,
                        const std::string& header) -> std::vector<std::vector<std::string>> {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("load_net: cannot open '" + path + "'");
        std::string line;
        if (!std::getline(in, line) || detail::strip_cr(line) != header)
            throw std::runtime_error("load_net: " + path + ": expected header '" + header + "'");
        std::vector<std::vector<std::string>> rows;
        std::size_t line_no = 1;
        while (std::getline(in, line)) {
            ++line_no;
            line = detail::strip_cr(line);
            if (line.empty()) continue;
            auto cells = detail::split_csv_line(line);
            if (cells.size() != n_cols)
                throw std::runtime_error("load_net: " + path + ": line " + std::to_string(line_no) +
                                         ": expected " + std::to_string(n_cols) + " cells");
            rows.push_back(std::move(cells));
        }
        return rows;
    };
    auto to_double = [](const std::string& cell, const std::string& path) {
        char* end = nullptr;
        const double v = std::strtod(cell.c_str(), &end);
        if (end != cell.c_str() + cell.size() || !std::isfinite(v))
            throw std::runtime_error("load_net: " + path + ": bad number '" + cell + "'");
        return v;
    };

    const auto param_rows = read_rows(params_path, 3, "node,intercept,variance");
    const auto coeff_rows = read_rows(coeffs_path, 3, "node,parent,coefficient");

    std::vector<std::string> nodes;
    for (const auto& row : param_rows) nodes.push_back(row[0]);
    std::vector<Edge> edges;
    for (const auto& row : coeff_rows) edges.push_back({row[1], row[0]});
    Dag g(nodes, edges);

    std::vector<NodeModel> models(nodes.size());
    for (const auto& row : param_rows) {
        NodeModel& nm = models[static_cast<std::size_t>(g.node_index(row[0]))];
        nm.intercept = to_double(row[1], params_path);
        nm.noise_variance = to_double(row[2], params_path);
    }
    for (const auto& row : coeff_rows)
        models[static_cast<std::size_t>(g.node_index(row[0]))].coefficients[row[1]] =
            to_double(row[2], coeffs_path);
    return LinearGaussianNet(std::move(g), std::move(models));
}

}  // namespace causalkit
