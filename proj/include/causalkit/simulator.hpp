#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "causalkit/dataset.hpp"
#include "causalkit/gaussian_model.hpp"
#include "causalkit/graph.hpp"
#include "causalkit/rng.hpp"

namespace causalkit {

// Ground-truth structural equation model. Root means are the intercepts of
// the root nodes.
struct SemSpec {
    LinearGaussianNet net;
};

// Draw n rows: nodes evaluated in topological order, each as intercept plus
// coefficient-weighted parents plus Gaussian noise.
inline Dataset sample(const SemSpec& sem, Eigen::Index n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("sample: need at least one row");
    const Dag& g = sem.net.dag();
    const auto order = g.topological_order();
    Rng rng(seed);

    std::map<std::string, Eigen::Index> col;
    for (std::size_t i = 0; i < g.nodes().size(); ++i)
        col[g.nodes()[i]] = static_cast<Eigen::Index>(i);

    Eigen::MatrixXd values(n, static_cast<Eigen::Index>(g.n_nodes()));
    for (Eigen::Index r = 0; r < n; ++r) {
        for (const auto& name : order) {
            const NodeModel& nm = sem.net.node(name);
            double v = nm.intercept;
            for (const auto& [parent, beta] : nm.coefficients)
                v += beta * values(r, col.at(parent));
            if (nm.noise_variance > 0.0) v += std::sqrt(nm.noise_variance) * rng.normal();
            values(r, col.at(name)) = v;
        }
    }
    return Dataset(g.nodes(), std::move(values));
}

// Total causal effect of treatment on outcome in a linear SEM: the sum over
// all directed paths of the product of edge coefficients. Computed twice,
// by path accumulation and from the reduced-form matrix, and cross-checked.
inline double analytical_ate(const SemSpec& sem, const std::string& treatment,
                             const std::string& outcome) {
    const Dag& g = sem.net.dag();
    const int t = g.node_index(treatment);
    const int y = g.node_index(outcome);
    if (t == y) throw std::invalid_argument("analytical_ate: treatment equals outcome");

    const auto order = g.topological_order();
    std::map<std::string, Eigen::Index> topo_pos;
    for (std::size_t i = 0; i < order.size(); ++i)
        topo_pos[order[i]] = static_cast<Eigen::Index>(i);

    // route 1: accumulate path products along the topological order
    std::vector<double> total(g.n_nodes(), 0.0);
    total[static_cast<std::size_t>(topo_pos.at(treatment))] = 1.0;
    for (const auto& name : order) {
        const double incoming = total[static_cast<std::size_t>(topo_pos.at(name))];
        if (incoming == 0.0) continue;
        for (const auto& child : g.children(name)) {
            const double beta = sem.net.node(child).coefficients.at(name);
            total[static_cast<std::size_t>(topo_pos.at(child))] += incoming * beta;
        }
    }
    const double by_paths = total[static_cast<std::size_t>(topo_pos.at(outcome))];

    // route 2: reduced form (I - B)^-1 - I
    const auto k = static_cast<Eigen::Index>(g.n_nodes());
    Eigen::MatrixXd coef = Eigen::MatrixXd::Zero(k, k);
    for (const auto& name : order)
        for (const auto& [parent, beta] : sem.net.node(name).coefficients)
            coef(topo_pos.at(name), topo_pos.at(parent)) = beta;
    const Eigen::MatrixXd inv = (Eigen::MatrixXd::Identity(k, k) - coef)
                                    .triangularView<Eigen::Lower>()
                                    .solve(Eigen::MatrixXd::Identity(k, k));
    const double by_matrix = inv(topo_pos.at(outcome), topo_pos.at(treatment));

    if (std::abs(by_paths - by_matrix) > 1e-6 * std::max(1.0, std::abs(by_paths)))
        throw std::logic_error("analytical_ate: path-sum and reduced-form routes disagree");
    return by_paths;
}

// Random ground truth: a DAG from a random topological order with Bernoulli
// edges, coefficients of magnitude in [0.5, coefficient_range] so that every
// edge carries a detectable signal.
inline SemSpec random_sem(int node_count, double edge_probability, double coefficient_range,
                          double noise_sigma, std::uint64_t seed) {
    if (node_count < 1) throw std::invalid_argument("random_sem: need at least one node");
    if (edge_probability < 0.0 || edge_probability > 1.0)
        throw std::invalid_argument("random_sem: edge probability outside [0,1]");
    if (coefficient_range < 0.5)
        throw std::invalid_argument("random_sem: coefficient range below the 0.5 magnitude floor");
    if (noise_sigma < 0.0) throw std::invalid_argument("random_sem: negative noise sigma");

    Rng rng(seed);
    std::vector<std::string> nodes;
    for (int i = 0; i < node_count; ++i) nodes.push_back("X" + std::to_string(i));

    std::vector<std::size_t> order(static_cast<std::size_t>(node_count));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);

    Dag g(nodes);
    std::vector<NodeModel> models(static_cast<std::size_t>(node_count));
    for (auto& nm : models) nm.noise_variance = noise_sigma * noise_sigma;
    for (std::size_t i = 0; i < order.size(); ++i) {
        for (std::size_t j = i + 1; j < order.size(); ++j) {
            if (rng.uniform() >= edge_probability) continue;
            const auto& from = nodes[order[i]];
            const auto& to = nodes[order[j]];
            const double magnitude = rng.uniform(0.5, coefficient_range);
            const double beta = rng.uniform() < 0.5 ? -magnitude : magnitude;
            g.add_edge(from, to);
            models[order[j]].coefficients[from] = beta;
        }
    }
    return SemSpec{LinearGaussianNet(std::move(g), std::move(models))};
}

}  // namespace causalkit
