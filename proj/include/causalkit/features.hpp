#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "causalkit/dataset.hpp"

namespace causalkit {

enum class PredictionKind {
    Probability,     // rows are probability vectors (non-negative, sum to 1)
    LogProbability,  // rows are elementwise logs of probability vectors
    Raw,             // unconstrained real outputs (squared-error models)
};

// Predictions of an ensemble of n models on a shared set of m labelled
// samples with c classes; the raw material for the loss decompositions.
class PredictionBatch {
public:
    static PredictionBatch create(std::vector<Eigen::MatrixXd> models, Eigen::VectorXi labels,
                                  PredictionKind kind) {
        if (models.empty()) throw std::invalid_argument("PredictionBatch: no models");
        const Eigen::Index m = models.front().rows();
        const Eigen::Index c = models.front().cols();
        if (c < 1) throw std::invalid_argument("PredictionBatch: no classes");
        if (m < 1) throw std::invalid_argument("PredictionBatch: no samples");
        for (std::size_t j = 0; j < models.size(); ++j) {
            const auto& mat = models[j];
            if (mat.rows() != m || mat.cols() != c)
                throw std::invalid_argument("PredictionBatch: model " + std::to_string(j + 1) +
                                            " has mismatched shape");
            if (!mat.allFinite())
                throw std::invalid_argument("PredictionBatch: model " + std::to_string(j + 1) +
                                            " has non-finite predictions");
            if (kind == PredictionKind::Probability) {
                for (Eigen::Index x = 0; x < m; ++x) {
                    if ((mat.row(x).array() < 0.0).any())
                        throw std::invalid_argument("PredictionBatch: negative probability, model " +
                                                    std::to_string(j + 1) + ", sample " +
                                                    std::to_string(x + 1));
                    if (std::abs(mat.row(x).sum() - 1.0) > 1e-6)
                        throw std::invalid_argument("PredictionBatch: probabilities do not sum to 1, model " +
                                                    std::to_string(j + 1) + ", sample " +
                                                    std::to_string(x + 1));
                }
            }
        }
        if (labels.size() != m)
            throw std::invalid_argument("PredictionBatch: label count differs from sample count");
        for (Eigen::Index x = 0; x < m; ++x)
            if (labels[x] < 0 || labels[x] >= c)
                throw std::invalid_argument("PredictionBatch: label out of range at sample " +
                                            std::to_string(x + 1));
        return PredictionBatch(std::move(models), std::move(labels), kind);
    }

    Eigen::Index n_models() const { return static_cast<Eigen::Index>(models_.size()); }
    Eigen::Index n_samples() const { return models_.front().rows(); }
    Eigen::Index n_classes() const { return models_.front().cols(); }
    PredictionKind kind() const { return kind_; }
    const Eigen::MatrixXd& model(Eigen::Index j) const {
        return models_[static_cast<std::size_t>(j)];
    }
    int label(Eigen::Index x) const { return labels_[x]; }

    Eigen::RowVectorXd one_hot(Eigen::Index x) const {
        Eigen::RowVectorXd y = Eigen::RowVectorXd::Zero(n_classes());
        y[labels_[x]] = 1.0;
        return y;
    }

private:
    PredictionBatch(std::vector<Eigen::MatrixXd> models, Eigen::VectorXi labels,
                    PredictionKind kind)
        : models_(std::move(models)), labels_(std::move(labels)), kind_(kind) {}

    std::vector<Eigen::MatrixXd> models_;
    Eigen::VectorXi labels_;
    PredictionKind kind_;
};

struct BiasVariance {
    double bias = 0.0;
    double variance = 0.0;
    double loss = 0.0;
};

enum class VarianceEstimator { Unbiased, Population };

// Elementwise difference of two equally sized trace columns.
inline Eigen::VectorXd gap(const Eigen::VectorXd& minuend, const Eigen::VectorXd& subtrahend) {
    if (minuend.size() != subtrahend.size())
        throw std::invalid_argument("gap: column lengths differ");
    return minuend - subtrahend;
}

// Squared-error ensemble variance, averaged over samples:
// Var(x) = 1/(n-k) * sum_j ||f_j(x) - fbar(x)||^2 with k = 1 (unbiased) or 0.
inline double mse_variance(const PredictionBatch& batch, VarianceEstimator estimator) {
    const Eigen::Index n = batch.n_models();
    if (estimator == VarianceEstimator::Unbiased && n < 2)
        throw std::invalid_argument("mse_variance: unbiased estimator needs n >= 2 models");
    const double denom = estimator == VarianceEstimator::Unbiased
                             ? static_cast<double>(n - 1)
                             : static_cast<double>(n);
    double total = 0.0;
    for (Eigen::Index x = 0; x < batch.n_samples(); ++x) {
        Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(batch.n_classes());
        for (Eigen::Index j = 0; j < n; ++j) mean += batch.model(j).row(x);
        mean /= static_cast<double>(n);
        double spread = 0.0;
        for (Eigen::Index j = 0; j < n; ++j)
            spread += (batch.model(j).row(x) - mean).squaredNorm();
        total += spread / denom;
    }
    return total / static_cast<double>(batch.n_samples());
}

// Mean squared-error loss over models and samples against one-hot labels.
inline double mse_loss(const PredictionBatch& batch) {
    double total = 0.0;
    for (Eigen::Index x = 0; x < batch.n_samples(); ++x) {
        const Eigen::RowVectorXd y = batch.one_hot(x);
        double acc = 0.0;
        for (Eigen::Index j = 0; j < batch.n_models(); ++j)
            acc += (y - batch.model(j).row(x)).squaredNorm();
        total += acc / static_cast<double>(batch.n_models());
    }
    return total / static_cast<double>(batch.n_samples());
}

// Loss minus variance, reported raw: the unbiased estimator can push it
// slightly negative and clamping would break the decomposition identity.
inline double mse_bias(double loss, double variance) { return loss - variance; }

inline BiasVariance mse_decompose(const PredictionBatch& batch, VarianceEstimator estimator) {
    BiasVariance bv;
    bv.loss = mse_loss(batch);
    bv.variance = mse_variance(batch, estimator);
    bv.bias = mse_bias(bv.loss, bv.variance);
    return bv;
}

// Cross-entropy decomposition around the normalized geometric-mean ensemble:
//   pihat[l] = exp(mean_j log pi_j[l]) / Z
//   bias     = -log pihat[true class]
//   variance = mean_j KL(pihat || pi_j)
//   loss     = mean_j H(onehot, pi_j)
// and bias + variance = loss holds exactly for one-hot labels.
inline BiasVariance ce_decompose(const PredictionBatch& batch, double probability_floor = 1e-12) {
    if (batch.kind() == PredictionKind::Raw)
        throw std::invalid_argument("ce_decompose: batch must hold probabilities or log-probabilities");
    const Eigen::Index n = batch.n_models();
    const Eigen::Index c = batch.n_classes();

    BiasVariance bv;
    for (Eigen::Index x = 0; x < batch.n_samples(); ++x) {
        Eigen::RowVectorXd mean_log = Eigen::RowVectorXd::Zero(c);
        std::vector<Eigen::RowVectorXd> logs(static_cast<std::size_t>(n));
        for (Eigen::Index j = 0; j < n; ++j) {
            Eigen::RowVectorXd lg(c);
            if (batch.kind() == PredictionKind::Probability) {
                for (Eigen::Index l = 0; l < c; ++l) {
                    const double p = batch.model(j)(x, l);
                    if (p <= 0.0 && probability_floor <= 0.0)
                        throw std::invalid_argument("ce_decompose: zero probability without flooring, model " +
                                                    std::to_string(j + 1) + ", sample " +
                                                    std::to_string(x + 1));
                    lg[l] = std::log(std::max(p, probability_floor));
                }
            } else {
                lg = batch.model(j).row(x);
            }
            logs[static_cast<std::size_t>(j)] = lg;
            mean_log += lg;
        }
        mean_log /= static_cast<double>(n);

        // log-sum-exp normalization of the geometric mean
        const double max_log = mean_log.maxCoeff();
        const double z = (mean_log.array() - max_log).exp().sum();
        const double log_z = max_log + std::log(z);
        const Eigen::RowVectorXd log_pihat = mean_log.array() - log_z;
        const Eigen::RowVectorXd pihat = log_pihat.array().exp();

        const int t = batch.label(x);
        bv.bias += -log_pihat[t];
        double variance = 0.0;
        for (Eigen::Index j = 0; j < n; ++j)
            variance += (pihat.array() * (log_pihat - logs[static_cast<std::size_t>(j)]).array()).sum();
        bv.variance += variance / static_cast<double>(n);
        double loss = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) loss += -logs[static_cast<std::size_t>(j)][t];
        bv.loss += loss / static_cast<double>(n);
    }
    const double m = static_cast<double>(batch.n_samples());
    bv.bias /= m;
    bv.variance /= m;
    bv.loss /= m;
    return bv;
}

// Euclidean distance between the mean prediction vector on members and the
// mean prediction vector on non-members, for a single model.
inline double centroid_distance(const Eigen::MatrixXd& member_preds,
                                const Eigen::MatrixXd& nonmember_preds) {
    if (member_preds.rows() < 1 || nonmember_preds.rows() < 1)
        throw std::invalid_argument("centroid_distance: empty prediction matrix");
    if (member_preds.cols() != nonmember_preds.cols())
        throw std::invalid_argument("centroid_distance: class counts differ");
    const Eigen::RowVectorXd cm = member_preds.colwise().mean();
    const Eigen::RowVectorXd cn = nonmember_preds.colwise().mean();
    return (cm - cn).norm();
}

// Mean over values that were produced by a fixed number of disjoint splits.
inline double average_over_splits(const std::vector<double>& values, std::size_t expected_count) {
    if (values.size() != expected_count)
        throw std::invalid_argument("average_over_splits: expected " +
                                    std::to_string(expected_count) + " values, got " +
                                    std::to_string(values.size()));
    double total = 0.0;
    for (double v : values) total += v;
    return total / static_cast<double>(values.size());
}

// Assemble a batch from two trace-format CSVs:
//   predictions: model_id, sample_id, class_0 .. class_{c-1}
//   labels:      sample_id, class
// Every (model, sample) pair must appear exactly once.
inline PredictionBatch load_predictions(const std::string& predictions_path,
                                        const std::string& labels_path, PredictionKind kind) {
    const Dataset preds = load_traces(predictions_path);
    const Dataset labels = load_traces(labels_path);
    if (preds.n_cols() < 3)
        throw std::runtime_error("load_predictions: " + predictions_path +
                                 ": need model_id, sample_id and at least one class column");
    if (preds.columns()[0] != "model_id" || preds.columns()[1] != "sample_id")
        throw std::runtime_error("load_predictions: " + predictions_path +
                                 ": first columns must be model_id, sample_id");
    if (labels.n_cols() != 2 || labels.columns()[0] != "sample_id")
        throw std::runtime_error("load_predictions: " + labels_path +
                                 ": expected columns sample_id, class");

    const Eigen::Index c = preds.n_cols() - 2;
    std::map<double, int> model_ids;
    std::map<double, int> sample_ids;
    for (Eigen::Index r = 0; r < preds.n_rows(); ++r) {
        model_ids.emplace(preds.values()(r, 0), 0);
        sample_ids.emplace(preds.values()(r, 1), 0);
    }
    int k = 0;
    for (auto& [id, idx] : model_ids) idx = k++;
    k = 0;
    for (auto& [id, idx] : sample_ids) idx = k++;

    const auto n = static_cast<Eigen::Index>(model_ids.size());
    const auto m = static_cast<Eigen::Index>(sample_ids.size());
    if (preds.n_rows() != n * m)
        throw std::runtime_error("load_predictions: " + predictions_path +
                                 ": expected one row per (model, sample) pair");

    std::vector<Eigen::MatrixXd> models(static_cast<std::size_t>(n));
    std::vector<std::vector<bool>> seen(static_cast<std::size_t>(n),
                                        std::vector<bool>(static_cast<std::size_t>(m), false));
    for (auto& mat : models) mat.resize(m, c);
    for (Eigen::Index r = 0; r < preds.n_rows(); ++r) {
        const int j = model_ids.at(preds.values()(r, 0));
        const int x = sample_ids.at(preds.values()(r, 1));
        if (seen[static_cast<std::size_t>(j)][static_cast<std::size_t>(x)])
            throw std::runtime_error("load_predictions: " + predictions_path +
                                     ": duplicate (model, sample) pair at line " +
                                     std::to_string(r + 2));
        seen[static_cast<std::size_t>(j)][static_cast<std::size_t>(x)] = true;
        models[static_cast<std::size_t>(j)].row(x) = preds.values().row(r).segment(2, c);
    }

    Eigen::VectorXi label_vec = Eigen::VectorXi::Constant(m, -1);
    for (Eigen::Index r = 0; r < labels.n_rows(); ++r) {
        auto it = sample_ids.find(labels.values()(r, 0));
        if (it == sample_ids.end()) continue;  // labels for unused samples are fine
        const double cls = labels.values()(r, 1);
        if (cls < 0 || cls >= static_cast<double>(c) || cls != std::floor(cls))
            throw std::runtime_error("load_predictions: " + labels_path + ": line " +
                                     std::to_string(r + 2) + ": class index out of range");
        label_vec[it->second] = static_cast<int>(cls);
    }
    for (Eigen::Index x = 0; x < m; ++x)
        if (label_vec[x] < 0)
            throw std::runtime_error("load_predictions: " + labels_path +
                                     ": missing label for a predicted sample");

    try {
        return PredictionBatch::create(std::move(models), std::move(label_vec), kind);
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error("load_predictions: " + predictions_path + ": " + e.what());
    }
}

}  // namespace causalkit
