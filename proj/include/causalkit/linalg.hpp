#pragma once

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <optional>
#include <stdexcept>

namespace causalkit {

struct OlsFit {
    Eigen::VectorXd coefficients;  // aligned with the design columns
    double rss = 0.0;
    Eigen::Index rank = 0;
    bool rank_deficient = false;
};

// Least squares of y on X via a complete orthogonal decomposition.
// Rank-deficient designs get the minimum-norm solution.
inline OlsFit ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    if (X.rows() != y.size())
        throw std::invalid_argument("ols: design and response row counts differ");
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(X);
    OlsFit fit;
    fit.coefficients = cod.solve(y);
    fit.rank = cod.rank();
    fit.rank_deficient = fit.rank < X.cols();
    fit.rss = (y - X * fit.coefficients).squaredNorm();
    return fit;
}

// Pearson correlation; nullopt when either argument has zero variance.
inline std::optional<double> pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("pearson: length mismatch");
    if (a.size() < 2) return std::nullopt;
    const double ma = a.mean();
    const double mb = b.mean();
    const Eigen::VectorXd ca = a.array() - ma;
    const Eigen::VectorXd cb = b.array() - mb;
    const double va = ca.squaredNorm();
    const double vb = cb.squaredNorm();
    if (va <= 0.0 || vb <= 0.0) return std::nullopt;
    return ca.dot(cb) / std::sqrt(va * vb);
}

// Two-sided p-value of a t statistic with `dof` degrees of freedom.
inline double student_t_p_value(double t, double dof) {
    if (dof <= 0.0) return 1.0;
    if (!std::isfinite(t)) return 0.0;
    boost::math::students_t dist(dof);
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

}  // namespace causalkit
