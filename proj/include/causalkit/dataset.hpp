#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "causalkit/rng.hpp"

namespace causalkit {

inline bool is_identifier(const std::string& name) {
    if (name.empty()) return false;
    if (!(std::isalpha(static_cast<unsigned char>(name[0])) || name[0] == '_')) return false;
    for (char ch : name)
        if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_')) return false;
    return true;
}

// Format a double so that it round-trips exactly through parsing. All CSV
// output goes through this, which is what makes reruns byte-identical.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Immutable rectangular table of finite reals with named columns.
class Dataset {
public:
    Dataset(std::vector<std::string> columns, Eigen::MatrixXd values)
        : columns_(std::move(columns)), values_(std::move(values)) {
        if (static_cast<Eigen::Index>(columns_.size()) != values_.cols())
            throw std::invalid_argument("Dataset: header and matrix width differ");
        for (std::size_t i = 0; i < columns_.size(); ++i) {
            if (!is_identifier(columns_[i]))
                throw std::invalid_argument("Dataset: column " + std::to_string(i + 1) +
                                            " name '" + columns_[i] + "' is not an identifier");
            if (!index_.emplace(columns_[i], static_cast<int>(i)).second)
                throw std::invalid_argument("Dataset: duplicate column '" + columns_[i] + "'");
        }
        for (Eigen::Index r = 0; r < values_.rows(); ++r)
            for (Eigen::Index c = 0; c < values_.cols(); ++c)
                if (!std::isfinite(values_(r, c)))
                    throw std::invalid_argument("Dataset: non-finite value at row " +
                                                std::to_string(r + 1) + ", column '" +
                                                columns_[static_cast<std::size_t>(c)] + "'");
    }

    const std::vector<std::string>& columns() const { return columns_; }
    const Eigen::MatrixXd& values() const { return values_; }
    Eigen::Index n_rows() const { return values_.rows(); }
    Eigen::Index n_cols() const { return values_.cols(); }

    bool has_column(const std::string& name) const { return index_.count(name) > 0; }

    int column_index(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end())
            throw std::invalid_argument("Dataset: unknown column '" + name + "'");
        return it->second;
    }

    Eigen::VectorXd column(const std::string& name) const {
        return values_.col(column_index(name));
    }

    Dataset select_rows(const std::vector<Eigen::Index>& rows) const {
        Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), values_.cols());
        for (std::size_t i = 0; i < rows.size(); ++i)
            out.row(static_cast<Eigen::Index>(i)) = values_.row(rows[i]);
        return Dataset(columns_, std::move(out));
    }

    // New dataset with an extra column appended.
    Dataset with_column(const std::string& name, const Eigen::VectorXd& col) const {
        if (col.size() != values_.rows())
            throw std::invalid_argument("Dataset: appended column length mismatch");
        std::vector<std::string> cols = columns_;
        cols.push_back(name);
        Eigen::MatrixXd v(values_.rows(), values_.cols() + 1);
        v.leftCols(values_.cols()) = values_;
        v.col(values_.cols()) = col;
        return Dataset(std::move(cols), std::move(v));
    }

private:
    std::vector<std::string> columns_;
    Eigen::MatrixXd values_;
    std::unordered_map<std::string, int> index_;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

inline std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

}  // namespace detail

// Parse a comma-separated trace table: header of column names, then one row
// of decimal reals per record. Errors name the offending row and column.
inline Dataset parse_traces(std::istream& in, const std::string& origin = "<stream>") {
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("load_traces: " + origin + ": empty file");
    const std::vector<std::string> header = detail::split_csv_line(detail::strip_cr(line));
    const std::size_t n_cols = header.size();

    std::vector<double> cells;
    std::size_t n_rows = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = detail::strip_cr(line);
        if (line.empty()) continue;
        const std::vector<std::string> row = detail::split_csv_line(line);
        if (row.size() != n_cols)
            throw std::runtime_error("load_traces: " + origin + ": line " +
                                     std::to_string(line_no) + ": expected " +
                                     std::to_string(n_cols) + " cells, found " +
                                     std::to_string(row.size()));
        for (std::size_t c = 0; c < n_cols; ++c) {
            const std::string& cell = row[c];
            if (cell.empty())
                throw std::runtime_error("load_traces: " + origin + ": line " +
                                         std::to_string(line_no) + ", column '" + header[c] +
                                         "': missing value");
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end != cell.c_str() + cell.size() || !std::isfinite(v))
                throw std::runtime_error("load_traces: " + origin + ": line " +
                                         std::to_string(line_no) + ", column '" + header[c] +
                                         "': non-numeric cell '" + cell + "'");
            cells.push_back(v);
        }
        ++n_rows;
    }

    Eigen::MatrixXd values(static_cast<Eigen::Index>(n_rows), static_cast<Eigen::Index>(n_cols));
    for (std::size_t r = 0; r < n_rows; ++r)
        for (std::size_t c = 0; c < n_cols; ++c)
            values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                cells[r * n_cols + c];
    try {
        return Dataset(header, std::move(values));
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error("load_traces: " + origin + ": " + e.what());
    }
}

inline Dataset load_traces(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_traces: cannot open '" + path + "'");
    return parse_traces(in, path);
}

inline void write_traces(const Dataset& d, std::ostream& out) {
    for (std::size_t c = 0; c < d.columns().size(); ++c)
        out << (c ? "," : "") << d.columns()[c];
    out << '\n';
    for (Eigen::Index r = 0; r < d.n_rows(); ++r) {
        for (Eigen::Index c = 0; c < d.n_cols(); ++c)
            out << (c ? "," : "") << format_double(d.values()(r, c));
        out << '\n';
    }
}

inline void save_traces(const Dataset& d, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_traces: cannot open '" + path + "'");
    write_traces(d, out);
}

// Resample rows with replacement; same shape, deterministic per seed.
inline Dataset bootstrap_resample(const Dataset& d, std::uint64_t seed) {
    if (d.n_rows() < 1)
        throw std::invalid_argument("bootstrap_resample: empty dataset");
    Rng rng(seed);
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(d.n_rows()));
    for (auto& r : rows)
        r = static_cast<Eigen::Index>(rng.bounded(static_cast<std::size_t>(d.n_rows())));
    return d.select_rows(rows);
}

struct SplitPlan {
    int runs = 20;
    double train_fraction = 0.8;
    std::uint64_t seed = 0;

    void validate() const {
        if (runs < 1) throw std::invalid_argument("SplitPlan: runs must be >= 1");
        if (!(train_fraction > 0.0 && train_fraction < 1.0))
            throw std::invalid_argument("SplitPlan: train_fraction must be in (0,1)");
    }
};

// Independent random train/test partitions, one per run. Each run r uses
// child_seed(plan.seed, r), so the sequence is stable regardless of how many
// runs are requested.
inline std::vector<std::pair<Dataset, Dataset>> cv_splits(const Dataset& d,
                                                          const SplitPlan& plan) {
    plan.validate();
    if (d.n_rows() < 5)
        throw std::invalid_argument("cv_splits: need at least 5 rows");
    const auto n = static_cast<std::size_t>(d.n_rows());
    const auto n_train = static_cast<std::size_t>(
        std::lround(plan.train_fraction * static_cast<double>(n)));
    if (n_train == 0 || n_train == n)
        throw std::invalid_argument("cv_splits: train_fraction leaves an empty part");

    std::vector<std::pair<Dataset, Dataset>> out;
    out.reserve(static_cast<std::size_t>(plan.runs));
    for (int run = 0; run < plan.runs; ++run) {
        Rng rng(child_seed(plan.seed, static_cast<std::uint64_t>(run)));
        std::vector<Eigen::Index> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<Eigen::Index>(i);
        rng.shuffle(order);
        std::vector<Eigen::Index> train(order.begin(), order.begin() + static_cast<long>(n_train));
        std::vector<Eigen::Index> test(order.begin() + static_cast<long>(n_train), order.end());
        out.emplace_back(d.select_rows(train), d.select_rows(test));
    }
    return out;
}

struct ColumnScale {
    double mean = 0.0;
    double sd = 1.0;      // 1 for constant columns, which pass through unscaled
    bool constant = false;
};

struct Standardization {
    std::vector<ColumnScale> scales;  // aligned with dataset columns

    Dataset apply(const Dataset& d) const {
        if (scales.size() != d.columns().size())
            throw std::invalid_argument("Standardization: column count mismatch");
        Eigen::MatrixXd v = d.values();
        for (Eigen::Index c = 0; c < v.cols(); ++c) {
            const ColumnScale& s = scales[static_cast<std::size_t>(c)];
            if (!s.constant) v.col(c) = (v.col(c).array() - s.mean) / s.sd;
        }
        return Dataset(d.columns(), std::move(v));
    }

    Dataset invert(const Dataset& d) const {
        if (scales.size() != d.columns().size())
            throw std::invalid_argument("Standardization: column count mismatch");
        Eigen::MatrixXd v = d.values();
        for (Eigen::Index c = 0; c < v.cols(); ++c) {
            const ColumnScale& s = scales[static_cast<std::size_t>(c)];
            if (!s.constant) v.col(c) = v.col(c).array() * s.sd + s.mean;
        }
        return Dataset(d.columns(), std::move(v));
    }
};

// Center and scale each column to sample mean 0 and sample sd 1 (n-1
// denominator). Zero-variance columns are flagged and left untouched.
inline std::pair<Dataset, Standardization> standardize(const Dataset& d) {
    Standardization st;
    st.scales.resize(d.columns().size());
    for (Eigen::Index c = 0; c < d.n_cols(); ++c) {
        ColumnScale& s = st.scales[static_cast<std::size_t>(c)];
        s.mean = d.values().col(c).mean();
        if (d.n_rows() > 1) {
            const double ss = (d.values().col(c).array() - s.mean).square().sum();
            const double var = ss / static_cast<double>(d.n_rows() - 1);
            if (var > 0.0) {
                s.sd = std::sqrt(var);
            } else {
                s.constant = true;
            }
        } else {
            s.constant = true;
        }
    }
    return {st.apply(d), std::move(st)};
}

}  // namespace causalkit
