#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace cnncausal {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Partition of covariate columns into time series (each ordered by time)
/// and static covariates.
struct SeriesLayout {
    struct Series {
        std::string name;
        std::vector<std::string> columns;
    };
    std::vector<Series> series;
    std::vector<std::string> statics;

    std::size_t series_count() const noexcept { return series.size(); }
    // Common series length; 0 when there are no series.
    std::size_t series_length() const;
    std::size_t static_count() const noexcept { return statics.size(); }
    // Column names in the order the design matrix stores them: series-major, statics last.
    std::vector<std::string> ordered_columns() const;

    // Throws ConfigError: duplicated column, series shorter than 2, ragged series lengths.
    void validate() const;
};

/// Observed sample (y_i, t_i, x_i). `x` is n x d with columns ordered as
/// described by `layout` when one is present.
struct Dataset {
    Vector y;
    std::vector<int> t;
    Matrix x;
    std::optional<SeriesLayout> layout;

    std::size_t n() const noexcept { return static_cast<std::size_t>(y.size()); }
    std::size_t d() const noexcept { return static_cast<std::size_t>(x.cols()); }
    std::size_t n_treated() const noexcept;
    std::size_t n_control() const noexcept { return n() - n_treated(); }

    // Lengths agree, t binary, values finite. Throws DataError / StructuralError.
    void validate() const;
    // validate() plus at least one treated and one control unit.
    void validate_for_estimation() const;

    // Rows with t_i == arm.
    Dataset subset_arm(int arm) const;
};

}  // namespace cnncausal
