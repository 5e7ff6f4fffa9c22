#include "cnncausal/dataset.hpp"

#include "cnncausal/errors.hpp"

#include <cmath>
#include <set>

namespace cnncausal {

std::size_t SeriesLayout::series_length() const {
    return series.empty() ? 0 : series.front().columns.size();
}

std::vector<std::string> SeriesLayout::ordered_columns() const {
    std::vector<std::string> cols;
    for (const auto& s : series) cols.insert(cols.end(), s.columns.begin(), s.columns.end());
    cols.insert(cols.end(), statics.begin(), statics.end());
    return cols;
}

void SeriesLayout::validate() const {
    std::set<std::string> seen;
    for (const auto& s : series) {
        if (s.columns.size() < 2)
            throw ConfigError("series '" + s.name + "' needs at least 2 time points");
        if (s.columns.size() != series.front().columns.size())
            throw ConfigError("series '" + s.name + "' has " + std::to_string(s.columns.size()) +
                              " time points; all series must have the same length");
    }
    for (const auto& c : ordered_columns())
        if (!seen.insert(c).second) throw ConfigError("column '" + c + "' appears twice in layout");
}

std::size_t Dataset::n_treated() const noexcept {
    std::size_t k = 0;
    for (int v : t) k += (v == 1);
    return k;
}

void Dataset::validate() const {
    if (t.size() != n() || static_cast<std::size_t>(x.rows()) != n())
        throw StructuralError("dataset: y, t and x must have the same number of rows");
    for (std::size_t i = 0; i < n(); ++i) {
        if (t[i] != 0 && t[i] != 1)
            throw DataError("dataset: treatment at row " + std::to_string(i) + " is not 0/1");
        if (!std::isfinite(y[static_cast<Eigen::Index>(i)]))
            throw DataError("dataset: non-finite outcome at row " + std::to_string(i));
    }
    if (!x.allFinite()) throw DataError("dataset: non-finite covariate value");
    if (layout && layout->ordered_columns().size() != d())
        throw StructuralError("dataset: layout column count does not match x");
}

void Dataset::validate_for_estimation() const {
    validate();
    if (n_treated() == 0) throw DataError("dataset: no treated units");
    if (n_control() == 0) throw DataError("dataset: no control units");
}

Dataset Dataset::subset_arm(int arm) const {
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < n(); ++i)
        if (t[i] == arm) rows.push_back(static_cast<Eigen::Index>(i));
    Dataset out;
    out.y.resize(static_cast<Eigen::Index>(rows.size()));
    out.x.resize(static_cast<Eigen::Index>(rows.size()), x.cols());
    out.t.assign(rows.size(), arm);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        out.y[static_cast<Eigen::Index>(k)] = y[rows[k]];
        out.x.row(static_cast<Eigen::Index>(k)) = x.row(rows[k]);
    }
    out.layout = layout;
    return out;
}

}  // namespace cnncausal
