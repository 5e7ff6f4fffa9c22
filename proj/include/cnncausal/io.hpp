#pragma once

// CSV datasets and report files.

#include "cnncausal/dataset.hpp"
#include "cnncausal/estimators.hpp"
#include "cnncausal/simulation.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cnncausal {

inline constexpr const char* kToolVersion = "0.1.0";

/// RFC 4180 records: comma separated, optional double quotes with "" as an
/// escaped quote, LF or CRLF line ends. The first record is the header.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::string& path);  // IoError when unreadable

/// Builds a Dataset from a CSV file. With a layout the covariates are the
/// layout's columns (series-major, statics last); without one every column
/// other than the outcome and treatment is used in file order.
/// Errors: DataError naming a missing column, the row of a treatment value
/// outside {0,1}, or the row and column of an unparsable cell.
Dataset load_csv(const std::string& path, const std::optional<SeriesLayout>& layout,
                 const std::string& outcome_col, const std::string& treat_col);
Dataset dataset_from_table(const CsvTable& table, const std::optional<SeriesLayout>& layout,
                           const std::string& outcome_col, const std::string& treat_col);

/// Inverse of load_csv: outcome, treatment, then the covariates under their
/// layout names (x1..xd without a layout).
std::string dataset_to_csv(const Dataset& data, const std::string& outcome_col,
                           const std::string& treat_col);
std::vector<std::string> covariate_names(const Dataset& data);

enum class ReportFormat { Json, Csv };
ReportFormat parse_format(const std::string& s);  // "json" or "csv"

/// Shortest decimal that parses back to the same double; "nan"/"inf" spelled out.
std::string format_double(double v);

/// Report documents. `config` is echoed verbatim; numbers survive a parse
/// bit for bit (NaN becomes null).
nlohmann::json report_json(const EstimateReport& r, const nlohmann::json& config, std::uint64_t seed);
nlohmann::json report_json(const sim::MonteCarloReport& r, const nlohmann::json& config);
std::string report_csv(const EstimateReport& r);
std::string report_csv(const sim::MonteCarloReport& r);  // estimator,bias,coverage,mc_sd,est_sd,mse

/// Writes to a sibling temporary file and renames it over `path`, so the
/// target is either untouched or complete. IoError naming the path on failure.
void write_text_file(const std::string& path, const std::string& content);

void write_report(const EstimateReport& r, const std::string& path, ReportFormat format,
                  const nlohmann::json& config, std::uint64_t seed);
void write_report(const sim::MonteCarloReport& r, const std::string& path, ReportFormat format,
                  const nlohmann::json& config);

}  // namespace cnncausal
