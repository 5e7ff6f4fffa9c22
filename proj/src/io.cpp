#include "cnncausal/io.hpp"

#include "cnncausal/errors.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace cnncausal {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t'; }

std::string trimmed(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && is_space(s[a])) ++a;
    while (b > a && is_space(s[b - 1])) --b;
    return s.substr(a, b - a);
}

// Data rows are numbered from 1; the header is line 1 of the file.
std::string row_label(std::size_t row) {
    return "row " + std::to_string(row + 1) + " (line " + std::to_string(row + 2) + ")";
}

double parse_cell(const std::string& raw, std::size_t row, const std::string& column) {
    const std::string s = trimmed(raw);
    double v = 0.0;
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (s.empty() || ec != std::errc() || ptr != end || !std::isfinite(v))
        throw DataError(row_label(row) + ", column '" + column + "': cannot parse '" + raw +
                        "' as a finite number");
    return v;
}

std::string quoted(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

nlohmann::json number(double v) {
    if (std::isnan(v)) return nullptr;
    return v;
}

}  // namespace

CsvTable parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false, field_started = false;
    std::size_t line = 1;

    auto end_field = [&] {
        record.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        // A blank line is not a record.
        if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
        record.clear();
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field += c;
            }
            continue;
        }
        switch (c) {
            case '"':
                if (field_started && !trimmed(field).empty())
                    throw DataError("csv line " + std::to_string(line) + ": stray quote inside a field");
                field.clear();
                in_quotes = true;
                field_started = true;
                break;
            case ',': end_field(); break;
            case '\r':
                if (i + 1 < text.size() && text[i + 1] == '\n') break;
                end_record();
                ++line;
                break;
            case '\n':
                end_record();
                ++line;
                break;
            default:
                field += c;
                field_started = true;
        }
    }
    if (in_quotes) throw DataError("csv: unterminated quoted field");
    if (field_started || !field.empty() || !record.empty()) end_record();

    if (records.empty()) throw DataError("csv: no header row");
    CsvTable table;
    table.header = std::move(records.front());
    for (auto& h : table.header) h = trimmed(h);
    for (std::size_t r = 1; r < records.size(); ++r) {
        if (records[r].size() != table.header.size())
            throw DataError(row_label(r - 1) + ": expected " + std::to_string(table.header.size()) +
                            " fields, found " + std::to_string(records[r].size()));
        table.rows.push_back(std::move(records[r]));
    }
    return table;
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading", path);
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw IoError("error while reading '" + path + "'", path);
    std::string text = buf.str();
    if (text.rfind("\xEF\xBB\xBF", 0) == 0) text.erase(0, 3);  // UTF-8 byte order mark
    return parse_csv(text);
}

Dataset dataset_from_table(const CsvTable& table, const std::optional<SeriesLayout>& layout,
                           const std::string& outcome_col, const std::string& treat_col) {
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t j = 0; j < table.header.size(); ++j) {
        if (!index.emplace(table.header[j], j).second)
            throw DataError("csv header: column '" + table.header[j] + "' appears twice");
    }
    auto column = [&](const std::string& name) {
        auto it = index.find(name);
        if (it == index.end()) throw DataError("column '" + name + "' not found in the csv header");
        return it->second;
    };
    if (outcome_col == treat_col) throw ConfigError("outcome and treatment must be different columns");
    const std::size_t yj = column(outcome_col), tj = column(treat_col);

    std::vector<std::string> names;
    if (layout) {
        layout->validate();
        names = layout->ordered_columns();
        for (const auto& c : names)
            if (c == outcome_col || c == treat_col)
                throw ConfigError("column '" + c + "' is both a covariate and the outcome or treatment");
    } else {
        for (std::size_t j = 0; j < table.header.size(); ++j)
            if (j != yj && j != tj) names.push_back(table.header[j]);
    }
    std::vector<std::size_t> xj;
    for (const auto& c : names) xj.push_back(column(c));

    const std::size_t n = table.rows.size();
    Dataset data;
    data.y.resize(static_cast<Eigen::Index>(n));
    data.t.resize(n);
    data.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(xj.size()));
    for (std::size_t i = 0; i < n; ++i) {
        const auto& row = table.rows[i];
        const auto ii = static_cast<Eigen::Index>(i);
        data.y[ii] = parse_cell(row[yj], i, outcome_col);
        const double t = parse_cell(row[tj], i, treat_col);
        if (t != 0.0 && t != 1.0)
            throw DataError(row_label(i) + ", column '" + treat_col + "': treatment must be 0 or 1, got '" +
                            trimmed(row[tj]) + "'");
        data.t[i] = static_cast<int>(t);
        for (std::size_t k = 0; k < xj.size(); ++k)
            data.x(ii, static_cast<Eigen::Index>(k)) = parse_cell(row[xj[k]], i, names[k]);
    }
    data.layout = layout;
    data.validate();
    return data;
}

Dataset load_csv(const std::string& path, const std::optional<SeriesLayout>& layout,
                 const std::string& outcome_col, const std::string& treat_col) {
    try {
        return dataset_from_table(read_csv(path), layout, outcome_col, treat_col);
    } catch (const DataError& e) {
        throw DataError(path + ": " + e.what());
    }
}

std::vector<std::string> covariate_names(const Dataset& data) {
    if (data.layout) return data.layout->ordered_columns();
    std::vector<std::string> names;
    for (std::size_t j = 0; j < data.d(); ++j) names.push_back("x" + std::to_string(j + 1));
    return names;
}

std::string dataset_to_csv(const Dataset& data, const std::string& outcome_col,
                           const std::string& treat_col) {
    data.validate();
    std::string out = quoted(outcome_col) + "," + quoted(treat_col);
    for (const auto& c : covariate_names(data)) out += "," + quoted(c);
    out += "\n";
    for (Eigen::Index i = 0; i < data.x.rows(); ++i) {
        out += format_double(data.y[i]) + "," + std::to_string(data.t[static_cast<std::size_t>(i)]);
        for (Eigen::Index j = 0; j < data.x.cols(); ++j) out += "," + format_double(data.x(i, j));
        out += "\n";
    }
    return out;
}

ReportFormat parse_format(const std::string& s) {
    if (s == "json") return ReportFormat::Json;
    if (s == "csv") return ReportFormat::Csv;
    throw ConfigError("unknown output format '" + s + "' (expected json or csv)");
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, ptr);
}

nlohmann::json report_json(const EstimateReport& r, const nlohmann::json& config, std::uint64_t seed) {
    return {
        {"tool_version", kToolVersion},
        {"seed", seed},
        {"config", config},
        {"estimand", to_string(r.estimand)},
        {"method", r.method},
        {"tau_hat", number(r.tau_hat)},
        {"variance", number(r.variance)},
        {"se", number(r.se)},
        {"alpha", r.alpha},
        {"ci_low", number(r.ci_low)},
        {"ci_high", number(r.ci_high)},
        {"n", r.n},
        {"n1", r.n1},
        {"n0", r.n0},
    };
}

nlohmann::json report_json(const sim::MonteCarloReport& r, const nlohmann::json& config) {
    nlohmann::json estimators = nlohmann::json::object();
    for (const auto& e : r.estimators) {
        nlohmann::json estimates = nlohmann::json::array(), ses = nlohmann::json::array();
        for (double v : e.estimates) estimates.push_back(number(v));
        for (double v : e.std_errors) ses.push_back(number(v));
        estimators[e.name] = {
            {"bias", number(e.bias)},
            {"coverage", number(e.coverage)},
            {"mc_sd", number(e.mc_sd)},
            {"est_sd", number(e.est_sd)},
            {"mse", number(e.mse)},
            {"completed", e.completed},
            {"failed", e.failed},
            {"failures", e.failures},
            {"estimates", estimates},
            {"std_errors", ses},
        };
    }
    return {
        {"tool_version", kToolVersion},
        {"seed", r.config.seed},
        {"config", config},
        {"estimand", to_string(r.config.pipeline.estimand)},
        {"truth", {{"value", r.truth.value}, {"std_error", r.truth.std_error}}},
        {"estimators", estimators},
    };
}

std::string report_csv(const EstimateReport& r) {
    std::string out = "estimator,estimand,tau_hat,se,ci_low,ci_high,alpha,n\n";
    out += quoted(r.method) + "," + to_string(r.estimand) + "," + format_double(r.tau_hat) + "," +
           format_double(r.se) + "," + format_double(r.ci_low) + "," + format_double(r.ci_high) + "," +
           format_double(r.alpha) + "," + std::to_string(r.n) + "\n";
    return out;
}

std::string report_csv(const sim::MonteCarloReport& r) {
    std::string out = "estimator,bias,coverage,mc_sd,est_sd,mse\n";
    for (const auto& e : r.estimators)
        out += quoted(e.name) + "," + format_double(e.bias) + "," + format_double(e.coverage) + "," +
               format_double(e.mc_sd) + "," + format_double(e.est_sd) + "," + format_double(e.mse) + "\n";
    return out;
}

void write_text_file(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write '" + path + "'", path);
        out << content;
        out.flush();
        if (!out) {
            std::error_code ignore;
            fs::remove(tmp, ignore);
            throw IoError("error while writing '" + path + "'", path);
        }
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        std::error_code ignore;
        fs::remove(tmp, ignore);
        throw IoError("cannot write '" + path + "': " + ec.message(), path);
    }
}

void write_report(const EstimateReport& r, const std::string& path, ReportFormat format,
                  const nlohmann::json& config, std::uint64_t seed) {
    write_text_file(path, format == ReportFormat::Json ? report_json(r, config, seed).dump(2) + "\n"
                                                       : report_csv(r));
}

void write_report(const sim::MonteCarloReport& r, const std::string& path, ReportFormat format,
                  const nlohmann::json& config) {
    write_text_file(path, format == ReportFormat::Json ? report_json(r, config).dump(2) + "\n"
                                                       : report_csv(r));
}

}  // namespace cnncausal
