#include "cnncausal/cli.hpp"

#include "cnncausal/errors.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

namespace cnncausal {

namespace {

using nlohmann::json;

const std::vector<std::string> kCommonKeys = {
    "estimand", "alpha", "seed", "out", "format", "threads", "trim", "m_prime", "epochs", "batch_size",
    "patience", "learning_rate", "span", "outcome_channels", "propensity_channels", "outcome_hidden",
    "propensity_hidden", "static_branch", "head", "lambda_rule"};
const std::vector<std::string> kSimulateKeys = {"setting", "n", "reps", "estimators", "oracle_mc_size",
                                                "oracle_seed"};
const std::vector<std::string> kEstimateKeys = {"data", "outcome", "treat", "method", "series", "static"};

template <class T>
void read_key(const json& j, const char* key, T& target) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return;
    try {
        target = it->get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config key '") + key + "' has the wrong type (" + it->dump() + ")");
    }
}

// Signed JSON integers would wrap silently into unsigned fields.
template <class T>
void read_count(const json& j, const char* key, T& target) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return;
    if (it->is_number_integer() && it->template get<long long>() < 0)
        throw ConfigError(std::string("config key '") + key + "' must not be negative");
    if (it->is_array())
        for (const auto& v : *it)
            if (v.is_number_integer() && v.template get<long long>() < 0)
                throw ConfigError(std::string("config key '") + key + "' must not contain negative values");
    read_key(j, key, target);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::string to_string(LambdaRule r) { return r == LambdaRule::PlugIn ? "plugin" : "cv"; }

LambdaRule parse_lambda_rule(const std::string& s) {
    const std::string l = lower(s);
    if (l == "plugin") return LambdaRule::PlugIn;
    if (l == "cv") return LambdaRule::CrossValidation;
    throw ConfigError("unknown lambda rule '" + s + "' (expected plugin or cv)");
}

std::string to_string(ReportFormat f) { return f == ReportFormat::Json ? "json" : "csv"; }

sim::NamedEstimator named_estimator(const std::string& name) {
    if (lower(name) == "droracle") return sim::oracle_aipw();
    return sim::builtin(parse_estimator(name));
}

json read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'", path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config file '" + path + "' must hold a JSON object");
    return j;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return kExitUsage;
    if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const IoError*>(&e) ||
        dynamic_cast<const StructuralError*>(&e))
        return kExitData;
    if (dynamic_cast<const DivergenceError*>(&e) || dynamic_cast<const ConvergenceError*>(&e) ||
        dynamic_cast<const DomainError*>(&e))
        return kExitNumerical;
    return 1;
}

// Flags that were given on the command line, keyed like the config file.
class FlagSet {
public:
    explicit FlagSet(CLI::App* app) : app_(app) {}

    template <class T>
    CLI::Option* add(const std::string& flag, const std::string& key, const std::string& help) {
        auto value = std::make_shared<T>();
        CLI::Option* opt = app_->add_option(flag, *value, help);
        sinks_.push_back([opt, value, key](json& j) {
            if (opt->count() > 0) j[key] = *value;
        });
        return opt;
    }

    void collect(json& j) const {
        for (const auto& s : sinks_) s(j);
    }

private:
    CLI::App* app_;
    std::vector<std::function<void(json&)>> sinks_;
};

void add_common_flags(FlagSet& f) {
    f.add<std::string>("--estimand", "estimand", "ace or acet (default acet)");
    f.add<double>("--alpha", "alpha", "CI level is 1 - alpha (default 0.05)");
    f.add<std::uint64_t>("--seed", "seed", "random seed (default 1)");
    f.add<std::string>("--out", "out", "report path");
    f.add<std::string>("--format", "format", "json or csv (default json)");
    f.add<std::size_t>("--threads", "threads", "worker threads (default 1)");
    f.add<double>("--trim", "trim", "propensity trimming bound (default 0.01)");
    f.add<double>("--m-prime", "m_prime", "outcome clipping bound (default 2*max|y|)");
    f.add<int>("--epochs", "epochs", "maximum training epochs (default 200)");
    f.add<std::size_t>("--batch-size", "batch_size", "minibatch size (default 64)");
    f.add<int>("--patience", "patience", "early-stopping patience in epochs (default 10)");
    f.add<double>("--learning-rate", "learning_rate", "Adam step size (default 1e-3)");
    f.add<std::size_t>("--span", "span", "filter span S of the CNN (default 2)");
    f.add<std::vector<std::size_t>>("--outcome-channels", "outcome_channels", "CNN channels, outcome model")
        ->delimiter(',');
    f.add<std::vector<std::size_t>>("--propensity-channels", "propensity_channels",
                                    "CNN channels, propensity model")
        ->delimiter(',');
    f.add<std::vector<std::size_t>>("--outcome-hidden", "outcome_hidden", "MLP widths, outcome model")
        ->delimiter(',');
    f.add<std::vector<std::size_t>>("--propensity-hidden", "propensity_hidden", "MLP widths, propensity model")
        ->delimiter(',');
    f.add<std::vector<std::size_t>>("--static-branch", "static_branch", "dense widths for static covariates")
        ->delimiter(',');
    f.add<std::vector<std::size_t>>("--head", "head", "dense widths after the CNN")->delimiter(',');
    f.add<std::string>("--lambda", "lambda_rule", "lasso penalty rule: plugin or cv (default plugin)");
}

void print_report(std::ostream& out, const EstimateReport& r) {
    out << std::setprecision(6) << r.method << " " << to_string(r.estimand) << ": " << r.tau_hat
        << " (se " << r.se << ", " << 100 * (1 - r.alpha) << "% CI [" << r.ci_low << ", " << r.ci_high
        << "], n=" << r.n << ")\n";
}

void print_report(std::ostream& out, const sim::MonteCarloReport& r) {
    out << std::setprecision(6) << "true " << to_string(r.config.pipeline.estimand) << " = " << r.truth.value
        << " (oracle se " << r.truth.std_error << ")\n";
    out << std::left << std::setw(10) << "estimator" << std::right << std::setw(12) << "bias"
        << std::setw(10) << "coverage" << std::setw(12) << "mc_sd" << std::setw(12) << "est_sd"
        << std::setw(12) << "mse" << std::setw(8) << "failed" << "\n";
    for (const auto& e : r.estimators)
        out << std::left << std::setw(10) << e.name << std::right << std::setw(12) << e.bias
            << std::setw(10) << e.coverage << std::setw(12) << e.mc_sd << std::setw(12) << e.est_sd
            << std::setw(12) << e.mse << std::setw(8) << e.failed << "\n";
}

}  // namespace

std::vector<std::string> RunConfig::keys(Command c) {
    std::vector<std::string> k = kCommonKeys;
    const auto& extra = c == Command::Simulate ? kSimulateKeys : kEstimateKeys;
    k.insert(k.end(), extra.begin(), extra.end());
    return k;
}

RunConfig RunConfig::from_json(Command c, const json& j) {
    if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
    const auto allowed = keys(c);
    for (const auto& [key, value] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw ConfigError("unknown config key '" + key + "' for " +
                              (c == Command::Simulate ? "simulate" : "estimate"));
    }

    RunConfig r;
    r.command = c;
    std::string estimand = to_string(r.estimand), format = to_string(r.format),
                rule = to_string(r.lambda_rule);
    read_key(j, "estimand", estimand);
    read_key(j, "format", format);
    read_key(j, "lambda_rule", rule);
    r.estimand = parse_estimand(estimand);
    r.format = parse_format(lower(format));
    r.lambda_rule = parse_lambda_rule(rule);

    read_key(j, "alpha", r.alpha);
    read_count(j, "seed", r.seed);
    read_key(j, "out", r.out);
    read_count(j, "threads", r.threads);
    read_key(j, "trim", r.trim);
    if (j.contains("m_prime") && !j["m_prime"].is_null()) {
        double m = 0.0;
        read_key(j, "m_prime", m);
        r.m_prime = m;
    }
    read_key(j, "epochs", r.epochs);
    read_count(j, "batch_size", r.batch_size);
    read_key(j, "patience", r.patience);
    read_key(j, "learning_rate", r.learning_rate);
    read_count(j, "span", r.span);
    read_count(j, "outcome_channels", r.outcome_channels);
    read_count(j, "propensity_channels", r.propensity_channels);
    read_count(j, "outcome_hidden", r.outcome_hidden);
    read_count(j, "propensity_hidden", r.propensity_hidden);
    read_count(j, "static_branch", r.static_branch);
    read_count(j, "head", r.head);

    read_key(j, "setting", r.setting);
    read_count(j, "n", r.n);
    read_count(j, "reps", r.reps);
    read_key(j, "estimators", r.estimators);
    read_count(j, "oracle_mc_size", r.oracle_mc_size);
    read_count(j, "oracle_seed", r.oracle_seed);

    read_key(j, "data", r.data);
    read_key(j, "outcome", r.outcome);
    read_key(j, "treat", r.treat);
    read_key(j, "method", r.method);
    read_key(j, "series", r.series);
    read_key(j, "static", r.statics);
    return r;
}

json RunConfig::to_json() const {
    json j = {
        {"estimand", to_string(estimand)},
        {"alpha", alpha},
        {"seed", seed},
        {"threads", threads},
        {"trim", trim},
        {"m_prime", m_prime ? json(*m_prime) : json(nullptr)},
        {"epochs", epochs},
        {"batch_size", batch_size},
        {"patience", patience},
        {"learning_rate", learning_rate},
        {"span", span},
        {"outcome_channels", outcome_channels},
        {"propensity_channels", propensity_channels},
        {"outcome_hidden", outcome_hidden},
        {"propensity_hidden", propensity_hidden},
        {"static_branch", static_branch},
        {"head", head},
        {"lambda_rule", to_string(lambda_rule)},
    };
    if (command == Command::Simulate) {
        j["command"] = "simulate";
        j["setting"] = setting;
        j["n"] = n;
        j["reps"] = reps;
        j["estimators"] = estimators;
        j["oracle_mc_size"] = oracle_mc_size;
        j["oracle_seed"] = oracle_seed;
    } else {
        j["command"] = "estimate";
        j["data"] = data;
        j["outcome"] = outcome;
        j["treat"] = treat;
        j["method"] = method;
        j["series"] = series;
        j["static"] = statics;
    }
    return j;
}

void RunConfig::validate() const {
    if (out.empty()) throw ConfigError("--out is required");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
    if (!(trim > 0.0 && trim < 0.5)) throw ConfigError("trim must lie in (0, 0.5)");
    if (threads < 1) throw ConfigError("threads must be >= 1");
    pipeline().nn.train.validate();
    if (span < 1) throw ConfigError("span must be >= 1");
    for (const auto* widths : {&outcome_channels, &propensity_channels, &outcome_hidden, &propensity_hidden})
        if (widths->empty() || std::count(widths->begin(), widths->end(), 0u) > 0)
            throw ConfigError("network widths must be a non-empty list of positive integers");
    if (command == Command::Simulate) {
        if (setting != 1 && setting != 2) throw ConfigError("setting must be 1 or 2");
        if (oracle_mc_size < 1000) throw ConfigError("oracle_mc_size must be >= 1000");
        monte_carlo().validate();
    } else {
        if (data.empty()) throw ConfigError("--data is required");
        if (outcome.empty() || treat.empty()) throw ConfigError("--outcome and --treat are required");
        parse_estimator(method);
        if (auto l = layout()) l->validate();
    }
}

PipelineSettings RunConfig::pipeline() const {
    PipelineSettings s;
    s.estimand = estimand;
    s.alpha = alpha;
    s.trim = trim;
    s.nn.train.trim = trim;
    s.nn.train.m_prime = m_prime;
    s.nn.train.epochs = epochs;
    s.nn.train.batch_size = batch_size;
    s.nn.train.patience = patience;
    s.nn.train.adam.step = learning_rate;
    s.nn.span = span;
    s.nn.outcome_channels = outcome_channels;
    s.nn.propensity_channels = propensity_channels;
    s.nn.outcome_hidden = outcome_hidden;
    s.nn.propensity_hidden = propensity_hidden;
    s.nn.static_branch = static_branch;
    s.nn.head = head;
    s.lasso.rule = lambda_rule;
    s.lasso.trim = trim;
    return s;
}

std::optional<SeriesLayout> RunConfig::layout() const {
    if (series.empty() && statics.empty()) return std::nullopt;
    SeriesLayout l;
    for (const auto& s : series) l.series.push_back(parse_series(s));
    l.statics = statics;
    return l;
}

sim::McConfig RunConfig::monte_carlo() const {
    sim::McConfig cfg;
    cfg.setting = setting;
    cfg.n = n;
    cfg.reps = reps;
    cfg.seed = seed;
    cfg.threads = threads;
    cfg.oracle_mc_size = oracle_mc_size;
    cfg.oracle_seed = oracle_seed;
    cfg.pipeline = pipeline();
    for (const auto& e : estimators) cfg.estimators.push_back(named_estimator(e));
    return cfg;
}

SeriesLayout::Series parse_series(const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("series '" + spec + "' must look like name=col1,col2,...");
    SeriesLayout::Series s;
    s.name = spec.substr(0, eq);
    std::stringstream cols(spec.substr(eq + 1));
    std::string c;
    while (std::getline(cols, c, ','))
        if (!c.empty()) s.columns.push_back(c);
    return s;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Doubly robust treatment effect estimation with convolutional nuisance models"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);
    std::string config_path;
    app.add_option("--config", config_path, "JSON file with default settings (same keys as the flags)");

    CLI::App* simulate = app.add_subcommand("simulate", "Monte Carlo study on a simulated design");
    FlagSet sim_flags(simulate);
    add_common_flags(sim_flags);
    sim_flags.add<int>("--setting", "setting", "design 1 or 2");
    sim_flags.add<std::size_t>("--n", "n", "sample size per replication (default 1000)");
    sim_flags.add<std::size_t>("--reps", "reps", "replications (default 100)");
    sim_flags.add<std::vector<std::string>>("--estimators", "estimators",
                                            "comma list of DRcnn, DRmlp, DRss, DRds, ORds, naive, DRoracle")
        ->delimiter(',');
    sim_flags.add<std::size_t>("--oracle-mc-size", "oracle_mc_size", "draws for the true effect (default 1e7)");
    sim_flags.add<std::uint64_t>("--oracle-seed", "oracle_seed", "seed of the true-effect integral");

    CLI::App* estimate = app.add_subcommand("estimate", "Estimate a treatment effect from a CSV file");
    FlagSet est_flags(estimate);
    add_common_flags(est_flags);
    est_flags.add<std::string>("--data", "data", "CSV file with a header row");
    est_flags.add<std::string>("--outcome", "outcome", "outcome column");
    est_flags.add<std::string>("--treat", "treat", "binary treatment column");
    est_flags.add<std::string>("--method", "method", "DRcnn, DRmlp, DRss, DRds, ORds or naive (default DRcnn)");
    est_flags.add<std::vector<std::string>>("--series", "series", "time series as name=col1,col2,... (repeatable)");
    est_flags.add<std::vector<std::string>>("--static", "static", "comma list of static covariate columns")
        ->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e, out, err);
        return kExitOk;
    } catch (const CLI::CallForVersion& e) {
        app.exit(e, out, err);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitUsage;
    }

    try {
        const Command command = simulate->parsed() ? Command::Simulate : Command::Estimate;
        json settings = config_path.empty() ? json::object() : read_config_file(config_path);
        (command == Command::Simulate ? sim_flags : est_flags).collect(settings);
        const RunConfig cfg = RunConfig::from_json(command, settings);
        cfg.validate();

        if (command == Command::Simulate) {
            const auto report = sim::monte_carlo_run(cfg.monte_carlo());
            write_report(report, cfg.out, cfg.format, cfg.to_json());
            print_report(out, report);
        } else {
            const Dataset data = load_csv(cfg.data, cfg.layout(), cfg.outcome, cfg.treat);
            Rng rng(cfg.seed);
            const auto report = run_estimator(parse_estimator(cfg.method), data, cfg.pipeline(), rng);
            write_report(report, cfg.out, cfg.format, cfg.to_json(), cfg.seed);
            print_report(out, report);
        }
        return kExitOk;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
}

}  // namespace cnncausal
