#include "cnncausal/cli.hpp"
#include "cnncausal/errors.hpp"
#include "cnncausal/io.hpp"
#include "cnncausal/simulation.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

using namespace cnncausal;
namespace fs = std::filesystem;

namespace {

int counter = 0;

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("cnncausal_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

void write(const std::string& path, const std::string& text) {
    std::ofstream(path, std::ios::binary) << text;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

struct CliResult {
    int code;
    std::string out, err;
};

CliResult cli(std::vector<std::string> args) {
    args.insert(args.begin(), "cnncausal");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string error_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const std::exception& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("csv parsing") {
    auto t = parse_csv("a,\"b,c\",d\r\n1,\"say \"\"hi\"\"\",3\r\n\n4,\"multi\nline\",6");
    REQUIRE(t.header.size() == 3);
    CHECK(t.header[1] == "b,c");
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0][1] == "say \"hi\"");
    CHECK(t.rows[1][1] == "multi\nline");
    CHECK(t.rows[1][2] == "6");
    CHECK(parse_csv("a,b\n,\n").rows[0] == std::vector<std::string>{"", ""});
    CHECK_THROWS_AS(parse_csv(""), DataError);
    CHECK_THROWS_AS(parse_csv("a,b\n1\n"), DataError);
    CHECK_THROWS_AS(parse_csv("a\n\"open\n"), DataError);
}

TEST_CASE("three-row file round trip") {
    TempDir dir;
    const std::string path = dir.file("d.csv");
    write(path, "y,t,x1,x2,x3,x4\n0.1,1,1,2,3,4\n-2.5e3,0,0.3333333333333333,5,6,7\n7,1,8,9,10,1e-300\n");
    Dataset d = load_csv(path, std::nullopt, "y", "t");
    CHECK(d.n() == 3);
    CHECK(d.d() == 4);
    CHECK(d.t == std::vector<int>{1, 0, 1});
    CHECK(d.x(1, 0) == 0.3333333333333333);

    const std::string again = dir.file("again.csv");
    write_text_file(again, dataset_to_csv(d, "y", "t"));
    Dataset e = load_csv(again, std::nullopt, "y", "t");
    CHECK((e.x - d.x).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((e.y - d.y).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(e.t == d.t);
}

TEST_CASE("re-export is a fixed point") {
    Rng rng(3);
    auto s = sim::dgp_setting2(rng, 50);
    SeriesLayout layout;
    layout.series.push_back({"a", {"x1", "x2", "x3", "x4", "x5"}});
    layout.series.push_back({"b", {"x6", "x7", "x8", "x9", "x10"}});
    s.data.layout = layout;
    const std::string first = dataset_to_csv(s.data, "out", "treated");
    Dataset back = dataset_from_table(parse_csv(first), layout, "out", "treated");
    CHECK(back.x == s.data.x);
    CHECK(back.y == s.data.y);
    CHECK(dataset_to_csv(back, "out", "treated") == first);
}

TEST_CASE("layout orders columns series-major with statics last") {
    auto table = parse_csv("s1,a3,y,a1,t,a2\n9,3,0,1,1,2\n8,6,1,4,0,5\n");
    SeriesLayout layout;
    layout.series.push_back({"A", {"a1", "a2", "a3"}});
    layout.statics = {"s1"};
    Dataset d = dataset_from_table(table, layout, "y", "t");
    CHECK(d.x.row(0) == Eigen::RowVector4d(1, 2, 3, 9));
    CHECK(d.x.row(1) == Eigen::RowVector4d(4, 5, 6, 8));
    REQUIRE(d.layout);
    CHECK(covariate_names(d) == std::vector<std::string>{"a1", "a2", "a3", "s1"});
}

TEST_CASE("ingestion errors name the culprit") {
    auto table = parse_csv("y,t,x1\n1,0,2\n2,2,3\n");
    const auto bad_t = error_of([&] { dataset_from_table(table, std::nullopt, "y", "t"); });
    CHECK(bad_t.find("row 2") != std::string::npos);
    CHECK_THROWS_AS(dataset_from_table(table, std::nullopt, "y", "t"), DataError);

    const auto missing = error_of([&] { dataset_from_table(table, std::nullopt, "y", "treat"); });
    CHECK(missing.find("'treat'") != std::string::npos);

    auto cells = parse_csv("y,t,x1\n1,0,2\n2,1,abc\n");
    const auto bad_cell = error_of([&] { dataset_from_table(cells, std::nullopt, "y", "t"); });
    CHECK(bad_cell.find("row 2") != std::string::npos);
    CHECK(bad_cell.find("'x1'") != std::string::npos);

    SeriesLayout layout;
    layout.series.push_back({"A", {"x1", "zz"}});
    CHECK(error_of([&] { dataset_from_table(cells, layout, "y", "t"); }).find("'zz'") != std::string::npos);
    CHECK_THROWS_AS(load_csv("/nonexistent/file.csv", std::nullopt, "y", "t"), IoError);
}

TEST_CASE("report json round trip is exact") {
    Rng rng(11);
    EstimateReport r;
    r.method = "DRds";
    r.tau_hat = sample_normal(rng, 0, 1) * 1e3;
    r.se = std::exp(sample_normal(rng, 0, 1));
    r.variance = r.se * r.se * 7;
    r.ci_low = r.tau_hat - 1.1 / 3.0;
    r.ci_high = r.tau_hat + 0.1;
    r.alpha = 0.05;
    r.n = 7;
    const auto text = report_json(r, {{"k", 1}}, 42).dump(2);
    const auto j = nlohmann::json::parse(text);
    CHECK(j["tau_hat"].get<double>() == r.tau_hat);
    CHECK(j["se"].get<double>() == r.se);
    CHECK(j["ci_low"].get<double>() == r.ci_low);
    CHECK(j["ci_high"].get<double>() == r.ci_high);
    CHECK(j["n"] == 7);
    CHECK(j["seed"] == 42);
    CHECK(j["estimand"] == "ACET");
    CHECK(j.contains("tool_version"));

    for (int k = 0; k < 1000; ++k) {
        const double v = std::ldexp(sample_normal(rng, 0, 1), static_cast<int>(rng.below(200)) - 100);
        CHECK(nlohmann::json::parse(nlohmann::json(v).dump()).get<double>() == v);
        CHECK(std::stod(format_double(v)) == v);
    }
}

TEST_CASE("monte carlo csv report") {
    sim::MonteCarloReport r;
    sim::EstimatorSummary a;
    a.name = "ORds";
    a.bias = 0.25;
    a.mc_sd = std::nan("");
    r.estimators.push_back(a);
    const auto csv = report_csv(r);
    CHECK(csv.substr(0, csv.find('\n')) == "estimator,bias,coverage,mc_sd,est_sd,mse");
    CHECK(csv.find("ORds,0.25,0,nan,0,0\n") != std::string::npos);
    CHECK(report_json(r, {})["estimators"]["ORds"]["mc_sd"].is_null());
}

TEST_CASE("writing into a missing directory fails without leaving files") {
    TempDir dir;
    const std::string path = dir.file("no/such/dir/report.json");
    const auto msg = error_of([&] { write_text_file(path, "{}"); });
    CHECK(msg.find(path) != std::string::npos);
    CHECK_THROWS_AS(write_text_file(path, "{}"), IoError);
    CHECK(fs::is_empty(dir.path));
}

TEST_CASE("run config keys") {
    auto cfg = RunConfig::from_json(Command::Simulate, {{"setting", 2}, {"n", 300}, {"estimators", {"naive"}}});
    CHECK(cfg.setting == 2);
    CHECK(cfg.n == 300);
    CHECK_THROWS_AS(RunConfig::from_json(Command::Simulate, {{"data", "x.csv"}}), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json(Command::Simulate, {{"colour", 1}}), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json(Command::Simulate, {{"n", "many"}}), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json(Command::Simulate, {{"n", -5}}), ConfigError);

    cfg.out = "r.json";
    auto j = cfg.to_json();
    j.erase("command");
    const auto back = RunConfig::from_json(Command::Simulate, j);
    CHECK(back.to_json() == cfg.to_json());

    auto s = parse_series("A=a1,a2,a3");
    CHECK(s.name == "A");
    CHECK(s.columns == std::vector<std::string>{"a1", "a2", "a3"});
    CHECK_THROWS_AS(parse_series("a1,a2"), ConfigError);
}

TEST_CASE("cli exit codes") {
    TempDir dir;
    CHECK(cli({"--help"}).code == kExitOk);
    CHECK(cli({"simulate", "--help"}).code == kExitOk);
    CHECK(cli({}).code == kExitUsage);
    CHECK(cli({"simulate", "--n", "abc", "--out", dir.file("a.json")}).code == kExitUsage);

    const auto bad_setting = cli({"simulate", "--setting", "3", "--out", dir.file("a.json")});
    CHECK(bad_setting.code == kExitUsage);
    CHECK_FALSE(bad_setting.err.empty());
    CHECK(cli({"simulate", "--estimators", "tmle", "--out", dir.file("a.json")}).code == kExitUsage);

    write(dir.file("cfg.json"), R"({"setting": 1, "colour": "red"})");
    CHECK(cli({"--config", dir.file("cfg.json"), "simulate", "--out", dir.file("a.json")}).code == kExitUsage);
    CHECK(cli({"--config", dir.file("missing.json"), "simulate", "--out", dir.file("a.json")}).code == kExitData);

    write(dir.file("bad.csv"), "y,t,x1\n1,0,2\n2,2,3\n");
    const auto bad_data = cli({"estimate", "--data", dir.file("bad.csv"), "--outcome", "y", "--treat", "t",
                               "--method", "naive", "--out", dir.file("e.json")});
    CHECK(bad_data.code == kExitData);
    CHECK(bad_data.err.find("row 2") != std::string::npos);
    CHECK(cli({"estimate", "--data", dir.file("nope.csv"), "--outcome", "y", "--treat", "t", "--out",
               dir.file("e.json")})
              .code == kExitData);
    CHECK_FALSE(fs::exists(dir.file("a.json")));
    CHECK_FALSE(fs::exists(dir.file("e.json")));
}

TEST_CASE("simulate smoke run and determinism") {
    TempDir dir;
    auto run = [&](const std::string& out, const std::string& threads) {
        return cli({"simulate", "--setting", "1", "--n", "200", "--reps", "5", "--estimators", "naive,DRds,DRoracle",
                    "--seed", "7", "--alpha", "0.05", "--threads", threads, "--oracle-mc-size", "100000",
                    "--out", dir.file(out)});
    };
    REQUIRE(run("a.json", "1").code == kExitOk);
    REQUIRE(run("b.json", "1").code == kExitOk);
    REQUIRE(run("c.json", "4").code == kExitOk);
    const auto a = slurp(dir.file("a.json"));
    CHECK(a == slurp(dir.file("b.json")));

    const auto ja = nlohmann::json::parse(a), jc = nlohmann::json::parse(slurp(dir.file("c.json")));
    CHECK(std::isfinite(ja["estimators"]["naive"]["bias"].get<double>()));
    for (const char* name : {"naive", "DRds", "DRoracle"})
        for (const char* field : {"bias", "coverage", "mc_sd", "est_sd", "mse"})
            CHECK(std::abs(ja["estimators"][name][field].get<double>() -
                           jc["estimators"][name][field].get<double>()) <= 1e-12);

    REQUIRE(cli({"simulate", "--n", "200", "--reps", "2", "--estimators", "naive", "--oracle-mc-size", "100000",
                 "--format", "csv", "--out", dir.file("r.csv")})
                .code == kExitOk);
    CHECK(slurp(dir.file("r.csv")).rfind("estimator,bias,coverage,mc_sd,est_sd,mse\n", 0) == 0);
}

TEST_CASE("estimate from a csv file") {
    TempDir dir;
    Rng rng(21);
    auto s = sim::dgp_setting1(rng, 400);
    write(dir.file("d.csv"), dataset_to_csv(s.data, "y", "t"));

    write(dir.file("cfg.json"), R"({"method": "DRds", "estimand": "ace"})");
    const auto r = cli({"--config", dir.file("cfg.json"), "estimate", "--data", dir.file("d.csv"), "--outcome", "y",
                        "--treat", "t", "--series", "A=x1,x2,x3,x4,x5", "--series", "B=x6,x7,x8,x9,x10", "--out",
                        dir.file("e.json")});
    REQUIRE(r.code == kExitOk);
    const auto j = nlohmann::json::parse(slurp(dir.file("e.json")));
    CHECK(j["method"] == "DRds");
    CHECK(j["estimand"] == "ACE");
    CHECK(j["n"] == 400);
    CHECK(j["ci_low"].get<double>() <= j["tau_hat"].get<double>());
    CHECK(j["config"]["series"].size() == 2);

    // A flag overrides the config file.
    REQUIRE(cli({"--config", dir.file("cfg.json"), "estimate", "--data", dir.file("d.csv"), "--outcome", "y",
                 "--treat", "t", "--method", "naive", "--out", dir.file("n.json")})
                .code == kExitOk);
    CHECK(nlohmann::json::parse(slurp(dir.file("n.json")))["method"] == "naive");

    const auto cnn = cli({"estimate", "--data", dir.file("d.csv"), "--outcome", "y", "--treat", "t", "--method",
                          "drcnn", "--epochs", "2", "--outcome-channels", "4,2", "--propensity-channels", "2,2",
                          "--series", "A=x1,x2,x3,x4,x5", "--series", "B=x6,x7,x8,x9,x10", "--out",
                          dir.file("c.json")});
    CHECK(cnn.code == kExitOk);

    const auto diverged = cli({"estimate", "--data", dir.file("d.csv"), "--outcome", "y", "--treat", "t",
                               "--method", "drmlp", "--epochs", "3", "--learning-rate", "1e300", "--out",
                               dir.file("div.json")});
    CHECK(diverged.code == kExitNumerical);
    CHECK_FALSE(fs::exists(dir.file("div.json")));
}
