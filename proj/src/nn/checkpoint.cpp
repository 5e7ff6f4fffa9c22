// Model checkpoint format (text, one record per line):
//
//   cnncausal-model 1
//   kind outcome|propensity
//   spec cnn theoretical span=S input_length=d depth=L channels=E
//   spec cnn practical span=S series_count=.. series_length=.. static_count=..
//        channels=128,16 static_branch=.. head=..                (one line)
//   spec mlp input_dim=.. hidden=128,80
//   m_prime <hex>
//   trim <hex>
//   target_mean <hex>
//   target_scale <hex>
//   scale_min <count> <hex> ...
//   scale_max <count> <hex> ...
//   params <count> <hex> ...
//
// Every double is written with std::hexfloat and parsed with strtod, so a
// save/load round trip is bit exact.

#include "cnncausal/errors.hpp"
#include "cnncausal/nn/train.hpp"

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

namespace cnncausal::nn {
namespace {

constexpr const char* kMagic = "cnncausal-model";
constexpr int kVersion = 1;

std::string join(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

std::vector<std::size_t> split_sizes(const std::string& s) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) out.push_back(std::stoul(tok));
    return out;
}

double parse_hex(const std::string& tok, const std::string& path) {
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0')
        throw DataError("checkpoint " + path + ": bad number '" + tok + "'");
    return v;
}

void write_values(std::ostream& os, const char* key, std::span<const double> v) {
    os << key << ' ' << v.size();
    for (double x : v) os << ' ' << std::hexfloat << x << std::defaultfloat;
    os << '\n';
}

}  // namespace

void save_model(const NuisanceModel& model, const std::string& path) {
    std::ostringstream os;
    os << kMagic << ' ' << kVersion << '\n';
    os << "kind " << (model.kind_ == NuisanceKind::Outcome ? "outcome" : "propensity") << '\n';
    const ArchSpec arch = model.net_->arch();
    if (const auto* c = std::get_if<CnnSpec>(&arch)) {
        if (c->variant == CnnVariant::Theoretical) {
            os << "spec cnn theoretical span=" << c->span << " input_length=" << c->input_length
               << " depth=" << c->depth << " channels=" << c->channels << '\n';
        } else {
            os << "spec cnn practical span=" << c->span << " series_count=" << c->series_count
               << " series_length=" << c->series_length << " static_count=" << c->static_count
               << " channels=" << join(c->channels_per_layer)
               << " static_branch=" << join(c->static_branch_widths)
               << " head=" << join(c->head_widths) << '\n';
        }
    } else {
        const auto& m = std::get<MlpSpec>(arch);
        os << "spec mlp input_dim=" << m.input_dim << " hidden=" << join(m.hidden) << '\n';
    }
    os << "m_prime " << std::hexfloat << model.m_prime_ << '\n';
    os << "trim " << model.trim_ << '\n';
    os << "target_mean " << model.target_mean_ << '\n';
    os << "target_scale " << model.target_scale_ << std::defaultfloat << '\n';
    write_values(os, "scale_min", model.scale_min_);
    write_values(os, "scale_max", model.scale_max_);
    write_values(os, "params", model.net_->params());

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing", path);
    f << os.str();
    if (!f) throw IoError("failed writing '" + path + "'", path);
}

NuisanceModel load_model(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open '" + path + "'", path);

    std::map<std::string, std::vector<std::string>> rec;
    std::string line, magic;
    int version = 0;
    {
        std::getline(f, line);
        std::istringstream hs(line);
        hs >> magic >> version;
        if (magic != kMagic) throw DataError("checkpoint " + path + ": not a model file");
        if (version != kVersion)
            throw DataError("checkpoint " + path + ": unsupported version " + std::to_string(version));
    }
    while (std::getline(f, line)) {
        std::istringstream ls(line);
        std::string key, tok;
        ls >> key;
        if (key.empty()) continue;
        auto& toks = rec[key];
        while (ls >> tok) toks.push_back(tok);
    }
    auto need = [&](const std::string& key) -> const std::vector<std::string>& {
        auto it = rec.find(key);
        if (it == rec.end() || it->second.empty())
            throw DataError("checkpoint " + path + ": missing '" + key + "'");
        return it->second;
    };
    auto values = [&](const std::string& key) {
        const auto& toks = need(key);
        const std::size_t count = std::stoul(toks[0]);
        if (toks.size() != count + 1)
            throw DataError("checkpoint " + path + ": '" + key + "' count mismatch");
        std::vector<double> v(count);
        for (std::size_t i = 0; i < count; ++i) v[i] = parse_hex(toks[i + 1], path);
        return v;
    };

    const auto& spec_toks = need("spec");
    std::map<std::string, std::string> kv;
    for (std::size_t i = 1; i < spec_toks.size(); ++i) {
        const auto eq = spec_toks[i].find('=');
        if (eq != std::string::npos) kv[spec_toks[i].substr(0, eq)] = spec_toks[i].substr(eq + 1);
    }
    auto num = [&](const std::string& k) {
        if (!kv.count(k)) throw DataError("checkpoint " + path + ": spec lacks '" + k + "'");
        return static_cast<std::size_t>(std::stoul(kv[k]));
    };
    ArchSpec arch;
    if (spec_toks[0] == "cnn") {
        if (spec_toks.size() < 2) throw DataError("checkpoint " + path + ": bad cnn spec");
        if (spec_toks[1] == "theoretical") {
            arch = CnnSpec::theoretical(num("input_length"), num("span"), num("depth"), num("channels"));
        } else {
            CnnSpec c = CnnSpec::practical(num("series_count"), num("series_length"),
                                           num("static_count"), split_sizes(kv["channels"]),
                                           num("span"));
            c.static_branch_widths = split_sizes(kv["static_branch"]);
            c.head_widths = split_sizes(kv["head"]);
            arch = c;
        }
    } else if (spec_toks[0] == "mlp") {
        arch = MlpSpec{num("input_dim"), split_sizes(kv["hidden"])};
    } else {
        throw DataError("checkpoint " + path + ": unknown architecture '" + spec_toks[0] + "'");
    }

    NuisanceModel model;
    const auto& kind = need("kind")[0];
    if (kind == "outcome") model.kind_ = NuisanceKind::Outcome;
    else if (kind == "propensity") model.kind_ = NuisanceKind::Propensity;
    else throw DataError("checkpoint " + path + ": unknown kind '" + kind + "'");
    model.m_prime_ = parse_hex(need("m_prime")[0], path);
    model.trim_ = parse_hex(need("trim")[0], path);
    model.target_mean_ = parse_hex(need("target_mean")[0], path);
    model.target_scale_ = parse_hex(need("target_scale")[0], path);
    model.scale_min_ = values("scale_min");
    model.scale_max_ = values("scale_max");

    auto net = make_network(arch);
    const auto params = values("params");
    if (params.size() != net->num_params())
        throw DataError("checkpoint " + path + ": parameter count does not match the architecture");
    std::copy(params.begin(), params.end(), net->params().begin());
    if (model.scale_min_.size() != net->input_dim() || model.scale_max_.size() != net->input_dim())
        throw DataError("checkpoint " + path + ": scaler size does not match the architecture");
    model.net_ = std::move(net);
    return model;
}

}  // namespace cnncausal::nn
