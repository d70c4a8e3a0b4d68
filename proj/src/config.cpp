#include "ntc/config.hpp"

#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

namespace ntc {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& value, const std::string& where);

template <>
double parse_number<double>(const std::string& value, const std::string& where) {
    size_t idx = 0;
    double v = 0;
    try {
        v = std::stod(value, &idx);
    } catch (const std::exception&) {
        throw ConfigError(where + ": not a number: \"" + value + "\"");
    }
    if (idx != value.size()) throw ConfigError(where + ": trailing characters in \"" + value + "\"");
    return v;
}

template <>
float parse_number<float>(const std::string& value, const std::string& where) {
    return static_cast<float>(parse_number<double>(value, where));
}

template <>
int parse_number<int>(const std::string& value, const std::string& where) {
    size_t idx = 0;
    long v = 0;
    try {
        v = std::stol(value, &idx);
    } catch (const std::exception&) {
        throw ConfigError(where + ": not an integer: \"" + value + "\"");
    }
    if (idx != value.size() || v < std::numeric_limits<int>::min() ||
        v > std::numeric_limits<int>::max())
        throw ConfigError(where + ": integer out of range: \"" + value + "\"");
    return static_cast<int>(v);
}

template <>
std::uint64_t parse_number<std::uint64_t>(const std::string& value, const std::string& where) {
    size_t idx = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(value, &idx);
    } catch (const std::exception&) {
        throw ConfigError(where + ": not an unsigned integer: \"" + value + "\"");
    }
    if (idx != value.size()) throw ConfigError(where + ": trailing characters in \"" + value + "\"");
    return static_cast<std::uint64_t>(v);
}

template <typename T>
std::vector<T> parse_list(const std::string& value, const std::string& where) {
    std::vector<T> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) throw ConfigError(where + ": empty list element");
        out.push_back(parse_number<T>(item, where));
    }
    if (out.empty()) throw ConfigError(where + ": empty list");
    return out;
}

}  // namespace

void PipelineConfig::validate() const {
    net.validate();
    finetune.validate();
    if (pretrain_steps < 0) throw ConfigError("pretrain.steps must be >= 0");
    if (pretrain_lr <= 0) throw ConfigError("pretrain.lr must be > 0");
    if (!(pretrain_q >= 0.1f && pretrain_q <= 512.0f))
        throw ConfigError("pretrain.q must lie in [0.1, 512]");
    if (bn_momentum < 0 || bn_momentum > 1) throw ConfigError("pretrain.bn_momentum must be in [0,1]");
    if (budget_bpp <= 0) throw ConfigError("encode.budget_bpp must be > 0");
    if (margin_bpp < 0 || margin_bpp >= budget_bpp)
        throw ConfigError("encode.margin_bpp must satisfy 0 <= M < budget");
    if (rate_tol < 0) throw ConfigError("encode.rate_tol must be >= 0");
    if (tau_grid.empty() || k_grid.empty()) throw ConfigError("sweep grids must be nonempty");
    for (double t : tau_grid)
        if (t < 0) throw ConfigError("sweep.tau_grid entries must be >= 0");
    for (int k : k_grid)
        if (k < 1 || k > 65535) throw ConfigError("sweep.k_grid entries must be in [1, 65535]");
}

PipelineConfig parse_config_text(const std::string& text, const std::string& name) {
    PipelineConfig cfg;

    const std::map<std::string, std::function<void(const std::string&, const std::string&)>>
        handlers{
            {"seed", [&](auto& v, auto& w) { cfg.seed = parse_number<std::uint64_t>(v, w); }},
            {"net.contracting", [&](auto& v, auto& w) { cfg.net.contracting = parse_list<int>(v, w); }},
            {"net.expansive", [&](auto& v, auto& w) { cfg.net.expansive = parse_list<int>(v, w); }},
            {"net.kernel", [&](auto& v, auto& w) { cfg.net.kernel = parse_number<int>(v, w); }},
            {"net.stride", [&](auto& v, auto& w) { cfg.net.stride = parse_number<int>(v, w); }},
            {"net.leaky_slope", [&](auto& v, auto& w) { cfg.net.leaky_slope = parse_number<double>(v, w); }},
            {"net.bn_eps", [&](auto& v, auto& w) { cfg.net.bn_eps = parse_number<double>(v, w); }},
            {"pretrain.steps", [&](auto& v, auto& w) { cfg.pretrain_steps = parse_number<int>(v, w); }},
            {"pretrain.lr", [&](auto& v, auto& w) { cfg.pretrain_lr = parse_number<float>(v, w); }},
            {"pretrain.q", [&](auto& v, auto& w) { cfg.pretrain_q = parse_number<float>(v, w); }},
            {"pretrain.bn_momentum", [&](auto& v, auto& w) { cfg.bn_momentum = parse_number<float>(v, w); }},
            {"finetune.m", [&](auto& v, auto& w) { cfg.finetune.m = parse_number<float>(v, w); }},
            {"finetune.phase1_steps", [&](auto& v, auto& w) { cfg.finetune.phase1_steps = parse_number<int>(v, w); }},
            {"finetune.mse_drop_ratio", [&](auto& v, auto& w) { cfg.finetune.mse_drop_ratio = parse_number<float>(v, w); }},
            {"finetune.total_steps", [&](auto& v, auto& w) { cfg.finetune.total_steps = parse_number<int>(v, w); }},
            {"finetune.lr", [&](auto& v, auto& w) { cfg.finetune.lr = parse_number<float>(v, w); }},
            {"finetune.alpha_ratio", [&](auto& v, auto& w) { cfg.finetune.alpha_ratio = parse_number<float>(v, w); }},
            {"finetune.report_tau", [&](auto& v, auto& w) { cfg.finetune.report_tau = parse_number<float>(v, w); }},
            {"encode.budget_bpp", [&](auto& v, auto& w) { cfg.budget_bpp = parse_number<double>(v, w); }},
            {"encode.margin_bpp", [&](auto& v, auto& w) { cfg.margin_bpp = parse_number<double>(v, w); }},
            {"encode.rate_tol", [&](auto& v, auto& w) { cfg.rate_tol = parse_number<double>(v, w); }},
            {"sweep.tau_grid", [&](auto& v, auto& w) { cfg.tau_grid = parse_list<double>(v, w); }},
            {"sweep.k_grid", [&](auto& v, auto& w) { cfg.k_grid = parse_list<int>(v, w); }},
        };

    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::string where = name + ":" + std::to_string(lineno);
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto it = handlers.find(key);
        if (it == handlers.end()) throw ConfigError(where + ": unknown key \"" + key + "\"");
        if (value.empty()) throw ConfigError(where + ": empty value for \"" + key + "\"");
        it->second(value, where);
    }
    cfg.validate();
    return cfg;
}

PipelineConfig parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw UsageError(path + ": cannot open config file");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str(), path);
}

std::string default_config_text() {
    const PipelineConfig c;
    std::stringstream ss;
    auto list_int = [](const std::vector<int>& v) {
        std::string s;
        for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
        return s;
    };
    auto list_dbl = [](const std::vector<double>& v) {
        std::string s;
        char buf[64];
        for (size_t i = 0; i < v.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%g", v[i]);
            s += (i ? "," : "") + std::string(buf);
        }
        return s;
    };
    ss << "seed = " << c.seed << "\n";
    ss << "net.contracting = " << list_int(c.net.contracting) << "\n";
    ss << "net.expansive = " << list_int(c.net.expansive) << "\n";
    ss << "net.kernel = " << c.net.kernel << "\n";
    ss << "net.stride = " << c.net.stride << "\n";
    ss << "net.leaky_slope = " << c.net.leaky_slope << "\n";
    ss << "net.bn_eps = " << c.net.bn_eps << "\n";
    ss << "pretrain.steps = " << c.pretrain_steps << "\n";
    ss << "pretrain.lr = " << c.pretrain_lr << "\n";
    ss << "pretrain.q = " << c.pretrain_q << "\n";
    ss << "pretrain.bn_momentum = " << c.bn_momentum << "\n";
    ss << "finetune.m = " << c.finetune.m << "\n";
    ss << "finetune.phase1_steps = " << c.finetune.phase1_steps << "\n";
    ss << "finetune.mse_drop_ratio = " << c.finetune.mse_drop_ratio << "\n";
    ss << "finetune.total_steps = " << c.finetune.total_steps << "\n";
    ss << "finetune.lr = " << c.finetune.lr << "\n";
    ss << "finetune.alpha_ratio = " << c.finetune.alpha_ratio << "\n";
    ss << "finetune.report_tau = " << c.finetune.report_tau << "\n";
    ss << "encode.budget_bpp = " << c.budget_bpp << "\n";
    ss << "encode.margin_bpp = " << c.margin_bpp << "\n";
    ss << "encode.rate_tol = " << c.rate_tol << "\n";
    ss << "sweep.tau_grid = " << list_dbl(c.tau_grid) << "\n";
    ss << "sweep.k_grid = " << list_int(c.k_grid) << "\n";
    return ss.str();
}

}  // namespace ntc
