#ifndef RRL_CONFIG_HPP
#define RRL_CONFIG_HPP

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rrl/errors.hpp"
#include "rrl/sac.hpp"

namespace rrl {

// Minimal TOML-style key/value format: `key = value` lines, `#` comments,
// strings in double quotes, numbers, booleans, flat arrays like [0, 1, 2].
struct ConfigValue {
    enum class Type { String, Number, Bool, Array } type = Type::Number;
    std::string str;
    double num = 0.0;
    bool boolean = false;
    std::vector<double> array;
};

using ConfigMap = std::map<std::string, ConfigValue>;

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline ConfigValue parse_value(const std::string& raw, int line_no, const std::string& key) {
    ConfigValue v;
    const std::string s = trim(raw);
    if (s.empty())
        throw ConfigError("config line " + std::to_string(line_no) + ": field '" + key +
                          "' has no value");
    if (s.front() == '"') {
        if (s.size() < 2 || s.back() != '"')
            throw ConfigError("config line " + std::to_string(line_no) + ": field '" + key +
                              "': unterminated string");
        v.type = ConfigValue::Type::String;
        v.str = s.substr(1, s.size() - 2);
        return v;
    }
    if (s == "true" || s == "false") {
        v.type = ConfigValue::Type::Bool;
        v.boolean = (s == "true");
        return v;
    }
    if (s.front() == '[') {
        if (s.back() != ']')
            throw ConfigError("config line " + std::to_string(line_no) + ": field '" + key +
                              "': unterminated array");
        v.type = ConfigValue::Type::Array;
        std::stringstream ss(s.substr(1, s.size() - 2));
        std::string item;
        while (std::getline(ss, item, ',')) {
            const std::string it = trim(item);
            if (it.empty()) continue;
            try {
                std::size_t pos = 0;
                v.array.push_back(std::stod(it, &pos));
                if (pos != it.size()) throw std::invalid_argument(it);
            } catch (const std::exception&) {
                throw ConfigError("config line " + std::to_string(line_no) + ": field '" + key +
                                  "': bad array element '" + it + "'");
            }
        }
        return v;
    }
    try {
        std::size_t pos = 0;
        v.num = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        v.type = ConfigValue::Type::Number;
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config line " + std::to_string(line_no) + ": field '" + key +
                          "': cannot parse value '" + s + "'");
    }
}

} // namespace detail

inline ConfigMap config_parse_stream(std::istream& is) {
    ConfigMap out;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const std::string t = detail::trim(line);
        if (t.empty()) continue;
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = detail::trim(t.substr(0, eq));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        out[key] = detail::parse_value(t.substr(eq + 1), line_no, key);
    }
    return out;
}

inline ConfigMap config_parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path);
    return config_parse_stream(is);
}

// --- run configuration ------------------------------------------------------

struct RunConfig {
    std::string env = "reach2d";
    std::string method = "scratch_sac";
    std::string base_policy_path;
    std::string base_policy_kind = "mixture";
    std::string dataset_path;

    double u_max = 0.0;
    double decay_rate = 50000.0;
    std::string decay_kind = "exp_to_zero";
    double min_tau = 0.0;

    SACConfig sac;

    std::vector<std::uint64_t> seeds = {0};
    std::uint64_t total_env_steps = 150000;
    std::uint64_t eval_interval = 5000;
    std::size_t eval_episodes = 50;
    std::uint64_t log_interval = 1000;
    std::string out_dir = "out";
};

inline DecayKind decay_kind_from_string(const std::string& s) {
    if (s == "exp_to_zero") return DecayKind::ExpToZero;
    if (s == "exp_to_min") return DecayKind::ExpToMin;
    if (s == "constant") return DecayKind::Constant;
    throw ConfigError("unknown decay kind '" + s + "'");
}

inline RunConfig run_config_from_map(const ConfigMap& m) {
    RunConfig c;
    auto str = [&](const char* k, std::string& dst) {
        auto it = m.find(k);
        if (it == m.end()) return;
        if (it->second.type != ConfigValue::Type::String)
            throw ConfigError(std::string("field '") + k + "' must be a string");
        dst = it->second.str;
    };
    auto num = [&](const char* k, auto& dst) {
        auto it = m.find(k);
        if (it == m.end()) return;
        if (it->second.type != ConfigValue::Type::Number)
            throw ConfigError(std::string("field '") + k + "' must be a number");
        dst = static_cast<std::remove_reference_t<decltype(dst)>>(it->second.num);
    };
    str("env", c.env);
    str("method", c.method);
    str("base_policy", c.base_policy_path);
    str("base_policy_kind", c.base_policy_kind);
    str("dataset", c.dataset_path);
    num("u_max", c.u_max);
    num("decay_rate", c.decay_rate);
    str("decay_kind", c.decay_kind);
    decay_kind_from_string(c.decay_kind);  // validate
    num("min_tau", c.min_tau);
    num("gamma", c.sac.gamma);
    num("rho", c.sac.rho);
    num("batch_size", c.sac.batch_size);
    num("actor_lr", c.sac.actor_lr);
    num("critic_lr", c.sac.critic_lr);
    num("alpha_lr", c.sac.alpha_lr);
    num("target_entropy", c.sac.target_entropy);
    num("init_alpha", c.sac.init_alpha);
    num("warmup_steps", c.sac.warmup_steps);
    num("updates_per_step", c.sac.updates_per_step);
    num("capacity", c.sac.capacity);
    num("total_env_steps", c.total_env_steps);
    num("eval_interval", c.eval_interval);
    num("eval_episodes", c.eval_episodes);
    num("log_interval", c.log_interval);
    str("out_dir", c.out_dir);
    if (auto it = m.find("hidden"); it != m.end()) {
        if (it->second.type != ConfigValue::Type::Array)
            throw ConfigError("field 'hidden' must be an array");
        c.sac.hidden.clear();
        for (double v : it->second.array) c.sac.hidden.push_back(static_cast<std::size_t>(v));
    }
    if (auto it = m.find("seeds"); it != m.end()) {
        if (it->second.type != ConfigValue::Type::Array)
            throw ConfigError("field 'seeds' must be an array");
        c.seeds.clear();
        for (double v : it->second.array) c.seeds.push_back(static_cast<std::uint64_t>(v));
    }
    if (c.sac.gamma <= 0.0 || c.sac.gamma >= 1.0) throw ConfigError("gamma must be in (0,1)");
    if (c.seeds.empty()) throw ConfigError("seeds must not be empty");
    return c;
}

inline RunConfig run_config_load(const std::string& path) {
    return run_config_from_map(config_parse_file(path));
}

inline std::string run_config_serialize(const RunConfig& c) {
    std::ostringstream os;
    os.precision(17);
    os << "env = \"" << c.env << "\"\n";
    os << "method = \"" << c.method << "\"\n";
    os << "base_policy = \"" << c.base_policy_path << "\"\n";
    os << "base_policy_kind = \"" << c.base_policy_kind << "\"\n";
    os << "dataset = \"" << c.dataset_path << "\"\n";
    os << "u_max = " << c.u_max << "\n";
    os << "decay_rate = " << c.decay_rate << "\n";
    os << "decay_kind = \"" << c.decay_kind << "\"\n";
    os << "min_tau = " << c.min_tau << "\n";
    os << "gamma = " << c.sac.gamma << "\n";
    os << "rho = " << c.sac.rho << "\n";
    os << "batch_size = " << c.sac.batch_size << "\n";
    os << "actor_lr = " << c.sac.actor_lr << "\n";
    os << "critic_lr = " << c.sac.critic_lr << "\n";
    os << "alpha_lr = " << c.sac.alpha_lr << "\n";
    os << "target_entropy = " << c.sac.target_entropy << "\n";
    os << "init_alpha = " << c.sac.init_alpha << "\n";
    os << "warmup_steps = " << c.sac.warmup_steps << "\n";
    os << "updates_per_step = " << c.sac.updates_per_step << "\n";
    os << "capacity = " << c.sac.capacity << "\n";
    os << "hidden = [";
    for (std::size_t i = 0; i < c.sac.hidden.size(); ++i)
        os << (i ? ", " : "") << c.sac.hidden[i];
    os << "]\n";
    os << "seeds = [";
    for (std::size_t i = 0; i < c.seeds.size(); ++i) os << (i ? ", " : "") << c.seeds[i];
    os << "]\n";
    os << "total_env_steps = " << c.total_env_steps << "\n";
    os << "eval_interval = " << c.eval_interval << "\n";
    os << "eval_episodes = " << c.eval_episodes << "\n";
    os << "log_interval = " << c.log_interval << "\n";
    os << "out_dir = \"" << c.out_dir << "\"\n";
    return os.str();
}

} // namespace rrl

#endif
