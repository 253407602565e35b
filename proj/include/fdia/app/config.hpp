#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "fdia/attack/attack.hpp"
#include "fdia/dataset/window.hpp"
#include "fdia/error.hpp"
#include "fdia/neural/train.hpp"
#include "fdia/pipeline/pipeline.hpp"
#include "fdia/powerflow/load_profile.hpp"

namespace fdia::app {

using nlohmann::json;

inline constexpr const char* kOutputDirEnv = "FDIA_OUTPUT_DIR";

struct ProfileConfig {
    std::size_t hours = 8760;
    double bus_jitter = 0.02;
    powerflow::SyntheticProfileParams synthetic;

    friend bool operator==(const ProfileConfig& a, const ProfileConfig& b) {
        const auto& x = a.synthetic;
        const auto& y = b.synthetic;
        return a.hours == b.hours && a.bus_jitter == b.bus_jitter && x.daily_amplitude == y.daily_amplitude &&
               x.weekly_amplitude == y.weekly_amplitude && x.seasonal_amplitude == y.seasonal_amplitude &&
               x.noise_sigma == y.noise_sigma && x.noise_correlation == y.noise_correlation;
    }
};

struct AttackConfig {
    attack::AttackMode mode = attack::AttackMode::random;
    double magnitude = 0.05;
    double min_magnitude = 0.02;
    std::vector<int> targets;
    double alpha = 0.05;
    int max_attempts = 10;
    double sigma_power = 0.01;
    double sigma_voltage = 0.004;

    friend bool operator==(const AttackConfig&, const AttackConfig&) = default;

    attack::AttackerConfig attacker() const {
        attack::AttackerConfig c;
        c.mode = mode;
        c.magnitude = magnitude;
        c.min_magnitude = min_magnitude;
        c.targets = targets;
        c.alpha = alpha;
        c.max_attempts = max_attempts;
        c.noise = {sigma_power, sigma_voltage};
        return c;
    }
};

struct ModelConfig {
    int enc1 = 32;
    int enc2 = 16;
    int dec1 = 32;
    neural::CellActivation activation = neural::CellActivation::relu;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TrainSettings {
    int epochs = 30;
    int batch_size = 32;
    double learning_rate = 1e-3;
    neural::OptimizerKind optimizer = neural::OptimizerKind::adam;
    double clip_norm = 5.0;
    int patience = 0;
    bool resume = false;

    friend bool operator==(const TrainSettings&, const TrainSettings&) = default;
};

struct HistogramConfig {
    int bins = 20;
    double max = 0.005;

    friend bool operator==(const HistogramConfig&, const HistogramConfig&) = default;
};

enum class DemoAttack { window, targeted, none };

struct DemoConfig {
    std::size_t window_index = 0;
    DemoAttack attack = DemoAttack::window;
    std::vector<int> targets{41};
    double magnitude = 0.05;

    friend bool operator==(const DemoConfig&, const DemoConfig&) = default;
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::string case_path;
    std::string load_csv_path;  // empty: synthetic profile
    ProfileConfig profile;
    int window = 5;
    std::size_t sample_count = 5000;
    dataset::Fractions fractions;
    double awgn_sigma = 0.002;
    AttackConfig attack;
    ModelConfig model;
    TrainSettings train;
    pipeline::IdentificationThresholds thresholds;
    HistogramConfig histogram;
    DemoConfig demo;
    std::string output_dir = "fdia-out";

    friend bool operator==(const RunConfig& a, const RunConfig& b) {
        return a.seed == b.seed && a.case_path == b.case_path && a.load_csv_path == b.load_csv_path &&
               a.profile == b.profile && a.window == b.window && a.sample_count == b.sample_count &&
               a.fractions.train == b.fractions.train && a.fractions.val == b.fractions.val &&
               a.fractions.test == b.fractions.test && a.awgn_sigma == b.awgn_sigma && a.attack == b.attack &&
               a.model == b.model && a.train == b.train && a.thresholds.theta == b.thresholds.theta &&
               a.thresholds.v == b.thresholds.v && a.histogram == b.histogram && a.demo == b.demo &&
               a.output_dir == b.output_dir;
    }

    neural::TrainConfig train_config() const {
        neural::TrainConfig c;
        c.epochs = train.epochs;
        c.batch_size = train.batch_size;
        c.learning_rate = train.learning_rate;
        c.optimizer = train.optimizer;
        c.seed = seed;
        c.clip_norm = train.clip_norm;
        c.patience = train.patience;
        return c;
    }
};

inline std::string default_case_path() { return std::string(FDIA_DATA_DIR) + "/ieee30.cdf"; }

namespace detail {

template <class T>
void read(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError("config section '" + where + "' must be an object");
    for (const auto& [key, value] : j.items()) {
        bool known = false;
        for (const char* a : allowed) known = known || key == a;
        if (!known) throw ConfigError("unknown config key '" + (where.empty() ? key : where + "." + key) + "'");
    }
}

inline std::string activation_name(neural::CellActivation a) {
    return a == neural::CellActivation::relu ? "relu" : "tanh";
}

inline neural::CellActivation activation_from(const std::string& s) {
    if (s == "relu") return neural::CellActivation::relu;
    if (s == "tanh") return neural::CellActivation::tanh;
    throw ConfigError("unknown activation '" + s + "' (expected relu or tanh)");
}

inline std::string optimizer_name(neural::OptimizerKind k) { return k == neural::OptimizerKind::adam ? "adam" : "sgd"; }

inline neural::OptimizerKind optimizer_from(const std::string& s) {
    if (s == "adam") return neural::OptimizerKind::adam;
    if (s == "sgd") return neural::OptimizerKind::sgd;
    throw ConfigError("unknown optimizer '" + s + "' (expected adam or sgd)");
}

inline std::string demo_attack_name(DemoAttack d) {
    switch (d) {
        case DemoAttack::window: return "window";
        case DemoAttack::targeted: return "targeted";
        case DemoAttack::none: return "none";
    }
    return "window";
}

inline DemoAttack demo_attack_from(const std::string& s) {
    if (s == "window") return DemoAttack::window;
    if (s == "targeted") return DemoAttack::targeted;
    if (s == "none") return DemoAttack::none;
    throw ConfigError("unknown demo attack '" + s + "' (expected window, targeted or none)");
}

}  // namespace detail

inline json to_json(const RunConfig& c) {
    const auto& s = c.profile.synthetic;
    return json{
        {"seed", c.seed},
        {"case_path", c.case_path},
        {"load_csv_path", c.load_csv_path},
        {"profile",
         {{"hours", c.profile.hours},
          {"bus_jitter", c.profile.bus_jitter},
          {"daily_amplitude", s.daily_amplitude},
          {"weekly_amplitude", s.weekly_amplitude},
          {"seasonal_amplitude", s.seasonal_amplitude},
          {"noise_sigma", s.noise_sigma},
          {"noise_correlation", s.noise_correlation}}},
        {"window", c.window},
        {"sample_count", c.sample_count},
        {"fractions", {c.fractions.train, c.fractions.val, c.fractions.test}},
        {"awgn_sigma", c.awgn_sigma},
        {"attack",
         {{"mode", attack::to_string(c.attack.mode)},
          {"magnitude", c.attack.magnitude},
          {"min_magnitude", c.attack.min_magnitude},
          {"targets", c.attack.targets},
          {"alpha", c.attack.alpha},
          {"max_attempts", c.attack.max_attempts},
          {"sigma_power", c.attack.sigma_power},
          {"sigma_voltage", c.attack.sigma_voltage}}},
        {"model",
         {{"enc1", c.model.enc1},
          {"enc2", c.model.enc2},
          {"dec1", c.model.dec1},
          {"activation", detail::activation_name(c.model.activation)}}},
        {"train",
         {{"epochs", c.train.epochs},
          {"batch_size", c.train.batch_size},
          {"learning_rate", c.train.learning_rate},
          {"optimizer", detail::optimizer_name(c.train.optimizer)},
          {"clip_norm", c.train.clip_norm},
          {"patience", c.train.patience},
          {"resume", c.train.resume}}},
        {"thresholds", {{"theta", c.thresholds.theta}, {"v", c.thresholds.v}}},
        {"histogram", {{"bins", c.histogram.bins}, {"max", c.histogram.max}}},
        {"demo",
         {{"window_index", c.demo.window_index},
          {"attack", detail::demo_attack_name(c.demo.attack)},
          {"targets", c.demo.targets},
          {"magnitude", c.demo.magnitude}}},
        {"output_dir", c.output_dir},
    };
}

/// Builds a config from JSON. Missing keys keep their defaults except `seed`,
/// which is mandatory; unknown keys are rejected.
inline RunConfig config_from_json(const json& j) {
    using detail::read;
    detail::check_keys(j,
                       {"seed", "case_path", "load_csv_path", "profile", "window", "sample_count", "fractions",
                        "awgn_sigma", "attack", "model", "train", "thresholds", "histogram", "demo", "output_dir"},
                       "");
    if (!j.contains("seed") || j.at("seed").is_null()) throw ConfigError("config must set 'seed'");
    if (!j.at("seed").is_number_unsigned() && !(j.at("seed").is_number_integer() && j.at("seed").get<long long>() >= 0)) {
        throw ConfigError("'seed' must be a non-negative integer");
    }
    RunConfig c;
    c.case_path = default_case_path();
    read(j, "seed", c.seed);
    read(j, "case_path", c.case_path);
    read(j, "load_csv_path", c.load_csv_path);
    if (j.contains("profile")) {
        const auto& p = j.at("profile");
        detail::check_keys(p,
                           {"hours", "bus_jitter", "daily_amplitude", "weekly_amplitude", "seasonal_amplitude",
                            "noise_sigma", "noise_correlation"},
                           "profile");
        read(p, "hours", c.profile.hours);
        read(p, "bus_jitter", c.profile.bus_jitter);
        read(p, "daily_amplitude", c.profile.synthetic.daily_amplitude);
        read(p, "weekly_amplitude", c.profile.synthetic.weekly_amplitude);
        read(p, "seasonal_amplitude", c.profile.synthetic.seasonal_amplitude);
        read(p, "noise_sigma", c.profile.synthetic.noise_sigma);
        read(p, "noise_correlation", c.profile.synthetic.noise_correlation);
    }
    read(j, "window", c.window);
    read(j, "sample_count", c.sample_count);
    if (j.contains("fractions")) {
        std::vector<double> f;
        read(j, "fractions", f);
        if (f.size() != 3) throw ConfigError("'fractions' must have three entries (train, val, test)");
        c.fractions = {f[0], f[1], f[2]};
    }
    read(j, "awgn_sigma", c.awgn_sigma);
    if (j.contains("attack")) {
        const auto& a = j.at("attack");
        detail::check_keys(a,
                           {"mode", "magnitude", "min_magnitude", "targets", "alpha", "max_attempts", "sigma_power",
                            "sigma_voltage"},
                           "attack");
        std::string mode = attack::to_string(c.attack.mode);
        read(a, "mode", mode);
        try {
            c.attack.mode = attack::attack_mode_from_string(mode);
        } catch (const Error& e) {
            throw ConfigError(e.what());
        }
        read(a, "magnitude", c.attack.magnitude);
        read(a, "min_magnitude", c.attack.min_magnitude);
        read(a, "targets", c.attack.targets);
        read(a, "alpha", c.attack.alpha);
        read(a, "max_attempts", c.attack.max_attempts);
        read(a, "sigma_power", c.attack.sigma_power);
        read(a, "sigma_voltage", c.attack.sigma_voltage);
    }
    if (j.contains("model")) {
        const auto& m = j.at("model");
        detail::check_keys(m, {"enc1", "enc2", "dec1", "activation"}, "model");
        read(m, "enc1", c.model.enc1);
        read(m, "enc2", c.model.enc2);
        read(m, "dec1", c.model.dec1);
        std::string act = detail::activation_name(c.model.activation);
        read(m, "activation", act);
        c.model.activation = detail::activation_from(act);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        detail::check_keys(t, {"epochs", "batch_size", "learning_rate", "optimizer", "clip_norm", "patience", "resume"},
                           "train");
        read(t, "epochs", c.train.epochs);
        read(t, "batch_size", c.train.batch_size);
        read(t, "learning_rate", c.train.learning_rate);
        std::string opt = detail::optimizer_name(c.train.optimizer);
        read(t, "optimizer", opt);
        c.train.optimizer = detail::optimizer_from(opt);
        read(t, "clip_norm", c.train.clip_norm);
        read(t, "patience", c.train.patience);
        read(t, "resume", c.train.resume);
    }
    if (j.contains("thresholds")) {
        const auto& t = j.at("thresholds");
        detail::check_keys(t, {"theta", "v"}, "thresholds");
        read(t, "theta", c.thresholds.theta);
        read(t, "v", c.thresholds.v);
    }
    if (j.contains("histogram")) {
        const auto& h = j.at("histogram");
        detail::check_keys(h, {"bins", "max"}, "histogram");
        read(h, "bins", c.histogram.bins);
        read(h, "max", c.histogram.max);
    }
    if (j.contains("demo")) {
        const auto& d = j.at("demo");
        detail::check_keys(d, {"window_index", "attack", "targets", "magnitude"}, "demo");
        read(d, "window_index", c.demo.window_index);
        std::string mode = detail::demo_attack_name(c.demo.attack);
        read(d, "attack", mode);
        c.demo.attack = detail::demo_attack_from(mode);
        read(d, "targets", c.demo.targets);
        read(d, "magnitude", c.demo.magnitude);
    }
    read(j, "output_dir", c.output_dir);
    return c;
}

/// Checks value ranges and that referenced input files exist.
inline void validate(const RunConfig& c) {
    auto fail = [](const std::string& what) { throw ConfigError(what); };
    namespace fs = std::filesystem;
    if (c.case_path.empty() || !fs::is_regular_file(c.case_path)) fail("case file '" + c.case_path + "' not found");
    if (!c.load_csv_path.empty() && !fs::is_regular_file(c.load_csv_path)) {
        fail("load CSV '" + c.load_csv_path + "' not found");
    }
    if (c.profile.hours < 1) fail("profile.hours must be positive");
    if (c.profile.bus_jitter < 0.0 || c.profile.bus_jitter >= 1.0) fail("profile.bus_jitter must lie in [0, 1)");
    if (c.window < 2) fail("window must be at least 2");
    if (c.sample_count < 3) fail("sample_count must be at least 3");
    try {
        dataset::validate_fractions(c.fractions);
    } catch (const ValidationError& e) {
        fail(e.what());
    }
    if (c.awgn_sigma < 0.0) fail("awgn_sigma must be non-negative");
    if (!(c.attack.magnitude > 0.0)) fail("attack.magnitude must be positive");
    if (c.attack.min_magnitude < 0.0 || c.attack.min_magnitude > c.attack.magnitude) {
        fail("attack.min_magnitude must lie in [0, magnitude]");
    }
    if (c.attack.mode == attack::AttackMode::targeted && c.attack.targets.empty()) {
        fail("targeted attacks need attack.targets");
    }
    if (!(c.attack.alpha > 0.0 && c.attack.alpha < 1.0)) fail("attack.alpha must lie in (0, 1)");
    if (c.attack.max_attempts < 1) fail("attack.max_attempts must be positive");
    if (!(c.attack.sigma_power > 0.0) || !(c.attack.sigma_voltage > 0.0)) fail("measurement sigmas must be positive");
    if (c.model.enc1 < 1 || c.model.enc2 < 1 || c.model.dec1 < 1) fail("model layer sizes must be positive");
    if (c.train.epochs < 1) fail("train.epochs must be at least 1");
    if (c.train.batch_size < 1) fail("train.batch_size must be positive");
    if (!(c.train.learning_rate > 0.0)) fail("train.learning_rate must be positive");
    if (c.train.patience < 0) fail("train.patience must be non-negative");
    if (!(c.thresholds.theta > 0.0) || !(c.thresholds.v > 0.0)) fail("thresholds must be positive");
    if (c.histogram.bins < 1 || !(c.histogram.max > 0.0)) fail("histogram needs bins >= 1 and max > 0");
    if (c.demo.attack == DemoAttack::targeted && c.demo.targets.empty()) fail("targeted demo needs demo.targets");
    if (c.output_dir.empty()) fail("output_dir must not be empty");
}

/// Applies one `a.b.c=value` override. The value is parsed as JSON when
/// possible and taken as a string otherwise.
inline void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
    const std::string path = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    json* node = &doc;
    std::size_t begin = 0;
    while (true) {
        const auto dot = path.find('.', begin);
        const std::string key = path.substr(begin, dot == std::string::npos ? std::string::npos : dot - begin);
        if (key.empty()) throw ConfigError("override path '" + path + "' has an empty component");
        if (!node->is_object()) throw ConfigError("override path '" + path + "' descends into a non-object");
        if (dot == std::string::npos) {
            (*node)[key] = std::move(value);
            return;
        }
        node = &(*node)[key];
        if (node->is_null()) *node = json::object();
        begin = dot + 1;
    }
}

/// Reads the config file (if any), applies overrides and the output-directory
/// environment variable, and validates the result.
inline RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    json doc = json::object();
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config '" + path + "'");
        doc = json::parse(in, nullptr, false);
        if (doc.is_discarded()) throw ConfigError("config '" + path + "' is not valid JSON");
    }
    for (const auto& o : overrides) apply_override(doc, o);
    RunConfig c = config_from_json(doc);
    if (const char* env = std::getenv(kOutputDirEnv); env && *env) c.output_dir = env;
    validate(c);
    return c;
}

}  // namespace fdia::app
