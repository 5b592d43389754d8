#pragma once

// Versioned YAML experiment configuration.
//
//   version: 1
//   seeds: [0, 1, 2]
//   output_dir: runs/ho
//   train:            # every TrainConfig field, all optional
//     spec: ho1d:2
//     scheme: MPNN
//     hidden: [32, 128, 128]
//     ...
//     eta: 0.001
//     eta_schedule: cosine   # or constant
//     chain: {sigma: 0.5, burn_in: 1000, thinning: 5}
//   eval: {grid_points: 8000, grid_lo: -1, grid_hi: 1, test_samples: 20000}
//   table1:
//     systems:
//       - {spec: hydrogen, train: {steps: 50000}}
//       - {spec: "ho1d:2"}
//     schemes: [QPNN, QPNN+MS, MPNN]
//   sweep: {samples: [250, 500], schemes: [MPNN, QPNN], lambdas: [0, 1], hidden: [128, 128, 128]}
//   slice: {axis: z, offset: 0, points: 101}
//
// Unknown keys are rejected so that typos do not silently fall back to
// defaults.

#include "mpnn/errors.hpp"
#include "mpnn/trainer.hpp"

#include <yaml-cpp/yaml.h>

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

namespace mpnn {

inline constexpr int config_version = 1;

/// Invalid or unreadable configuration; `key` is the dotted path at fault.
class ConfigError : public InputError {
public:
    ConfigError(const std::string& key, const std::string& what)
        : InputError(key.empty() ? what : key + ": " + what), key_(key) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

struct EvalConfig {
    long grid_points = 8000; // total; split evenly over the axes
    double grid_lo = -1.0;
    double grid_hi = 1.0;
    long test_samples = 20000;

    /// Points per axis: round(grid_points^(1/D)).
    long per_axis(int dim) const {
        return std::max(2L, std::lround(std::pow(static_cast<double>(grid_points), 1.0 / dim)));
    }
};

struct SystemEntry {
    WavefunctionSpec spec;
    YAML::Node train; // overrides applied on top of the base train block
};

struct Table1Config {
    std::vector<SystemEntry> systems;
    std::vector<Scheme> schemes{Scheme::QPNN, Scheme::QPNN_MS, Scheme::MPNN};
};

struct SweepConfig {
    std::vector<long> samples{250, 500, 1000, 2000, 4000};
    std::vector<Scheme> schemes{Scheme::MPNN, Scheme::QPNN};
    std::vector<double> lambdas{0.0, 0.01, 0.1, 1.0, 10.0};
    std::array<int, 3> sample_hidden{128, 128, 128}; // sample-count sweep only
};

struct SliceConfig {
    int axis = 2; // the fixed axis, 0..2
    double offset = 0.0;
    long points = 101;
    double lo = -1.0;
    double hi = 1.0;
};

struct ExperimentConfig {
    int version = config_version;
    std::vector<std::uint64_t> seeds{0};
    std::filesystem::path output_dir = "runs";
    TrainConfig train;
    EvalConfig eval;
    Table1Config table1;
    SweepConfig sweep;
    SliceConfig slice;
};

namespace detail {

inline void reject_unknown(const YAML::Node& node, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!node) return;
    if (!node.IsMap()) throw ConfigError(where, "expected a mapping");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& kv : node) {
        const auto key = kv.first.as<std::string>();
        if (!ok.count(key)) throw ConfigError(where.empty() ? key : where + "." + key, "unknown key");
    }
}

template <class T>
T read(const YAML::Node& node, const std::string& key) {
    try {
        return node.as<T>();
    } catch (const YAML::Exception&) {
        throw ConfigError(key, "has the wrong type");
    }
}

template <class T>
void read_into(const YAML::Node& parent, const char* name, const std::string& where, T& out) {
    if (const auto n = parent[name]) out = read<T>(n, where + "." + name);
}

inline std::vector<Interval> read_box(const YAML::Node& n, const std::string& key) {
    std::vector<Interval> box;
    if (!n.IsSequence()) throw ConfigError(key, "expected a list of [lo, hi] pairs");
    for (const auto& item : n) {
        const auto pair = read<std::vector<double>>(item, key);
        if (pair.size() != 2) throw ConfigError(key, "each interval needs exactly two numbers");
        box.push_back({pair[0], pair[1]});
    }
    return box;
}

template <class E, class F>
E read_enum(const YAML::Node& n, const std::string& key, F&& parse) {
    try {
        return parse(read<std::string>(n, key));
    } catch (const ConfigError&) {
        throw;
    } catch (const InputError& e) {
        throw ConfigError(key, e.what());
    }
}

} // namespace detail

/// Applies the keys present in `node` to `cfg`; absent keys keep their value.
inline void apply_train_node(TrainConfig& cfg, const YAML::Node& node, const std::string& where = "train") {
    using namespace detail;
    if (!node || node.IsNull()) return;
    reject_unknown(node, where,
                   {"spec", "scheme", "hidden", "activation", "random_biases", "n_samples", "lambda", "pin_point",
                    "pin_value", "eta", "eta_schedule", "eta_floor", "steps", "delta", "resample_every", "qpnn_fd_step", "detach_energy",
                    "energy_variant", "history_every", "max_excluded_fraction", "chain", "box"});
    if (const auto n = node["spec"])
        cfg.spec = read_enum<WavefunctionSpec>(n, where + ".spec", [](const std::string& s) { return WavefunctionSpec::parse(s); });
    if (const auto n = node["scheme"]) cfg.scheme = read_enum<Scheme>(n, where + ".scheme", scheme_from_string);
    if (const auto n = node["activation"])
        cfg.activation = read_enum<Activation>(n, where + ".activation", activation_from_string);
    if (const auto n = node["energy_variant"])
        cfg.energy_variant = read_enum<EnergyVariant>(n, where + ".energy_variant", energy_variant_from_string);
    if (const auto n = node["hidden"]) {
        const auto h = read<std::vector<int>>(n, where + ".hidden");
        if (h.size() != 3) throw ConfigError(where + ".hidden", "needs exactly three widths");
        cfg.hidden = {h[0], h[1], h[2]};
    }
    read_into(node, "random_biases", where, cfg.random_biases);
    read_into(node, "n_samples", where, cfg.n_samples);
    read_into(node, "lambda", where, cfg.lambda);
    read_into(node, "pin_point", where, cfg.pin_point);
    if (const auto n = node["pin_value"]) {
        if (n.IsNull()) cfg.pin_value.reset();
        else cfg.pin_value = read<double>(n, where + ".pin_value");
    }
    read_into(node, "eta", where, cfg.eta);
    if (const auto n = node["eta_schedule"])
        cfg.eta_schedule = read_enum<EtaSchedule>(n, where + ".eta_schedule", eta_schedule_from_string);
    read_into(node, "eta_floor", where, cfg.eta_floor);
    read_into(node, "steps", where, cfg.steps);
    read_into(node, "delta", where, cfg.delta);
    read_into(node, "resample_every", where, cfg.resample_every);
    read_into(node, "qpnn_fd_step", where, cfg.qpnn_fd_step);
    read_into(node, "detach_energy", where, cfg.detach_energy);
    read_into(node, "history_every", where, cfg.history_every);
    read_into(node, "max_excluded_fraction", where, cfg.max_excluded_fraction);
    if (const auto c = node["chain"]) {
        reject_unknown(c, where + ".chain", {"sigma", "burn_in", "thinning"});
        read_into(c, "sigma", where + ".chain", cfg.chain_sigma);
        read_into(c, "burn_in", where + ".chain", cfg.chain_burn_in);
        read_into(c, "thinning", where + ".chain", cfg.chain_thinning);
    }
    if (const auto b = node["box"]) cfg.box = read_box(b, where + ".box");
}

/// Copy of `base` retargeted at `spec`; spec-dependent settings (pin, box)
/// fall back to their defaults when the spec changes.
inline TrainConfig with_spec(TrainConfig base, const WavefunctionSpec& spec) {
    if (!(base.spec == spec)) {
        base.pin_point.clear();
        base.pin_value.reset();
        base.box.clear();
        base.spec = spec;
    }
    return base;
}

/// Training settings of one Table 1 system: base block plus its overrides.
inline TrainConfig train_for_system(const TrainConfig& base, const SystemEntry& sys, const std::string& where = "table1") {
    auto cfg = with_spec(base, sys.spec);
    apply_train_node(cfg, sys.train, where + ".train");
    return cfg;
}

/// Validates a TrainConfig and rethrows failures as ConfigError under `where`.
inline void validate_train(const TrainConfig& cfg, const std::string& where) {
    try {
        cfg.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const InputError& e) {
        throw ConfigError(where, e.what());
    }
}

inline ExperimentConfig parse_config(const YAML::Node& root) {
    using namespace detail;
    ExperimentConfig c;
    if (!root || root.IsNull()) return c;
    reject_unknown(root, "", {"version", "seeds", "output_dir", "train", "eval", "table1", "sweep", "slice"});
    if (const auto v = root["version"]) {
        c.version = read<int>(v, "version");
        if (c.version != config_version)
            throw ConfigError("version", "unsupported version " + std::to_string(c.version) + " (expected " +
                                             std::to_string(config_version) + ")");
    }
    if (const auto s = root["seeds"]) {
        c.seeds = read<std::vector<std::uint64_t>>(s, "seeds");
        if (c.seeds.empty()) throw ConfigError("seeds", "needs at least one seed");
    }
    if (const auto o = root["output_dir"]) c.output_dir = read<std::string>(o, "output_dir");

    apply_train_node(c.train, root["train"]);
    validate_train(c.train, "train");

    if (const auto e = root["eval"]) {
        reject_unknown(e, "eval", {"grid_points", "grid_lo", "grid_hi", "test_samples"});
        read_into(e, "grid_points", "eval", c.eval.grid_points);
        read_into(e, "grid_lo", "eval", c.eval.grid_lo);
        read_into(e, "grid_hi", "eval", c.eval.grid_hi);
        read_into(e, "test_samples", "eval", c.eval.test_samples);
        if (c.eval.grid_points < 2) throw ConfigError("eval.grid_points", "must be >= 2");
        if (!(c.eval.grid_hi > c.eval.grid_lo)) throw ConfigError("eval.grid_hi", "must exceed grid_lo");
        if (c.eval.test_samples < 1) throw ConfigError("eval.test_samples", "must be >= 1");
    }

    if (const auto t = root["table1"]) {
        reject_unknown(t, "table1", {"systems", "schemes"});
        if (const auto sys = t["systems"]) {
            if (!sys.IsSequence() || sys.size() == 0) throw ConfigError("table1.systems", "needs a non-empty list");
            for (std::size_t i = 0; i < sys.size(); ++i) {
                const auto where = "table1.systems[" + std::to_string(i) + "]";
                reject_unknown(sys[i], where, {"spec", "train"});
                if (!sys[i]["spec"]) throw ConfigError(where + ".spec", "is required");
                SystemEntry entry;
                entry.spec = read_enum<WavefunctionSpec>(sys[i]["spec"], where + ".spec",
                                                         [](const std::string& s) { return WavefunctionSpec::parse(s); });
                entry.train = sys[i]["train"] ? YAML::Clone(sys[i]["train"]) : YAML::Node();
                validate_train(train_for_system(c.train, entry, where), where + ".train");
                c.table1.systems.push_back(std::move(entry));
            }
        }
        if (const auto s = t["schemes"]) {
            c.table1.schemes.clear();
            for (std::size_t i = 0; i < s.size(); ++i)
                c.table1.schemes.push_back(read_enum<Scheme>(s[i], "table1.schemes", scheme_from_string));
            if (c.table1.schemes.empty()) throw ConfigError("table1.schemes", "needs at least one scheme");
        }
    }

    if (const auto s = root["sweep"]) {
        reject_unknown(s, "sweep", {"samples", "schemes", "lambdas", "hidden"});
        if (const auto h = s["hidden"]) {
            const auto w = read<std::vector<int>>(h, "sweep.hidden");
            if (w.size() != 3) throw ConfigError("sweep.hidden", "needs exactly three widths");
            for (int x : w)
                if (x < 1) throw ConfigError("sweep.hidden", "widths must be >= 1");
            c.sweep.sample_hidden = {w[0], w[1], w[2]};
        }
        read_into(s, "samples", "sweep", c.sweep.samples);
        read_into(s, "lambdas", "sweep", c.sweep.lambdas);
        if (const auto sc = s["schemes"]) {
            c.sweep.schemes.clear();
            for (std::size_t i = 0; i < sc.size(); ++i)
                c.sweep.schemes.push_back(read_enum<Scheme>(sc[i], "sweep.schemes", scheme_from_string));
        }
        if (c.sweep.samples.empty()) throw ConfigError("sweep.samples", "needs at least one value");
        for (long n : c.sweep.samples)
            if (n < 1) throw ConfigError("sweep.samples", "values must be >= 1");
        if (c.sweep.lambdas.empty()) throw ConfigError("sweep.lambdas", "needs at least one value");
        for (double l : c.sweep.lambdas)
            if (!(l >= 0.0)) throw ConfigError("sweep.lambdas", "values must be >= 0");
        if (c.sweep.schemes.empty()) throw ConfigError("sweep.schemes", "needs at least one scheme");
    }

    if (const auto s = root["slice"]) {
        reject_unknown(s, "slice", {"axis", "offset", "points", "lo", "hi"});
        if (const auto a = s["axis"]) {
            const auto name = read<std::string>(a, "slice.axis");
            if (name == "x") c.slice.axis = 0;
            else if (name == "y") c.slice.axis = 1;
            else if (name == "z") c.slice.axis = 2;
            else throw ConfigError("slice.axis", "must be x, y or z");
        }
        read_into(s, "offset", "slice", c.slice.offset);
        read_into(s, "points", "slice", c.slice.points);
        read_into(s, "lo", "slice", c.slice.lo);
        read_into(s, "hi", "slice", c.slice.hi);
        if (c.slice.points < 2) throw ConfigError("slice.points", "must be >= 2");
        if (!(c.slice.hi > c.slice.lo)) throw ConfigError("slice.hi", "must exceed slice.lo");
    }
    return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    YAML::Node root;
    try {
        root = YAML::LoadFile(path.string());
    } catch (const YAML::BadFile&) {
        throw ConfigError("", "cannot read config file " + path.string());
    } catch (const YAML::Exception& e) {
        throw ConfigError("", "malformed YAML in " + path.string() + ": " + e.what());
    }
    return parse_config(root);
}

inline ExperimentConfig parse_config_string(const std::string& text) {
    try {
        return parse_config(YAML::Load(text));
    } catch (const YAML::ParserException& e) {
        throw ConfigError("", std::string("malformed YAML: ") + e.what());
    }
}

/// Echo of every training setting, for reports.
inline nlohmann::json to_json(const TrainConfig& c) {
    nlohmann::json box = nlohmann::json::array();
    for (const auto& iv : c.training_box()) box.push_back({iv.lo, iv.hi});
    return {{"spec", c.spec.name()},
            {"scheme", to_string(c.scheme)},
            {"hidden", c.hidden},
            {"activation", to_string(c.activation)},
            {"random_biases", c.random_biases},
            {"n_samples", c.n_samples},
            {"lambda", c.lambda},
            {"pin_point", c.pin()},
            {"pin_value", c.pin_target()},
            {"eta", c.eta},
            {"eta_schedule", to_string(c.eta_schedule)},
            {"eta_floor", c.eta_floor},
            {"steps", c.steps},
            {"delta", c.delta},
            {"seed", c.seed},
            {"resample_every", c.resample_every},
            {"qpnn_fd_step", c.qpnn_fd_step},
            {"detach_energy", c.detach_energy},
            {"energy_variant", to_string(c.energy_variant)},
            {"history_every", c.history_every},
            {"max_excluded_fraction", c.max_excluded_fraction},
            {"chain", {{"sigma", c.chain(1, 0).step_sigma}, {"burn_in", c.chain_burn_in}, {"thinning", c.chain_thinning}}},
            {"box", box}};
}

inline nlohmann::json to_json(const EvalConfig& e) {
    return {{"grid_points", e.grid_points}, {"grid_lo", e.grid_lo}, {"grid_hi", e.grid_hi}, {"test_samples", e.test_samples}};
}

} // namespace mpnn
