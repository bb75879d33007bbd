#pragma once

// Run configuration: strict JSON parsing (unknown keys rejected, every
// error names the offending field or the line/column of a syntax error),
// normalization with defaults filled in, and the hashes that tag artifacts.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "sspod/ensemble.hpp"
#include "sspod/errors.hpp"
#include "sspod/io.hpp"
#include "sspod/problems.hpp"
#include "sspod/training.hpp"

namespace sspod {

using json = nlohmann::json;

class ConfigError : public Error {
public:
    ConfigError(const std::string& field, const std::string& what)
        : Error(field.empty() ? what : field + ": " + what), field_(field) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

/// Typed, path-aware access to one JSON object of the config.
class ConfigReader {
public:
    ConfigReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_, "expected an object");
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

    ConfigReader child(const std::string& key) {
        seen_.insert(key);
        if (!has(key)) return ConfigReader(json::object(), field(key));
        return ConfigReader(j_.at(key), field(key));
    }

    std::uint64_t unsigned_int(const std::string& key, std::optional<std::uint64_t> fallback = std::nullopt) {
        const json* v = lookup(key);
        if (v == nullptr) return required(key, fallback);
        if (v->is_number_unsigned()) return v->get<std::uint64_t>();
        if (v->is_number_integer() && v->get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v->get<std::int64_t>());
        if (v->is_number_float()) {
            const double d = v->get<double>();
            if (d >= 0.0 && d == std::floor(d) && d < 9.0e15) return static_cast<std::uint64_t>(d);
        }
        throw ConfigError(field(key), "expected a non-negative integer");
    }

    Index index(const std::string& key, Index min_value, std::optional<Index> fallback = std::nullopt) {
        const json* v = lookup(key);
        if (v == nullptr) return static_cast<Index>(required(key, fallback));
        const auto u = unsigned_int(key);
        if (u > static_cast<std::uint64_t>(1) << 40) throw ConfigError(field(key), "integer is too large");
        const auto i = static_cast<Index>(u);
        if (i < min_value) throw ConfigError(field(key), "must be >= " + std::to_string(min_value));
        return i;
    }

    double number(const std::string& key, std::optional<double> fallback = std::nullopt) {
        const json* v = lookup(key);
        if (v == nullptr) return required(key, fallback);
        if (!v->is_number()) throw ConfigError(field(key), "expected a number");
        const double d = v->get<double>();
        if (!std::isfinite(d)) throw ConfigError(field(key), "must be finite");
        return d;
    }

    double positive(const std::string& key, std::optional<double> fallback = std::nullopt) {
        const double d = number(key, fallback);
        if (!(d > 0.0)) throw ConfigError(field(key), "must be positive");
        return d;
    }

    double non_negative(const std::string& key, std::optional<double> fallback = std::nullopt) {
        const double d = number(key, fallback);
        if (!(d >= 0.0)) throw ConfigError(field(key), "must be non-negative");
        return d;
    }

    bool boolean(const std::string& key, std::optional<bool> fallback = std::nullopt) {
        const json* v = lookup(key);
        if (v == nullptr) return required(key, fallback);
        if (!v->is_boolean()) throw ConfigError(field(key), "expected true or false");
        return v->get<bool>();
    }

    std::string string(const std::string& key, std::optional<std::string> fallback = std::nullopt) {
        const json* v = lookup(key);
        if (v == nullptr) return required(key, fallback);
        if (!v->is_string()) throw ConfigError(field(key), "expected a string");
        return v->get<std::string>();
    }

    Vector vector(const std::string& key, Index size, std::optional<Vector> fallback = std::nullopt) {
        const json* v = lookup(key);
        if (v == nullptr) return required(key, fallback);
        if (!v->is_array()) throw ConfigError(field(key), "expected an array of numbers");
        if (static_cast<Index>(v->size()) != size) {
            throw ConfigError(field(key), "expected " + std::to_string(size) + " entries");
        }
        Vector out(size);
        for (Index i = 0; i < size; ++i) {
            const json& e = v->at(static_cast<std::size_t>(i));
            if (!e.is_number()) throw ConfigError(field(key) + "[" + std::to_string(i) + "]", "expected a number");
            out(i) = e.get<double>();
        }
        return out;
    }

    /// Reject keys that were never read.
    void finish() const {
        for (const auto& item : j_.items()) {
            if (seen_.count(item.key()) == 0) throw ConfigError(field(item.key()), "unknown key");
        }
    }

private:
    const json* lookup(const std::string& key) {
        seen_.insert(key);
        return has(key) ? &j_.at(key) : nullptr;
    }

    template <class T>
    T required(const std::string& key, const std::optional<T>& fallback) const {
        if (!fallback) throw ConfigError(field(key), "required");
        return *fallback;
    }

    json j_;
    std::string path_;
    std::set<std::string> seen_;
};

// ---------------------------------------------------------------------------
// Problem parameters

struct CubicParametricParams {
    Index n = 200;
    double alpha = 1e4;
    Index snapshots = 40;
    Vector mu_test = (Vector(5) << 0.5, 0.5, 0.5, 0.5, 1.0).finished();
    double newton_tolerance = 1e-10;
    int newton_max_iterations = 50;
};

struct StaticHdmErrorParams {
    Index n = 1000;
    Index perturbations = 100;
    double stiffness_ratio = 0.15;
    double noise_level = 0.05;
    Index sensors = 19;
    Vector force_weights = (Vector(5) << 0.5, 0.5, 0.5, 0.5, 1.0).finished();
    std::string snapshot_force = "nominal";  // or "lhs": random modal weights per perturbation
};

struct DynamicsSurrogateParams {
    SurrogateSpec spec;
    double dt = 1e-3;
    double t_end = 1.0;
    Index qoi_dof = 45;
    Index other_dof = 30;
    NewmarkParams newmark;
};

struct ProblemConfig {
    std::string kind;  // cubic_parametric | static_hdm_error | dynamics_surrogate
    CubicParametricParams cubic;
    StaticHdmErrorParams hdm_error;
    DynamicsSurrogateParams dynamics;
};

struct PodConfig {
    std::optional<Index> k;
    std::optional<double> energy_threshold;
    bool center = true;
};

struct TrainingSettings {
    std::size_t mc_samples = 1000;
    std::optional<double> beta_min;  // default k
    std::optional<double> beta_max;  // default 10 r
    double tolerance = 1e-3;
    int max_iterations = 100;
    // per_parameter: mean of per-set squared discrepancies; pooled: one
    // distance over all observation sets stacked into a single vector
    std::string aggregation = "per_parameter";
    RefinementConfig refinement;
};

struct EnsembleSettings {
    std::size_t count = 1000;
    double level = 0.95;
    FailurePolicy failure_policy = FailurePolicy::Abort;
};

struct RunConfig {
    std::uint64_t seed = 0;
    ProblemConfig problem;
    PodConfig pod;
    TrainingSettings training;
    EnsembleSettings ensemble;
    std::string output_directory = "out";

    /// Normalized config (defaults filled, output directory excluded).
    json echo() const;
    /// Hash of the whole normalized config; tags every artifact.
    std::string hash() const { return config_hash(echo()); }
    /// Hash of the part the training stage depends on (no ensemble block).
    std::string training_hash() const {
        json j = echo();
        j.erase("ensemble");
        return config_hash(j);
    }
};

namespace detail {

inline json vector_json(const Vector& v) {
    json a = json::array();
    for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

inline ProblemConfig parse_problem(ConfigReader r) {
    ProblemConfig p;
    p.kind = r.string("kind");
    if (p.kind == "cubic_parametric") {
        auto& c = p.cubic;
        c.n = r.index("n", 8, c.n);
        c.alpha = r.positive("alpha", c.alpha);
        c.snapshots = r.index("snapshots", 2, c.snapshots);
        c.mu_test = r.vector("mu_test", 5, c.mu_test);
        if (c.mu_test.minCoeff() < 0.0 || c.mu_test.maxCoeff() > 1.0) throw ConfigError(r.field("mu_test"), "entries must lie in [0, 1]");
        if (c.mu_test.cwiseAbs().maxCoeff() == 0.0) throw ConfigError(r.field("mu_test"), "must not be all zero");
        c.newton_tolerance = r.positive("newton_tolerance", c.newton_tolerance);
        c.newton_max_iterations = static_cast<int>(r.index("newton_max_iterations", 1, c.newton_max_iterations));
    } else if (p.kind == "static_hdm_error") {
        auto& c = p.hdm_error;
        c.n = r.index("n", 8, c.n);
        c.perturbations = r.index("perturbations", 2, c.perturbations);
        c.stiffness_ratio = r.non_negative("stiffness_ratio", c.stiffness_ratio);
        if (c.stiffness_ratio >= 1.0) throw ConfigError(r.field("stiffness_ratio"), "must be < 1");
        c.noise_level = r.non_negative("noise_level", c.noise_level);
        c.sensors = r.index("sensors", 1, c.sensors);
        if (c.sensors > c.n - 2) throw ConfigError(r.field("sensors"), "more sensors than interior nodes");
        c.force_weights = r.vector("force_weights", 5, c.force_weights);
        if (c.force_weights.cwiseAbs().maxCoeff() == 0.0) throw ConfigError(r.field("force_weights"), "must not be all zero");
        c.snapshot_force = r.string("snapshot_force", c.snapshot_force);
        if (c.snapshot_force != "nominal" && c.snapshot_force != "lhs") {
            throw ConfigError(r.field("snapshot_force"), "expected \"nominal\" or \"lhs\"");
        }
    } else if (p.kind == "dynamics_surrogate") {
        auto& c = p.dynamics;
        auto& s = c.spec;
        s.n = r.index("n", 10, s.n);
        s.bandwidth = r.index("bandwidth", 1, s.bandwidth);
        s.base_mass = r.positive("base_mass", s.base_mass);
        s.heavy_mass_ratio = r.positive("heavy_mass_ratio", s.heavy_mass_ratio);
        s.heavy_dof = r.index("heavy_dof", 0, s.heavy_dof);
        s.spring = r.positive("spring", s.spring);
        s.anchor = r.non_negative("anchor", s.anchor);
        s.rayleigh = r.non_negative("rayleigh", s.rayleigh);
        s.impulse_amplitude = r.number("impulse_amplitude", s.impulse_amplitude);
        s.impulse_duration = r.positive("impulse_duration", s.impulse_duration);
        c.dt = r.positive("dt", c.dt);
        c.t_end = r.positive("t_end", c.t_end);
        c.qoi_dof = r.index("qoi_dof", 0, c.qoi_dof);
        c.other_dof = r.index("other_dof", 0, c.other_dof);
        if (s.heavy_dof >= s.n) throw ConfigError(r.field("heavy_dof"), "DoF index must be < n");
        if (c.qoi_dof >= s.n) throw ConfigError(r.field("qoi_dof"), "DoF index must be < n");
        if (c.other_dof >= s.n) throw ConfigError(r.field("other_dof"), "DoF index must be < n");
        if (c.qoi_dof == c.other_dof) throw ConfigError(r.field("other_dof"), "must differ from qoi_dof");
        ConfigReader nm = r.child("newmark");
        c.newmark.gamma = nm.positive("gamma", c.newmark.gamma);
        c.newmark.beta = nm.positive("beta", c.newmark.beta);
        nm.finish();
    } else {
        throw ConfigError(r.field("kind"), "unknown problem kind '" + p.kind +
                                               "' (expected cubic_parametric, static_hdm_error or dynamics_surrogate)");
    }
    r.finish();
    return p;
}

inline json problem_json(const ProblemConfig& p) {
    json j;
    j["kind"] = p.kind;
    if (p.kind == "cubic_parametric") {
        const auto& c = p.cubic;
        j["n"] = c.n;
        j["alpha"] = c.alpha;
        j["snapshots"] = c.snapshots;
        j["mu_test"] = vector_json(c.mu_test);
        j["newton_tolerance"] = c.newton_tolerance;
        j["newton_max_iterations"] = c.newton_max_iterations;
    } else if (p.kind == "static_hdm_error") {
        const auto& c = p.hdm_error;
        j["n"] = c.n;
        j["perturbations"] = c.perturbations;
        j["stiffness_ratio"] = c.stiffness_ratio;
        j["noise_level"] = c.noise_level;
        j["sensors"] = c.sensors;
        j["force_weights"] = vector_json(c.force_weights);
        j["snapshot_force"] = c.snapshot_force;
    } else {
        const auto& c = p.dynamics;
        const auto& s = c.spec;
        j["n"] = s.n;
        j["bandwidth"] = s.bandwidth;
        j["base_mass"] = s.base_mass;
        j["heavy_mass_ratio"] = s.heavy_mass_ratio;
        j["heavy_dof"] = s.heavy_dof;
        j["spring"] = s.spring;
        j["anchor"] = s.anchor;
        j["rayleigh"] = s.rayleigh;
        j["impulse_amplitude"] = s.impulse_amplitude;
        j["impulse_duration"] = s.impulse_duration;
        j["dt"] = c.dt;
        j["t_end"] = c.t_end;
        j["qoi_dof"] = c.qoi_dof;
        j["other_dof"] = c.other_dof;
        j["newmark"] = {{"gamma", c.newmark.gamma}, {"beta", c.newmark.beta}};
    }
    return j;
}

}  // namespace detail

inline json RunConfig::echo() const {
    json j;
    j["seed"] = seed;
    j["problem"] = detail::problem_json(problem);
    json pod_j;
    if (pod.k) pod_j["k"] = *pod.k;
    if (pod.energy_threshold) pod_j["energy_threshold"] = *pod.energy_threshold;
    pod_j["center"] = pod.center;
    j["pod"] = pod_j;
    json t;
    t["mc_samples"] = training.mc_samples;
    t["beta_min"] = training.beta_min ? json(*training.beta_min) : json(nullptr);
    t["beta_max"] = training.beta_max ? json(*training.beta_max) : json(nullptr);
    t["tolerance"] = training.tolerance;
    t["max_iterations"] = training.max_iterations;
    t["aggregation"] = training.aggregation;
    t["refinement"] = {{"enabled", training.refinement.enabled},
                       {"half_width", training.refinement.half_width},
                       {"mc_samples", training.refinement.mc_samples},
                       {"tolerance", training.refinement.tolerance}};
    j["training"] = t;
    j["ensemble"] = {{"count", ensemble.count},
                     {"level", ensemble.level},
                     {"failure_policy", ensemble.failure_policy == FailurePolicy::Abort ? "abort" : "drop"}};
    return j;
}

inline RunConfig parse_config(const json& root) {
    ConfigReader r(root, "");
    RunConfig cfg;
    cfg.seed = r.unsigned_int("seed");
    if (!r.has("problem")) throw ConfigError("problem", "required");
    cfg.problem = detail::parse_problem(r.child("problem"));

    if (!r.has("pod")) throw ConfigError("pod", "required");
    ConfigReader pod = r.child("pod");
    if (pod.has("k") == pod.has("energy_threshold")) {
        throw ConfigError("pod", "set exactly one of \"k\" and \"energy_threshold\"");
    }
    if (pod.has("k")) cfg.pod.k = pod.index("k", 1);
    if (pod.has("energy_threshold")) {
        const double tau = pod.number("energy_threshold");
        if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("pod.energy_threshold", "must lie in (0, 1]");
        cfg.pod.energy_threshold = tau;
    }
    cfg.pod.center = pod.boolean("center", true);
    pod.finish();

    ConfigReader t = r.child("training");
    auto& ts = cfg.training;
    ts.mc_samples = static_cast<std::size_t>(t.index("mc_samples", 2, static_cast<Index>(ts.mc_samples)));
    if (t.has("beta_min")) ts.beta_min = t.positive("beta_min");
    if (t.has("beta_max")) ts.beta_max = t.positive("beta_max");
    if (ts.beta_min && ts.beta_max && *ts.beta_min > *ts.beta_max) {
        throw ConfigError("training.beta_max", "must be >= training.beta_min");
    }
    ts.tolerance = t.positive("tolerance", ts.tolerance);
    ts.max_iterations = static_cast<int>(t.index("max_iterations", 1, ts.max_iterations));
    ts.aggregation = t.string("aggregation", ts.aggregation);
    if (ts.aggregation != "per_parameter" && ts.aggregation != "pooled") {
        throw ConfigError("training.aggregation", "expected \"per_parameter\" or \"pooled\"");
    }
    ConfigReader ref = t.child("refinement");
    ts.refinement.enabled = ref.boolean("enabled", ts.refinement.enabled);
    ts.refinement.half_width = ref.non_negative("half_width", ts.refinement.half_width);
    ts.refinement.mc_samples =
        static_cast<std::size_t>(ref.index("mc_samples", 2, static_cast<Index>(ts.refinement.mc_samples)));
    ts.refinement.tolerance = ref.positive("tolerance", ts.refinement.tolerance);
    ref.finish();
    t.finish();

    ConfigReader e = r.child("ensemble");
    cfg.ensemble.count = static_cast<std::size_t>(e.index("count", 2, static_cast<Index>(cfg.ensemble.count)));
    cfg.ensemble.level = e.number("level", cfg.ensemble.level);
    if (!(cfg.ensemble.level > 0.0 && cfg.ensemble.level < 1.0)) throw ConfigError("ensemble.level", "must lie in (0, 1)");
    const std::string policy = e.string("failure_policy", "abort");
    if (policy == "abort") {
        cfg.ensemble.failure_policy = FailurePolicy::Abort;
    } else if (policy == "drop") {
        cfg.ensemble.failure_policy = FailurePolicy::DropAndRecord;
    } else {
        throw ConfigError("ensemble.failure_policy", "expected \"abort\" or \"drop\"");
    }
    e.finish();

    ConfigReader out = r.child("output");
    cfg.output_directory = out.string("directory", cfg.output_directory);
    out.finish();
    r.finish();
    return cfg;
}

/// Parse text, reporting syntax errors by line and column.
inline RunConfig parse_config_text(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        std::size_t line = 1, col = 1;
        const std::size_t end = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
        for (std::size_t i = 0; i < end; ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ConfigError("", "syntax error at line " + std::to_string(line) + ", column " + std::to_string(col) + ": " +
                                  e.what());
    }
    return parse_config(root);
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("", "cannot read config file " + path.string());
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config_text(text);
}

}  // namespace sspod
