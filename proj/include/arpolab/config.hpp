#pragma once

#include "arpolab/io.hpp"
#include "arpolab/trainers.hpp"

#include <filesystem>
#include <map>

namespace arpolab {

/// Parsed experiment configuration with consumed-key tracking: every key a
/// command does not recognize is a hard error, reported with its line number.
class ExperimentConfig {
public:
    static ExperimentConfig parse(std::istream& in, const std::string& origin = "<config>") {
        ExperimentConfig cfg;
        cfg.origin_ = origin;
        for (auto& sec : iodetail::parse_sections(in)) {
            for (auto& e : sec.entries)
                cfg.entries_.push_back(Slot{sec.name, e.key, e.value, e.line, false});
        }
        return cfg;
    }

    static ExperimentConfig parse_file(const std::string& path) {
        std::ifstream in(path);
        require(in.good(), ErrorKind::Io, "cannot open config file: " + path);
        std::stringstream buf;
        buf << in.rdbuf();
        ExperimentConfig cfg = parse(buf, path);
        cfg.raw_text_ = buf.str();
        cfg.base_dir_ = std::filesystem::path(path).parent_path().string();
        return cfg;
    }

    const std::string& raw_text() const { return raw_text_; }

    bool has(const std::string& section, const std::string& key) const {
        return find(section, key) != nullptr;
    }

    std::string get_string(const std::string& section, const std::string& key) {
        const Slot* s = take(section, key);
        require(s != nullptr, ErrorKind::ConfigParse,
                origin_ + ": missing required key '" + key + "' in [" + section + "]");
        return s->value;
    }

    std::string get_string(const std::string& section, const std::string& key,
                           const std::string& fallback) {
        const Slot* s = take(section, key);
        return s ? s->value : fallback;
    }

    double get_double(const std::string& section, const std::string& key, double fallback) {
        const Slot* s = take(section, key);
        return s ? iodetail::parse_double(s->value, s->line) : fallback;
    }

    double get_double(const std::string& section, const std::string& key) {
        const Slot* s = take(section, key);
        require(s != nullptr, ErrorKind::ConfigParse,
                origin_ + ": missing required key '" + key + "' in [" + section + "]");
        return iodetail::parse_double(s->value, s->line);
    }

    long get_int(const std::string& section, const std::string& key, long fallback) {
        const Slot* s = take(section, key);
        return s ? iodetail::parse_int(s->value, s->line) : fallback;
    }

    bool get_bool(const std::string& section, const std::string& key, bool fallback) {
        const Slot* s = take(section, key);
        if (!s) return fallback;
        if (s->value == "true") return true;
        if (s->value == "false") return false;
        iodetail::parse_fail(s->line, "expected true or false, got '" + s->value + "'");
    }

    /// Resolves a path key relative to the config file location and checks it
    /// exists now, not at first use.
    std::string get_path(const std::string& section, const std::string& key) {
        const Slot* s = take(section, key);
        require(s != nullptr, ErrorKind::ConfigParse,
                origin_ + ": missing required key '" + key + "' in [" + section + "]");
        std::filesystem::path p(s->value);
        if (p.is_relative() && !base_dir_.empty()) p = std::filesystem::path(base_dir_) / p;
        require(std::filesystem::exists(p), ErrorKind::ConfigParse,
                origin_ + ": line " + std::to_string(s->line) + ": referenced file does not exist: " +
                    p.string());
        return p.string();
    }

    /// Call after a command consumed everything it understands.
    void reject_unconsumed() const {
        for (const Slot& s : entries_)
            require(s.consumed, ErrorKind::ConfigParse,
                    origin_ + ": line " + std::to_string(s.line) + ": unknown key '" + s.key +
                        "' in [" + s.section + "]");
    }

private:
    struct Slot {
        std::string section, key, value;
        int line = 0;
        bool consumed = false;
    };

    const Slot* find(const std::string& section, const std::string& key) const {
        for (const Slot& s : entries_)
            if (s.section == section && s.key == key) return &s;
        return nullptr;
    }

    Slot* take(const std::string& section, const std::string& key) {
        for (Slot& s : entries_)
            if (s.section == section && s.key == key) {
                s.consumed = true;
                return &s;
            }
        return nullptr;
    }

    std::vector<Slot> entries_;
    std::string raw_text_;
    std::string origin_;
    std::string base_dir_;
};

/// Shared [inner] section consumed by train/attack/basins commands.
inline InnerSolverConfig inner_config_from(ExperimentConfig& cfg, double default_eps = 0.0) {
    InnerSolverConfig inner;
    inner.eps = cfg.get_double("inner", "eps", default_eps);
    inner.steps = static_cast<int>(cfg.get_int("inner", "steps", 10));
    inner.step_size = cfg.get_double("inner", "step_size", inner.eps > 0 ? inner.eps / 10.0 : 1e-3);
    inner.delta = cfg.get_double("inner", "delta", 0.0);
    inner.temperature = cfg.get_double("inner", "temperature", 1e-5);
    inner.n_traj = cfg.get_int("inner", "n_traj", 256);
    inner.horizon = static_cast<int>(cfg.get_int("inner", "horizon", 0));
    inner.exact_gradient = cfg.get_bool("inner", "exact_gradient", false);
    inner.corner_init = cfg.get_bool("inner", "corner_init", false);
    return inner;
}

inline TrainerConfig trainer_config_from(ExperimentConfig& cfg, std::uint64_t seed) {
    TrainerConfig tc;
    std::string paradigm = cfg.get_string("trainer", "paradigm");
    if (paradigm == "spo")
        tc.paradigm = Paradigm::Spo;
    else if (paradigm == "arpo")
        tc.paradigm = Paradigm::Arpo;
    else if (paradigm == "barpo")
        tc.paradigm = Paradigm::Barpo;
    else
        fail(ErrorKind::ConfigParse, "unknown paradigm '" + paradigm + "'");
    tc.outer_steps = static_cast<int>(cfg.get_int("trainer", "outer_steps", 100));
    tc.outer_step_size = cfg.get_double("trainer", "outer_step_size", 0.1);
    std::string sched = cfg.get_string("trainer", "step_schedule", "constant");
    if (sched == "constant")
        tc.schedule = StepSchedule::Constant;
    else if (sched == "one_over_sqrt_k")
        tc.schedule = StepSchedule::OneOverSqrtK;
    else
        fail(ErrorKind::ConfigParse, "unknown step_schedule '" + sched + "'");
    std::string mode = cfg.get_string("trainer", "gradient_mode", "exact");
    if (mode == "exact")
        tc.monte_carlo = false;
    else if (mode == "monte_carlo")
        tc.monte_carlo = true;
    else
        fail(ErrorKind::ConfigParse, "unknown gradient_mode '" + mode + "'");
    tc.n_traj = cfg.get_int("trainer", "n_traj", 256);
    tc.horizon = static_cast<int>(cfg.get_int("trainer", "horizon", 0));
    tc.kappa = cfg.get_double("trainer", "kappa", 0.0);
    tc.clip_eta = cfg.get_double("trainer", "clip_eta", 0.2);
    tc.entropy_coeff = cfg.get_double("trainer", "entropy_coeff", 0.0);
    tc.record_exact_strongest = cfg.get_bool("trainer", "record_exact_strongest", true);
    tc.inner = inner_config_from(cfg);
    tc.seed = seed;
    tc.validate();
    return tc;
}

/// [mdp] section: source = builtin_toy | builtin_toy_singleton, or file = PATH.
inline TabularIsaMdp mdp_from(ExperimentConfig& cfg) {
    if (cfg.has("mdp", "file")) return load_mdp_file(cfg.get_path("mdp", "file"));
    std::string source = cfg.get_string("mdp", "source", "builtin_toy");
    double gamma = cfg.get_double("mdp", "gamma", 0.9);
    if (source == "builtin_toy") return toy_isa_mdp(gamma);
    if (source == "builtin_toy_singleton") return toy_isa_mdp_singleton(gamma);
    fail(ErrorKind::ConfigParse, "unknown mdp source '" + source + "'");
}

/// [policy] section: either file = PATH or an inline variant description.
inline PolicySpec policy_from(ExperimentConfig& cfg, const TabularIsaMdp& mdp) {
    if (cfg.has("policy", "file")) return load_policy_file(cfg.get_path("policy", "file"));
    std::string variant = cfg.get_string("policy", "variant", "direct2");
    if (variant == "direct2") {
        Direct2 d2;
        d2.alpha = cfg.get_double("policy", "alpha", 0.5);
        d2.beta = cfg.get_double("policy", "beta", 0.5);
        PolicySpec out = d2;
        validate_policy(out);
        return out;
    }
    if (variant == "tabular_softmax") {
        TabularSoftmax ts{Mat::Zero(mdp.n_states, mdp.n_actions)};
        return ts;
    }
    if (variant == "embedded_softmax") {
        require(mdp.embeddings.has_value(), ErrorKind::ConfigParse,
                "embedded_softmax requires an mdp with embeddings");
        EmbeddedSoftmax es{Mat::Zero(mdp.n_actions, mdp.embed_dim()), Vec::Zero(mdp.n_actions)};
        return es;
    }
    fail(ErrorKind::ConfigParse, "unknown policy variant '" + variant + "'");
}

}  // namespace arpolab
