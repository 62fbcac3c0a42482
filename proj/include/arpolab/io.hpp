#pragma once

#include "arpolab/policy.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace arpolab {

namespace iodetail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] inline void parse_fail(int line, const std::string& msg) {
    fail(ErrorKind::ConfigParse, "line " + std::to_string(line) + ": " + msg);
}

inline double parse_double(const std::string& tok, int line) {
    double out = 0.0;
    const char* begin = tok.data();
    const char* end = begin + tok.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    if (ec != std::errc{} || ptr != end) parse_fail(line, "not a decimal literal: '" + tok + "'");
    return out;
}

inline long parse_int(const std::string& tok, int line) {
    long out = 0;
    const char* begin = tok.data();
    const char* end = begin + tok.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    if (ec != std::errc{} || ptr != end) parse_fail(line, "not an integer: '" + tok + "'");
    return out;
}

inline std::vector<std::string> split_ws(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream iss(s);
    std::string tok;
    while (iss >> tok) out.push_back(tok);
    return out;
}

inline std::vector<double> parse_doubles(const std::string& s, int line) {
    std::vector<double> out;
    for (const std::string& tok : split_ws(s)) out.push_back(parse_double(tok, line));
    return out;
}

/// One "key = value" line inside a [section].
struct Entry {
    std::string key;
    std::string value;
    int line = 0;
};

struct Section {
    std::string name;
    int line = 0;
    std::vector<Entry> entries;
};

inline std::vector<Section> parse_sections(std::istream& in) {
    std::vector<Section> sections;
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string s = raw;
        if (auto pos = s.find('#'); pos != std::string::npos) s.erase(pos);
        s = trim(s);
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']') parse_fail(line, "malformed section header");
            sections.push_back(Section{trim(s.substr(1, s.size() - 2)), line, {}});
            continue;
        }
        auto eq = s.find('=');
        if (eq == std::string::npos) parse_fail(line, "expected 'key = value'");
        if (sections.empty()) parse_fail(line, "entry before any [section] header");
        Entry e;
        e.key = trim(s.substr(0, eq));
        e.value = trim(s.substr(eq + 1));
        e.line = line;
        if (e.key.empty()) parse_fail(line, "empty key");
        sections.back().entries.push_back(std::move(e));
    }
    return sections;
}

}  // namespace iodetail

/// Loads the structured MDP document. Every invariant violation is rejected
/// with the offending line number.
inline TabularIsaMdp load_mdp(std::istream& in) {
    using namespace iodetail;
    TabularIsaMdp mdp;
    int n_states = -1, n_actions = -1, embed_dim = -1;
    std::vector<bool> have_reward, have_embed;
    std::vector<std::vector<bool>> have_slice;
    bool have_gamma = false, have_mu0 = false;

    auto need_dims = [&](int line) {
        if (n_states < 0 || n_actions < 0)
            parse_fail(line, "the [dimensions] section must come first");
    };

    for (const Section& sec : parse_sections(in)) {
        if (sec.name == "dimensions") {
            for (const Entry& e : sec.entries) {
                if (e.key == "n_states")
                    n_states = static_cast<int>(parse_int(e.value, e.line));
                else if (e.key == "n_actions")
                    n_actions = static_cast<int>(parse_int(e.value, e.line));
                else
                    parse_fail(e.line, "unknown key '" + e.key + "' in [dimensions]");
            }
            if (n_states < 1 || n_actions < 1)
                parse_fail(sec.line, "n_states and n_actions must be positive");
            mdp.n_states = n_states;
            mdp.n_actions = n_actions;
            mdp.reward = Mat::Zero(n_states, n_actions);
            mdp.transition.assign(n_actions, Mat::Zero(n_states, n_states));
            mdp.perturb_sets.assign(n_states, {});
            have_reward.assign(n_states, false);
            have_slice.assign(n_states, std::vector<bool>(n_actions, false));
        } else if (sec.name == "discount") {
            for (const Entry& e : sec.entries) {
                if (e.key != "gamma") parse_fail(e.line, "unknown key '" + e.key + "'");
                mdp.gamma = parse_double(e.value, e.line);
                if (mdp.gamma < 0.0 || mdp.gamma >= 1.0)
                    parse_fail(e.line, "gamma must lie in [0, 1)");
                have_gamma = true;
            }
        } else if (sec.name == "mu0") {
            need_dims(sec.line);
            for (const Entry& e : sec.entries) {
                if (e.key != "dist") parse_fail(e.line, "unknown key '" + e.key + "'");
                auto vals = parse_doubles(e.value, e.line);
                if (static_cast<int>(vals.size()) != n_states)
                    parse_fail(e.line, "mu0 must list one probability per state");
                mdp.mu0 = Eigen::Map<Vec>(vals.data(), vals.size());
                double sum = mdp.mu0.sum();
                if (mdp.mu0.minCoeff() < 0.0 || std::abs(sum - 1.0) > 1e-12)
                    parse_fail(e.line, "mu0 must be a probability vector summing to 1");
                have_mu0 = true;
            }
        } else if (sec.name == "reward") {
            need_dims(sec.line);
            for (const Entry& e : sec.entries) {
                auto toks = split_ws(e.key);
                if (toks.size() != 2 || toks[0] != "row")
                    parse_fail(e.line, "expected 'row <state> = ...'");
                int s = static_cast<int>(parse_int(toks[1], e.line));
                if (s < 0 || s >= n_states) parse_fail(e.line, "state index out of range");
                auto vals = parse_doubles(e.value, e.line);
                if (static_cast<int>(vals.size()) != n_actions)
                    parse_fail(e.line, "reward row must list one value per action");
                for (int a = 0; a < n_actions; ++a) mdp.reward(s, a) = vals[a];
                have_reward[s] = true;
            }
        } else if (sec.name == "transition") {
            need_dims(sec.line);
            for (const Entry& e : sec.entries) {
                auto toks = split_ws(e.key);
                if (toks.size() != 3 || toks[0] != "slice")
                    parse_fail(e.line, "expected 'slice <state> <action> = ...'");
                int s = static_cast<int>(parse_int(toks[1], e.line));
                int a = static_cast<int>(parse_int(toks[2], e.line));
                if (s < 0 || s >= n_states || a < 0 || a >= n_actions)
                    parse_fail(e.line, "state or action index out of range");
                auto vals = parse_doubles(e.value, e.line);
                if (static_cast<int>(vals.size()) != n_states)
                    parse_fail(e.line, "transition slice must list one probability per state");
                double sum = 0.0;
                for (double p : vals) {
                    if (p < 0.0) parse_fail(e.line, "negative transition probability");
                    sum += p;
                }
                if (std::abs(sum - 1.0) > 1e-12)
                    parse_fail(e.line, "transition slice does not sum to 1");
                for (int t = 0; t < n_states; ++t) mdp.transition[a](s, t) = vals[t];
                have_slice[s][a] = true;
            }
        } else if (sec.name == "perturb_sets") {
            need_dims(sec.line);
            for (const Entry& e : sec.entries) {
                auto toks = split_ws(e.key);
                if (toks.size() != 2 || toks[0] != "set")
                    parse_fail(e.line, "expected 'set <state> = ...'");
                int s = static_cast<int>(parse_int(toks[1], e.line));
                if (s < 0 || s >= n_states) parse_fail(e.line, "state index out of range");
                std::vector<int> set;
                bool self = false;
                for (const std::string& tok : split_ws(e.value)) {
                    int t = static_cast<int>(parse_int(tok, e.line));
                    if (t < 0 || t >= n_states)
                        parse_fail(e.line, "perturb set member out of range");
                    if (t == s) self = true;
                    set.push_back(t);
                }
                if (!self) parse_fail(e.line, "perturb set must contain the state itself");
                mdp.perturb_sets[s] = std::move(set);
            }
        } else if (sec.name == "embeddings") {
            need_dims(sec.line);
            for (const Entry& e : sec.entries) {
                if (e.key == "dim") {
                    embed_dim = static_cast<int>(parse_int(e.value, e.line));
                    if (embed_dim < 1) parse_fail(e.line, "embedding dim must be positive");
                    mdp.embeddings = Mat::Zero(n_states, embed_dim);
                    have_embed.assign(n_states, false);
                    continue;
                }
                auto toks = split_ws(e.key);
                if (toks.size() != 2 || toks[0] != "embed")
                    parse_fail(e.line, "expected 'dim' or 'embed <state> = ...'");
                if (embed_dim < 0) parse_fail(e.line, "'dim' must precede embed rows");
                int s = static_cast<int>(parse_int(toks[1], e.line));
                if (s < 0 || s >= n_states) parse_fail(e.line, "state index out of range");
                auto vals = parse_doubles(e.value, e.line);
                if (static_cast<int>(vals.size()) != embed_dim)
                    parse_fail(e.line, "embedding row has the wrong dimension");
                for (int j = 0; j < embed_dim; ++j) (*mdp.embeddings)(s, j) = vals[j];
                have_embed[s] = true;
            }
        } else {
            parse_fail(sec.line, "unknown section [" + sec.name + "]");
        }
    }

    require(n_states > 0, ErrorKind::ConfigParse, "missing [dimensions] section");
    require(have_gamma, ErrorKind::ConfigParse, "missing [discount] gamma");
    require(have_mu0, ErrorKind::ConfigParse, "missing [mu0] dist");
    for (int s = 0; s < n_states; ++s) {
        require(have_reward[s], ErrorKind::ConfigParse,
                "missing reward row for state " + std::to_string(s));
        require(!mdp.perturb_sets[s].empty(), ErrorKind::ConfigParse,
                "missing perturb set for state " + std::to_string(s));
        for (int a = 0; a < n_actions; ++a)
            require(have_slice[s][a], ErrorKind::ConfigParse,
                    "missing transition slice for state " + std::to_string(s) + ", action " +
                        std::to_string(a));
        if (embed_dim >= 0)
            require(have_embed[s], ErrorKind::ConfigParse,
                    "missing embedding for state " + std::to_string(s));
    }
    mdp.validate();
    return mdp;
}

inline TabularIsaMdp load_mdp_file(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), ErrorKind::Io, "cannot open mdp file: " + path);
    try {
        return load_mdp(in);
    } catch (const Error& e) {
        throw Error(e.kind(), path + ": " + e.what());
    }
}

inline void save_mdp(const TabularIsaMdp& mdp, std::ostream& os) {
    os << "[dimensions]\n";
    os << "n_states = " << mdp.n_states << "\n";
    os << "n_actions = " << mdp.n_actions << "\n\n";
    os << "[discount]\n";
    os << "gamma = " << format_full(mdp.gamma) << "\n\n";
    os << "[mu0]\ndist =";
    for (int s = 0; s < mdp.n_states; ++s) os << ' ' << format_full(mdp.mu0(s));
    os << "\n\n[reward]\n";
    for (int s = 0; s < mdp.n_states; ++s) {
        os << "row " << s << " =";
        for (int a = 0; a < mdp.n_actions; ++a) os << ' ' << format_full(mdp.reward(s, a));
        os << '\n';
    }
    os << "\n[transition]\n";
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a) {
            os << "slice " << s << ' ' << a << " =";
            for (int t = 0; t < mdp.n_states; ++t) os << ' ' << format_full(mdp.transition[a](s, t));
            os << '\n';
        }
    os << "\n[perturb_sets]\n";
    for (int s = 0; s < mdp.n_states; ++s) {
        os << "set " << s << " =";
        for (int t : mdp.perturb_sets[s]) os << ' ' << t;
        os << '\n';
    }
    if (mdp.embeddings) {
        os << "\n[embeddings]\n";
        os << "dim = " << mdp.embed_dim() << '\n';
        for (int s = 0; s < mdp.n_states; ++s) {
            os << "embed " << s << " =";
            for (int j = 0; j < mdp.embed_dim(); ++j)
                os << ' ' << format_full((*mdp.embeddings)(s, j));
            os << '\n';
        }
    }
}

/// Policies round-trip through a variant tag plus full-precision parameters.
inline void save_policy(const PolicySpec& policy, std::ostream& os) {
    os << "[policy]\n";
    if (const auto* d2 = std::get_if<Direct2>(&policy)) {
        os << "variant = direct2\n";
        os << "alpha = " << format_full(d2->alpha) << '\n';
        os << "beta = " << format_full(d2->beta) << '\n';
    } else if (const auto* ts = std::get_if<TabularSoftmax>(&policy)) {
        os << "variant = tabular_softmax\n";
        os << "n_states = " << ts->logits.rows() << '\n';
        os << "n_actions = " << ts->logits.cols() << '\n';
        for (int s = 0; s < ts->logits.rows(); ++s) {
            os << "logits " << s << " =";
            for (int a = 0; a < ts->logits.cols(); ++a) os << ' ' << format_full(ts->logits(s, a));
            os << '\n';
        }
    } else {
        const auto& es = std::get<EmbeddedSoftmax>(policy);
        os << "variant = embedded_softmax\n";
        os << "n_actions = " << es.weights.rows() << '\n';
        os << "dim = " << es.weights.cols() << '\n';
        for (int a = 0; a < es.weights.rows(); ++a) {
            os << "weights " << a << " =";
            for (int j = 0; j < es.weights.cols(); ++j) os << ' ' << format_full(es.weights(a, j));
            os << '\n';
        }
        os << "bias =";
        for (int a = 0; a < es.bias.size(); ++a) os << ' ' << format_full(es.bias(a));
        os << '\n';
    }
}

inline PolicySpec load_policy(std::istream& in) {
    using namespace iodetail;
    auto sections = parse_sections(in);
    require(sections.size() == 1 && sections[0].name == "policy", ErrorKind::ConfigParse,
            "policy document must contain exactly one [policy] section");
    const Section& sec = sections[0];
    std::string variant;
    for (const Entry& e : sec.entries)
        if (e.key == "variant") variant = e.value;
    require(!variant.empty(), ErrorKind::ConfigParse, "missing 'variant' key");

    if (variant == "direct2") {
        Direct2 d2;
        bool have_a = false, have_b = false;
        for (const Entry& e : sec.entries) {
            if (e.key == "variant") continue;
            if (e.key == "alpha") {
                d2.alpha = parse_double(e.value, e.line);
                have_a = true;
            } else if (e.key == "beta") {
                d2.beta = parse_double(e.value, e.line);
                have_b = true;
            } else {
                parse_fail(e.line, "unknown key '" + e.key + "' for direct2");
            }
        }
        require(have_a && have_b, ErrorKind::ConfigParse, "direct2 needs alpha and beta");
        PolicySpec out = d2;
        validate_policy(out);
        return out;
    }
    if (variant == "tabular_softmax") {
        int n_states = -1, n_actions = -1;
        for (const Entry& e : sec.entries) {
            if (e.key == "n_states") n_states = static_cast<int>(parse_int(e.value, e.line));
            if (e.key == "n_actions") n_actions = static_cast<int>(parse_int(e.value, e.line));
        }
        require(n_states > 0 && n_actions > 0, ErrorKind::ConfigParse,
                "tabular_softmax needs n_states and n_actions");
        TabularSoftmax ts{Mat::Zero(n_states, n_actions)};
        std::vector<bool> have(n_states, false);
        for (const Entry& e : sec.entries) {
            if (e.key == "variant" || e.key == "n_states" || e.key == "n_actions") continue;
            auto toks = split_ws(e.key);
            if (toks.size() != 2 || toks[0] != "logits")
                parse_fail(e.line, "unknown key '" + e.key + "' for tabular_softmax");
            int s = static_cast<int>(parse_int(toks[1], e.line));
            if (s < 0 || s >= n_states) parse_fail(e.line, "state index out of range");
            auto vals = parse_doubles(e.value, e.line);
            if (static_cast<int>(vals.size()) != n_actions)
                parse_fail(e.line, "logits row has the wrong length");
            for (int a = 0; a < n_actions; ++a) ts.logits(s, a) = vals[a];
            have[s] = true;
        }
        for (int s = 0; s < n_states; ++s)
            require(have[s], ErrorKind::ConfigParse,
                    "missing logits for state " + std::to_string(s));
        PolicySpec out = ts;
        validate_policy(out);
        return out;
    }
    if (variant == "embedded_softmax") {
        int n_actions = -1, dim = -1;
        for (const Entry& e : sec.entries) {
            if (e.key == "n_actions") n_actions = static_cast<int>(parse_int(e.value, e.line));
            if (e.key == "dim") dim = static_cast<int>(parse_int(e.value, e.line));
        }
        require(n_actions > 0 && dim > 0, ErrorKind::ConfigParse,
                "embedded_softmax needs n_actions and dim");
        EmbeddedSoftmax es{Mat::Zero(n_actions, dim), Vec::Zero(n_actions)};
        std::vector<bool> have(n_actions, false);
        bool have_bias = false;
        for (const Entry& e : sec.entries) {
            if (e.key == "variant" || e.key == "n_actions" || e.key == "dim") continue;
            if (e.key == "bias") {
                auto vals = parse_doubles(e.value, e.line);
                if (static_cast<int>(vals.size()) != n_actions)
                    parse_fail(e.line, "bias has the wrong length");
                for (int a = 0; a < n_actions; ++a) es.bias(a) = vals[a];
                have_bias = true;
                continue;
            }
            auto toks = split_ws(e.key);
            if (toks.size() != 2 || toks[0] != "weights")
                parse_fail(e.line, "unknown key '" + e.key + "' for embedded_softmax");
            int a = static_cast<int>(parse_int(toks[1], e.line));
            if (a < 0 || a >= n_actions) parse_fail(e.line, "action index out of range");
            auto vals = parse_doubles(e.value, e.line);
            if (static_cast<int>(vals.size()) != dim)
                parse_fail(e.line, "weights row has the wrong length");
            for (int j = 0; j < dim; ++j) es.weights(a, j) = vals[j];
            have[a] = true;
        }
        for (int a = 0; a < n_actions; ++a)
            require(have[a], ErrorKind::ConfigParse,
                    "missing weights for action " + std::to_string(a));
        require(have_bias, ErrorKind::ConfigParse, "missing bias");
        PolicySpec out = es;
        validate_policy(out);
        return out;
    }
    fail(ErrorKind::ConfigParse, "unknown policy variant '" + variant + "'");
}

inline PolicySpec load_policy_file(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), ErrorKind::Io, "cannot open policy file: " + path);
    try {
        return load_policy(in);
    } catch (const Error& e) {
        throw Error(e.kind(), path + ": " + e.what());
    }
}

}  // namespace arpolab
