#pragma once

#include "arpolab/common.hpp"

#include <algorithm>
#include <optional>
#include <utility>
#include <vector>

namespace arpolab {

/// Finite MDP plus per-state admissible perturbation sets B(s) and optional
/// state embeddings for observation-perturbation experiments.
struct TabularIsaMdp {
    int n_states = 0;
    int n_actions = 0;
    Mat reward;                       // [S x A]
    std::vector<Mat> transition;      // one [S x S] matrix per action, row s = P(.|s,a)
    double gamma = 0.0;
    Vec mu0;
    std::vector<std::vector<int>> perturb_sets;  // B(s) as ordered index lists, s in B(s)
    std::optional<Mat> embeddings;               // [S x d]

    int embed_dim() const { return embeddings ? static_cast<int>(embeddings->cols()) : 0; }

    Vec embedding(int s) const {
        require(embeddings.has_value(), ErrorKind::Unsupported, "mdp has no embeddings");
        return embeddings->row(s).transpose();
    }

    void validate() const {
        require(n_states >= 1 && n_actions >= 1, ErrorKind::InvalidArgument,
                "n_states and n_actions must be positive");
        require(reward.rows() == n_states && reward.cols() == n_actions,
                ErrorKind::DimensionMismatch, "reward matrix shape mismatch");
        require(static_cast<int>(transition.size()) == n_actions, ErrorKind::DimensionMismatch,
                "transition tensor must have one slice per action");
        for (int a = 0; a < n_actions; ++a) {
            require(transition[a].rows() == n_states && transition[a].cols() == n_states,
                    ErrorKind::DimensionMismatch, "transition slice shape mismatch");
            for (int s = 0; s < n_states; ++s) {
                double sum = 0.0;
                for (int t = 0; t < n_states; ++t) {
                    double p = transition[a](s, t);
                    require(p >= 0.0, ErrorKind::InvalidArgument,
                            "negative transition probability");
                    sum += p;
                }
                require(std::abs(sum - 1.0) <= 1e-12, ErrorKind::InvalidArgument,
                        "transition row of state " + std::to_string(s) + ", action " +
                            std::to_string(a) + " does not sum to 1");
            }
        }
        require(gamma >= 0.0 && gamma < 1.0, ErrorKind::InvalidArgument,
                "gamma must lie in [0, 1)");
        require(mu0.size() == n_states, ErrorKind::DimensionMismatch, "mu0 length mismatch");
        double mu_sum = 0.0;
        for (int s = 0; s < n_states; ++s) {
            require(mu0(s) >= 0.0, ErrorKind::InvalidArgument, "mu0 has a negative entry");
            mu_sum += mu0(s);
        }
        require(std::abs(mu_sum - 1.0) <= 1e-12, ErrorKind::InvalidArgument,
                "mu0 does not sum to 1");
        require(static_cast<int>(perturb_sets.size()) == n_states, ErrorKind::DimensionMismatch,
                "perturb_sets must have one entry per state");
        for (int s = 0; s < n_states; ++s) {
            bool self = false;
            for (int t : perturb_sets[s]) {
                require(t >= 0 && t < n_states, ErrorKind::InvalidArgument,
                        "perturb_sets contains an out-of-range state index");
                if (t == s) self = true;
            }
            require(self, ErrorKind::InvalidArgument,
                    "perturb_sets[" + std::to_string(s) + "] must contain the state itself");
        }
        if (embeddings) {
            require(embeddings->rows() == n_states, ErrorKind::DimensionMismatch,
                    "embeddings row count mismatch");
            require(embeddings->allFinite(), ErrorKind::InvalidArgument,
                    "embeddings must be finite");
        }
    }
};

struct PolicyMatrix {
    Mat probs;  // [S x A], each row a simplex point

    void validate() const {
        for (int s = 0; s < probs.rows(); ++s) {
            double sum = 0.0;
            for (int a = 0; a < probs.cols(); ++a) {
                require(probs(s, a) >= 0.0, ErrorKind::InvalidArgument,
                        "policy row has a negative probability");
                sum += probs(s, a);
            }
            require(std::abs(sum - 1.0) <= 1e-10, ErrorKind::InvalidArgument,
                    "policy row of state " + std::to_string(s) + " does not sum to 1");
        }
    }
};

/// Deterministic state remap: remap[s] indexes into perturb_sets[s].
struct DiscreteAdversary {
    std::vector<int> remap;
};

inline int perturbed_state(const TabularIsaMdp& mdp, const DiscreteAdversary& adv, int s) {
    require(s >= 0 && s < mdp.n_states && s < static_cast<int>(adv.remap.size()),
            ErrorKind::DimensionMismatch, "state index out of range");
    int idx = adv.remap[s];
    require(idx >= 0 && idx < static_cast<int>(mdp.perturb_sets[s].size()),
            ErrorKind::InvalidArgument, "adversary remap index out of range for state " +
                                            std::to_string(s));
    return mdp.perturb_sets[s][idx];
}

inline DiscreteAdversary identity_adversary(const TabularIsaMdp& mdp) {
    DiscreteAdversary adv;
    adv.remap.resize(mdp.n_states);
    for (int s = 0; s < mdp.n_states; ++s) {
        const auto& set = mdp.perturb_sets[s];
        auto it = std::find(set.begin(), set.end(), s);
        require(it != set.end(), ErrorKind::InvalidArgument, "perturb set misses the state itself");
        adv.remap[s] = static_cast<int>(it - set.begin());
    }
    return adv;
}

struct ValueSolveResult {
    Vec v;                         // [S]
    Mat q;                         // [S x A]
    double bellman_residual = 0.0; // inf-norm of v - (r^pi + gamma P^pi v)
};

inline Mat policy_transition(const TabularIsaMdp& mdp, const PolicyMatrix& pi) {
    Mat p = Mat::Zero(mdp.n_states, mdp.n_states);
    for (int a = 0; a < mdp.n_actions; ++a)
        p += pi.probs.col(a).asDiagonal() * mdp.transition[a];
    return p;
}

inline Vec policy_reward(const TabularIsaMdp& mdp, const PolicyMatrix& pi) {
    return (pi.probs.array() * mdp.reward.array()).rowwise().sum();
}

/// Exact policy evaluation: solves (I - gamma P^pi) v = r^pi by dense LU and
/// assembles q(s,a) = r(s,a) + gamma sum_{s'} P(s'|s,a) v(s').
inline ValueSolveResult solve_value(const TabularIsaMdp& mdp, const PolicyMatrix& pi) {
    require(pi.probs.rows() == mdp.n_states && pi.probs.cols() == mdp.n_actions,
            ErrorKind::DimensionMismatch, "policy matrix shape does not match the mdp");
    Mat p_pi = policy_transition(mdp, pi);
    Vec r_pi = policy_reward(mdp, pi);
    Mat system = Mat::Identity(mdp.n_states, mdp.n_states) - mdp.gamma * p_pi;

    ValueSolveResult out;
    out.v = system.partialPivLu().solve(r_pi);
    out.bellman_residual = (out.v - (r_pi + mdp.gamma * (p_pi * out.v))).cwiseAbs().maxCoeff();
    // (I - gamma P^pi) is invertible for gamma < 1; a large residual means the
    // factorization broke down anyway, so guard on it.
    require(out.bellman_residual <= 1e-8 && out.v.allFinite(), ErrorKind::SingularSystem,
            "linear solve failed to reach a valid fixed point");
    out.q = mdp.reward;
    for (int a = 0; a < mdp.n_actions; ++a) out.q.col(a) += mdp.gamma * (mdp.transition[a] * out.v);
    return out;
}

/// Discounted state-action visitation: the state marginal solves
/// d^T = (1-gamma) start^T (I - gamma P^pi)^{-1}, then d(s,a) = d(s) pi(a|s).
inline Mat visitation(const TabularIsaMdp& mdp, const PolicyMatrix& pi, const Vec& start) {
    require(pi.probs.rows() == mdp.n_states && pi.probs.cols() == mdp.n_actions,
            ErrorKind::DimensionMismatch, "policy matrix shape does not match the mdp");
    require(start.size() == mdp.n_states, ErrorKind::DimensionMismatch,
            "start distribution length mismatch");
    Mat p_pi = policy_transition(mdp, pi);
    Mat system = Mat::Identity(mdp.n_states, mdp.n_states) - mdp.gamma * p_pi;
    Vec d_state = (1.0 - mdp.gamma) * system.transpose().partialPivLu().solve(start);
    // The Neumann series is nonnegative; clear any -1e-17 rounding residue.
    d_state = d_state.cwiseMax(0.0);
    return d_state.asDiagonal() * pi.probs;
}

/// Row s of the output is the input row at the adversary's remap of s.
inline PolicyMatrix apply_adversary(const PolicyMatrix& pi, const DiscreteAdversary& adv,
                                    const TabularIsaMdp& mdp) {
    PolicyMatrix out;
    out.probs.resize(pi.probs.rows(), pi.probs.cols());
    for (int s = 0; s < mdp.n_states; ++s) out.probs.row(s) = pi.probs.row(perturbed_state(mdp, adv, s));
    return out;
}

/// The strongest adversary minimizes V^{pi o nu} at every state simultaneously.
/// The adversary's problem is itself an MDP whose action at state s is the
/// choice s_nu in B(s); solved by value iteration to 1e-12, ties broken by the
/// lowest perturb_sets index.
inline std::pair<DiscreteAdversary, ValueSolveResult> strongest_adversary_exact(
    const TabularIsaMdp& mdp, const PolicyMatrix& pi) {
    require(pi.probs.rows() == mdp.n_states && pi.probs.cols() == mdp.n_actions,
            ErrorKind::DimensionMismatch, "policy matrix shape does not match the mdp");
    const int S = mdp.n_states;

    // Precompute, per state s and candidate choice c: the adversary-controlled
    // one-step reward and next-state distribution under pi(.|candidate).
    std::vector<std::vector<Vec>> next_dist(S);
    std::vector<std::vector<double>> step_reward(S);
    for (int s = 0; s < S; ++s) {
        for (int cand : mdp.perturb_sets[s]) {
            Vec row = pi.probs.row(cand).transpose();
            double r = mdp.reward.row(s).dot(row);
            Vec nd = Vec::Zero(S);
            for (int a = 0; a < mdp.n_actions; ++a) nd += row(a) * mdp.transition[a].row(s).transpose();
            step_reward[s].push_back(r);
            next_dist[s].push_back(std::move(nd));
        }
    }

    Vec v = Vec::Zero(S);
    std::vector<int> choice(S, 0);
    const long max_iters = 10'000'000;
    for (long it = 0; it < max_iters; ++it) {
        Vec v_next(S);
        for (int s = 0; s < S; ++s) {
            double best = std::numeric_limits<double>::infinity();
            int best_c = 0;
            for (std::size_t c = 0; c < mdp.perturb_sets[s].size(); ++c) {
                double val = step_reward[s][c] + mdp.gamma * next_dist[s][c].dot(v);
                if (val < best) {
                    best = val;
                    best_c = static_cast<int>(c);
                }
            }
            v_next(s) = best;
            choice[s] = best_c;
        }
        double diff = (v_next - v).cwiseAbs().maxCoeff();
        v = v_next;
        if (diff < 1e-12) break;
    }
    // Re-extract the greedy choice at the fixed point so the remap matches v.
    for (int s = 0; s < S; ++s) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < mdp.perturb_sets[s].size(); ++c) {
            double val = step_reward[s][c] + mdp.gamma * next_dist[s][c].dot(v);
            if (val < best) {
                best = val;
                choice[s] = static_cast<int>(c);
            }
        }
    }

    DiscreteAdversary adv{choice};
    ValueSolveResult solved = solve_value(mdp, apply_adversary(pi, adv, mdp));
    return {std::move(adv), std::move(solved)};
}

/// Test oracle: enumerate every deterministic adversary and keep the one
/// minimizing V(mu0). Enumeration is in lexicographic remap order with strict
/// improvement, so ties resolve to the lexicographically smallest remap.
inline std::pair<DiscreteAdversary, ValueSolveResult> brute_force_strongest(
    const TabularIsaMdp& mdp, const PolicyMatrix& pi) {
    double combos = 1.0;
    for (const auto& set : mdp.perturb_sets) combos *= static_cast<double>(set.size());
    require(combos <= 1e6, ErrorKind::BudgetExceeded,
            "perturbation-set product exceeds the enumeration budget");

    std::vector<int> remap(mdp.n_states, 0);
    DiscreteAdversary best_adv;
    ValueSolveResult best_val;
    double best = std::numeric_limits<double>::infinity();
    while (true) {
        DiscreteAdversary adv{remap};
        ValueSolveResult solved = solve_value(mdp, apply_adversary(pi, adv, mdp));
        double val = mdp.mu0.dot(solved.v);
        if (val < best) {
            best = val;
            best_adv = adv;
            best_val = solved;
        }
        int pos = mdp.n_states - 1;
        while (pos >= 0) {
            if (++remap[pos] < static_cast<int>(mdp.perturb_sets[pos].size())) break;
            remap[pos] = 0;
            --pos;
        }
        if (pos < 0) break;
    }
    return {std::move(best_adv), std::move(best_val)};
}

/// The two-state, two-action instance used throughout: rewards
/// (-0.45, -0.1; 0.5, 0.5), transitions (0.7,0.3 / 0.99,0.01 / 0.2,0.8 /
/// 0.99,0.01), B(s) = {s1, s2} for both states, uniform mu0, one-hot
/// embeddings.
inline TabularIsaMdp toy_isa_mdp(double gamma = 0.9) {
    TabularIsaMdp mdp;
    mdp.n_states = 2;
    mdp.n_actions = 2;
    mdp.reward.resize(2, 2);
    mdp.reward << -0.45, -0.1, 0.5, 0.5;
    mdp.transition.assign(2, Mat(2, 2));
    mdp.transition[0] << 0.7, 0.3, 0.2, 0.8;    // action a1
    mdp.transition[1] << 0.99, 0.01, 0.99, 0.01; // action a2
    mdp.gamma = gamma;
    mdp.mu0 = Vec::Constant(2, 0.5);
    mdp.perturb_sets = {{0, 1}, {0, 1}};
    mdp.embeddings = Mat::Identity(2, 2);
    mdp.validate();
    return mdp;
}

/// Same dynamics but with singleton perturbation sets, so every adversary is
/// the identity.
inline TabularIsaMdp toy_isa_mdp_singleton(double gamma = 0.9) {
    TabularIsaMdp mdp = toy_isa_mdp(gamma);
    mdp.perturb_sets = {{0}, {1}};
    mdp.validate();
    return mdp;
}

}  // namespace arpolab
