// Test-only oracles, independent of the implementation paths they check:
// fixed-point policy evaluation, finite differences, brute-force grid
// searches, and random instance generators.
#pragma once

#include "arpolab/analysis.hpp"

#include <functional>

namespace oracles {

using namespace arpolab;

/// Fixed-point policy evaluation: iterate v <- r^pi + gamma P^pi v.
inline Vec fixed_point_value(const TabularIsaMdp& mdp, const PolicyMatrix& pi,
                             double tol = 1e-12) {
    Mat p_pi = policy_transition(mdp, pi);
    Vec r_pi = policy_reward(mdp, pi);
    Vec v = Vec::Zero(mdp.n_states);
    for (long it = 0; it < 10'000'000; ++it) {
        Vec next = r_pi + mdp.gamma * (p_pi * v);
        double diff = (next - v).cwiseAbs().maxCoeff();
        v = next;
        if (diff < tol) break;
    }
    return v;
}

inline Vec central_diff(const std::function<double(const Vec&)>& f, const Vec& x,
                        double h = 1e-6) {
    Vec g(x.size());
    for (int i = 0; i < x.size(); ++i) {
        Vec up = x, down = x;
        up(i) += h;
        down(i) -= h;
        g(i) = (f(up) - f(down)) / (2.0 * h);
    }
    return g;
}

inline TabularIsaMdp random_mdp(Rng& rng, int max_states = 6, int max_actions = 3,
                                int max_set = 3) {
    TabularIsaMdp mdp;
    mdp.n_states = 2 + rng.uniform_int(max_states - 1);
    mdp.n_actions = 1 + rng.uniform_int(max_actions);
    mdp.reward.resize(mdp.n_states, mdp.n_actions);
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a) mdp.reward(s, a) = rng.uniform(-1.0, 1.0);
    mdp.transition.assign(mdp.n_actions, Mat(mdp.n_states, mdp.n_states));
    for (int a = 0; a < mdp.n_actions; ++a)
        for (int s = 0; s < mdp.n_states; ++s) {
            double sum = 0.0;
            for (int t = 0; t < mdp.n_states; ++t) {
                double w = -std::log(1.0 - rng.uniform());  // exponential, dense support
                mdp.transition[a](s, t) = w;
                sum += w;
            }
            double acc = 0.0;
            for (int t = 0; t < mdp.n_states - 1; ++t) {
                mdp.transition[a](s, t) /= sum;
                acc += mdp.transition[a](s, t);
            }
            mdp.transition[a](s, mdp.n_states - 1) = 1.0 - acc;
        }
    mdp.gamma = rng.uniform(0.3, 0.95);
    mdp.mu0.resize(mdp.n_states);
    {
        double sum = 0.0;
        for (int s = 0; s < mdp.n_states; ++s) {
            mdp.mu0(s) = 0.1 + rng.uniform();  // full support
            sum += mdp.mu0(s);
        }
        double acc = 0.0;
        for (int s = 0; s < mdp.n_states - 1; ++s) {
            mdp.mu0(s) /= sum;
            acc += mdp.mu0(s);
        }
        mdp.mu0(mdp.n_states - 1) = 1.0 - acc;
    }
    mdp.perturb_sets.assign(mdp.n_states, {});
    for (int s = 0; s < mdp.n_states; ++s) {
        mdp.perturb_sets[s].push_back(s);
        int extra = rng.uniform_int(max_set);
        for (int i = 0; i < extra; ++i) {
            int t = rng.uniform_int(mdp.n_states);
            bool dup = false;
            for (int u : mdp.perturb_sets[s]) dup |= u == t;
            if (!dup && static_cast<int>(mdp.perturb_sets[s].size()) < max_set)
                mdp.perturb_sets[s].push_back(t);
        }
    }
    mdp.validate();
    return mdp;
}

inline PolicyMatrix random_policy_matrix(Rng& rng, int n_states, int n_actions) {
    PolicyMatrix pm;
    pm.probs.resize(n_states, n_actions);
    for (int s = 0; s < n_states; ++s) {
        double sum = 0.0;
        for (int a = 0; a < n_actions; ++a) {
            pm.probs(s, a) = 0.05 + rng.uniform();
            sum += pm.probs(s, a);
        }
        double acc = 0.0;
        for (int a = 0; a < n_actions - 1; ++a) {
            pm.probs(s, a) /= sum;
            acc += pm.probs(s, a);
        }
        pm.probs(s, n_actions - 1) = 1.0 - acc;
    }
    return pm;
}

inline EmbeddedSoftmax random_embedded(Rng& rng, int n_actions, int dim, double scale = 1.0) {
    EmbeddedSoftmax es{Mat(n_actions, dim), Vec(n_actions)};
    for (int a = 0; a < n_actions; ++a) {
        for (int j = 0; j < dim; ++j) es.weights(a, j) = scale * rng.normal();
        es.bias(a) = scale * rng.normal();
    }
    return es;
}

/// EmbeddedSoftmax reproducing the Direct2 policy (alpha, beta) on one-hot
/// embeddings.
inline EmbeddedSoftmax embedded_from_direct2(double alpha, double beta) {
    auto logit = [](double p) {
        p = std::clamp(p, 1e-9, 1.0 - 1e-9);
        return std::log(p / (1.0 - p));
    };
    EmbeddedSoftmax es{Mat::Zero(2, 2), Vec::Zero(2)};
    es.weights(0, 0) = logit(alpha);
    es.weights(0, 1) = logit(beta);
    return es;
}

/// Exhaustive KL maximum over a 2-d l-infinity ball grid.
inline double grid_kl_max(const PolicySpec& policy, const Vec& obs, double eps, int points) {
    Vec p = action_probs(policy, obs);
    double best = 0.0;
    for (int i = 0; i < points; ++i)
        for (int j = 0; j < points; ++j) {
            Vec theta(2);
            theta << -eps + 2.0 * eps * i / (points - 1), -eps + 2.0 * eps * j / (points - 1);
            best = std::max(best, kl(p, action_probs(policy, Vec(obs + theta))));
        }
    return best;
}

/// Exhaustive adversarial-value minimum over the joint per-state ball grid of
/// the two-state embedded toy (4 perturbation coordinates).
inline double grid_adv_value_min(const TabularIsaMdp& mdp, const PolicySpec& policy, double eps,
                                 int points) {
    double best = std::numeric_limits<double>::infinity();
    ObsPerturbation pert = zero_perturbation(mdp, eps);
    auto coord = [&](int i) { return -eps + 2.0 * eps * i / (points - 1); };
    for (int a = 0; a < points; ++a)
        for (int b = 0; b < points; ++b)
            for (int c = 0; c < points; ++c)
                for (int d = 0; d < points; ++d) {
                    pert.delta(0, 0) = coord(a);
                    pert.delta(0, 1) = coord(b);
                    pert.delta(1, 0) = coord(c);
                    pert.delta(1, 1) = coord(d);
                    best = std::min(
                        best, mdp.mu0.dot(solve_value(mdp, policy_matrix(policy, mdp, pert)).v));
                }
    return best;
}

}  // namespace oracles
