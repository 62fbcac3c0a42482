#pragma once

#include "arpolab/policy.hpp"
#include "arpolab/rollout.hpp"

#include <functional>
#include <ostream>

namespace arpolab {

struct InnerSolverConfig {
    double eps = 0.0;          // l-infinity budget
    int steps = 10;
    double step_size = 0.0;
    double delta = 0.0;        // FOSC threshold
    double temperature = 0.0;  // SGLD noise scale; 0 disables noise
    std::uint64_t seed = 0;
    // Sampling budget for Monte Carlo gradients; exact_gradient switches the
    // PGD loop to central finite differences on the exact value instead.
    long n_traj = 256;
    int horizon = 0;  // 0 = auto from gamma^T <= 1e-8
    bool exact_gradient = false;
    // Seed the KL ascent from the best ball corner instead of a random point.
    // Attack-grade setting: the KL objective has one basin per corner, so this
    // finds the global maximizer. Training keeps it off and runs the plain
    // SGLD recipe, whose locality is what keeps the bilevel landscape smooth.
    bool corner_init = false;

    void validate() const {
        require(eps >= 0.0, ErrorKind::InvalidArgument, "eps must be nonnegative");
        require(steps >= 1, ErrorKind::InvalidArgument, "steps must be at least 1");
        require(step_size > 0.0, ErrorKind::InvalidArgument, "step_size must be positive");
        require(delta >= 0.0, ErrorKind::InvalidArgument, "delta must be nonnegative");
        require(temperature >= 0.0, ErrorKind::InvalidArgument,
                "temperature must be nonnegative");
        require(n_traj >= 1, ErrorKind::InvalidArgument, "n_traj must be positive");
    }
};

/// Stock settings for the KL inner problem: 10 iterations with step size
/// eps/10 and SGLD temperature 1e-5.
inline InnerSolverConfig default_inner_config(double eps, std::uint64_t seed = 0) {
    InnerSolverConfig cfg;
    cfg.eps = eps;
    cfg.steps = 10;
    cfg.step_size = eps > 0.0 ? eps / 10.0 : 1e-3;
    cfg.temperature = 1e-5;
    cfg.seed = seed;
    return cfg;
}

struct AdvGradEstimate {
    Mat grad;     // [S x d], gradient of V^{pi o nu}(start) w.r.t. theta_s
    Mat std_err;  // [S x d], per-coordinate standard errors
    std::vector<std::uint8_t> visited;
    long n_trajectories = 0;
};

/// One diagnostic record per inner-solver step.
struct InnerLogRecord {
    int state = -1;
    int step = 0;
    double objective = 0.0;
    double gap = 0.0;
    bool clamped = false;
};

inline void write_inner_log(std::ostream* os, const InnerLogRecord& rec) {
    if (!os) return;
    *os << "{\"state\":" << rec.state << ",\"step\":" << rec.step
        << ",\"objective\":" << format_g12(rec.objective) << ",\"gap\":" << format_g12(rec.gap)
        << ",\"clamped\":" << (rec.clamped ? "true" : "false") << "}\n";
}

/// Monte Carlo estimate of the per-state adversary gradient
/// grad_{theta_{s_i}} V^{pi o nu_theta}(start): along each sampled trajectory
/// accumulate gamma^t Qhat(s_t,a_t) grad_obs log pi(a_t | x_{s_t}) into the
/// bucket of s_t, where Qhat is the reward-to-go.
inline AdvGradEstimate adv_value_gradient_mc(const TabularIsaMdp& mdp, const PolicySpec& policy,
                                             const ObsPerturbation& pert, const Vec& start,
                                             long n_traj, int horizon, std::uint64_t seed) {
    require(std::holds_alternative<EmbeddedSoftmax>(policy), ErrorKind::Unsupported,
            "adversary gradients require an EmbeddedSoftmax policy");
    pert.validate();
    if (horizon <= 0) horizon = auto_horizon(mdp.gamma);
    require(std::pow(mdp.gamma, horizon) <= 1e-8 + 1e-15, ErrorKind::InvalidArgument,
            "horizon too short: gamma^horizon must be <= 1e-8");

    const int S = mdp.n_states;
    const int d = mdp.embed_dim();
    PolicyMatrix behavior = policy_matrix(policy, mdp, pert);

    // Observation and score table are fixed during the estimate.
    std::vector<std::vector<Vec>> score(S);
    for (int s = 0; s < S; ++s) {
        Vec x = mdp.embedding(s) + pert.delta.row(s).transpose();
        for (int a = 0; a < mdp.n_actions; ++a)
            score[s].push_back(log_prob_grad_obs(policy, x, a));
    }

    Mat sum = Mat::Zero(S, d);
    Mat sum_sq = Mat::Zero(S, d);
    std::vector<std::uint8_t> visited(S, 0);
    Mat contrib(S, d);
    for (long i = 0; i < n_traj; ++i) {
        Trajectory traj =
            sample_trajectory(mdp, behavior, start, horizon, stream_seed(seed, i));
        contrib.setZero();
        double discount = 1.0;
        for (const Step& st : traj) {
            contrib.row(st.state) +=
                discount * st.reward_to_go * score[st.state][st.action].transpose();
            visited[st.state] = 1;
            discount *= mdp.gamma;
        }
        sum += contrib;
        sum_sq += contrib.cwiseProduct(contrib);
    }

    AdvGradEstimate out;
    out.n_trajectories = n_traj;
    out.visited = std::move(visited);
    out.grad = sum / static_cast<double>(n_traj);
    out.std_err = Mat::Zero(S, d);
    if (n_traj > 1) {
        for (int s = 0; s < S; ++s)
            for (int j = 0; j < d; ++j) {
                double mean = out.grad(s, j);
                double var = (sum_sq(s, j) - n_traj * mean * mean) /
                             static_cast<double>(n_traj - 1);
                out.std_err(s, j) = std::sqrt(std::max(var, 0.0) / static_cast<double>(n_traj));
            }
    }
    return out;
}

/// First-order stationarity gap of the linear model over the l-infinity ball:
/// max_{|u|_inf <= eps} <theta_s - u, g> = <theta_s, g> + eps |g|_1. Zero
/// exactly at box-extreme minimizers.
inline double fosc_gap(const Vec& g, const Vec& theta_s, double eps) {
    require(g.size() == theta_s.size(), ErrorKind::DimensionMismatch, "fosc_gap: length mismatch");
    require(theta_s.cwiseAbs().maxCoeff() <= eps || theta_s.size() == 0,
            ErrorKind::BudgetExceeded, "fosc_gap: perturbation outside the budget");
    return std::max(0.0, theta_s.dot(g) + eps * g.lpNorm<1>());
}

struct FoscReport {
    Vec final_gaps;       // per-state FOSC gap at exit
    int sweeps_run = 0;
    bool converged = false;  // every state reached gap <= delta
};

namespace detail {

inline double exact_adv_value(const TabularIsaMdp& mdp, const PolicySpec& policy,
                              const ObsPerturbation& pert, const Vec& start) {
    return start.dot(solve_value(mdp, policy_matrix(policy, mdp, pert)).v);
}

/// Central finite differences of the exact adversarial value w.r.t. each
/// perturbation coordinate.
inline Mat exact_adv_gradient_fd(const TabularIsaMdp& mdp, const PolicySpec& policy,
                                 const ObsPerturbation& pert, const Vec& start,
                                 double h = 1e-6) {
    Mat g(pert.delta.rows(), pert.delta.cols());
    ObsPerturbation probe = pert;
    probe.eps = pert.eps + h;  // probes may poke outside the ball
    for (int s = 0; s < g.rows(); ++s)
        for (int j = 0; j < g.cols(); ++j) {
            double orig = pert.delta(s, j);
            probe.delta(s, j) = orig + h;
            double up = exact_adv_value(mdp, policy, probe, start);
            probe.delta(s, j) = orig - h;
            double down = exact_adv_value(mdp, policy, probe, start);
            probe.delta(s, j) = orig;
            g(s, j) = (up - down) / (2.0 * h);
        }
    return g;
}

inline double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace detail

/// Sign-gradient PGD on the sampled adversarial value. Per sweep: estimate the
/// per-state gradient (fresh batch, or exact finite differences when
/// config.exact_gradient), evaluate the FOSC gap, stop states whose gap is
/// <= delta, step the rest and clamp to the ball.
inline std::pair<ObsPerturbation, FoscReport> pgd_inner(const TabularIsaMdp& mdp,
                                                        const PolicySpec& policy,
                                                        const InnerSolverConfig& config,
                                                        const Vec& start,
                                                        std::ostream* log = nullptr) {
    require(std::holds_alternative<EmbeddedSoftmax>(policy), ErrorKind::Unsupported,
            "pgd_inner requires an EmbeddedSoftmax policy with embeddings");
    config.validate();
    const int S = mdp.n_states;
    ObsPerturbation pert = zero_perturbation(mdp, config.eps);
    FoscReport report;
    report.final_gaps = Vec::Zero(S);

    for (int sweep = 0; sweep < config.steps; ++sweep) {
        Mat grad;
        if (config.exact_gradient) {
            grad = detail::exact_adv_gradient_fd(mdp, policy, pert, start);
        } else {
            grad = adv_value_gradient_mc(mdp, policy, pert, start, config.n_traj, config.horizon,
                                         stream_seed(config.seed, sweep))
                       .grad;
        }
        bool any_active = false;
        std::vector<std::uint8_t> active(S, 0);
        for (int s = 0; s < S; ++s) {
            report.final_gaps(s) = fosc_gap(grad.row(s).transpose(), pert.delta.row(s).transpose(),
                                            config.eps);
            active[s] = report.final_gaps(s) > config.delta;
            any_active |= active[s] != 0;
        }
        report.sweeps_run = sweep + 1;
        if (!any_active) {
            report.converged = true;
            break;
        }
        for (int s = 0; s < S; ++s) {
            if (!active[s]) continue;
            bool clamped = false;
            for (int j = 0; j < pert.delta.cols(); ++j) {
                double moved = pert.delta(s, j) - config.step_size * detail::sign_of(grad(s, j));
                double boxed = std::clamp(moved, -config.eps, config.eps);
                clamped |= boxed != moved;
                pert.delta(s, j) = boxed;
            }
            if (log)
                write_inner_log(log, InnerLogRecord{s, sweep,
                                                    detail::exact_adv_value(mdp, policy, pert,
                                                                            start),
                                                    report.final_gaps(s), clamped});
        }
    }
    pert.validate();
    return {std::move(pert), std::move(report)};
}

/// Inner KL maximization: gradient ascent on
/// theta |-> KL(pi(.|obs) || pi(.|obs + theta)) clamped to the ball, with SGLD
/// noise of scale sqrt(2 * step_size * temperature) when temperature > 0.
/// theta = 0 is a stationary minimum of the objective, so the ascent starts
/// from a random point in the ball; with config.corner_init it starts from
/// the best of the 2^d sign corners instead. With temperature = 0 a step that
/// decreases the objective is rejected and the step size halved, which makes
/// the accepted-objective sequence monotone.
inline Vec kl_inner(const PolicySpec& policy, const Vec& obs, const InnerSolverConfig& config,
                    std::ostream* log = nullptr, int state_label = -1) {
    const auto* es = std::get_if<EmbeddedSoftmax>(&policy);
    require(es != nullptr, ErrorKind::Unsupported, "kl_inner requires an EmbeddedSoftmax policy");
    config.validate();
    const int d = static_cast<int>(es->weights.cols());
    if (config.eps == 0.0) return Vec::Zero(d);

    Rng rng(stream_seed(config.seed, 0x6b6c)); // "kl"
    Vec p = action_probs(policy, obs);
    Vec theta(d);
    for (int j = 0; j < d; ++j) theta(j) = rng.uniform(-config.eps, config.eps);
    double objective = kl(p, action_probs(policy, Vec(obs + theta)));
    if (config.corner_init && d <= 12) {
        for (int mask = 0; mask < (1 << d); ++mask) {
            Vec corner(d);
            for (int j = 0; j < d; ++j) corner(j) = (mask >> j) & 1 ? config.eps : -config.eps;
            double val = kl(p, action_probs(policy, Vec(obs + corner)));
            if (val > objective) {
                objective = val;
                theta = corner;
            }
        }
    }
    double step = config.step_size;
    double noise_scale = std::sqrt(2.0 * config.step_size * config.temperature);

    for (int k = 0; k < config.steps; ++k) {
        Vec q = action_probs(policy, Vec(obs + theta));
        Vec grad = es->weights.transpose() * (q - p);
        Vec cand = theta + step * grad;
        if (config.temperature > 0.0)
            for (int j = 0; j < d; ++j) cand(j) += noise_scale * rng.normal();
        bool clamped = false;
        for (int j = 0; j < d; ++j) {
            double boxed = std::clamp(cand(j), -config.eps, config.eps);
            clamped |= boxed != cand(j);
            cand(j) = boxed;
        }
        double cand_obj = kl(p, action_probs(policy, Vec(obs + cand)));
        if (config.temperature > 0.0 || cand_obj >= objective) {
            theta = cand;
            objective = cand_obj;
        } else {
            step *= 0.5;
        }
        if (log)
            write_inner_log(log, InnerLogRecord{state_label, k, objective, step, clamped});
    }
    return theta;
}

struct SurrogateBoundReport {
    double value_drop = 0.0;         // V^pi(s) - V^{pi o nu}(s), exact solves
    double kl_value = 0.0;           // KL at the PGD output
    double fisher_lambda_max = 0.0;  // largest eigenvalue of F at theta = 0
    double bound_coefficient = 0.0;  // 2 delta / (lambda_max K)
    double ratio = 0.0;              // value_drop / kl_value when not degenerate
    bool degenerate = false;         // KL numerically zero
    bool holds = false;              // value_drop >= slack * coefficient * KL
};

/// Diagnostic for the KL lower bound on the robustness drop. The PGD descent
/// targets V(s) at the probed state; the bound's step-size margin delta is not
/// observable, so config.delta stands in and the check is directional.
inline SurrogateBoundReport surrogate_bound_check(const TabularIsaMdp& mdp,
                                                  const PolicySpec& policy, int obs_state,
                                                  const InnerSolverConfig& pgd_config,
                                                  double slack = 1.0) {
    require(obs_state >= 0 && obs_state < mdp.n_states, ErrorKind::InvalidArgument,
            "obs_state out of range");
    Vec start = Vec::Zero(mdp.n_states);
    start(obs_state) = 1.0;
    auto [pert, fosc] = pgd_inner(mdp, policy, pgd_config, start);

    SurrogateBoundReport rep;
    Vec v_nat = solve_value(mdp, policy_matrix(policy, mdp)).v;
    Vec v_adv = solve_value(mdp, policy_matrix(policy, mdp, pert)).v;
    rep.value_drop = v_nat(obs_state) - v_adv(obs_state);

    Vec x = mdp.embedding(obs_state);
    Vec p = action_probs(policy, x);
    rep.kl_value = kl(p, action_probs(policy, Vec(x + pert.delta.row(obs_state).transpose())));
    require(rep.kl_value <= 0.01, ErrorKind::BudgetExceeded,
            "surrogate_bound_check: KL exceeds the small-perturbation guard");

    Eigen::SelfAdjointEigenSolver<Mat> eig(fisher_at_obs(policy, x).m);
    rep.fisher_lambda_max = eig.eigenvalues().maxCoeff();
    rep.degenerate = rep.kl_value < 1e-15 || rep.fisher_lambda_max < 1e-15;
    if (rep.degenerate) {
        rep.holds = rep.value_drop >= -1e-12;
        return rep;
    }
    rep.bound_coefficient =
        2.0 * pgd_config.delta / (rep.fisher_lambda_max * static_cast<double>(pgd_config.steps));
    rep.ratio = rep.value_drop / rep.kl_value;
    rep.holds = rep.value_drop + 1e-12 >= slack * rep.bound_coefficient * rep.kl_value;
    return rep;
}

}  // namespace arpolab
