#pragma once

#include "arpolab/adversary.hpp"

#include <chrono>
#include <ostream>

namespace arpolab {

enum class Paradigm { Spo, Arpo, Barpo };
enum class StepSchedule { Constant, OneOverSqrtK };

struct TrainerConfig {
    Paradigm paradigm = Paradigm::Spo;
    int outer_steps = 100;          // K
    double outer_step_size = 0.1;
    StepSchedule schedule = StepSchedule::Constant;
    bool monte_carlo = false;       // exact gradients otherwise
    long n_traj = 256;              // Monte Carlo batch size
    int horizon = 0;                // 0 = auto
    InnerSolverConfig inner;
    double kappa = 0.0;             // SPO-guidance weight; 0 = pure robust objective
    double clip_eta = 0.2;
    double entropy_coeff = 0.0;     // Monte Carlo mode only
    std::uint64_t seed = 0;
    bool record_exact_strongest = true;

    void validate() const {
        require(outer_steps >= 1, ErrorKind::InvalidArgument, "outer_steps must be at least 1");
        require(outer_step_size >= 0.0, ErrorKind::InvalidArgument,
                "outer_step_size must be nonnegative");
        require(clip_eta > 0.0 && clip_eta < 1.0, ErrorKind::InvalidArgument,
                "clip_eta must lie in (0, 1)");
        require(kappa >= 0.0, ErrorKind::InvalidArgument, "kappa must be nonnegative");
        require(entropy_coeff >= 0.0, ErrorKind::InvalidArgument,
                "entropy_coeff must be nonnegative");
        require(n_traj >= 1, ErrorKind::InvalidArgument, "n_traj must be positive");
    }

    double step_size_at(int /*k*/) const {
        if (schedule == StepSchedule::OneOverSqrtK)
            return outer_step_size / std::sqrt(static_cast<double>(outer_steps));
        return outer_step_size;
    }
};

struct TraceRecord {
    int iter = 0;
    Vec params;
    double v_nat = 0.0;
    double v_adv = 0.0;         // under the iteration's inner solution
    double v_adv_exact = 0.0;   // exact strongest discrete adversary
    double grad_norm = 0.0;     // projected norm for box-constrained policies
    double inner_metric = 0.0;  // max FOSC gap (ARPO) or mean KL (BARPO)
    double wall_ms = 0.0;
};

struct TrainTrace {
    std::vector<TraceRecord> records;  // outer_steps + 1 entries, initialization included
    PolicySpec final_policy;
};

/// PPO clipped term g(x, y) = min(x y, clip(x, 1-eta, 1+eta) y).
inline double clip_objective(double ratio, double advantage, double eta) {
    require(eta > 0.0 && eta < 1.0, ErrorKind::InvalidArgument, "eta must lie in (0, 1)");
    return std::min(ratio * advantage,
                    std::clamp(ratio, 1.0 - eta, 1.0 + eta) * advantage);
}

namespace detail {

/// Where the policy reads its input for state s: a (possibly remapped) state
/// index for tabular variants, an observation vector for embedded ones.
struct EvalInputs {
    bool embedded = false;
    std::vector<int> state_of;  // tabular: input state per true state
    std::vector<Vec> obs_of;    // embedded: input observation per true state
};

inline EvalInputs clean_inputs(const TabularIsaMdp& mdp, const PolicySpec& policy) {
    EvalInputs in;
    in.embedded = std::holds_alternative<EmbeddedSoftmax>(policy);
    for (int s = 0; s < mdp.n_states; ++s) {
        if (in.embedded)
            in.obs_of.push_back(mdp.embedding(s));
        else
            in.state_of.push_back(s);
    }
    return in;
}

inline EvalInputs adversary_inputs(const TabularIsaMdp& mdp, const PolicySpec& policy,
                                   const DiscreteAdversary& adv) {
    EvalInputs in;
    in.embedded = std::holds_alternative<EmbeddedSoftmax>(policy);
    for (int s = 0; s < mdp.n_states; ++s) {
        int sv = perturbed_state(mdp, adv, s);
        if (in.embedded)
            in.obs_of.push_back(mdp.embedding(sv));
        else
            in.state_of.push_back(sv);
    }
    return in;
}

inline EvalInputs perturbation_inputs(const TabularIsaMdp& mdp, const PolicySpec& policy,
                                      const ObsPerturbation& pert) {
    require(std::holds_alternative<EmbeddedSoftmax>(policy), ErrorKind::Unsupported,
            "observation perturbations require an EmbeddedSoftmax policy");
    EvalInputs in;
    in.embedded = true;
    for (int s = 0; s < mdp.n_states; ++s)
        in.obs_of.push_back(Vec(mdp.embedding(s) + pert.delta.row(s).transpose()));
    return in;
}

inline Vec score_at(const PolicySpec& policy, const EvalInputs& in, int s, int a) {
    return in.embedded ? log_prob_grad_theta(policy, in.obs_of[s], a)
                       : log_prob_grad_theta(policy, in.state_of[s], a);
}

inline Vec prob_grad_at(const PolicySpec& policy, const EvalInputs& in, int s, int a) {
    return in.embedded ? prob_grad_theta(policy, in.obs_of[s], a)
                       : prob_grad_theta(policy, in.state_of[s], a);
}

/// Uses the probability-derivative form
/// (1/(1-gamma)) sum_s d(s) sum_a Q(s,a) d pi(a|input(s)) / d theta,
/// which agrees with the score form wherever probabilities are positive and
/// stays exact on the boundary of the Direct2 box.
inline Vec assemble_exact_gradient(const TabularIsaMdp& mdp, const PolicySpec& policy,
                                   const PolicyMatrix& behavior, const EvalInputs& in,
                                   const Vec& start) {
    Mat d = visitation(mdp, behavior, start);
    Vec d_state = d.rowwise().sum();
    Mat q = solve_value(mdp, behavior).q;
    Vec grad = Vec::Zero(param_count(policy));
    for (int s = 0; s < mdp.n_states; ++s) {
        if (d_state(s) == 0.0) continue;
        for (int a = 0; a < mdp.n_actions; ++a)
            grad += (d_state(s) * q(s, a) / (1.0 - mdp.gamma)) * prob_grad_at(policy, in, s, a);
    }
    return grad;
}

}  // namespace detail

/// Exact policy gradient of V^{pi_theta}(start), assembled from exact solves:
/// (1/(1-gamma)) sum_{s,a} d(s,a) Q(s,a) grad_theta log pi(a|s).
inline Vec exact_policy_gradient(const TabularIsaMdp& mdp, const PolicySpec& policy,
                                 const Vec& start) {
    return detail::assemble_exact_gradient(mdp, policy, policy_matrix(policy, mdp),
                                           detail::clean_inputs(mdp, policy), start);
}

/// Adversarial form: d and Q belong to pi o nu and the score is evaluated at
/// the perturbed state.
inline Vec exact_policy_gradient(const TabularIsaMdp& mdp, const PolicySpec& policy,
                                 const DiscreteAdversary& adv, const Vec& start) {
    return detail::assemble_exact_gradient(mdp, policy, policy_matrix(policy, mdp, adv),
                                           detail::adversary_inputs(mdp, policy, adv), start);
}

inline Vec exact_policy_gradient(const TabularIsaMdp& mdp, const PolicySpec& policy,
                                 const ObsPerturbation& pert, const Vec& start) {
    return detail::assemble_exact_gradient(mdp, policy, policy_matrix(policy, mdp, pert),
                                           detail::perturbation_inputs(mdp, policy, pert), start);
}

namespace detail {

/// Reward-to-go score-function estimator with the exact advantage of the
/// behavior policy as control variate:
/// (1/N) sum_traj sum_t gamma^t A(s_t, a_t) grad log pi(a_t | input(s_t)).
inline Vec assemble_mc_gradient(const TabularIsaMdp& mdp, const PolicySpec& policy,
                                const std::vector<Trajectory>& batch, const Mat& advantage,
                                const EvalInputs& in) {
    Vec grad = Vec::Zero(param_count(policy));
    for (const Trajectory& traj : batch) {
        double discount = 1.0;
        for (const Step& st : traj) {
            double w = discount * advantage(st.state, st.action);
            if (w != 0.0) grad += w * score_at(policy, in, st.state, st.action);
            discount *= mdp.gamma;
        }
    }
    return grad / static_cast<double>(batch.size());
}

inline Vec assemble_entropy_gradient(const PolicySpec& policy,
                                     const std::vector<Trajectory>& batch,
                                     const EvalInputs& in) {
    Vec grad = Vec::Zero(param_count(policy));
    long samples = 0;
    for (const Trajectory& traj : batch)
        for (const Step& st : traj) {
            grad += in.embedded ? entropy_grad_theta(policy, in.obs_of[st.state])
                                : entropy_grad_theta(policy, in.state_of[st.state]);
            ++samples;
        }
    if (samples > 0) grad /= static_cast<double>(samples);
    return grad;
}

inline bool is_direct2(const PolicySpec& policy) {
    return std::holds_alternative<Direct2>(policy);
}

inline void project_params(const PolicySpec& policy, Vec& params) {
    if (is_direct2(policy))
        for (int i = 0; i < params.size(); ++i) params(i) = std::clamp(params(i), 0.0, 1.0);
}

/// Projected gradient on the [0,1] box: directions blocked by an active bound
/// are zeroed. Identity for unconstrained parameterizations.
inline Vec projected_gradient(const PolicySpec& policy, const Vec& params, const Vec& grad) {
    if (!is_direct2(policy)) return grad;
    Vec out = grad;
    for (int i = 0; i < params.size(); ++i) {
        if (params(i) <= 0.0 && grad(i) < 0.0) out(i) = 0.0;
        if (params(i) >= 1.0 && grad(i) > 0.0) out(i) = 0.0;
    }
    return out;
}

struct IterationEval {
    double v_nat = 0.0;
    double v_adv = 0.0;
    double v_adv_exact = 0.0;
    double inner_metric = 0.0;
    Vec gradient;
};

inline double value_at(const TabularIsaMdp& mdp, const PolicyMatrix& pm, const Vec& start) {
    return start.dot(solve_value(mdp, pm).v);
}

template <typename InnerFn>
TrainTrace run_outer_loop(const PolicySpec& policy0, const TrainerConfig& config,
                          InnerFn&& iteration) {
    config.validate();
    validate_policy(policy0);
    PolicySpec policy = policy0;
    TrainTrace trace;
    trace.records.reserve(config.outer_steps + 1);
    for (int k = 0; k <= config.outer_steps; ++k) {
        auto t0 = std::chrono::steady_clock::now();
        IterationEval ev = iteration(policy, k);
        Vec params = get_params(policy);
        Vec proj = projected_gradient(policy, params, ev.gradient);
        TraceRecord rec;
        rec.iter = k;
        rec.params = params;
        rec.v_nat = ev.v_nat;
        rec.v_adv = ev.v_adv;
        rec.v_adv_exact = ev.v_adv_exact;
        rec.grad_norm = proj.norm();
        rec.inner_metric = ev.inner_metric;
        rec.wall_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
        trace.records.push_back(std::move(rec));
        if (k == config.outer_steps) break;
        params += config.step_size_at(k) * ev.gradient;
        project_params(policy, params);
        set_params(policy, params);
    }
    trace.final_policy = policy;
    return trace;
}

}  // namespace detail

/// Gradient ascent on the natural value V^{pi_theta}(mu0).
inline TrainTrace train_spo(const TabularIsaMdp& mdp, const PolicySpec& policy0,
                            const TrainerConfig& config) {
    require(config.paradigm == Paradigm::Spo, ErrorKind::InvalidArgument,
            "train_spo requires paradigm = SPO");
    const Vec& start = mdp.mu0;
    return detail::run_outer_loop(
        policy0, config, [&](const PolicySpec& policy, int k) {
            detail::IterationEval ev;
            PolicyMatrix pm = policy_matrix(policy, mdp);
            ev.v_nat = detail::value_at(mdp, pm, start);
            ev.v_adv = ev.v_nat;
            ev.v_adv_exact = config.record_exact_strongest
                                 ? start.dot(strongest_adversary_exact(mdp, pm).second.v)
                                 : ev.v_nat;
            if (config.monte_carlo) {
                auto batch = sample_batch(mdp, pm, start, config.n_traj, config.horizon,
                                          stream_seed(config.seed, k, 1));
                ValueSolveResult vs = solve_value(mdp, pm);
                Mat advantage = vs.q;
                advantage.colwise() -= vs.v;
                ev.gradient = detail::assemble_mc_gradient(mdp, policy, batch, advantage,
                                                           detail::clean_inputs(mdp, policy));
            } else {
                ev.gradient = exact_policy_gradient(mdp, policy, start);
            }
            return ev;
        });
}

/// Outer ascent on V^{pi o nu}(mu0) against a delta-approximation inner
/// adversary: pgd_inner for continuous perturbations (embedded policies),
/// the exact strongest discrete adversary for tabular ones.
inline TrainTrace train_arpo(const TabularIsaMdp& mdp, const PolicySpec& policy0,
                             const TrainerConfig& config) {
    require(config.paradigm == Paradigm::Arpo, ErrorKind::InvalidArgument,
            "train_arpo requires paradigm = ARPO");
    const Vec& start = mdp.mu0;
    const bool continuous = std::holds_alternative<EmbeddedSoftmax>(policy0);
    return detail::run_outer_loop(
        policy0, config, [&](const PolicySpec& policy, int k) {
            detail::IterationEval ev;
            PolicyMatrix pm = policy_matrix(policy, mdp);
            ev.v_nat = detail::value_at(mdp, pm, start);
            auto strongest = strongest_adversary_exact(mdp, pm);
            ev.v_adv_exact = start.dot(strongest.second.v);

            if (continuous) {
                InnerSolverConfig inner = config.inner;
                inner.seed = stream_seed(config.seed, k, 2);
                auto [pert, fosc] = pgd_inner(mdp, policy, inner, start);
                ev.inner_metric = fosc.final_gaps.size() ? fosc.final_gaps.maxCoeff() : 0.0;
                PolicyMatrix composed = policy_matrix(policy, mdp, pert);
                ev.v_adv = detail::value_at(mdp, composed, start);
                if (config.monte_carlo) {
                    auto batch = sample_batch(mdp, composed, start, config.n_traj, config.horizon,
                                              stream_seed(config.seed, k, 1));
                    ValueSolveResult vs = solve_value(mdp, composed);
                    Mat advantage = vs.q;
                    advantage.colwise() -= vs.v;
                    ev.gradient = detail::assemble_mc_gradient(
                        mdp, policy, batch, advantage,
                        detail::perturbation_inputs(mdp, policy, pert));
                } else {
                    ev.gradient = exact_policy_gradient(mdp, policy, pert, start);
                }
            } else {
                const DiscreteAdversary& adv = strongest.first;
                ev.v_adv = start.dot(strongest.second.v);
                if (config.monte_carlo) {
                    PolicyMatrix composed = apply_adversary(pm, adv, mdp);
                    auto batch = sample_batch(mdp, composed, start, config.n_traj, config.horizon,
                                              stream_seed(config.seed, k, 1));
                    ValueSolveResult vs = solve_value(mdp, composed);
                    Mat advantage = vs.q;
                    advantage.colwise() -= vs.v;
                    ev.gradient = detail::assemble_mc_gradient(
                        mdp, policy, batch, advantage,
                        detail::adversary_inputs(mdp, policy, adv));
                } else {
                    ev.gradient = exact_policy_gradient(mdp, policy, adv, start);
                }
            }
            return ev;
        });
}

/// Bilevel training against the KL-surrogate adversary. The inner problem
/// maximizes KL(pi(.|s) || pi(.|s + theta_s)) per state; the outer step treats
/// the inner solution as constant and ascends the robust objective plus kappa
/// times the clean SPO-guidance objective. Entropy regularization applies in
/// Monte Carlo mode.
inline TrainTrace train_barpo(const TabularIsaMdp& mdp, const PolicySpec& policy0,
                              const TrainerConfig& config) {
    require(config.paradigm == Paradigm::Barpo, ErrorKind::InvalidArgument,
            "train_barpo requires paradigm = BARPO");
    require(std::holds_alternative<EmbeddedSoftmax>(policy0), ErrorKind::Unsupported,
            "train_barpo requires an EmbeddedSoftmax policy");
    const Vec& start = mdp.mu0;
    return detail::run_outer_loop(
        policy0, config, [&](const PolicySpec& policy, int k) {
            detail::IterationEval ev;
            PolicyMatrix pm = policy_matrix(policy, mdp);
            ev.v_nat = detail::value_at(mdp, pm, start);
            ev.v_adv_exact = config.record_exact_strongest
                                 ? start.dot(strongest_adversary_exact(mdp, pm).second.v)
                                 : ev.v_nat;

            ObsPerturbation pert = zero_perturbation(mdp, config.inner.eps);
            double kl_sum = 0.0;
            for (int s = 0; s < mdp.n_states; ++s) {
                InnerSolverConfig inner = config.inner;
                inner.seed = stream_seed(config.seed, k, 100 + s);
                Vec x = mdp.embedding(s);
                Vec theta = kl_inner(policy, x, inner);
                pert.delta.row(s) = theta.transpose();
                kl_sum += kl(action_probs(policy, x), action_probs(policy, Vec(x + theta)));
            }
            ev.inner_metric = kl_sum / mdp.n_states;
            PolicyMatrix composed = policy_matrix(policy, mdp, pert);
            ev.v_adv = detail::value_at(mdp, composed, start);

            if (config.monte_carlo) {
                auto batch = sample_batch(mdp, pm, start, config.n_traj, config.horizon,
                                          stream_seed(config.seed, k, 1));
                ValueSolveResult vs = solve_value(mdp, pm);
                Mat advantage = vs.q;
                advantage.colwise() -= vs.v;
                detail::EvalInputs clean = detail::clean_inputs(mdp, policy);
                ev.gradient = detail::assemble_mc_gradient(
                    mdp, policy, batch, advantage,
                    detail::perturbation_inputs(mdp, policy, pert));
                if (config.kappa > 0.0)
                    ev.gradient +=
                        config.kappa *
                        detail::assemble_mc_gradient(mdp, policy, batch, advantage, clean);
                if (config.entropy_coeff > 0.0)
                    ev.gradient += config.entropy_coeff *
                                   detail::assemble_entropy_gradient(policy, batch, clean);
            } else {
                ev.gradient = exact_policy_gradient(mdp, policy, pert, start);
                if (config.kappa > 0.0)
                    ev.gradient += config.kappa * exact_policy_gradient(mdp, policy, start);
            }
            return ev;
        });
}

inline TrainTrace train(const TabularIsaMdp& mdp, const PolicySpec& policy0,
                        const TrainerConfig& config) {
    switch (config.paradigm) {
        case Paradigm::Spo: return train_spo(mdp, policy0, config);
        case Paradigm::Arpo: return train_arpo(mdp, policy0, config);
        case Paradigm::Barpo: return train_barpo(mdp, policy0, config);
    }
    fail(ErrorKind::InvalidArgument, "unknown paradigm");
}

/// CSV summary; floats carry 12 significant digits.
inline void write_trace_csv(const TrainTrace& trace, std::ostream& os) {
    os << "iter,v_nat,v_adv,v_adv_exact,grad_norm,inner_metric\n";
    for (const TraceRecord& r : trace.records)
        os << r.iter << ',' << format_g12(r.v_nat) << ',' << format_g12(r.v_adv) << ','
           << format_g12(r.v_adv_exact) << ',' << format_g12(r.grad_norm) << ','
           << format_g12(r.inner_metric) << '\n';
}

/// Line-delimited full records, parameters at replay precision. Timing lives
/// in the run manifest, keeping these records byte-deterministic.
inline void write_trace_jsonl(const TrainTrace& trace, std::ostream& os) {
    for (const TraceRecord& r : trace.records) {
        os << "{\"iter\":" << r.iter << ",\"params\":[";
        for (int i = 0; i < r.params.size(); ++i) {
            if (i) os << ',';
            os << format_full(r.params(i));
        }
        os << "],\"v_nat\":" << format_g12(r.v_nat) << ",\"v_adv\":" << format_g12(r.v_adv)
           << ",\"v_adv_exact\":" << format_g12(r.v_adv_exact)
           << ",\"grad_norm\":" << format_g12(r.grad_norm)
           << ",\"inner_metric\":" << format_g12(r.inner_metric) << "}\n";
    }
}

}  // namespace arpolab
