#pragma once

#include "arpolab/trainers.hpp"

#include <functional>
#include <optional>
#include <thread>

namespace arpolab {

/// Closed forms for the two-state toy at gamma = 0.9: values, their partial
/// derivatives, and the underlying determinant/numerator polynomials.
struct ToyClosedForm {
    double v1 = 0.0, v2 = 0.0;
    double dv1_dalpha = 0.0, dv1_dbeta = 0.0;
    double dv2_dalpha = 0.0, dv2_dbeta = 0.0;
    double p = 0.0, a = 0.0, b = 0.0;
};

inline ToyClosedForm toy_closed_form(double alpha, double beta) {
    ToyClosedForm f;
    f.p = (0.991 - 0.711 * beta) * (0.261 * alpha + 0.109) +
          (0.261 * alpha + 0.009) * (0.711 * beta - 0.891);
    f.a = 0.1305 * alpha + (0.35 * alpha + 0.1) * (0.711 * beta - 0.991) + 0.0045;
    f.b = 0.1305 * alpha + (0.35 * alpha + 0.1) * (0.711 * beta - 0.891) + 0.0545;
    f.v1 = f.a / f.p;
    f.v2 = f.b / f.p;
    double p2 = f.p * f.p;
    f.dv1_dalpha = (0.24885 * beta - 0.21635) / f.p - 0.0261 * f.a / p2;
    f.dv1_dbeta = (0.24885 * alpha + 0.0711) / f.p + 0.0711 * f.a / p2;
    f.dv2_dalpha = (0.24885 * beta - 0.18135) / f.p - 0.0261 * f.b / p2;
    f.dv2_dbeta = (0.24885 * alpha + 0.0711) / f.p + 0.0711 * f.b / p2;
    return f;
}

inline PolicyMatrix direct2_matrix(double alpha, double beta) {
    PolicyMatrix pm;
    pm.probs.resize(2, 2);
    pm.probs << alpha, 1.0 - alpha, beta, 1.0 - beta;
    return pm;
}

/// Gradient of V(mu0) on the toy from the closed forms.
inline Vec toy_value_gradient(const TabularIsaMdp& mdp, double alpha, double beta) {
    ToyClosedForm f = toy_closed_form(alpha, beta);
    Vec g(2);
    g << mdp.mu0(0) * f.dv1_dalpha + mdp.mu0(1) * f.dv2_dalpha,
        mdp.mu0(0) * f.dv1_dbeta + mdp.mu0(1) * f.dv2_dbeta;
    return g;
}

/// Threshold beta_tilde where V^{pi_{1,beta}}(s) - V^{pi_{0,beta}}(s) changes
/// sign. Bisection to 1e-9 on the s1 equation; the s2 root must agree within
/// 1e-6 (the sign structure holds identically for both states).
inline double find_beta_tilde(const TabularIsaMdp& mdp = toy_isa_mdp()) {
    auto f = [&](double beta, int s) {
        double hi = solve_value(mdp, direct2_matrix(1.0, beta)).v(s);
        double lo = solve_value(mdp, direct2_matrix(0.0, beta)).v(s);
        return hi - lo;
    };
    double roots[2];
    for (int s = 0; s < 2; ++s) {
        double f0 = f(0.0, s), f1 = f(1.0, s);
        require(f0 < 0.0 && f1 > 0.0, ErrorKind::InvalidArgument,
                "beta_tilde sign structure violated: f(0) < 0 < f(1) does not hold");
        double lo = 0.0, hi = 1.0;
        while (hi - lo > 1e-9) {
            double mid = 0.5 * (lo + hi);
            (f(mid, s) > 0.0 ? hi : lo) = mid;
        }
        roots[s] = 0.5 * (lo + hi);
    }
    require(std::abs(roots[0] - roots[1]) <= 1e-6, ErrorKind::InvalidArgument,
            "beta_tilde roots from the two state equations disagree");
    return roots[0];
}

/// TRUE iff the exact strongest adversary leaves V(mu0) unchanged within tol.
inline bool classify_robust(const TabularIsaMdp& mdp, double alpha, double beta,
                            double tol = 1e-8) {
    PolicyMatrix pm = direct2_matrix(alpha, beta);
    double v_nat = mdp.mu0.dot(solve_value(mdp, pm).v);
    double v_rob = mdp.mu0.dot(strongest_adversary_exact(mdp, pm).second.v);
    return v_nat - v_rob <= tol;
}

inline bool classify_robust(double alpha, double beta, double tol = 1e-8) {
    return classify_robust(toy_isa_mdp(), alpha, beta, tol);
}

/// Closed-form robust set Theta_Robust = {alpha = beta} u {beta <= min(alpha,
/// beta_tilde)}.
inline bool in_robust_set_closed_form(double alpha, double beta, double beta_tilde) {
    return alpha == beta || beta <= std::min(alpha, beta_tilde);
}

enum class FospObjective { Spo, Arpo };

struct FospReport {
    bool is_fosp = false;
    bool feasible = true;
    std::vector<std::string> active_constraints;
    Vec kkt_multipliers;
    double stationarity_residual = 0.0;
};

/// KKT-based stationarity test on the toy. SPO uses the plain box [0,1]^2;
/// ARPO uses the constrained program {alpha >= beta, beta >= 0,
/// beta <= beta_tilde, alpha <= 1} on which the robust objective coincides
/// with the natural value. The gradient is the exact closed-form gradient.
/// Pass beta_tilde when it is already known to skip the bisection.
inline FospReport detect_fosp(const TabularIsaMdp& mdp, double alpha, double beta,
                              FospObjective objective, double tol_grad = 1e-7,
                              std::optional<double> beta_tilde = std::nullopt) {
    struct Constraint {
        const char* name;
        double value;
        Eigen::Vector2d normal;  // gradient of the constraint function g >= 0
    };
    std::vector<Constraint> constraints;
    if (objective == FospObjective::Spo) {
        constraints = {{"alpha >= 0", alpha, {1.0, 0.0}},
                       {"alpha <= 1", 1.0 - alpha, {-1.0, 0.0}},
                       {"beta >= 0", beta, {0.0, 1.0}},
                       {"beta <= 1", 1.0 - beta, {0.0, -1.0}}};
    } else {
        double bt = beta_tilde ? *beta_tilde : find_beta_tilde(mdp);
        constraints = {{"alpha >= beta", alpha - beta, {1.0, -1.0}},
                       {"beta >= 0", beta, {0.0, 1.0}},
                       {"beta <= beta_tilde", bt - beta, {0.0, -1.0}},
                       {"alpha <= 1", 1.0 - alpha, {-1.0, 0.0}}};
    }

    FospReport rep;
    PolicySpec d2 = Direct2{alpha, beta};
    Vec grad = exact_policy_gradient(mdp, d2, mdp.mu0);
    std::vector<int> active;
    for (std::size_t i = 0; i < constraints.size(); ++i) {
        if (constraints[i].value < -1e-9) rep.feasible = false;
        if (std::abs(constraints[i].value) <= 1e-9) active.push_back(static_cast<int>(i));
    }
    if (!rep.feasible) return rep;

    if (active.empty()) {
        rep.stationarity_residual = grad.cwiseAbs().maxCoeff();
        rep.is_fosp = rep.stationarity_residual <= tol_grad;
        return rep;
    }
    Mat normals(2, active.size());
    for (std::size_t j = 0; j < active.size(); ++j) {
        normals.col(j) = constraints[active[j]].normal;
        rep.active_constraints.push_back(constraints[active[j]].name);
    }
    // Stationarity grad + N lambda = 0 with lambda >= 0.
    rep.kkt_multipliers = normals.colPivHouseholderQr().solve(-grad);
    rep.stationarity_residual = (grad + normals * rep.kkt_multipliers).cwiseAbs().maxCoeff();
    rep.is_fosp = rep.stationarity_residual <= tol_grad &&
                  (rep.kkt_multipliers.size() == 0 || rep.kkt_multipliers.minCoeff() >= -1e-9);
    return rep;
}

inline FospReport detect_fosp(double alpha, double beta, FospObjective objective,
                              double tol_grad = 1e-7) {
    return detect_fosp(toy_isa_mdp(), alpha, beta, objective, tol_grad);
}

struct LandscapeCell {
    double alpha = 0.0, beta = 0.0;
    double v_nat = 0.0, v_rob = 0.0;
    bool robust = false;
    Eigen::Vector2d grad_nat{0.0, 0.0};
    Eigen::Vector2d grad_rob{0.0, 0.0};
    bool fosp_spo = false, fosp_arpo = false;
};

struct LandscapeGrid {
    int resolution = 0;
    std::vector<LandscapeCell> cells;  // row-major over (alpha index, beta index)
};

/// Fills an axis-aligned grid over [0,1]^2 with exact solves. Cells are
/// independent work units; outputs land at fixed indices, so the result is
/// identical for any worker count.
inline LandscapeGrid sweep_landscape(const TabularIsaMdp& mdp, int resolution, int workers = 1,
                                     double robust_tol = 1e-8) {
    require(resolution >= 2, ErrorKind::InvalidArgument, "resolution must be at least 2");
    double beta_tilde = find_beta_tilde(mdp);
    LandscapeGrid grid;
    grid.resolution = resolution;
    grid.cells.resize(static_cast<std::size_t>(resolution) * resolution);

    auto fill = [&](std::size_t begin, std::size_t end) {
        for (std::size_t idx = begin; idx < end; ++idx) {
            int i = static_cast<int>(idx) / resolution;
            int j = static_cast<int>(idx) % resolution;
            LandscapeCell cell;
            cell.alpha = static_cast<double>(i) / (resolution - 1);
            cell.beta = static_cast<double>(j) / (resolution - 1);
            PolicyMatrix pm = direct2_matrix(cell.alpha, cell.beta);
            cell.v_nat = mdp.mu0.dot(solve_value(mdp, pm).v);
            auto strongest = strongest_adversary_exact(mdp, pm);
            cell.v_rob = mdp.mu0.dot(strongest.second.v);
            cell.robust = cell.v_nat - cell.v_rob <= robust_tol;
            PolicySpec d2 = Direct2{cell.alpha, cell.beta};
            cell.grad_nat = exact_policy_gradient(mdp, d2, mdp.mu0);
            cell.grad_rob = exact_policy_gradient(mdp, d2, strongest.first, mdp.mu0);
            cell.fosp_spo = detect_fosp(mdp, cell.alpha, cell.beta, FospObjective::Spo).is_fosp;
            cell.fosp_arpo = detect_fosp(mdp, cell.alpha, cell.beta, FospObjective::Arpo, 1e-7,
                                         beta_tilde)
                                 .is_fosp;
            grid.cells[idx] = cell;
        }
    };

    workers = std::max(1, workers);
    if (workers == 1) {
        fill(0, grid.cells.size());
    } else {
        std::vector<std::thread> pool;
        std::size_t chunk = (grid.cells.size() + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            std::size_t begin = w * chunk;
            std::size_t end = std::min(grid.cells.size(), begin + chunk);
            if (begin >= end) break;
            pool.emplace_back(fill, begin, end);
        }
        for (auto& t : pool) t.join();
    }
    return grid;
}

inline void write_landscape_csv(const LandscapeGrid& grid, std::ostream& os) {
    os << "alpha,beta,v_nat,v_rob,robust,fosp_spo,fosp_arpo\n";
    for (const LandscapeCell& c : grid.cells)
        os << format_g12(c.alpha) << ',' << format_g12(c.beta) << ',' << format_g12(c.v_nat)
           << ',' << format_g12(c.v_rob) << ',' << (c.robust ? 1 : 0) << ','
           << (c.fosp_spo ? 1 : 0) << ',' << (c.fosp_arpo ? 1 : 0) << '\n';
}

struct InitDistribution {
    // Delta keeps the prototype's own parameters (useful for pinning a run at
    // an exact start point).
    enum class Kind { UniformBox, GaussianParams, Delta } kind = Kind::UniformBox;
    double scale = 1.0;
};

struct BasinCluster {
    int id = 0;
    Vec center;  // parameters of the first member
    double fraction = 0.0;
    double v_nat = 0.0;
    double v_rob = 0.0;
    int count = 0;
};

struct BasinReport {
    int n_inits = 0;
    std::vector<BasinCluster> clusters;  // sorted by descending fraction
};

/// Runs the configured trainer from random initializations and clusters the
/// terminal parameter points by radius (first member anchors a cluster;
/// assignment scans inits in index order, so the clustering is deterministic
/// for any worker count).
inline BasinReport basin_statistics(const TabularIsaMdp& mdp, const PolicySpec& prototype,
                                    const TrainerConfig& config, int n_inits,
                                    const InitDistribution& init, double cluster_radius,
                                    std::uint64_t seed, int workers = 1) {
    require(n_inits >= 1, ErrorKind::InvalidArgument, "n_inits must be positive");
    std::vector<Vec> finals(n_inits);

    auto run_range = [&](int begin, int end) {
        for (int i = begin; i < end; ++i) {
            Rng rng(stream_seed(seed, i, 7));
            PolicySpec policy = prototype;
            if (init.kind != InitDistribution::Kind::Delta) {
                Vec params(param_count(policy));
                for (int j = 0; j < params.size(); ++j)
                    params(j) = init.kind == InitDistribution::Kind::UniformBox
                                    ? rng.uniform(0.0, init.scale)
                                    : init.scale * rng.normal();
                set_params(policy, params);
            }
            TrainerConfig run_cfg = config;
            run_cfg.seed = stream_seed(seed, i, 8);
            run_cfg.record_exact_strongest = false;
            finals[i] = get_params(train(mdp, policy, run_cfg).final_policy);
        }
    };
    workers = std::max(1, workers);
    if (workers == 1) {
        run_range(0, n_inits);
    } else {
        std::vector<std::thread> pool;
        int chunk = (n_inits + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            int begin = w * chunk;
            int end = std::min(n_inits, begin + chunk);
            if (begin >= end) break;
            pool.emplace_back(run_range, begin, end);
        }
        for (auto& t : pool) t.join();
    }

    BasinReport report;
    report.n_inits = n_inits;
    for (int i = 0; i < n_inits; ++i) {
        bool assigned = false;
        for (BasinCluster& c : report.clusters) {
            if ((finals[i] - c.center).norm() <= cluster_radius) {
                ++c.count;
                assigned = true;
                break;
            }
        }
        if (!assigned) {
            BasinCluster c;
            c.center = finals[i];
            c.count = 1;
            report.clusters.push_back(std::move(c));
        }
    }
    for (BasinCluster& c : report.clusters) {
        c.fraction = static_cast<double>(c.count) / n_inits;
        PolicySpec policy = prototype;
        set_params(policy, c.center);
        PolicyMatrix pm = policy_matrix(policy, mdp);
        c.v_nat = mdp.mu0.dot(solve_value(mdp, pm).v);
        c.v_rob = mdp.mu0.dot(strongest_adversary_exact(mdp, pm).second.v);
    }
    std::sort(report.clusters.begin(), report.clusters.end(),
              [](const BasinCluster& a, const BasinCluster& b) {
                  if (a.fraction != b.fraction) return a.fraction > b.fraction;
                  return a.center(0) < b.center(0);
              });
    for (std::size_t i = 0; i < report.clusters.size(); ++i)
        report.clusters[i].id = static_cast<int>(i);
    return report;
}

/// CSV schema is toy-scoped: the cluster center must be two-dimensional.
inline void write_basins_csv(const BasinReport& report, std::ostream& os) {
    os << "cluster_id,alpha,beta,fraction,v_nat,v_rob\n";
    for (const BasinCluster& c : report.clusters) {
        require(c.center.size() == 2, ErrorKind::Unsupported,
                "basin CSV schema expects two-parameter policies");
        os << c.id << ',' << format_g12(c.center(0)) << ',' << format_g12(c.center(1)) << ','
           << format_g12(c.fraction) << ',' << format_g12(c.v_nat) << ','
           << format_g12(c.v_rob) << '\n';
    }
}

struct ValueGapReport {
    double gap_spo = 0.0;   // V^{pi_{1,1}}(mu0) - V^{pi_{1,0}}(mu0)
    double gap_arpo = 0.0;  // V^{pi_{0,0}}(mu0) - V^{pi_{1,0}}(mu0)
    bool inequality_holds = false;
};

inline ValueGapReport value_gap_check(const TabularIsaMdp& mdp = toy_isa_mdp()) {
    auto v_at = [&](double a, double b) {
        return mdp.mu0.dot(solve_value(mdp, direct2_matrix(a, b)).v);
    };
    ValueGapReport rep;
    double v_worst = v_at(1.0, 0.0);
    rep.gap_spo = v_at(1.0, 1.0) - v_worst;
    rep.gap_arpo = v_at(0.0, 0.0) - v_worst;
    rep.inequality_holds = rep.gap_arpo < 0.5 * rep.gap_spo;
    return rep;
}

/// Discretizes the robust set on a resolution x resolution grid, optionally
/// removes a disk, and checks 8-neighborhood connectivity between the upper
/// diagonal component (containing (1,1)) and the lower region (containing
/// (1,0)). Returns TRUE when they are disconnected.
inline bool robust_set_disconnected(const TabularIsaMdp& mdp, int resolution,
                                    double center_alpha, double center_beta, double radius,
                                    double tol = 1e-8) {
    require(resolution >= 2, ErrorKind::InvalidArgument, "resolution must be at least 2");
    const int n = resolution;
    std::vector<std::uint8_t> robust(static_cast<std::size_t>(n) * n, 0);
    auto at = [&](int i, int j) -> std::uint8_t& { return robust[i * n + j]; };
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double a = static_cast<double>(i) / (n - 1);
            double b = static_cast<double>(j) / (n - 1);
            if (radius > 0.0 &&
                std::hypot(a - center_alpha, b - center_beta) <= radius)
                continue;
            at(i, j) = classify_robust(mdp, a, b, tol) ? 1 : 0;
        }

    std::vector<int> component(static_cast<std::size_t>(n) * n, -1);
    int n_components = 0;
    std::vector<std::pair<int, int>> stack;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (!at(i, j) || component[i * n + j] >= 0) continue;
            stack.push_back({i, j});
            component[i * n + j] = n_components;
            while (!stack.empty()) {
                auto [ci, cj] = stack.back();
                stack.pop_back();
                for (int di = -1; di <= 1; ++di)
                    for (int dj = -1; dj <= 1; ++dj) {
                        int ni = ci + di, nj = cj + dj;
                        if (ni < 0 || nj < 0 || ni >= n || nj >= n) continue;
                        if (!at(ni, nj) || component[ni * n + nj] >= 0) continue;
                        component[ni * n + nj] = n_components;
                        stack.push_back({ni, nj});
                    }
            }
            ++n_components;
        }

    int top = component[(n - 1) * n + (n - 1)];  // (1,1), on the diagonal
    int low = component[(n - 1) * n + 0];        // (1,0), in the lower region
    if (top < 0 || low < 0) return false;        // degenerate discretization
    return top != low;
}

/// Cut-point check: removing a small disk around (beta_tilde, beta_tilde)
/// disconnects the robust set.
inline bool cut_point_check(int path_resolution, const TabularIsaMdp& mdp = toy_isa_mdp(),
                            bool remove_disk = true, double radius = 0.05) {
    require(path_resolution >= 100, ErrorKind::InvalidArgument,
            "path_resolution must be at least 100");
    double bt = 0.0;
    if (remove_disk) bt = find_beta_tilde(mdp);
    return robust_set_disconnected(mdp, path_resolution, bt, bt, remove_disk ? radius : 0.0);
}

struct AttackEntry {
    std::string name;
    double attacked_return = 0.0;
    std::optional<double> robustness;  // empty when |V^pi(mu0)| < 1e-9
};

struct AttackReport {
    double natural_return = 0.0;
    std::vector<AttackEntry> entries;
};

struct AttackOptions {
    double eps = 0.0;  // 0 disables every attack (identity adversary)
    std::uint64_t seed = 0;
    InnerSolverConfig mad_inner;  // step_size <= 0 selects a strong default

    AttackOptions() { mad_inner.step_size = 0.0; }
};

namespace detail {

inline double kl_or_inf(const Vec& p, const Vec& q) {
    try {
        return kl(p, q);
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::SupportViolation)
            return std::numeric_limits<double>::infinity();
        throw;
    }
}

inline Vec probs_at_state(const PolicySpec& policy, const TabularIsaMdp& mdp, int s) {
    return std::holds_alternative<EmbeddedSoftmax>(policy)
               ? action_probs(policy, mdp.embedding(s))
               : action_probs(policy, s);
}

}  // namespace detail

/// Evaluates the policy under the named attacks, each constructed within
/// budget and scored by an exact solve of V^{pi o nu}(mu0).
///   random:          uniform draw in the l-infinity ball (embedded) or over
///                    perturb_sets (tabular)
///   critic:          per-state choice minimizing sum_a pi(a|s_nu) Q^pi(s,a)
///   mad:             KL-maximizing perturbation (kl_inner for embedded
///                    policies, argmax over perturb_sets for tabular ones)
///   exact_strongest: the exact discrete oracle
inline AttackReport attack_eval(const TabularIsaMdp& mdp, const PolicySpec& policy,
                                const std::vector<std::string>& attacks,
                                const AttackOptions& opts) {
    const bool embedded = std::holds_alternative<EmbeddedSoftmax>(policy);
    PolicyMatrix clean = policy_matrix(policy, mdp);
    ValueSolveResult nat = solve_value(mdp, clean);
    AttackReport report;
    report.natural_return = mdp.mu0.dot(nat.v);

    auto finish = [&](const std::string& name, double attacked) {
        AttackEntry entry;
        entry.name = name;
        entry.attacked_return = attacked;
        if (std::abs(report.natural_return) >= 1e-9)
            entry.robustness = (attacked - report.natural_return) / report.natural_return;
        report.entries.push_back(std::move(entry));
    };
    auto value_of = [&](const PolicyMatrix& pm) { return mdp.mu0.dot(solve_value(mdp, pm).v); };

    for (const std::string& name : attacks) {
        if (opts.eps == 0.0) {
            bool known = name == "random" || name == "critic" || name == "mad" ||
                         name == "exact_strongest";
            require(known, ErrorKind::InvalidArgument, "unknown attack: " + name);
            finish(name, report.natural_return);
            continue;
        }
        if (name == "random") {
            Rng rng(stream_seed(opts.seed, 1));
            if (embedded) {
                ObsPerturbation pert = zero_perturbation(mdp, opts.eps);
                for (int s = 0; s < mdp.n_states; ++s)
                    for (int j = 0; j < pert.delta.cols(); ++j)
                        pert.delta(s, j) = rng.uniform(-opts.eps, opts.eps);
                finish(name, value_of(policy_matrix(policy, mdp, pert)));
            } else {
                DiscreteAdversary adv;
                for (int s = 0; s < mdp.n_states; ++s)
                    adv.remap.push_back(
                        rng.uniform_int(static_cast<int>(mdp.perturb_sets[s].size())));
                finish(name, value_of(policy_matrix(policy, mdp, adv)));
            }
        } else if (name == "critic") {
            DiscreteAdversary adv;
            for (int s = 0; s < mdp.n_states; ++s) {
                double best = std::numeric_limits<double>::infinity();
                int best_c = 0;
                for (std::size_t c = 0; c < mdp.perturb_sets[s].size(); ++c) {
                    int cand = mdp.perturb_sets[s][c];
                    Vec probs = detail::probs_at_state(policy, mdp, cand);
                    double val = nat.q.row(s).dot(probs);
                    if (val < best) {
                        best = val;
                        best_c = static_cast<int>(c);
                    }
                }
                adv.remap.push_back(best_c);
            }
            finish(name, value_of(policy_matrix(policy, mdp, adv)));
        } else if (name == "mad") {
            if (embedded) {
                InnerSolverConfig inner = opts.mad_inner;
                inner.eps = opts.eps;
                inner.temperature = 0.0;
                inner.corner_init = true;  // attack-grade: hunt the global KL maximizer
                if (inner.step_size <= 0.0) {
                    inner.steps = 60;
                    inner.step_size = opts.eps / 10.0;
                }
                ObsPerturbation pert = zero_perturbation(mdp, opts.eps);
                for (int s = 0; s < mdp.n_states; ++s) {
                    inner.seed = stream_seed(opts.seed, 2, s);
                    pert.delta.row(s) = kl_inner(policy, mdp.embedding(s), inner).transpose();
                }
                finish(name, value_of(policy_matrix(policy, mdp, pert)));
            } else {
                DiscreteAdversary adv;
                for (int s = 0; s < mdp.n_states; ++s) {
                    Vec p = detail::probs_at_state(policy, mdp, s);
                    double best = -1.0;
                    int best_c = 0;
                    for (std::size_t c = 0; c < mdp.perturb_sets[s].size(); ++c) {
                        double d = detail::kl_or_inf(
                            p, detail::probs_at_state(policy, mdp, mdp.perturb_sets[s][c]));
                        if (d > best) {
                            best = d;
                            best_c = static_cast<int>(c);
                        }
                    }
                    adv.remap.push_back(best_c);
                }
                finish(name, value_of(policy_matrix(policy, mdp, adv)));
            }
        } else if (name == "exact_strongest") {
            finish(name, mdp.mu0.dot(strongest_adversary_exact(mdp, clean).second.v));
        } else {
            fail(ErrorKind::InvalidArgument, "unknown attack: " + name);
        }
    }
    return report;
}

inline void write_attacks_csv(const AttackReport& report, std::ostream& os) {
    os << "attack,return,robustness\n";
    for (const AttackEntry& e : report.entries)
        os << e.name << ',' << format_g12(e.attacked_return) << ','
           << (e.robustness ? format_g12(*e.robustness) : std::string("undefined")) << '\n';
}

struct HessianReport {
    Mat h;
    Vec eigenvalues;
};

/// Central-difference Hessian of a scalar objective, symmetrized. The point
/// must sit at least 2 * step inside the [lo, hi] box on every coordinate.
inline HessianReport hessian_fd(const std::function<double(const Vec&)>& objective,
                                const Vec& point, double step, double lo = 0.0,
                                double hi = 1.0) {
    require(step > 0.0, ErrorKind::InvalidArgument, "step must be positive");
    for (int i = 0; i < point.size(); ++i)
        require(point(i) >= lo + 2.0 * step && point(i) <= hi - 2.0 * step,
                ErrorKind::BoundaryProximity,
                "hessian_fd requires an interior point at distance >= 2*step from the bounds");
    const int n = static_cast<int>(point.size());
    Mat h(n, n);
    double f0 = objective(point);
    for (int i = 0; i < n; ++i) {
        Vec up = point, down = point;
        up(i) += step;
        down(i) -= step;
        h(i, i) = (objective(up) - 2.0 * f0 + objective(down)) / (step * step);
        for (int j = i + 1; j < n; ++j) {
            Vec pp = point, pm = point, mp = point, mm = point;
            pp(i) += step; pp(j) += step;
            pm(i) += step; pm(j) -= step;
            mp(i) -= step; mp(j) += step;
            mm(i) -= step; mm(j) -= step;
            h(i, j) = (objective(pp) - objective(pm) - objective(mp) + objective(mm)) /
                      (4.0 * step * step);
            h(j, i) = h(i, j);
        }
    }
    h = 0.5 * (h + h.transpose());
    HessianReport rep;
    rep.h = h;
    Eigen::SelfAdjointEigenSolver<Mat> eig(h);
    rep.eigenvalues = eig.eigenvalues();
    return rep;
}

/// V(mu0) of the Direct2 policy (alpha, beta) as a sweep objective.
inline std::function<double(const Vec&)> spo_objective(const TabularIsaMdp& mdp) {
    return [&mdp](const Vec& x) {
        return mdp.mu0.dot(solve_value(mdp, direct2_matrix(x(0), x(1))).v);
    };
}

/// Exact-strongest adversarial value of the Direct2 policy (alpha, beta).
inline std::function<double(const Vec&)> arpo_objective(const TabularIsaMdp& mdp) {
    return [&mdp](const Vec& x) {
        return mdp.mu0.dot(
            strongest_adversary_exact(mdp, direct2_matrix(x(0), x(1))).second.v);
    };
}

}  // namespace arpolab
