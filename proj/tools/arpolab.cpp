// arpolab command-line driver: reproduce-toy, train, sweep, attack, basins.
// Exit codes: 0 success, 1 check failure, 2 config error, 3 internal error.

#include "arpolab/analysis.hpp"
#include "arpolab/config.hpp"
#include "arpolab/manifest.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace arpolab;

namespace {

struct Check {
    std::string name;
    bool pass = false;
    std::string detail;
};

void run_check(std::vector<Check>& checks, const std::string& name,
               const std::function<std::pair<bool, std::string>()>& body) {
    Check c;
    c.name = name;
    try {
        auto [pass, detail] = body();
        c.pass = pass;
        c.detail = detail;
    } catch (const std::exception& e) {
        c.pass = false;
        c.detail = e.what();
    }
    checks.push_back(std::move(c));
}

int report_checks(const std::vector<Check>& checks, bool as_json) {
    bool all = true;
    for (const Check& c : checks) all = all && c.pass;
    if (as_json) {
        nlohmann::json j;
        j["checks"] = nlohmann::json::array();
        for (const Check& c : checks)
            j["checks"].push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
        j["all_pass"] = all;
        std::cout << j.dump(2) << '\n';
    } else {
        for (const Check& c : checks)
            std::cout << (c.pass ? "[PASS] " : "[FAIL] ") << c.name
                      << (c.detail.empty() ? "" : "  (" + c.detail + ")") << '\n';
        std::cout << (all ? "RESULT: all checks passed" : "RESULT: checks FAILED") << '\n';
    }
    return all ? 0 : 1;
}

int cmd_reproduce_toy(double gamma, bool as_json) {
    TabularIsaMdp mdp = toy_isa_mdp(gamma);
    std::vector<Check> checks;

    run_check(checks, "closed_form_matches_solver", [&] {
        double worst = 0.0;
        for (double a : {0.0, 0.25, 0.5, 0.77, 1.0})
            for (double b : {0.0, 0.3, 0.7, 0.9, 1.0}) {
                ToyClosedForm f = toy_closed_form(a, b);
                Vec v = solve_value(mdp, direct2_matrix(a, b)).v;
                worst = std::max(worst, std::max(std::abs(f.v1 - v(0)), std::abs(f.v2 - v(1))));
            }
        return std::make_pair(worst <= 1e-9, "max |closed - solver| = " + format_g12(worst));
    });

    run_check(checks, "corner_values", [&] {
        struct Row {
            double a, b, v1, v2;
        };
        const Row expected[] = {{1, 1, 0.16, 1.89},
                                {0, 1, -0.81, 1.26},
                                {0, 0, -0.95, -0.35},
                                {1, 0, -2.47, -1.71}};
        for (const Row& r : expected) {
            Vec v = solve_value(mdp, direct2_matrix(r.a, r.b)).v;
            if (std::abs(v(0) - r.v1) > 0.01 || std::abs(v(1) - r.v2) > 0.01)
                return std::make_pair(false, "mismatch at (" + format_g12(r.a) + "," +
                                                 format_g12(r.b) + ")");
        }
        return std::make_pair(true, std::string());
    });

    run_check(checks, "ordering_chain", [&] {
        Vec v11 = solve_value(mdp, direct2_matrix(1, 1)).v;
        Vec v01 = solve_value(mdp, direct2_matrix(0, 1)).v;
        Vec v00 = solve_value(mdp, direct2_matrix(0, 0)).v;
        Vec v10 = solve_value(mdp, direct2_matrix(1, 0)).v;
        bool ok = (v11.array() >= v01.array()).all() && (v01.array() >= v00.array()).all() &&
                  (v00.array() >= v10.array()).all();
        return std::make_pair(ok, std::string());
    });

    run_check(checks, "beta_tilde", [&] {
        double bt = find_beta_tilde(mdp);
        bool ok = bt >= 0.776 && bt <= 0.778;
        return std::make_pair(ok, "beta_tilde = " + format_g12(bt));
    });

    run_check(checks, "robust_region_sweep", [&] {
        double bt = find_beta_tilde(mdp);
        LandscapeGrid grid = sweep_landscape(mdp, 101);
        int mismatched = 0, compared = 0;
        for (const LandscapeCell& c : grid.cells) {
            if (c.v_rob > c.v_nat + 1e-9)
                return std::make_pair(false, std::string("v_rob above v_nat"));
            double d_diag = std::abs(c.alpha - c.beta) / std::sqrt(2.0);
            double d_seg = std::hypot(std::max(0.0, bt - c.alpha), std::abs(c.beta - bt));
            if (std::min(d_diag, d_seg) <= 0.01) continue;
            ++compared;
            if (c.robust != in_robust_set_closed_form(c.alpha, c.beta, bt)) ++mismatched;
        }
        return std::make_pair(mismatched == 0, std::to_string(compared) + " cells compared, " +
                                                   std::to_string(mismatched) + " mismatched");
    });

    run_check(checks, "kkt_triple", [&] {
        bool a = detect_fosp(mdp, 0.0, 0.0, FospObjective::Arpo).is_fosp;
        bool b = !detect_fosp(mdp, 0.0, 0.0, FospObjective::Spo).is_fosp;
        bool c = detect_fosp(mdp, 1.0, 1.0, FospObjective::Spo).is_fosp;
        return std::make_pair(a && b && c,
                              std::string("arpo(0,0)=") + (a ? "fosp" : "no") + " spo(0,0)=" +
                                  (b ? "no" : "fosp") + " spo(1,1)=" + (c ? "fosp" : "no"));
    });

    run_check(checks, "value_gaps", [&] {
        ValueGapReport rep = value_gap_check(mdp);
        bool ok = std::abs(rep.gap_spo - 3.12) <= 0.02 && std::abs(rep.gap_arpo - 1.44) <= 0.02 &&
                  rep.inequality_holds;
        return std::make_pair(ok, "gap_spo = " + format_g12(rep.gap_spo) +
                                      ", gap_arpo = " + format_g12(rep.gap_arpo));
    });

    run_check(checks, "cut_point", [&] {
        bool removed = cut_point_check(201, mdp, true);
        bool restored = cut_point_check(201, mdp, false);
        return std::make_pair(removed && !restored,
                              std::string("disk removed -> ") + (removed ? "split" : "connected") +
                                  ", restored -> " + (restored ? "split" : "connected"));
    });

    return report_checks(checks, as_json);
}

std::uint64_t config_seed(ExperimentConfig& cfg, long cli_seed) {
    long from_cfg = cfg.get_int("trainer", "seed", cfg.get_int("global", "seed", 0));
    return static_cast<std::uint64_t>(cli_seed >= 0 ? cli_seed : from_cfg);
}

int cmd_train(const std::string& config_path, long seed, const std::string& out_dir, int workers,
              bool as_json) {
    ExperimentConfig cfg = ExperimentConfig::parse_file(config_path);
    TabularIsaMdp mdp = mdp_from(cfg);
    PolicySpec policy0 = policy_from(cfg, mdp);
    TrainerConfig tc = trainer_config_from(cfg, config_seed(cfg, seed));
    cfg.reject_unconsumed();

    fs::create_directories(out_dir);
    RunManifest manifest("train", tc.seed, workers, cfg.raw_text());
    TrainTrace trace = train(mdp, policy0, tc);

    std::string trace_csv = (fs::path(out_dir) / "trace.csv").string();
    std::string trace_jsonl = (fs::path(out_dir) / "trace.jsonl").string();
    std::string policy_path = (fs::path(out_dir) / "final_policy.txt").string();
    {
        std::ofstream os(trace_csv);
        write_trace_csv(trace, os);
    }
    {
        std::ofstream os(trace_jsonl);
        write_trace_jsonl(trace, os);
    }
    {
        std::ofstream os(policy_path);
        save_policy(trace.final_policy, os);
    }
    manifest.add_output(trace_csv);
    manifest.add_output(trace_jsonl);
    manifest.add_output(policy_path);
    manifest.write((fs::path(out_dir) / "manifest.json").string());

    const TraceRecord& last = trace.records.back();
    if (as_json) {
        nlohmann::json j;
        j["iters"] = tc.outer_steps;
        j["final_v_nat"] = last.v_nat;
        j["final_v_adv"] = last.v_adv;
        j["final_v_adv_exact"] = last.v_adv_exact;
        std::cout << j.dump(2) << '\n';
    } else {
        std::cout << "train: " << tc.outer_steps << " outer steps, final v_nat = "
                  << format_g12(last.v_nat) << ", v_adv = " << format_g12(last.v_adv) << '\n';
    }
    return 0;
}

int cmd_sweep(const std::string& config_path, long seed, const std::string& out_dir, int workers,
              bool as_json) {
    ExperimentConfig cfg = ExperimentConfig::parse_file(config_path);
    TabularIsaMdp mdp = mdp_from(cfg);
    int resolution = static_cast<int>(cfg.get_int("sweep", "resolution", 101));
    std::uint64_t used_seed = config_seed(cfg, seed);
    cfg.reject_unconsumed();

    fs::create_directories(out_dir);
    RunManifest manifest("sweep", used_seed, workers, cfg.raw_text());
    LandscapeGrid grid = sweep_landscape(mdp, resolution, workers);
    std::string csv = (fs::path(out_dir) / "landscape.csv").string();
    {
        std::ofstream os(csv);
        write_landscape_csv(grid, os);
    }
    manifest.add_output(csv);
    manifest.write((fs::path(out_dir) / "manifest.json").string());

    if (as_json) {
        nlohmann::json j;
        j["resolution"] = resolution;
        j["cells"] = grid.cells.size();
        std::cout << j.dump(2) << '\n';
    } else {
        std::cout << "sweep: " << grid.cells.size() << " cells at resolution " << resolution
                  << '\n';
    }
    return 0;
}

int cmd_attack(const std::string& config_path, long seed, const std::string& out_dir, int workers,
               bool as_json) {
    ExperimentConfig cfg = ExperimentConfig::parse_file(config_path);
    TabularIsaMdp mdp = mdp_from(cfg);
    PolicySpec policy = policy_from(cfg, mdp);
    AttackOptions opts;
    opts.eps = cfg.get_double("attack", "eps", 0.0);
    opts.seed = config_seed(cfg, seed);
    std::string names = cfg.get_string("attack", "attacks", "random critic mad exact_strongest");
    cfg.reject_unconsumed();
    std::vector<std::string> attacks = iodetail::split_ws(names);

    fs::create_directories(out_dir);
    RunManifest manifest("attack", opts.seed, workers, cfg.raw_text());
    AttackReport report = attack_eval(mdp, policy, attacks, opts);
    std::string csv = (fs::path(out_dir) / "attacks.csv").string();
    {
        std::ofstream os(csv);
        write_attacks_csv(report, os);
    }
    manifest.add_output(csv);
    manifest.write((fs::path(out_dir) / "manifest.json").string());

    if (as_json) {
        nlohmann::json j;
        j["natural_return"] = report.natural_return;
        j["attacks"] = nlohmann::json::array();
        for (const AttackEntry& e : report.entries) {
            nlohmann::json row;
            row["attack"] = e.name;
            row["return"] = e.attacked_return;
            if (e.robustness)
                row["robustness"] = *e.robustness;
            else
                row["robustness"] = nullptr;
            j["attacks"].push_back(row);
        }
        std::cout << j.dump(2) << '\n';
    } else {
        std::cout << "attack: natural return " << format_g12(report.natural_return) << '\n';
        for (const AttackEntry& e : report.entries)
            std::cout << "  " << e.name << ": " << format_g12(e.attacked_return) << '\n';
    }
    return 0;
}

int cmd_basins(const std::string& config_path, long seed, const std::string& out_dir, int workers,
               bool as_json) {
    ExperimentConfig cfg = ExperimentConfig::parse_file(config_path);
    TabularIsaMdp mdp = mdp_from(cfg);
    PolicySpec prototype = policy_from(cfg, mdp);
    TrainerConfig tc = trainer_config_from(cfg, 0);
    int n_inits = static_cast<int>(cfg.get_int("basins", "n_inits", 300));
    double radius = cfg.get_double("basins", "cluster_radius", 0.05);
    InitDistribution init;
    std::string kind = cfg.get_string("basins", "init", "uniform_box");
    if (kind == "uniform_box")
        init.kind = InitDistribution::Kind::UniformBox;
    else if (kind == "gaussian")
        init.kind = InitDistribution::Kind::GaussianParams;
    else if (kind == "delta")
        init.kind = InitDistribution::Kind::Delta;
    else
        fail(ErrorKind::ConfigParse, "unknown init distribution '" + kind + "'");
    init.scale = cfg.get_double("basins", "scale", 1.0);
    std::uint64_t used_seed = config_seed(cfg, seed);
    cfg.reject_unconsumed();

    fs::create_directories(out_dir);
    RunManifest manifest("basins", used_seed, workers, cfg.raw_text());
    BasinReport report =
        basin_statistics(mdp, prototype, tc, n_inits, init, radius, used_seed, workers);
    std::string csv = (fs::path(out_dir) / "basins.csv").string();
    {
        std::ofstream os(csv);
        write_basins_csv(report, os);
    }
    manifest.add_output(csv);
    manifest.write((fs::path(out_dir) / "manifest.json").string());

    if (as_json) {
        nlohmann::json j;
        j["n_inits"] = report.n_inits;
        j["clusters"] = nlohmann::json::array();
        for (const BasinCluster& c : report.clusters)
            j["clusters"].push_back({{"id", c.id},
                                     {"alpha", c.center(0)},
                                     {"beta", c.center(1)},
                                     {"fraction", c.fraction},
                                     {"v_nat", c.v_nat},
                                     {"v_rob", c.v_rob}});
        std::cout << j.dump(2) << '\n';
    } else {
        std::cout << "basins: " << report.clusters.size() << " clusters from " << report.n_inits
                  << " inits\n";
        for (const BasinCluster& c : report.clusters)
            std::cout << "  cluster " << c.id << " at (" << format_g12(c.center(0)) << ", "
                      << format_g12(c.center(1)) << "): fraction " << format_g12(c.fraction)
                      << '\n';
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"arpolab: standard, adversarially robust, and bilevel policy optimization "
                 "on tabular state-adversarial MDPs"};
    app.require_subcommand(1);

    struct Common {
        std::string config;
        long seed = -1;
        std::string out = ".";
        int workers = 1;
        bool json = false;
    };

    auto add_common = [](CLI::App* sub, Common& c, bool needs_config) {
        auto* opt = sub->add_option("--config", c.config, "experiment configuration file");
        if (needs_config) opt->required();
        sub->add_option("--seed", c.seed, "seed override");
        sub->add_option("--out", c.out, "output directory");
        sub->add_option("--workers", c.workers, "parallel workers (1 = fully sequential)")
            ->check(CLI::PositiveNumber);
        sub->add_flag("--json", c.json, "machine-readable output");
    };

    Common reproduce, train_c, sweep_c, attack_c, basins_c;
    double gamma = 0.9;

    CLI::App* reproduce_cmd =
        app.add_subcommand("reproduce-toy", "verify the built-in two-state instance end to end");
    reproduce_cmd->add_option("--gamma", gamma, "discount override (default 0.9)");
    reproduce_cmd->add_flag("--json", reproduce.json, "machine-readable output");

    CLI::App* train_cmd = app.add_subcommand("train", "run a configured trainer");
    add_common(train_cmd, train_c, true);
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "landscape sweep to CSV");
    add_common(sweep_cmd, sweep_c, true);
    CLI::App* attack_cmd = app.add_subcommand("attack", "attack-suite evaluation to CSV");
    add_common(attack_cmd, attack_c, true);
    CLI::App* basins_cmd = app.add_subcommand("basins", "basin statistics to CSV");
    add_common(basins_cmd, basins_c, true);

    CLI11_PARSE(app, argc, argv);

    try {
        if (reproduce_cmd->parsed()) return cmd_reproduce_toy(gamma, reproduce.json);
        if (train_cmd->parsed())
            return cmd_train(train_c.config, train_c.seed, train_c.out, train_c.workers,
                             train_c.json);
        if (sweep_cmd->parsed())
            return cmd_sweep(sweep_c.config, sweep_c.seed, sweep_c.out, sweep_c.workers,
                             sweep_c.json);
        if (attack_cmd->parsed())
            return cmd_attack(attack_c.config, attack_c.seed, attack_c.out, attack_c.workers,
                              attack_c.json);
        if (basins_cmd->parsed())
            return cmd_basins(basins_c.config, basins_c.seed, basins_c.out, basins_c.workers,
                              basins_c.json);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return (e.kind() == ErrorKind::ConfigParse || e.kind() == ErrorKind::Io) ? 2 : 3;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 3;
    }
    return 3;
}
