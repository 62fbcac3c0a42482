// End-to-end checks of the command-line surface: exit codes, the
// reproduce-toy verification, and the emitted artifacts.

#include "arpolab/manifest.hpp"

#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

struct CliResult {
    int exit_code = -1;
    std::string output;
};

CliResult run_cli(const std::string& args) {
    std::string cmd = std::string(ARPOLAB_CLI_PATH) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    CliResult result;
    std::array<char, 512> buf;
    while (fgets(buf.data(), buf.size(), pipe)) result.output += buf.data();
    int status = pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

fs::path scratch_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / "arpolab_cli_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string config_path(const std::string& name) {
    return std::string(ARPOLAB_CONFIG_DIR) + "/" + name;
}

}  // namespace

TEST_CASE("reproduce-toy passes on the default instance") {
    CliResult r = run_cli("reproduce-toy");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("RESULT: all checks passed") != std::string::npos);
    CHECK(r.output.find("[FAIL]") == std::string::npos);
}

TEST_CASE("reproduce-toy fails under a gamma override") {
    CliResult r = run_cli("reproduce-toy --gamma 0.5");
    CHECK(r.exit_code == 1);
    CHECK(r.output.find("[FAIL] beta_tilde") != std::string::npos);
}

TEST_CASE("reproduce-toy emits machine-readable results") {
    CliResult r = run_cli("reproduce-toy --json");
    CHECK(r.exit_code == 0);
    nlohmann::json j = nlohmann::json::parse(r.output);
    CHECK(j["all_pass"] == true);
    CHECK(j["checks"].size() >= 8);
}

TEST_CASE("config errors exit with code 2") {
    fs::path dir = scratch_dir("config_errors");
    SUBCASE("unknown key") {
        fs::path cfg = dir / "bad.cfg";
        std::ofstream(cfg) << "[mdp]\nsource = builtin_toy\n[policy]\nvariant = direct2\n"
                           << "[trainer]\nparadigm = spo\nouter_stps = 5\n";
        CliResult r = run_cli("train --config " + cfg.string() + " --out " + dir.string());
        CHECK(r.exit_code == 2);
        CHECK(r.output.find("unknown key") != std::string::npos);
        CHECK(r.output.find("line 7") != std::string::npos);
    }
    SUBCASE("missing file") {
        CliResult r = run_cli("train --config " + (dir / "nope.cfg").string());
        CHECK(r.exit_code == 2);
    }
    SUBCASE("unresolvable referenced path") {
        fs::path cfg = dir / "badpath.cfg";
        std::ofstream(cfg) << "[mdp]\nfile = does_not_exist.mdp\n[policy]\nvariant = direct2\n"
                           << "[trainer]\nparadigm = spo\n";
        CliResult r = run_cli("train --config " + cfg.string() + " --out " + dir.string());
        CHECK(r.exit_code == 2);
        CHECK(r.output.find("does not exist") != std::string::npos);
    }
}

TEST_CASE("train: SPO on the toy records the optimal natural value") {
    fs::path dir = scratch_dir("train_spo");
    CliResult r = run_cli("train --config " + config_path("train_spo_toy.cfg") + " --out " +
                          dir.string() + " --json");
    REQUIRE(r.exit_code == 0);
    nlohmann::json j = nlohmann::json::parse(r.output);
    CHECK(std::abs(j["final_v_nat"].get<double>() - 1.03) <= 0.02);
    CHECK(fs::exists(dir / "trace.csv"));
    CHECK(fs::exists(dir / "trace.jsonl"));
    CHECK(fs::exists(dir / "final_policy.txt"));

    // The manifest lists every artifact with a digest that matches the bytes.
    std::ifstream min(dir / "manifest.json");
    nlohmann::json manifest = nlohmann::json::parse(min);
    REQUIRE(manifest["outputs"].size() == 3);
    for (const auto& entry : manifest["outputs"]) {
        fs::path artifact = dir / entry["path"].get<std::string>();
        CHECK(arpolab::hex64(arpolab::fnv1a64_file(artifact.string())) ==
              entry["fnv1a64"].get<std::string>());
    }
}

TEST_CASE("train: ARPO from the low start lands at the deceptive region") {
    fs::path dir = scratch_dir("train_arpo");
    CliResult r = run_cli("train --config " + config_path("train_arpo_toy.cfg") + " --out " +
                          dir.string() + " --json");
    REQUIRE(r.exit_code == 0);
    nlohmann::json j = nlohmann::json::parse(r.output);
    CHECK(std::abs(j["final_v_nat"].get<double>() - (-0.646)) <= 0.05);
}

TEST_CASE("attack command: the exact strongest row is the row minimum") {
    fs::path dir = scratch_dir("attack");
    CliResult r = run_cli("attack --config " + config_path("attack_pi11.cfg") + " --out " +
                          dir.string());
    REQUIRE(r.exit_code == 0);
    std::ifstream csv(dir / "attacks.csv");
    std::string line;
    std::getline(csv, line);
    CHECK(line == "attack,return,robustness");
    double strongest = 0.0;
    std::vector<double> returns;
    while (std::getline(csv, line)) {
        auto first = line.find(',');
        auto second = line.find(',', first + 1);
        double ret = std::stod(line.substr(first + 1, second - first - 1));
        returns.push_back(ret);
        if (line.rfind("exact_strongest,", 0) == 0) strongest = ret;
    }
    REQUIRE(returns.size() == 4);
    for (double ret : returns) CHECK(strongest <= ret + 1e-9);
}

TEST_CASE("sweep command honors the v_rob <= v_nat invariant on every row") {
    fs::path dir = scratch_dir("sweep");
    fs::path cfg = dir / "sweep.cfg";
    std::ofstream(cfg) << "[mdp]\nsource = builtin_toy\n[sweep]\nresolution = 21\n";
    CliResult r = run_cli("sweep --config " + cfg.string() + " --out " + dir.string());
    REQUIRE(r.exit_code == 0);
    std::ifstream csv(dir / "landscape.csv");
    std::string line;
    std::getline(csv, line);
    CHECK(line == "alpha,beta,v_nat,v_rob,robust,fosp_spo,fosp_arpo");
    int rows = 0;
    while (std::getline(csv, line)) {
        std::istringstream ss(line);
        std::string tok;
        std::vector<std::string> cols;
        while (std::getline(ss, tok, ',')) cols.push_back(tok);
        REQUIRE(cols.size() == 7);
        CHECK(std::stod(cols[3]) <= std::stod(cols[2]) + 1e-9);
        ++rows;
    }
    CHECK(rows == 21 * 21);
}

TEST_CASE("basins command reports the deceptive-cluster fraction in band") {
    fs::path dir = scratch_dir("basins");
    CliResult r = run_cli("basins --config " + config_path("basins_arpo.cfg") + " --out " +
                          dir.string() + " --seed 424242 --json");
    REQUIRE(r.exit_code == 0);
    nlohmann::json j = nlohmann::json::parse(r.output);
    double low_fraction = 0.0;
    for (const auto& c : j["clusters"]) {
        double a = c["alpha"].get<double>(), b = c["beta"].get<double>();
        if (std::hypot(a, b) <= 0.1) low_fraction += c["fraction"].get<double>();
    }
    CHECK(low_fraction >= 0.2);
    CHECK(low_fraction <= 0.5);
    CHECK(fs::exists(dir / "basins.csv"));
}
