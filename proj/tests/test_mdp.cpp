#include "oracles.hpp"

#include <doctest.h>

using namespace arpolab;

namespace {

TabularIsaMdp single_state_mdp(double gamma = 0.5) {
    TabularIsaMdp mdp;
    mdp.n_states = 1;
    mdp.n_actions = 2;
    mdp.reward.resize(1, 2);
    mdp.reward << 1.0, 0.0;
    mdp.transition.assign(2, Mat::Ones(1, 1));
    mdp.gamma = gamma;
    mdp.mu0 = Vec::Ones(1);
    mdp.perturb_sets = {{0}};
    mdp.validate();
    return mdp;
}

}  // namespace

TEST_CASE("mdp invariants are validated") {
    TabularIsaMdp mdp = toy_isa_mdp();
    CHECK_NOTHROW(mdp.validate());

    TabularIsaMdp bad = mdp;
    bad.transition[0](0, 0) += 1e-6;
    CHECK_THROWS_AS(bad.validate(), Error);

    bad = mdp;
    bad.mu0(0) = 0.6;
    CHECK_THROWS_AS(bad.validate(), Error);

    bad = mdp;
    bad.perturb_sets[1] = {0};  // misses the state itself
    CHECK_THROWS_AS(bad.validate(), Error);

    bad = mdp;
    bad.gamma = 1.0;
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("solve_value reproduces the toy corner values") {
    TabularIsaMdp mdp = toy_isa_mdp();
    ValueSolveResult r = solve_value(mdp, direct2_matrix(1.0, 1.0));
    CHECK(std::abs(r.v(0) - 0.16) <= 0.01);
    CHECK(std::abs(r.v(1) - 1.89) <= 0.01);
    CHECK(r.bellman_residual <= 1e-10);

    // q(s,a) = r(s,a) + gamma sum P v
    CHECK(r.q(0, 0) ==
          doctest::Approx(-0.45 + 0.9 * (0.7 * r.v(0) + 0.3 * r.v(1))).epsilon(1e-12));
}

TEST_CASE("gamma = 0 collapses the value to the expected one-step reward") {
    Rng rng(11);
    for (int rep = 0; rep < 10; ++rep) {
        TabularIsaMdp mdp = oracles::random_mdp(rng);
        mdp.gamma = 0.0;
        PolicyMatrix pm = oracles::random_policy_matrix(rng, mdp.n_states, mdp.n_actions);
        ValueSolveResult r = solve_value(mdp, pm);
        for (int s = 0; s < mdp.n_states; ++s)
            CHECK(r.v(s) == doctest::Approx(mdp.reward.row(s).dot(pm.probs.row(s))).epsilon(1e-14));
    }
}

TEST_CASE("solve_value agrees with the fixed-point iteration oracle") {
    TabularIsaMdp mdp = toy_isa_mdp();
    PolicyMatrix pm = direct2_matrix(0.5, 0.5);
    Vec oracle = oracles::fixed_point_value(mdp, pm);
    Vec solved = solve_value(mdp, pm).v;
    CHECK((oracle - solved).cwiseAbs().maxCoeff() <= 1e-9);

    Rng rng(12);
    for (int rep = 0; rep < 20; ++rep) {
        TabularIsaMdp rmdp = oracles::random_mdp(rng);
        PolicyMatrix rpm = oracles::random_policy_matrix(rng, rmdp.n_states, rmdp.n_actions);
        CHECK((oracles::fixed_point_value(rmdp, rpm) - solve_value(rmdp, rpm).v)
                  .cwiseAbs()
                  .maxCoeff() <= 1e-9);
    }
}

TEST_CASE("visitation basics") {
    SUBCASE("single state forces the marginal to 1") {
        TabularIsaMdp mdp = single_state_mdp();
        PolicyMatrix pm;
        pm.probs.resize(1, 2);
        pm.probs << 0.3, 0.7;
        Mat d = visitation(mdp, pm, mdp.mu0);
        CHECK(d(0, 0) == doctest::Approx(0.3).epsilon(1e-13));
        CHECK(d(0, 1) == doctest::Approx(0.7).epsilon(1e-13));
    }
    SUBCASE("gamma = 0 gives start times policy") {
        Rng rng(13);
        TabularIsaMdp mdp = oracles::random_mdp(rng);
        mdp.gamma = 0.0;
        PolicyMatrix pm = oracles::random_policy_matrix(rng, mdp.n_states, mdp.n_actions);
        Mat d = visitation(mdp, pm, mdp.mu0);
        for (int s = 0; s < mdp.n_states; ++s)
            for (int a = 0; a < mdp.n_actions; ++a)
                CHECK(d(s, a) == doctest::Approx(mdp.mu0(s) * pm.probs(s, a)).epsilon(1e-13));
    }
    SUBCASE("sums to one and is nonnegative") {
        Rng rng(14);
        for (int rep = 0; rep < 20; ++rep) {
            TabularIsaMdp mdp = oracles::random_mdp(rng);
            PolicyMatrix pm = oracles::random_policy_matrix(rng, mdp.n_states, mdp.n_actions);
            Mat d = visitation(mdp, pm, mdp.mu0);
            CHECK(std::abs(d.sum() - 1.0) <= 1e-10);
            CHECK(d.minCoeff() >= -1e-15);
        }
    }
}

TEST_CASE("visitation matches a Monte Carlo geometric-horizon estimate") {
    TabularIsaMdp mdp = toy_isa_mdp();
    PolicyMatrix pm = direct2_matrix(1.0, 1.0);
    Mat d = visitation(mdp, pm, mdp.mu0);

    // d(s,a) = E over T ~ Geometric(1-gamma) of I(s_T = s, a_T = a).
    const long n = 1'000'000;
    Rng rng(2024);
    Mat counts = Mat::Zero(2, 2);
    std::vector<double> buf(2);
    for (long i = 0; i < n; ++i) {
        int steps = 0;
        while (rng.uniform() < mdp.gamma) ++steps;
        buf[0] = mdp.mu0(0);
        buf[1] = mdp.mu0(1);
        int s = rng.categorical(buf);
        int a = 0;
        for (int t = 0;; ++t) {
            buf[0] = pm.probs(s, 0);
            buf[1] = pm.probs(s, 1);
            a = rng.categorical(buf);
            if (t == steps) break;
            buf[0] = mdp.transition[a](s, 0);
            buf[1] = mdp.transition[a](s, 1);
            s = rng.categorical(buf);
        }
        counts(s, a) += 1.0;
    }
    for (int s = 0; s < 2; ++s)
        for (int a = 0; a < 2; ++a) {
            double freq = counts(s, a) / n;
            double se = std::sqrt(std::max(freq * (1.0 - freq), 1e-12) / n);
            CHECK(std::abs(freq - d(s, a)) <= 3.0 * se + 1e-9);
        }
}

TEST_CASE("apply_adversary") {
    TabularIsaMdp mdp = toy_isa_mdp();
    SUBCASE("identity remap is the identity transform, bit for bit") {
        PolicyMatrix pm = direct2_matrix(0.37, 0.91);
        PolicyMatrix out = apply_adversary(pm, identity_adversary(mdp), mdp);
        CHECK(out.probs == pm.probs);
    }
    SUBCASE("mapping both states to s1 copies that row everywhere") {
        PolicyMatrix pm = direct2_matrix(0.0, 1.0);
        DiscreteAdversary adv{{0, 0}};  // perturb_sets are {0,1} for both states
        PolicyMatrix out = apply_adversary(pm, adv, mdp);
        CHECK(out.probs.row(0) == pm.probs.row(0));
        CHECK(out.probs.row(1) == pm.probs.row(0));
    }
    SUBCASE("swap adversary turns (a, b) into (b, a)") {
        DiscreteAdversary swap{{1, 0}};
        Vec swapped = solve_value(mdp, apply_adversary(direct2_matrix(0.3, 0.9), swap, mdp)).v;
        Vec direct = solve_value(mdp, direct2_matrix(0.9, 0.3)).v;
        CHECK((swapped - direct).cwiseAbs().maxCoeff() <= 1e-14);
    }
    SUBCASE("invalid remap index") {
        PolicyMatrix pm = direct2_matrix(0.5, 0.5);
        DiscreteAdversary bad{{2, 0}};
        CHECK_THROWS_AS(apply_adversary(pm, bad, mdp), Error);
    }
}

TEST_CASE("strongest adversary on the toy") {
    TabularIsaMdp mdp = toy_isa_mdp();
    SUBCASE("robust policies keep their natural value") {
        for (auto [a, b] : {std::pair{0.9, 0.5}, {0.5, 0.5}, {0.8, 0.3}}) {
            PolicyMatrix pm = direct2_matrix(a, b);
            auto [adv, solved] = strongest_adversary_exact(mdp, pm);
            Vec natural = solve_value(mdp, pm).v;
            CHECK((natural - solved.v).cwiseAbs().maxCoeff() <= 1e-9);
        }
    }
    SUBCASE("pi_{0,1} is strictly hurt and the oracle agrees") {
        PolicyMatrix pm = direct2_matrix(0.0, 1.0);
        auto exact = strongest_adversary_exact(mdp, pm);
        auto brute = brute_force_strongest(mdp, pm);
        Vec natural = solve_value(mdp, pm).v;
        CHECK(mdp.mu0.dot(exact.second.v) < mdp.mu0.dot(natural) - 1e-6);
        CHECK((exact.second.v - brute.second.v).cwiseAbs().maxCoeff() <= 1e-9);
    }
    SUBCASE("singleton perturbation sets force the identity") {
        TabularIsaMdp singleton = toy_isa_mdp_singleton();
        PolicyMatrix pm = direct2_matrix(0.2, 0.9);
        auto [adv, solved] = strongest_adversary_exact(singleton, pm);
        CHECK(adv.remap == identity_adversary(singleton).remap);
        CHECK((solved.v - solve_value(singleton, pm).v).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("adversary never helps, componentwise") {
        Rng rng(15);
        for (int rep = 0; rep < 25; ++rep) {
            TabularIsaMdp rmdp = oracles::random_mdp(rng);
            PolicyMatrix pm = oracles::random_policy_matrix(rng, rmdp.n_states, rmdp.n_actions);
            auto [adv, solved] = strongest_adversary_exact(rmdp, pm);
            Vec natural = solve_value(rmdp, pm).v;
            CHECK((solved.v.array() <= natural.array() + 1e-9).all());
        }
    }
}

TEST_CASE("value iteration and brute force agree on a 21x21 toy grid") {
    TabularIsaMdp mdp = toy_isa_mdp();
    for (int i = 0; i <= 20; ++i)
        for (int j = 0; j <= 20; ++j) {
            PolicyMatrix pm = direct2_matrix(i / 20.0, j / 20.0);
            auto exact = strongest_adversary_exact(mdp, pm);
            auto brute = brute_force_strongest(mdp, pm);
            CHECK((exact.second.v - brute.second.v).cwiseAbs().maxCoeff() <= 1e-9);
        }
}

TEST_CASE("brute force guards its enumeration budget") {
    Rng rng(16);
    TabularIsaMdp mdp;
    mdp.n_states = 25;
    mdp.n_actions = 1;
    mdp.reward = Mat::Zero(25, 1);
    mdp.transition.assign(1, Mat::Identity(25, 25));
    mdp.gamma = 0.5;
    mdp.mu0 = Vec::Constant(25, 1.0 / 25);
    mdp.perturb_sets.assign(25, {});
    for (int s = 0; s < 25; ++s)
        for (int t = 0; t < 25; ++t) mdp.perturb_sets[s].push_back(t);
    // 25^25 adversaries is far past the guard.
    PolicyMatrix pm;
    pm.probs = Mat::Ones(25, 1);
    CHECK_THROWS_AS(brute_force_strongest(mdp, pm), Error);
}

TEST_CASE("toy ordering chain holds componentwise") {
    TabularIsaMdp mdp = toy_isa_mdp();
    Vec v11 = solve_value(mdp, direct2_matrix(1, 1)).v;
    Vec v01 = solve_value(mdp, direct2_matrix(0, 1)).v;
    Vec v00 = solve_value(mdp, direct2_matrix(0, 0)).v;
    Vec v10 = solve_value(mdp, direct2_matrix(1, 0)).v;
    CHECK((v11.array() >= v01.array()).all());
    CHECK((v01.array() >= v00.array()).all());
    CHECK((v00.array() >= v10.array()).all());
}
