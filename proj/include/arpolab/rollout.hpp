#pragma once

#include "arpolab/mdp.hpp"

#include <vector>

namespace arpolab {

struct Step {
    int t = 0;
    int state = 0;
    int action = 0;
    double reward = 0.0;
    double reward_to_go = 0.0;  // sum_{t' >= t} gamma^{t'-t} r_{t'}
};

using Trajectory = std::vector<Step>;

/// Smallest horizon T with gamma^T <= 1e-8, so truncation bias stays below
/// test tolerances.
inline int auto_horizon(double gamma) {
    if (gamma <= 0.0) return 1;
    return std::max(1, static_cast<int>(std::ceil(std::log(1e-8) / std::log(gamma))));
}

/// Samples one trajectory under a behavior policy matrix. Each trajectory owns
/// its RNG stream, so batches are reproducible independent of scheduling.
inline Trajectory sample_trajectory(const TabularIsaMdp& mdp, const PolicyMatrix& behavior,
                                    const Vec& start, int horizon, std::uint64_t seed) {
    Rng rng(seed);
    Trajectory traj;
    traj.reserve(horizon);
    std::vector<double> buf(mdp.n_states);
    for (int s = 0; s < mdp.n_states; ++s) buf[s] = start(s);
    int state = rng.categorical(buf);
    for (int t = 0; t < horizon; ++t) {
        std::vector<double> ap(mdp.n_actions);
        for (int a = 0; a < mdp.n_actions; ++a) ap[a] = behavior.probs(state, a);
        int action = rng.categorical(ap);
        double reward = mdp.reward(state, action);
        traj.push_back(Step{t, state, action, reward, 0.0});
        for (int s = 0; s < mdp.n_states; ++s) buf[s] = mdp.transition[action](state, s);
        state = rng.categorical(buf);
    }
    double rtg = 0.0;
    for (int t = horizon - 1; t >= 0; --t) {
        rtg = traj[t].reward + mdp.gamma * rtg;
        traj[t].reward_to_go = rtg;
    }
    return traj;
}

inline std::vector<Trajectory> sample_batch(const TabularIsaMdp& mdp, const PolicyMatrix& behavior,
                                            const Vec& start, long n_traj, int horizon,
                                            std::uint64_t seed) {
    require(n_traj >= 1, ErrorKind::InvalidArgument, "n_traj must be positive");
    if (horizon <= 0) horizon = auto_horizon(mdp.gamma);
    std::vector<Trajectory> batch;
    batch.reserve(n_traj);
    for (long i = 0; i < n_traj; ++i)
        batch.push_back(sample_trajectory(mdp, behavior, start, horizon, stream_seed(seed, i)));
    return batch;
}

}  // namespace arpolab
