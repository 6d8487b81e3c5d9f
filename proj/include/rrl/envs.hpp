#ifndef RRL_ENVS_HPP
#define RRL_ENVS_HPP

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "rrl/dataset.hpp"
#include "rrl/errors.hpp"
#include "rrl/rng.hpp"

namespace rrl {

enum class EnvKind { Reach2d, Maze2d, Push2d, Reach2dDense };

struct EnvSpec {
    std::string name;
    EnvKind kind = EnvKind::Reach2d;
    std::size_t obs_dim = 4;
    std::size_t act_dim = 2;
    std::vector<double> action_bounds = {1.0, 1.0};
    std::size_t horizon = 60;
    double success_radius = 0.05;
    double dt = 0.05;
};

struct EnvState {
    double agent[2] = {0, 0};
    double puck[2] = {0, 0};  // push2d only
    double goal[2] = {0, 0};
    std::size_t step_count = 0;
};

struct StepResult {
    EnvState next_state;
    std::vector<double> observation;
    double reward = 0.0;
    bool done = false;
    bool success = false;
    bool truncated = false;
};

inline constexpr double kArenaLo = -1.0;
inline constexpr double kArenaHi = 1.0;
inline constexpr double kMazeWallX = 0.0;
inline constexpr double kMazeWallYLo = -0.2;
inline constexpr double kMazeWallYHi = 1.0;
inline constexpr double kMazeWallEps = 1e-9;
inline constexpr double kPushContactRadius = 0.08;
inline constexpr double kPushSuccessRadius = 0.07;

inline EnvSpec env_spec(const std::string& name) {
    EnvSpec s;
    s.name = name;
    if (name == "reach2d") {
        s.kind = EnvKind::Reach2d;
    } else if (name == "reach2d_dense") {
        s.kind = EnvKind::Reach2dDense;
    } else if (name == "maze2d") {
        s.kind = EnvKind::Maze2d;
        s.horizon = 100;
    } else if (name == "push2d") {
        s.kind = EnvKind::Push2d;
        s.obs_dim = 6;
        s.horizon = 150;
        s.success_radius = kPushSuccessRadius;
    } else {
        throw ConfigError("env_spec: unknown environment '" + name + "'");
    }
    return s;
}

inline std::vector<double> observation(const EnvSpec& spec, const EnvState& st) {
    if (spec.kind == EnvKind::Push2d)
        return {st.agent[0], st.agent[1], st.puck[0], st.puck[1], st.goal[0], st.goal[1]};
    return {st.agent[0], st.agent[1], st.goal[0], st.goal[1]};
}

// Draw order is fixed (agent.x, agent.y, [puck.x, puck.y,] goal.x, goal.y)
// so resets are reproducible from the rng state alone.
inline EnvState env_reset(const EnvSpec& spec, Rng& rng) {
    EnvState st;
    if (spec.kind == EnvKind::Push2d) {
        st.agent[0] = rng.uniform(-0.9, -0.5);
        st.agent[1] = rng.uniform(-0.9, -0.5);
        st.puck[0] = rng.uniform(-0.2, 0.2);
        st.puck[1] = rng.uniform(-0.2, 0.2);
        st.goal[0] = rng.uniform(0.5, 0.9);
        st.goal[1] = rng.uniform(0.5, 0.9);
    } else {
        st.agent[0] = rng.uniform(-0.9, -0.4);
        st.agent[1] = rng.uniform(-0.9, -0.4);
        st.goal[0] = rng.uniform(0.4, 0.9);
        st.goal[1] = rng.uniform(0.4, 0.9);
    }
    return st;
}

inline double dist2d(const double a[2], const double b[2]) {
    return std::hypot(a[0] - b[0], a[1] - b[1]);
}

inline StepResult env_step(const EnvSpec& spec, const EnvState& state,
                           const std::vector<double>& action) {
    if (action.size() != spec.act_dim) throw ShapeError("env_step: action dimension");
    for (double a : action)
        if (!std::isfinite(a)) throw NumericalError("env_step: non-finite action");

    StepResult res;
    EnvState st = state;

    if (spec.kind == EnvKind::Maze2d) {
        // per-axis resolution: x first (clipped against the wall using the
        // pre-move y), then y
        double x = std::clamp(st.agent[0] + spec.dt * action[0], kArenaLo, kArenaHi);
        if (st.agent[1] >= kMazeWallYLo && st.agent[1] <= kMazeWallYHi) {
            if (st.agent[0] < kMazeWallX)
                x = std::min(x, kMazeWallX - kMazeWallEps);
            else
                x = std::max(x, kMazeWallX + kMazeWallEps);
        }
        st.agent[0] = x;
        st.agent[1] = std::clamp(st.agent[1] + spec.dt * action[1], kArenaLo, kArenaHi);
    } else {
        const double old_agent[2] = {st.agent[0], st.agent[1]};
        st.agent[0] = std::clamp(st.agent[0] + spec.dt * action[0], kArenaLo, kArenaHi);
        st.agent[1] = std::clamp(st.agent[1] + spec.dt * action[1], kArenaLo, kArenaHi);
        if (spec.kind == EnvKind::Push2d && dist2d(st.agent, st.puck) < kPushContactRadius) {
            // puck slides by the agent displacement projected on the
            // agent->puck direction (pushes only, no pulling)
            const double dx = st.puck[0] - st.agent[0];
            const double dy = st.puck[1] - st.agent[1];
            const double n = std::hypot(dx, dy);
            if (n > 1e-12) {
                const double ux = dx / n, uy = dy / n;
                const double disp = (st.agent[0] - old_agent[0]) * ux +
                                    (st.agent[1] - old_agent[1]) * uy;
                if (disp > 0.0) {
                    st.puck[0] = std::clamp(st.puck[0] + disp * ux, kArenaLo, kArenaHi);
                    st.puck[1] = std::clamp(st.puck[1] + disp * uy, kArenaLo, kArenaHi);
                }
            }
        }
    }

    st.step_count += 1;
    const bool success = (spec.kind == EnvKind::Push2d)
                             ? dist2d(st.puck, st.goal) < spec.success_radius
                             : dist2d(st.agent, st.goal) < spec.success_radius;
    res.success = success;
    res.truncated = !success && st.step_count >= spec.horizon;
    res.done = success || res.truncated;
    if (spec.kind == EnvKind::Reach2dDense)
        res.reward = -dist2d(st.agent, st.goal);
    else
        res.reward = success ? 1.0 : 0.0;
    res.next_state = st;
    res.observation = observation(spec, st);
    return res;
}

// --- scripted demonstrators -------------------------------------------------

struct DemoTrajectory {
    std::vector<std::vector<double>> observations;  // per executed step
    std::vector<std::vector<double>> actions;
    bool success = false;
};

namespace detail {

inline std::vector<double> controller_toward(const EnvSpec& spec, const double pos[2],
                                             const double target[2]) {
    const double gain = 6.0;
    std::vector<double> a(2);
    for (int i = 0; i < 2; ++i)
        a[i] = std::clamp(gain * (target[i] - pos[i]), -spec.action_bounds[i],
                          spec.action_bounds[i]);
    return a;
}

inline void scripted_target(const EnvSpec& spec, const EnvState& st, double target[2]) {
    switch (spec.kind) {
        case EnvKind::Maze2d:
            if (st.agent[0] < 0.1) {
                // route through the gap below the wall
                target[0] = 0.15;
                target[1] = -0.5;
            } else {
                target[0] = st.goal[0];
                target[1] = st.goal[1];
            }
            break;
        case EnvKind::Push2d: {
            double dgx = st.goal[0] - st.puck[0];
            double dgy = st.goal[1] - st.puck[1];
            const double n = std::hypot(dgx, dgy);
            if (n > 1e-12) {
                dgx /= n;
                dgy /= n;
            }
            const double pax = st.puck[0] - st.agent[0];
            const double pay = st.puck[1] - st.agent[1];
            const double pan = std::hypot(pax, pay);
            const bool aligned = pan < 0.15 && pan > 1e-12 &&
                                 (pax / pan) * dgx + (pay / pan) * dgy > 0.95;
            if (aligned) {
                target[0] = st.puck[0] + 0.05 * dgx;
                target[1] = st.puck[1] + 0.05 * dgy;
            } else {
                // contact point behind the puck, seen from the goal
                target[0] = st.puck[0] - 0.06 * dgx;
                target[1] = st.puck[1] - 0.06 * dgy;
            }
            // keep waypoints reachable; an unclamped behind-the-puck point can
            // fall outside the arena when the puck sits against a wall
            target[0] = std::clamp(target[0], kArenaLo + 0.01, kArenaHi - 0.01);
            target[1] = std::clamp(target[1], kArenaLo + 0.01, kArenaHi - 0.01);
            break;
        }
        default:
            target[0] = st.goal[0];
            target[1] = st.goal[1];
            break;
    }
}

} // namespace detail

// Proportional waypoint controller with additive Gaussian action noise.
// With probability `suboptimality` the rollout first visits a random detour
// waypoint, which makes the demonstration set multi-modal.
inline DemoTrajectory scripted_demo(const EnvSpec& spec, double noise_std,
                                    double suboptimality, Rng& rng) {
    if (noise_std < 0.0) throw ConfigError("scripted_demo: negative noise_std");
    DemoTrajectory traj;
    EnvState st = env_reset(spec, rng);

    bool detour_active = rng.uniform() < suboptimality;
    double detour[2] = {0, 0};
    if (detour_active) {
        if (spec.kind == EnvKind::Reach2d || spec.kind == EnvKind::Reach2dDense) {
            detour[0] = rng.uniform(-0.8, 0.8);
            detour[1] = rng.uniform(-0.8, 0.8);
        } else {
            // stay on the start side of the arena
            detour[0] = rng.uniform(-0.8, -0.1);
            detour[1] = rng.uniform(-0.8, 0.8);
        }
    }

    for (std::size_t t = 0; t < spec.horizon; ++t) {
        double target[2];
        if (detour_active) {
            target[0] = detour[0];
            target[1] = detour[1];
            if (dist2d(st.agent, target) < 0.08 || t > spec.horizon / 3) detour_active = false;
        }
        if (!detour_active) detail::scripted_target(spec, st, target);

        std::vector<double> a = detail::controller_toward(spec, st.agent, target);
        for (std::size_t i = 0; i < a.size(); ++i)
            a[i] = std::clamp(a[i] + noise_std * rng.normal(), -spec.action_bounds[i],
                              spec.action_bounds[i]);

        traj.observations.push_back(observation(spec, st));
        traj.actions.push_back(a);
        StepResult r = env_step(spec, st, a);
        st = r.next_state;
        if (r.success) {
            traj.success = true;
            break;
        }
        if (r.done) break;
    }
    return traj;
}

// Generates demos and writes the (state, action) pairs as a dataset. With
// keep_failures=false, only successful trajectories count toward n_demos.
inline DemoDataset make_dataset(const EnvSpec& spec, std::size_t n_demos, double noise_std,
                                double suboptimality, bool keep_failures, std::uint64_t seed) {
    if (n_demos < 1) throw ConfigError("make_dataset: need at least one demo");
    Rng rng(seed);
    std::vector<DemoTrajectory> kept;
    std::size_t attempts = 0;
    const std::size_t max_attempts = 100 * n_demos;
    while (kept.size() < n_demos) {
        if (attempts >= max_attempts)
            throw ConfigError("make_dataset: could not collect enough successful demos");
        DemoTrajectory t = scripted_demo(spec, noise_std, suboptimality, rng);
        ++attempts;
        if (keep_failures || t.success) kept.push_back(std::move(t));
    }

    std::size_t rows = 0;
    for (const auto& t : kept) rows += t.actions.size();
    DemoDataset ds;
    ds.states = Matrix(rows, spec.obs_dim);
    ds.actions = Matrix(rows, spec.act_dim);
    std::size_t r = 0;
    for (const auto& t : kept)
        for (std::size_t i = 0; i < t.actions.size(); ++i, ++r) {
            std::copy(t.observations[i].begin(), t.observations[i].end(), ds.states.row(r));
            std::copy(t.actions[i].begin(), t.actions[i].end(), ds.actions.row(r));
        }
    return ds;
}

} // namespace rrl

#endif
