#ifndef RMSEC_ENV_MODEL_HPP
#define RMSEC_ENV_MODEL_HPP

#include <cstdint>
#include <deque>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "rmsec/domains.hpp"
#include "rmsec/reward_machine.hpp"

namespace rmsec {

/// Packs the dynamics-relevant part of an environment state into one word so
/// cross-product states can be deduplicated. Step counters and bookkeeping
/// fields are excluded on purpose: the explicit model is infinite-horizon.
inline std::uint64_t pack_env(DomainKind kind, const EnvState& s) {
    std::uint64_t w = static_cast<std::uint64_t>(s.cell);
    switch (kind) {
        case DomainKind::cookie:
            w |= static_cast<std::uint64_t>(s.cookie_room + 1) << 16;
            break;
        case DomainKind::keys:
            w |= static_cast<std::uint64_t>(s.keys_on_ground[0]) << 16;
            w |= static_cast<std::uint64_t>(s.keys_on_ground[1]) << 18;
            w |= static_cast<std::uint64_t>(s.carrying ? 1 : 0) << 20;
            w |= static_cast<std::uint64_t>(s.door_open[0] ? 1 : 0) << 21;
            w |= static_cast<std::uint64_t>(s.door_open[1] ? 1 : 0) << 22;
            break;
        case DomainKind::symbol:
            w |= static_cast<std::uint64_t>(s.instr_symbol + 1) << 16;
            w |= static_cast<std::uint64_t>(s.instr_rule + 1) << 19;
            w |= static_cast<std::uint64_t>(s.collected_symbol + 1) << 22;
            break;
    }
    return w;
}

/// Explicit cross-product MDP over (environment state, RM state) with exact
/// transition probabilities: 0.9 for the intended direction plus 0.025 per
/// direction from the slip, times any branching inside the move itself.
struct EnvModel {
    struct Arc {
        int next = 0;
        double prob = 0.0;
        double reward = 0.0;
    };

    int n_states = 0;
    std::vector<bool> terminal;
    std::vector<std::array<std::vector<Arc>, 4>> arcs; // [state][action]
    std::vector<std::pair<int, double>> initial;        // (state, probability)

    // Lookup from (packed env, rm state) to the dense index; used when
    // simulating a model policy against the live environment.
    std::unordered_map<std::uint64_t, int> index;

    static std::uint64_t cross_key(std::uint64_t env_key, int u) {
        return env_key | (static_cast<std::uint64_t>(u) << 40);
    }
};

/// Builds the reachable cross-product model by breadth-first expansion from
/// the initial states. Throws if the state count exceeds the given limit.
inline EnvModel enumerate_model(const Domain& domain, const RewardMachine& rm,
                                std::size_t max_states = 1000000) {
    EnvModel model;
    std::vector<std::pair<EnvState, int>> states; // env state + rm state per index
    std::deque<int> frontier;

    auto lookup = [&](const EnvState& s, int u) -> int {
        const std::uint64_t key = EnvModel::cross_key(pack_env(domain.kind, s), u);
        auto it = model.index.find(key);
        if (it != model.index.end()) return it->second;
        const int id = static_cast<int>(states.size());
        if (states.size() >= max_states)
            throw std::runtime_error("enumerate_model: state limit exceeded");
        model.index.emplace(key, id);
        states.emplace_back(s, u);
        model.terminal.push_back(rm.is_terminal(u));
        frontier.push_back(id);
        return id;
    };

    for (const auto& [s0, p0] : domain.initial_states()) {
        const int id = lookup(s0, rm.initial());
        model.initial.emplace_back(id, p0);
    }

    const double slip_share = domain.slip / kNumActions;
    while (!frontier.empty()) {
        const int id = frontier.front();
        frontier.pop_front();
        if (model.terminal[static_cast<std::size_t>(id)]) continue;
        const EnvState s = states[static_cast<std::size_t>(id)].first;
        const int u = states[static_cast<std::size_t>(id)].second;
        const Observation prev = domain.observe(s);
        if (static_cast<int>(model.arcs.size()) <= id) model.arcs.resize(static_cast<std::size_t>(id) + 1);
        for (int a = 0; a < kNumActions; ++a) {
            std::unordered_map<std::uint64_t, EnvModel::Arc> merged;
            for (int d = 0; d < kNumActions; ++d) {
                double p_dir = d == a ? (1.0 - domain.slip) + slip_share : slip_share;
                if (p_dir <= 0.0) continue;
                for (const MoveOutcome& mo : domain.enumerate_outcomes(s, static_cast<Dir>(d))) {
                    const Observation obs = domain.observe(mo.next);
                    const LabelString sigma = domain.label_of(prev, a, obs);
                    const auto [nu, r] = rm.step(u, sigma);
                    const int nid = lookup(mo.next, nu);
                    auto& arc = merged[EnvModel::cross_key(pack_env(domain.kind, mo.next), nu)];
                    arc.next = nid;
                    arc.prob += p_dir * mo.prob;
                    arc.reward = r;
                }
            }
            auto& out = model.arcs[static_cast<std::size_t>(id)][static_cast<std::size_t>(a)];
            for (auto& [k, arc] : merged) out.push_back(arc);
            // Deterministic arc order for reproducible value iteration.
            std::sort(out.begin(), out.end(),
                      [](const EnvModel::Arc& x, const EnvModel::Arc& y) { return x.next < y.next; });
        }
    }
    model.n_states = static_cast<int>(states.size());
    model.arcs.resize(static_cast<std::size_t>(model.n_states));
    return model;
}

struct OracleSolution {
    std::vector<double> values;
    std::vector<int> policy; // greedy action per state, ties to the lowest index
    int sweeps = 0;
};

/// Synchronous value iteration with transition rewards, stopping when the
/// largest update falls below tol*(1-gamma)/gamma.
inline OracleSolution oracle_value_iteration(const EnvModel& model, double gamma, double tol) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must be in (0,1)");
    if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");
    OracleSolution sol;
    sol.values.assign(static_cast<std::size_t>(model.n_states), 0.0);
    std::vector<double> next(sol.values.size(), 0.0);
    const double stop = tol * (1.0 - gamma) / gamma;
    double delta = stop + 1.0;
    while (delta >= stop) {
        delta = 0.0;
        for (int s = 0; s < model.n_states; ++s) {
            if (model.terminal[static_cast<std::size_t>(s)]) {
                next[static_cast<std::size_t>(s)] = 0.0;
                continue;
            }
            double best = -1e300;
            for (int a = 0; a < kNumActions; ++a) {
                double q = 0.0;
                for (const auto& arc : model.arcs[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)])
                    q += arc.prob * (arc.reward + gamma * sol.values[static_cast<std::size_t>(arc.next)]);
                best = std::max(best, q);
            }
            next[static_cast<std::size_t>(s)] = best;
            delta = std::max(delta, std::abs(best - sol.values[static_cast<std::size_t>(s)]));
        }
        sol.values.swap(next);
        ++sol.sweeps;
    }
    sol.policy.assign(static_cast<std::size_t>(model.n_states), 0);
    for (int s = 0; s < model.n_states; ++s) {
        if (model.terminal[static_cast<std::size_t>(s)]) continue;
        double best = -1e300;
        int best_a = 0;
        for (int a = 0; a < kNumActions; ++a) {
            double q = 0.0;
            for (const auto& arc : model.arcs[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)])
                q += arc.prob * (arc.reward + gamma * sol.values[static_cast<std::size_t>(arc.next)]);
            if (q > best + 1e-15) {
                best = q;
                best_a = a;
            }
        }
        sol.policy[static_cast<std::size_t>(s)] = best_a;
    }
    return sol;
}

struct OracleRollout {
    double success_rate = 0.0;
    double mean_steps_to_success = 0.0; // over successful episodes
    int episodes = 0;
};

/// Monte-Carlo rollout of a model policy on the live environment.
inline OracleRollout simulate_model_policy(const Domain& domain, const RewardMachine& rm,
                                           const EnvModel& model, const std::vector<int>& policy,
                                           int episodes, std::uint64_t seed) {
    OracleRollout out;
    out.episodes = episodes;
    long long successes = 0;
    long long success_steps = 0;
    for (int ep = 0; ep < episodes; ++ep) {
        Rng rng(derive_seed(seed, 0xabcdef, static_cast<std::uint64_t>(ep)));
        EnvState s = domain.reset(rng);
        int u = rm.initial();
        while (true) {
            const auto it = model.index.find(EnvModel::cross_key(pack_env(domain.kind, s), u));
            if (it == model.index.end()) throw std::logic_error("rollout reached a state outside the model");
            const int a = policy[static_cast<std::size_t>(it->second)];
            const StepOut step = domain.step(s, a, rng);
            if (!rm.is_terminal(u)) u = rm.step(u, step.label).first;
            if (step.done) {
                if (rm.is_terminal(u) && step.reward > 0) {
                    ++successes;
                    success_steps += s.steps;
                }
                break;
            }
        }
    }
    out.success_rate = static_cast<double>(successes) / episodes;
    out.mean_steps_to_success = successes ? static_cast<double>(success_steps) / static_cast<double>(successes) : 0.0;
    return out;
}

} // namespace rmsec

#endif
