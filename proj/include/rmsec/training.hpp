#ifndef RMSEC_TRAINING_HPP
#define RMSEC_TRAINING_HPP

#include <functional>
#include <stdexcept>
#include <vector>

#include "rmsec/domains.hpp"
#include "rmsec/qtable.hpp"
#include "rmsec/reward_machine.hpp"

namespace rmsec {

struct TrainConfig {
    double gamma = 0.9;
    double epsilon = 0.1;
    // Per-cell Robbins-Monro schedule: the n-th update of a (state, key,
    // action) cell uses alpha / (1 + n / alpha_decay_visits), i.e. the first
    // write replaces the cell and later writes average with shrinking
    // weight. Zero decay keeps the rate constant. Without the decay the
    // update noise from the movement slip swamps the sub-1e-3 action
    // contrasts that gamma^d leaves near the start of the longer tasks, and
    // greedy policies lock into wall-bumping loops instead of converging.
    double alpha = 1.0;
    double alpha_decay_visits = 10.0;
    // Re-applies each episode's update batches in reverse order when the
    // episode ends, so a task completion propagates through the whole visited
    // chain at once instead of one cell per episode. This stands in for the
    // value-propagation budget the replay buffer gave the original deep
    // learner; purely online tabular backups cannot carry values across the
    // longer benchmarks' horizons before exploration collapses.
    bool backward_sweep = true;
    // Shaping potentials enter the updates scaled by this factor. The
    // ordering effect that drives exploration (tried actions sink below the
    // zero default, unexplored ones stay preferred) is scale-invariant, but
    // at full scale the potential offsets bury the gamma^d-sized reward
    // signal of the longer tasks in a slowly-deflating plateau that the
    // tables never resolve; a small scale keeps the steering and leaves the
    // task reward dominant.
    double ars_potential_scale = 0.01;
    long long total_steps = 0;
    bool use_crm = true;
    bool use_ars = false;
    int episode_cap = 500;
    std::uint64_t seed = 0;
    long long curve_bin = 10000;

    void validate() const {
        if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must be in (0,1)");
        if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon must be in [0,1]");
        if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must be in (0,1]");
        if (alpha_decay_visits < 0.0) throw std::invalid_argument("alpha_decay_visits must be >= 0");
        if (!(ars_potential_scale >= 0.0)) throw std::invalid_argument("ars_potential_scale must be >= 0");
        if (total_steps < 0) throw std::invalid_argument("total_steps must be non-negative");
        if (episode_cap <= 0) throw std::invalid_argument("episode_cap must be positive");
        if (curve_bin <= 0) throw std::invalid_argument("curve_bin must be positive");
    }
};

/// Reward accumulated per contiguous bin of training steps. Always built
/// from the raw transition rewards so curves stay comparable whether or not
/// shaping was used for the updates.
struct LearningCurve {
    long long bin_width = 10000;
    std::vector<double> bin_reward; // bin i covers steps [i*w, (i+1)*w)
};

struct TrainResult {
    QTable q;
    LearningCurve curve;
};

/// Optional training observer, called every probe_interval steps with the
/// table so far; return false to stop early. Used for sample-efficiency
/// probes.
using TrainProbe = std::function<bool(long long steps_done, const QTable& q)>;

/// Optional per-step tap receiving the experiences fed to qrm_update
/// (post-shaping) plus the raw true-transition reward. Test instrumentation.
using ExperienceTap =
    std::function<void(long long step, const std::vector<CounterfactualExperience>&, double raw_reward)>;

/// Tabular QRM training. Each step acts epsilon-greedily from the table of
/// the current RM state; with use_crm every non-terminal RM state receives a
/// counterfactual update, otherwise only the true state does. With use_ars
/// the update rewards are shaped by the ARS potentials; the learning curve
/// records raw rewards either way. Episodes reset on RM termination or the
/// step cap.
inline TrainResult train(const Domain& domain, const RewardMachine& rm, const TrainConfig& cfg,
                         long long probe_interval = 0, const TrainProbe& probe = {},
                         const ExperienceTap& tap = {}) {
    cfg.validate();
    TrainResult result;
    result.q = QTable(rm.num_states());
    result.curve.bin_width = cfg.curve_bin;
    if (cfg.total_steps > 0)
        result.curve.bin_reward.assign(
            static_cast<std::size_t>((cfg.total_steps + cfg.curve_bin - 1) / cfg.curve_bin), 0.0);

    PotentialTable potentials;
    if (cfg.use_ars) potentials = ars_potentials(rm, cfg.gamma);
    auto shaped = [&](const CounterfactualExperience& e) {
        if (!cfg.use_ars) return e.reward;
        const double k = cfg.ars_potential_scale;
        return shape_reward(e.reward, k * potentials.values[static_cast<std::size_t>(e.rm_state)],
                            k * potentials.values[static_cast<std::size_t>(e.next_rm_state)], cfg.gamma);
    };

    Rng rng(derive_seed(cfg.seed, 0x7261696e)); // train stream
    QTable& q = result.q;

    // Visit counts drive the per-cell learning-rate decay.
    std::vector<std::vector<std::array<std::uint32_t, 4>>> visits(
        static_cast<std::size_t>(rm.num_states()));
    auto next_alpha = [&](const CounterfactualExperience& e) {
        if (cfg.alpha_decay_visits <= 0.0) return cfg.alpha;
        auto& table = visits[static_cast<std::size_t>(e.rm_state)];
        const auto key = static_cast<std::size_t>(e.obs_key);
        if (key >= table.size()) table.resize(key + 1, {0, 0, 0, 0});
        const std::uint32_t n = table[key][static_cast<std::size_t>(e.action)]++;
        return cfg.alpha / (1.0 + static_cast<double>(n) / cfg.alpha_decay_visits);
    };

    Domain env = domain;
    env.episode_cap = cfg.episode_cap;

    EnvState state;
    int u = 0;
    int obs_id = -1;
    std::vector<CounterfactualExperience> episode_log;
    auto begin_episode = [&] {
        state = env.reset(rng);
        u = rm.initial();
        const Observation obs = env.observe(state);
        u = rm.step(u, env.initial_label(obs)).first;
        obs_id = q.intern(obs.key());
        episode_log.clear();
    };
    begin_episode();

    std::vector<CounterfactualExperience> batch;
    for (long long step = 1; step <= cfg.total_steps; ++step) {
        const int action = epsilon_greedy(q, u, obs_id, cfg.epsilon, rng);
        const StepOut out = env.step(state, action, rng);
        const int next_obs_id = q.intern(out.obs.key());
        const auto [next_u, raw_reward] = rm.step(u, out.label);

        batch.clear();
        if (cfg.use_crm) {
            batch = crm_batch(rm, obs_id, action, next_obs_id, out.label, out.done);
        } else {
            CounterfactualExperience e;
            e.obs_key = obs_id;
            e.rm_state = u;
            e.action = action;
            e.reward = raw_reward;
            e.next_obs_key = next_obs_id;
            e.next_rm_state = next_u;
            e.terminal = out.done || rm.is_terminal(next_u);
            batch.push_back(e);
        }
        for (CounterfactualExperience& e : batch) {
            e.reward = shaped(e);
            qrm_update(q, e, next_alpha(e), cfg.gamma);
        }
        if (tap) tap(step, batch, raw_reward);
        if (cfg.backward_sweep)
            episode_log.insert(episode_log.end(), batch.begin(), batch.end());

        result.curve.bin_reward[static_cast<std::size_t>((step - 1) / cfg.curve_bin)] += raw_reward;

        if (out.done || rm.is_terminal(next_u)) {
            if (cfg.backward_sweep)
                for (auto it = episode_log.rbegin(); it != episode_log.rend(); ++it)
                    qrm_update(q, *it, next_alpha(*it), cfg.gamma);
            begin_episode();
        } else {
            u = next_u;
            obs_id = next_obs_id;
        }
        if (probe && probe_interval > 0 && step % probe_interval == 0)
            if (!probe(step, q)) break;
    }
    return result;
}

} // namespace rmsec

#endif
