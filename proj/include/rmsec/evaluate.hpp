#ifndef RMSEC_EVALUATE_HPP
#define RMSEC_EVALUATE_HPP

#include <functional>
#include <optional>
#include <vector>

#include "rmsec/domains.hpp"
#include "rmsec/qtable.hpp"
#include "rmsec/tamper.hpp"

namespace rmsec {

/// Outcome of one evaluation episode.
struct EpisodeRecord {
    int agent_id = 0;
    int episode = 0;
    bool success = false;
    int steps = 0;
    double reward = 0.0;
    long long tamper_count = 0;
    long long episode_length = 0; // labeling outputs = steps
    std::uint64_t seed = 0;
};

/// One tamper-log line: episode, timestep, label in/out, whether changed.
struct TamperLogLine {
    int agent_id = 0;
    int episode = 0;
    long long t = 0;
    std::string sigma_in;
    std::string sigma_out;
    bool blinded = false;
};

using TamperLogSink = std::function<void(const TamperLogLine&)>;

namespace detail {
// Seed stream tags.
inline constexpr std::uint64_t kEvalStream = 1;
inline constexpr std::uint64_t kTamperStream = 2;
inline constexpr std::uint64_t kSelectStream = 3;
} // namespace detail

/// Greedy-policy evaluation over independent episodes, optionally through a
/// tamperer. The tamperer filters every per-step labeling output before it
/// reaches the victim's machine; the true environment (and the true machine
/// tracked for termination and success) is never altered. The Q-table is
/// const: unseen observation keys read as zero rows.
///
/// The harness tracks both the victim's RM state and the state implied by
/// the untampered labels, and checks they coincide while nothing has been
/// tampered with in the episode.
inline std::vector<EpisodeRecord> evaluate_policy(const QTable& q, const Domain& domain,
                                                  const RewardMachine& rm, int episodes, int cap,
                                                  std::uint64_t base_seed, int agent_id = 0,
                                                  Tamperer* tamperer = nullptr,
                                                  const TamperLogSink& log = {}) {
    std::vector<EpisodeRecord> records;
    records.reserve(static_cast<std::size_t>(episodes));
    Domain env = domain;
    env.episode_cap = cap;
    for (int ep = 0; ep < episodes; ++ep) {
        const std::uint64_t ep_seed =
            derive_seed(base_seed, static_cast<std::uint64_t>(agent_id), static_cast<std::uint64_t>(ep),
                        detail::kEvalStream);
        Rng rng(ep_seed);
        if (tamperer)
            tamperer->begin_episode(derive_seed(base_seed, static_cast<std::uint64_t>(agent_id),
                                                static_cast<std::uint64_t>(ep), detail::kTamperStream));
        EnvState state = env.reset(rng);
        const Observation obs0 = env.observe(state);
        const LabelString sigma0 = env.initial_label(obs0);
        int u_true = rm.step(rm.initial(), sigma0).first;
        int u_agent = u_true;

        EpisodeRecord rec;
        rec.agent_id = agent_id;
        rec.episode = ep;
        rec.seed = ep_seed;
        long long t = 0;
        while (true) {
            const int key_id = q.lookup(env.observe(state).key());
            const int action = epsilon_greedy(q, u_agent, key_id, 0.0, rng);
            const StepOut out = env.step(state, action, rng);
            ++t;
            LabelString sigma_agent = out.label;
            if (tamperer) {
                const auto [tampered, done] = tamperer->tamper(t, out.label, u_agent);
                sigma_agent = tampered;
                if (log)
                    log(TamperLogLine{agent_id, ep, t, out.label.str(), tampered.str(),
                                      !(tampered == out.label)});
                (void)done; // per-episode attacks simply stop tampering once done
            }
            u_true = rm.is_terminal(u_true) ? u_true : rm.step(u_true, out.label).first;
            if (!rm.is_terminal(u_agent)) u_agent = rm.step(u_agent, sigma_agent).first;
            if ((!tamperer || tamperer->tamper_count == 0) && u_agent != u_true)
                throw std::logic_error("rm desynchronisation without tampering");
            if (out.done) {
                // Success means the true machine accepted with a positive
                // task reward (a lucky blind collection that the machine
                // never tracked does not count).
                rec.success = rm.is_terminal(u_true) && out.reward > 0.0;
                rec.reward = out.reward;
                break;
            }
        }
        rec.steps = state.steps;
        rec.episode_length = t;
        rec.tamper_count = tamperer ? tamperer->tamper_count : 0;
        records.push_back(rec);
    }
    return records;
}

/// LabelSource that runs the victim greedily (no attack) and yields its
/// labeling outputs with the RM state before and after each one. Used for
/// the passive strategy-selection phase.
class GreedyRunSource : public LabelSource {
public:
    GreedyRunSource(const QTable& q, const Domain& domain, const RewardMachine& rm, int cap,
                    std::uint64_t seed)
        : q_(&q), domain_(domain), rm_(&rm), seed_(seed) {
        domain_.episode_cap = cap;
    }

    std::optional<LabelEvent> next() override {
        if (!running_) start_episode();
        const int key_id = q_->lookup(domain_.observe(state_).key());
        const int action = epsilon_greedy(*q_, u_, key_id, 0.0, *rng_);
        const StepOut out = domain_.step(state_, action, *rng_);
        ++t_;
        LabelEvent ev;
        ev.episode_start = t_ == 1;
        ev.t = t_;
        ev.sigma = out.label;
        ev.rm_state_before = u_;
        if (!rm_->is_terminal(u_)) u_ = rm_->step(u_, out.label).first;
        ev.rm_state_after = u_;
        if (out.done) running_ = false;
        return ev;
    }

private:
    void start_episode() {
        rng_.emplace(derive_seed(seed_, 0, static_cast<std::uint64_t>(episode_++), detail::kSelectStream));
        state_ = domain_.reset(*rng_);
        u_ = rm_->step(rm_->initial(), domain_.initial_label(domain_.observe(state_))).first;
        t_ = 0;
        running_ = true;
    }

    const QTable* q_;
    Domain domain_;
    const RewardMachine* rm_;
    std::uint64_t seed_;
    std::optional<Rng> rng_;
    EnvState state_;
    int u_ = 0;
    int t_ = 0;
    int episode_ = 0;
    bool running_ = false;
};

} // namespace rmsec

#endif
