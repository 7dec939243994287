#ifndef RMSEC_TAMPER_HPP
#define RMSEC_TAMPER_HPP

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rmsec/label.hpp"
#include "rmsec/reward_machine.hpp"
#include "rmsec/rng.hpp"

namespace rmsec {

enum class TamperKind { identity, random_hallucination, random_blinding, event_blinding, edge_blinding };
enum class BlindMode { atomic, compound, edge, state };
enum class TimingKind { all_instances, first_stream, triggered_stream };

inline const char* tamper_kind_name(TamperKind k) {
    switch (k) {
        case TamperKind::identity: return "identity";
        case TamperKind::random_hallucination: return "random_hallucination";
        case TamperKind::random_blinding: return "random_blinding";
        case TamperKind::event_blinding: return "event_blinding";
        case TamperKind::edge_blinding: return "edge_blinding";
    }
    return "?";
}

inline const char* blind_mode_name(BlindMode m) {
    switch (m) {
        case BlindMode::atomic: return "atomic";
        case BlindMode::compound: return "compound";
        case BlindMode::edge: return "edge";
        case BlindMode::state: return "state";
    }
    return "?";
}

/// With probability rho, replaces sigma by a uniformly random proper
/// sub-multiset of it (the empty label included). The empty label has no
/// proper subset and passes through.
inline LabelString random_blinding_rule(const LabelString& sigma, double rho, Rng& rng) {
    if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("rho must be in [0,1]");
    if (sigma.empty() || rho <= 0.0 || !rng.chance(rho)) return sigma;
    const auto subs = sigma.proper_submultisets();
    return subs[static_cast<std::size_t>(rng.next_int(static_cast<int>(subs.size())))];
}

/// With probability rho, replaces sigma by a uniform draw from the domain's
/// declared emittable-label alphabet, excluding sigma itself.
inline LabelString random_hallucination_rule(const LabelString& sigma, double rho,
                                             const std::vector<LabelString>& alphabet, Rng& rng) {
    if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("rho must be in [0,1]");
    if (rho <= 0.0 || !rng.chance(rho)) return sigma;
    std::vector<const LabelString*> candidates;
    candidates.reserve(alphabet.size());
    for (const LabelString& l : alphabet)
        if (!(l == sigma)) candidates.push_back(&l);
    if (candidates.empty()) return sigma;
    return *candidates[static_cast<std::size_t>(rng.next_int(static_cast<int>(candidates.size())))];
}

/// When-to-strike state machine. first_stream blinds the first contiguous
/// run of target outputs and is done when that run ends; triggered_stream
/// draws once at each stream start (or at every occurrence with the
/// per_occurrence variant) and attacks the stream that wins the draw.
struct TimingState {
    TimingKind kind = TimingKind::all_instances;
    double trigger_p = 0.3;
    bool per_occurrence = false;
    enum class Phase { idle, in_stream, done } phase = Phase::idle;
    bool prev_target = false;

    void reset() {
        phase = Phase::idle;
        prev_target = false;
    }
};

struct BlindDecision {
    bool blind = false;
    bool attack_done = false;
};

inline BlindDecision should_blind(TimingState& t, bool is_target_now, Rng& rng) {
    BlindDecision d;
    switch (t.kind) {
        case TimingKind::all_instances:
            d.blind = is_target_now;
            break;
        case TimingKind::first_stream:
            if (t.phase == TimingState::Phase::idle && is_target_now) {
                t.phase = TimingState::Phase::in_stream;
                d.blind = true;
            } else if (t.phase == TimingState::Phase::in_stream) {
                if (is_target_now) {
                    d.blind = true;
                } else {
                    t.phase = TimingState::Phase::done;
                    d.attack_done = true;
                }
            } else if (t.phase == TimingState::Phase::done) {
                d.attack_done = true;
            }
            break;
        case TimingKind::triggered_stream: {
            if (t.phase == TimingState::Phase::in_stream) {
                if (is_target_now) {
                    d.blind = true;
                } else {
                    t.phase = TimingState::Phase::done;
                    d.attack_done = true;
                }
            } else if (t.phase == TimingState::Phase::idle && is_target_now) {
                const bool stream_start = !t.prev_target;
                if ((stream_start || t.per_occurrence) && rng.chance(t.trigger_p)) {
                    t.phase = TimingState::Phase::in_stream;
                    d.blind = true;
                }
            } else if (t.phase == TimingState::Phase::done) {
                d.attack_done = true;
            }
            break;
        }
    }
    t.prev_target = is_target_now;
    return d;
}

/// What to deprive the victim of. Atomic targets are propositions, compound
/// targets whole labels, edge targets transition-table entries; a state
/// target is expanded to every entry entering that state.
struct BlindingStrategy {
    BlindMode mode = BlindMode::compound;
    std::string atomic_targets;                              // distinct props
    std::vector<LabelString> compound_targets;
    std::vector<std::pair<int, LabelString>> edge_targets;   // (rm state, label)
    int state_target = -1;

    static BlindingStrategy atomic(std::string props) {
        if (props.empty()) throw std::invalid_argument("empty atomic target set");
        BlindingStrategy s;
        s.mode = BlindMode::atomic;
        s.atomic_targets = std::move(props);
        return s;
    }
    static BlindingStrategy compound(std::vector<LabelString> labels) {
        if (labels.empty()) throw std::invalid_argument("empty compound target set");
        BlindingStrategy s;
        s.mode = BlindMode::compound;
        s.compound_targets = std::move(labels);
        return s;
    }
    static BlindingStrategy edge(std::vector<std::pair<int, LabelString>> edges) {
        if (edges.empty()) throw std::invalid_argument("empty edge target set");
        BlindingStrategy s;
        s.mode = BlindMode::edge;
        s.edge_targets = std::move(edges);
        return s;
    }
    static BlindingStrategy state(const RewardMachine& rm, int target_state) {
        BlindingStrategy s;
        s.mode = BlindMode::state;
        s.state_target = target_state;
        s.edge_targets = rm.incoming_entries(target_state);
        if (s.edge_targets.empty())
            throw std::invalid_argument("state target '" + rm.state_name(target_state) + "' has no incoming edges");
        return s;
    }

    bool is_target_label(const LabelString& sigma) const {
        if (mode == BlindMode::compound) {
            for (const LabelString& t : compound_targets)
                if (t == sigma) return true;
            return false;
        }
        for (char p : atomic_targets)
            if (sigma.contains(p)) return true;
        return false;
    }

    bool is_target_edge(int u, const LabelString& sigma) const {
        for (const auto& [src, label] : edge_targets)
            if (src == u && label == sigma) return true;
        return false;
    }
};

/// Event-blinding removal: compound attacks obscure the whole output, atomic
/// attacks remove every occurrence of the target propositions and forward
/// the rest.
inline LabelString event_blinding_apply(const BlindingStrategy& s, const LabelString& sigma) {
    if (s.mode == BlindMode::compound) return LabelString();
    return sigma.without(s.atomic_targets);
}

/// Edge-blinding removal: the largest sub-multiset of sigma that does not
/// traverse any targeted entry from state u; ties prefer keeping the room
/// digit, then canonical order. The empty label always qualifies.
inline LabelString edge_blinding_apply(const RewardMachine& /*rm*/, int u,
                                       const std::vector<std::pair<int, LabelString>>& targets,
                                       const LabelString& sigma) {
    auto blocked = [&](const LabelString& l) {
        for (const auto& [src, label] : targets)
            if (src == u && label == l) return true;
        return false;
    };
    auto subs = sigma.proper_submultisets();
    std::sort(subs.begin(), subs.end(), [](const LabelString& a, const LabelString& b) {
        if (a.size() != b.size()) return a.size() > b.size();
        if (a.has_room_digit() != b.has_room_digit()) return a.has_room_digit();
        return a.str() < b.str();
    });
    for (const LabelString& cand : subs)
        if (!blocked(cand)) return cand;
    return LabelString();
}

/// Stateful attack object sitting between the labeling function and the
/// victim. Single-owner; reset at each episode boundary via begin_episode.
struct Tamperer {
    TamperKind kind = TamperKind::identity;
    BlindingStrategy strategy;
    TimingState timing;                 // template copied at episode start
    double rho = 0.0;
    std::vector<LabelString> alphabet;  // hallucination sampling space
    const RewardMachine* rm = nullptr;  // edge kinds only

    Rng rng{0};
    TimingState live;
    long long tamper_count = 0;
    long long output_count = 0;

    void begin_episode(std::uint64_t seed) {
        rng = Rng(seed);
        live = timing;
        live.reset();
        tamper_count = 0;
        output_count = 0;
    }

    /// Applies the attack to one labeling output. u_agent is the victim's
    /// current RM state (used by edge kinds only). Returns the forwarded
    /// label and whether the attack has concluded for this episode.
    std::pair<LabelString, bool> tamper(long long /*t*/, const LabelString& sigma, int u_agent = -1) {
        ++output_count;
        LabelString out = sigma;
        bool done = false;
        switch (kind) {
            case TamperKind::identity:
                break;
            case TamperKind::random_hallucination:
                out = random_hallucination_rule(sigma, rho, alphabet, rng);
                break;
            case TamperKind::random_blinding:
                out = random_blinding_rule(sigma, rho, rng);
                break;
            case TamperKind::event_blinding: {
                const bool is_target = strategy.is_target_label(sigma);
                const BlindDecision d = should_blind(live, is_target, rng);
                done = d.attack_done;
                if (d.blind) out = event_blinding_apply(strategy, sigma);
                break;
            }
            case TamperKind::edge_blinding: {
                const bool is_target = strategy.is_target_edge(u_agent, sigma);
                const BlindDecision d = should_blind(live, is_target, rng);
                done = d.attack_done;
                if (d.blind) out = edge_blinding_apply(*rm, u_agent, strategy.edge_targets, sigma);
                break;
            }
        }
        if (!(out == sigma)) ++tamper_count;
        return {out, done};
    }
};

// ---------------------------------------------------------------------------
// Passive blinding-strategy selection.

/// One observed labeling output of the (unattacked) victim, with its RM
/// state before and after.
struct LabelEvent {
    bool episode_start = false;
    int t = 0; // 1-based timestep within the episode
    LabelString sigma;
    int rm_state_before = -1;
    int rm_state_after = -1;
};

/// Source of victim observations for the passive selection phase.
class LabelSource {
public:
    virtual ~LabelSource() = default;
    virtual std::optional<LabelEvent> next() = 0;
};

/// Replays a fixed list of events; test helper and log replayer.
class VectorLabelSource : public LabelSource {
public:
    explicit VectorLabelSource(std::vector<LabelEvent> events) : events_(std::move(events)) {}
    std::optional<LabelEvent> next() override {
        if (pos_ >= events_.size()) return std::nullopt;
        return events_[pos_++];
    }

private:
    std::vector<LabelEvent> events_;
    std::size_t pos_ = 0;
};

/// Candidate identity: atomic and compound candidates use text only
/// (state = -1); edge candidates are (state, label); state candidates are
/// (state, ""). Map order doubles as the canonical tie-break order.
struct CandidateKey {
    int state = -1;
    std::string text;
    auto operator<=>(const CandidateKey&) const = default;
};

struct CandidateStats {
    struct H {
        long long h1 = 0;                                      // episodes seen at least once
        long long h2 = std::numeric_limits<long long>::max();  // earliest first occurrence
        long long h3 = 0;                                      // total occurrences
    };
    BlindMode mode = BlindMode::compound;
    std::map<CandidateKey, H> by_candidate;
};

/// Watches up to k labeling outputs of the victim and accumulates the three
/// heuristic statistics per candidate. Candidates are labels (compound),
/// propositions (atomic), observed triggering entries (edge), or states with
/// observed incoming transitions (state).
inline CandidateStats collect_candidates(LabelSource& source, BlindMode mode, long long k) {
    if (k < 1) throw std::invalid_argument("observation budget must be at least 1");
    CandidateStats stats;
    stats.mode = mode;
    std::map<CandidateKey, bool> seen_this_episode;
    long long outputs = 0;
    while (outputs < k) {
        const auto ev = source.next();
        if (!ev) break;
        if (ev->episode_start) seen_this_episode.clear();
        ++outputs;
        // Candidates contributed by this output, with multiplicities.
        std::vector<std::pair<CandidateKey, long long>> hits;
        switch (mode) {
            case BlindMode::compound:
                hits.push_back({CandidateKey{-1, ev->sigma.str()}, 1});
                break;
            case BlindMode::atomic:
                for (char p : ev->sigma.distinct())
                    hits.push_back({CandidateKey{-1, std::string(1, p)}, ev->sigma.count(p)});
                break;
            case BlindMode::edge:
                if (ev->rm_state_after != ev->rm_state_before)
                    hits.push_back({CandidateKey{ev->rm_state_before, ev->sigma.str()}, 1});
                break;
            case BlindMode::state:
                if (ev->rm_state_after != ev->rm_state_before)
                    hits.push_back({CandidateKey{ev->rm_state_after, ""}, 1});
                break;
        }
        for (const auto& [key, mult] : hits) {
            auto& h = stats.by_candidate[key];
            h.h3 += mult;
            if (!seen_this_episode[key]) {
                seen_this_episode[key] = true;
                ++h.h1;
                h.h2 = std::min(h.h2, static_cast<long long>(ev->t));
            }
        }
    }
    if (stats.by_candidate.empty())
        throw std::runtime_error("no blinding candidates observed within the budget");
    return stats;
}

/// Ranks candidates by reliability (h1, descending), then early appearance
/// (h2, ascending), then rarity (h3, ascending): three stable sorts in
/// reverse priority order over the canonically ordered candidate list.
inline std::vector<CandidateKey> rank_candidates(const CandidateStats& stats) {
    std::vector<std::pair<CandidateKey, CandidateStats::H>> items(stats.by_candidate.begin(),
                                                                  stats.by_candidate.end());
    std::stable_sort(items.begin(), items.end(),
                     [](const auto& a, const auto& b) { return a.second.h3 < b.second.h3; });
    std::stable_sort(items.begin(), items.end(),
                     [](const auto& a, const auto& b) { return a.second.h2 < b.second.h2; });
    std::stable_sort(items.begin(), items.end(),
                     [](const auto& a, const auto& b) { return a.second.h1 > b.second.h1; });
    std::vector<CandidateKey> out;
    out.reserve(items.size());
    for (auto& [key, h] : items) out.push_back(key);
    return out;
}

} // namespace rmsec

#endif
