#ifndef RMSEC_DOMAINS_HPP
#define RMSEC_DOMAINS_HPP

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rmsec/grid_map.hpp"
#include "rmsec/label.hpp"
#include "rmsec/rng.hpp"

namespace rmsec {

enum class DomainKind { cookie, keys, symbol };

inline const char* domain_name(DomainKind k) {
    switch (k) {
        case DomainKind::cookie: return "cookie";
        case DomainKind::keys: return "keys";
        case DomainKind::symbol: return "symbol";
    }
    return "?";
}

inline DomainKind parse_domain(const std::string& s) {
    if (s == "cookie") return DomainKind::cookie;
    if (s == "keys") return DomainKind::keys;
    if (s == "symbol") return DomainKind::symbol;
    throw ParseError("unknown domain '" + s + "'");
}

/// Mutable per-episode environment state. Fields outside the active domain
/// keep their defaults. Owned by exactly one episode runner.
struct EnvState {
    int cell = -1;
    int steps = 0;
    bool finished = false;
    // cookie
    int presses = 0;
    int cookie_room = -1; // -1 none, else 0 or 2
    // keys
    std::array<int, 2> keys_on_ground{0, 0}; // [0] -> room 0, [1] -> room 2
    bool carrying = false;
    int consumed = 0;
    std::array<bool, 2> door_open{false, false};
    // symbol: instruction symbol 0=a 1=b 2=c, rule 0=x 1=n 2=s
    int instr_symbol = -1;
    int instr_rule = -1;
    int collected_symbol = -1;
    int collected_room = -1;
};

/// The agent-visible slice of the world: its own cell plus the full content
/// of the room it currently occupies (and the state of doors adjacent to
/// that room), nothing else.
struct Observation {
    DomainKind kind = DomainKind::cookie;
    int cell = -1;
    int room = -1;
    bool cookie_here = false;
    int keys_here = 0;
    bool carrying = false;
    std::array<int, 2> door_state{2, 2}; // 0 closed, 1 open, 2 not visible
    int instr_symbol = -1;
    int instr_rule = -1;

    bool operator==(const Observation&) const = default;

    /// Canonical serialization; used as the Q-table key.
    std::string key() const {
        std::string s = "c" + std::to_string(cell) + ";r" + std::to_string(room);
        switch (kind) {
            case DomainKind::cookie:
                s += cookie_here ? ";c1" : ";c0";
                break;
            case DomainKind::keys: {
                s += ";k" + std::to_string(keys_here);
                s += carrying ? ";w1" : ";w0";
                s += ";d";
                for (int i = 0; i < 2; ++i)
                    s += door_state[static_cast<std::size_t>(i)] == 0   ? 'c'
                         : door_state[static_cast<std::size_t>(i)] == 1 ? 'o'
                                                                        : 'h';
                break;
            }
            case DomainKind::symbol:
                s += ";i";
                s += instr_symbol < 0 ? '-' : static_cast<char>('a' + instr_symbol);
                s += instr_rule < 0 ? '-' : "xns"[instr_rule];
                break;
        }
        return s;
    }
};

/// One possible result of executing a direction: successor state, its
/// probability given the executed direction, and the environment-truth task
/// outcome. Cookie button presses split into two outcomes (the new cookie
/// room); every other move is deterministic.
struct MoveOutcome {
    EnvState next;
    double prob = 1.0;
    double reward = 0.0;
    bool task_event = false;
};

struct StepOut {
    Observation obs;
    LabelString label;
    double reward = 0.0;
    bool task_event = false;
    bool done = false;
};

/// A benchmark domain bound to a map: validates the markers it needs and
/// exposes the episode dynamics. Immutable and shareable; all step state
/// lives in EnvState.
class Domain {
public:
    DomainKind kind = DomainKind::cookie;
    const GridMap* map = nullptr;
    double slip = 0.1;
    int episode_cap = 500;

    static Domain bind(DomainKind kind, const GridMap& map, double slip = 0.1,
                       int episode_cap = 500) {
        Domain d;
        d.kind = kind;
        d.map = &map;
        d.slip = slip;
        d.episode_cap = episode_cap;
        switch (kind) {
            case DomainKind::cookie:
                if (map.button < 0 || map.room_of(map.button) != 3)
                    throw ParseError("cookie domain: map has no button in room 3");
                for (int r : {0, 2})
                    if (map.cookie_slot[static_cast<std::size_t>(r)] < 0)
                        throw ParseError("cookie domain: map has no cookie slot in room " + std::to_string(r));
                break;
            case DomainKind::keys:
                if (map.goal < 0 || map.room_of(map.goal) != 3)
                    throw ParseError("keys domain: map has no goal in room 3");
                if (map.door[0] < 0 || map.door[1] < 0)
                    throw ParseError("keys domain: map has no door slots");
                for (int r : {0, 2})
                    if (map.cookie_slot[static_cast<std::size_t>(r)] < 0)
                        throw ParseError("keys domain: map has no key cell (cookie slot) in room " + std::to_string(r));
                break;
            case DomainKind::symbol:
                if (map.instruction < 0 || map.room_of(map.instruction) != 3)
                    throw ParseError("symbol domain: map has no instruction cell in room 3");
                for (int r : {0, 2})
                    for (int s = 0; s < 3; ++s)
                        if (map.symbol_cell[static_cast<std::size_t>(r)][static_cast<std::size_t>(s)] < 0)
                            throw ParseError("symbol domain: map is missing symbol cells in room " + std::to_string(r));
                break;
        }
        for (int i = 0; i < 2; ++i) {
            d.door_rooms_[static_cast<std::size_t>(i)] = {};
            if (map.door[static_cast<std::size_t>(i)] < 0) continue;
            const int cell = map.door[static_cast<std::size_t>(i)];
            auto note = [&](int r) {
                if (r >= 0) d.door_rooms_[static_cast<std::size_t>(i)][static_cast<std::size_t>(r)] = true;
            };
            note(map.room_of(cell));
            for (int k = 0; k < kNumActions; ++k) {
                const int nb = map.neighbor(cell, static_cast<Dir>(k));
                if (nb >= 0 && map.is_floor(nb)) note(map.room_of(nb));
            }
        }
        return d;
    }

    const char* name() const { return domain_name(kind); }

    int key_cell(int room) const { return map->cookie_slot[static_cast<std::size_t>(room)]; }

    /// Initial states with their probabilities (cookie: 1; keys: key
    /// placement; symbol: the nine instructions).
    std::vector<std::pair<EnvState, double>> initial_states() const {
        std::vector<std::pair<EnvState, double>> out;
        EnvState base;
        base.cell = map->start;
        switch (kind) {
            case DomainKind::cookie:
                out.emplace_back(base, 1.0);
                break;
            case DomainKind::keys:
                for (int k0 = 0; k0 <= 2; ++k0) {
                    EnvState s = base;
                    s.keys_on_ground = {k0, 2 - k0};
                    out.emplace_back(s, k0 == 1 ? 0.5 : 0.25);
                }
                break;
            case DomainKind::symbol:
                for (int sym = 0; sym < 3; ++sym)
                    for (int rule = 0; rule < 3; ++rule) {
                        EnvState s = base;
                        s.instr_symbol = sym;
                        s.instr_rule = rule;
                        out.emplace_back(s, 1.0 / 9.0);
                    }
                break;
        }
        return out;
    }

    /// Samples a fresh episode state. Keys: each key lands uniformly in room
    /// 0 or room 2, independently. Symbol: instruction uniform over the nine
    /// (symbol, rule) pairs.
    EnvState reset(Rng& rng) const {
        EnvState s;
        s.cell = map->start;
        switch (kind) {
            case DomainKind::cookie:
                break;
            case DomainKind::keys:
                for (int key = 0; key < 2; ++key) {
                    const int r = rng.next_int(2); // 0 -> room 0, 1 -> room 2
                    ++s.keys_on_ground[static_cast<std::size_t>(r)];
                }
                break;
            case DomainKind::symbol:
                s.instr_symbol = rng.next_int(3);
                s.instr_rule = rng.next_int(3);
                break;
        }
        return s;
    }

    Observation observe(const EnvState& s) const {
        Observation o;
        o.kind = kind;
        o.cell = s.cell;
        o.room = map->room_of(s.cell);
        switch (kind) {
            case DomainKind::cookie:
                o.cookie_here = s.cookie_room >= 0 && s.cookie_room == o.room;
                break;
            case DomainKind::keys:
                o.carrying = s.carrying;
                if (o.room == 0) o.keys_here = s.keys_on_ground[0];
                if (o.room == 2) o.keys_here = s.keys_on_ground[1];
                for (int i = 0; i < 2; ++i)
                    if (door_rooms_[static_cast<std::size_t>(i)][static_cast<std::size_t>(o.room)])
                        o.door_state[static_cast<std::size_t>(i)] = s.door_open[static_cast<std::size_t>(i)] ? 1 : 0;
                break;
            case DomainKind::symbol:
                if (o.room == 3) {
                    o.instr_symbol = s.instr_symbol;
                    o.instr_rule = s.instr_rule;
                }
                break;
        }
        return o;
    }

    /// The labeling function. Emits the room digit of the post-move
    /// observation on every step, plus the domain events. Achievement events
    /// replace the visibility event of the entity they consume on that step
    /// (B for b, G for g, A/B/C for the collected symbol); key pickups show
    /// up through the carry marker replacing one visible key.
    LabelString label_of(const std::optional<Observation>& prev, std::optional<int> /*action*/,
                         const Observation& o) const {
        std::string ev;
        ev.push_back(static_cast<char>('0' + o.room));
        switch (kind) {
            case DomainKind::cookie: {
                const bool pressed = o.cell == map->button && (!prev || prev->cell != map->button);
                if (o.room == map->room_of(map->button)) ev.push_back(pressed ? 'B' : 'b');
                const int slot = (o.room == 0 || o.room == 2) ? key_cell(o.room) : -1;
                const bool ate = slot >= 0 && o.cell == slot && !o.cookie_here && prev &&
                                 prev->room == o.room && prev->cookie_here;
                if (ate)
                    ev.push_back('C');
                else if (o.cookie_here)
                    ev.push_back('c');
                break;
            }
            case DomainKind::keys: {
                if (o.carrying) ev.push_back('*');
                for (int i = 0; i < o.keys_here; ++i) ev.push_back('k');
                for (int i = 0; i < 2; ++i)
                    if (map->room_of(map->door[static_cast<std::size_t>(i)]) == o.room &&
                        o.door_state[static_cast<std::size_t>(i)] == 0)
                        ev.push_back('d');
                if (o.cell == map->goal)
                    ev.push_back('G');
                else if (o.room == map->room_of(map->goal))
                    ev.push_back('g');
                break;
            }
            case DomainKind::symbol: {
                if (o.room == 3) {
                    ev.push_back(static_cast<char>('a' + o.instr_symbol));
                    ev.push_back("xns"[o.instr_rule]);
                } else if (o.room == 0 || o.room == 2) {
                    for (int s = 0; s < 3; ++s) {
                        const bool collected =
                            o.cell == map->symbol_cell[static_cast<std::size_t>(o.room)][static_cast<std::size_t>(s)];
                        ev.push_back(static_cast<char>((collected ? 'A' : 'a') + s));
                    }
                }
                break;
            }
        }
        return LabelString::from_events(ev);
    }

    /// Label of the very first observation of an episode, L(empty, empty, o).
    LabelString initial_label(const Observation& o) const { return label_of(std::nullopt, std::nullopt, o); }

    /// Deterministic successor set for one executed direction (after the
    /// slip draw). Moves into walls and closed doors keep the position;
    /// walking into a closed door while carrying opens it and consumes the
    /// key. Everything enumerate_model needs goes through here too, so the
    /// explicit model and the sampled episodes cannot disagree.
    std::vector<MoveOutcome> enumerate_outcomes(const EnvState& s, Dir executed) const {
        EnvState n = s;
        const int target = map->neighbor(s.cell, executed);
        bool moved = false;
        if (target >= 0 && map->is_floor(target)) {
            int door_index = -1;
            if (kind == DomainKind::keys) {
                if (target == map->door[0]) door_index = 0;
                if (target == map->door[1]) door_index = 1;
            }
            if (door_index >= 0 && !s.door_open[static_cast<std::size_t>(door_index)]) {
                if (s.carrying) {
                    n.door_open[static_cast<std::size_t>(door_index)] = true;
                    n.carrying = false;
                    ++n.consumed;
                }
            } else {
                n.cell = target;
                moved = true;
            }
        }
        const int room = map->room_of(n.cell);
        switch (kind) {
            case DomainKind::cookie: {
                if (moved && n.cell == map->button) {
                    ++n.presses;
                    std::vector<MoveOutcome> out;
                    for (int r : {0, 2}) {
                        MoveOutcome mo;
                        mo.next = n;
                        mo.next.cookie_room = r;
                        mo.prob = 0.5;
                        out.push_back(mo);
                    }
                    return out;
                }
                if ((room == 0 || room == 2) && n.cell == key_cell(room) && n.cookie_room == room) {
                    n.cookie_room = -1;
                    n.finished = true;
                    return {MoveOutcome{n, 1.0, 1.0, true}};
                }
                break;
            }
            case DomainKind::keys: {
                if ((room == 0 || room == 2) && n.cell == key_cell(room) && !n.carrying) {
                    auto& ground = n.keys_on_ground[room == 0 ? 0 : 1];
                    if (ground > 0) {
                        --ground;
                        n.carrying = true;
                    }
                }
                if (n.cell == map->goal) {
                    n.finished = true;
                    return {MoveOutcome{n, 1.0, 1.0, true}};
                }
                break;
            }
            case DomainKind::symbol: {
                if (room == 0 || room == 2) {
                    for (int sym = 0; sym < 3; ++sym) {
                        if (n.cell != map->symbol_cell[static_cast<std::size_t>(room)][static_cast<std::size_t>(sym)])
                            continue;
                        n.collected_symbol = sym;
                        n.collected_room = room;
                        n.finished = true;
                        const bool right_symbol = sym == n.instr_symbol;
                        const bool right_room = n.instr_rule == 0 || (n.instr_rule == 1 && room == 0) ||
                                                (n.instr_rule == 2 && room == 2);
                        const double r = right_symbol && right_room ? 1.0 : -1.0;
                        return {MoveOutcome{n, 1.0, r, true}};
                    }
                }
                break;
            }
        }
        return {MoveOutcome{n, 1.0, 0.0, false}};
    }

    /// Samples the executed direction: with probability `slip` the move is
    /// resampled uniformly over the four directions (it may equal the
    /// intended one).
    Dir resolve_direction(int action, Rng& rng) const {
        if (rng.chance(slip)) return static_cast<Dir>(rng.next_int(kNumActions));
        return static_cast<Dir>(action);
    }

    /// Advances one environment step. Throws when the episode is finished.
    StepOut step(EnvState& s, int action, Rng& rng) const {
        if (s.finished || s.steps >= episode_cap)
            throw std::logic_error("env_step on a finished episode");
        const Observation prev = observe(s);
        const Dir executed = resolve_direction(action, rng);
        auto outcomes = enumerate_outcomes(s, executed);
        std::size_t pick = 0;
        if (outcomes.size() > 1) pick = static_cast<std::size_t>(rng.next_int(static_cast<int>(outcomes.size())));
        MoveOutcome& chosen = outcomes[pick];
        chosen.next.steps = s.steps + 1;
        s = chosen.next;
        StepOut out;
        out.obs = observe(s);
        out.label = label_of(prev, action, out.obs);
        out.reward = chosen.reward;
        out.task_event = chosen.task_event;
        out.done = chosen.task_event || s.steps >= episode_cap;
        s.finished = out.done;
        return out;
    }

    /// The domain's declared set of emittable labels (the hallucination
    /// sampling alphabet).
    std::vector<LabelString> emittable_labels() const {
        std::vector<std::string> raw;
        switch (kind) {
            case DomainKind::cookie:
                raw = {"0", "1", "2", "0c", "2c", "0C", "2C", "3b", "3B"};
                break;
            case DomainKind::keys:
                raw = {"0",  "1",  "2",  "0k",  "0kk", "2k",  "2kk", "0*",
                       "2*", "0*k", "2*k", "1*", "3dg", "3*dg", "3g", "3G"};
                break;
            case DomainKind::symbol:
                raw = {"1",    "0abc", "2abc", "3ax",  "3an",  "3as",  "3bx",  "3bn",  "3bs",
                       "3cx",  "3cn",  "3cs",  "0Abc", "0aBc", "0abC", "2Abc", "2aBc", "2abC"};
                break;
        }
        std::vector<LabelString> out;
        out.reserve(raw.size());
        for (const auto& r : raw) out.push_back(LabelString::parse(r));
        return out;
    }

private:
    std::array<std::array<bool, 4>, 2> door_rooms_{}; // door i visible from room r
};

} // namespace rmsec

#endif
