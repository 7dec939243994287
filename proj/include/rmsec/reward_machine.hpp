#ifndef RMSEC_REWARD_MACHINE_HPP
#define RMSEC_REWARD_MACHINE_HPP

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "rmsec/label.hpp"

namespace rmsec {

/// One labeled arrow of a reward-machine figure. A single edge may carry
/// several alternative trigger labels (rendered "l1|l2" in the file format);
/// each label becomes one entry of the transition table.
struct RmEdge {
    int src = -1;
    std::vector<LabelString> labels;
    int dst = -1;
    double reward = 0.0;
};

/// Value-iteration fixed point over the machine treated as an MDP: one
/// potential per RM state, terminals pinned at zero.
struct PotentialTable {
    std::vector<double> values; // indexed by state id
    double gamma = 0.0;
};

/// Synthetic experience tuple produced by counterfactual reasoning: what the
/// step would have looked like had the machine been in state rm_state.
struct CounterfactualExperience {
    std::int64_t obs_key = 0;
    int rm_state = 0;
    int action = 0;
    double reward = 0.0;
    std::int64_t next_obs_key = 0;
    int next_rm_state = 0;
    bool terminal = false;
};

/// Deterministic finite automaton over canonical label strings with a reward
/// attached to each transition. States are referenced by dense int ids; the
/// original names are kept for I/O. Immutable once built (the builder calls
/// are not thread-safe; everything else is const).
class RewardMachine {
public:
    RewardMachine() = default;
    explicit RewardMachine(std::string name) : name_(std::move(name)) {}

    const std::string& name() const { return name_; }
    void set_name(std::string n) { name_ = std::move(n); }

    int add_state(const std::string& state_name, bool terminal) {
        if (state_index_.count(state_name))
            throw std::invalid_argument("duplicate state '" + state_name + "'");
        const int id = static_cast<int>(state_names_.size());
        state_names_.push_back(state_name);
        terminal_.push_back(terminal);
        table_.emplace_back();
        state_index_[state_name] = id;
        return id;
    }

    void set_initial(const std::string& state_name) { initial_ = state_id(state_name); }

    void add_edge(const std::string& src, const std::vector<LabelString>& labels,
                  const std::string& dst, double reward) {
        RmEdge e;
        e.src = state_id(src);
        e.dst = state_id(dst);
        e.reward = reward;
        e.labels = labels;
        for (const LabelString& l : labels) {
            const int lid = intern_label(l);
            auto [it, inserted] = table_[e.src].emplace(lid, Entry{e.dst, reward});
            if (!inserted)
                duplicate_entries_.emplace_back(e.src, l);
        }
        edges_.push_back(std::move(e));
    }

    int state_id(const std::string& state_name) const {
        auto it = state_index_.find(state_name);
        if (it == state_index_.end())
            throw std::invalid_argument("unknown state '" + state_name + "'");
        return it->second;
    }

    const std::string& state_name(int id) const { return state_names_.at(static_cast<std::size_t>(id)); }
    bool has_state(const std::string& state_name) const { return state_index_.count(state_name) != 0; }

    int num_states() const { return static_cast<int>(state_names_.size()); }
    int num_edges() const { return static_cast<int>(edges_.size()); }
    const std::vector<RmEdge>& edges() const { return edges_; }

    int initial() const { return initial_; }
    bool is_terminal(int id) const { return terminal_.at(static_cast<std::size_t>(id)); }

    /// Ids of the non-terminal states U, in declaration order.
    std::vector<int> nonterminal_states() const {
        std::vector<int> out;
        for (int u = 0; u < num_states(); ++u)
            if (!terminal_[static_cast<std::size_t>(u)]) out.push_back(u);
        return out;
    }

    /// Advances the machine: returns the transition entry for (u, sigma), or
    /// the implicit self-loop (u, 0) when the pair is unlisted. Stepping a
    /// terminal state is an error.
    std::pair<int, double> step(int u, const LabelString& sigma) const {
        if (is_terminal(u))
            throw std::logic_error("rm_step on terminal state '" + state_name(u) + "'");
        auto lit = label_index_.find(sigma.str());
        if (lit == label_index_.end()) return {u, 0.0};
        const auto& row = table_[static_cast<std::size_t>(u)];
        auto it = row.find(lit->second);
        if (it == row.end()) return {u, 0.0};
        return {it->second.target, it->second.reward};
    }

    /// Whether (u, sigma) has an explicit entry in the transition table.
    bool has_entry(int u, const LabelString& sigma) const {
        auto lit = label_index_.find(sigma.str());
        if (lit == label_index_.end()) return false;
        return table_[static_cast<std::size_t>(u)].count(lit->second) != 0;
    }

    /// All (src, label) -> (dst, reward) entries, in a stable order.
    std::vector<std::tuple<int, LabelString, int, double>> entries() const {
        std::vector<std::tuple<int, LabelString, int, double>> out;
        for (const RmEdge& e : edges_)
            for (const LabelString& l : e.labels) out.emplace_back(e.src, l, e.dst, e.reward);
        return out;
    }

    /// Entries whose destination is the given state (used by state-blinding).
    std::vector<std::pair<int, LabelString>> incoming_entries(int dst) const {
        std::vector<std::pair<int, LabelString>> out;
        for (const RmEdge& e : edges_)
            if (e.dst == dst)
                for (const LabelString& l : e.labels) out.emplace_back(e.src, l);
        return out;
    }

    /// Every invariant violation as a human-readable description; a valid
    /// machine yields an empty list. Violations are data, not exceptions.
    std::vector<std::string> validate() const {
        std::vector<std::string> v;
        if (initial_ < 0) {
            v.push_back("no initial state");
        } else if (is_terminal(initial_)) {
            v.push_back("initial state is terminal: '" + state_name(initial_) + "'");
        }
        bool any_nonterminal = false;
        for (int u = 0; u < num_states(); ++u) any_nonterminal |= !terminal_[static_cast<std::size_t>(u)];
        if (num_states() > 0 && !any_nonterminal) v.push_back("no non-terminal states");
        for (const RmEdge& e : edges_)
            if (is_terminal(e.src))
                v.push_back("transition out of terminal state '" + state_name(e.src) + "'");
        for (const auto& [src, label] : duplicate_entries_)
            v.push_back("nondeterministic transition: (" + state_name(src) + ", \"" + label.str() +
                        "\") defined more than once");
        return v;
    }

private:
    struct Entry {
        int target;
        double reward;
    };

    int intern_label(const LabelString& l) {
        auto it = label_index_.find(l.str());
        if (it != label_index_.end()) return it->second;
        const int id = static_cast<int>(label_index_.size());
        label_index_.emplace(l.str(), id);
        return id;
    }

    std::string name_;
    std::vector<std::string> state_names_;
    std::unordered_map<std::string, int> state_index_;
    std::vector<bool> terminal_;
    int initial_ = -1;
    std::vector<RmEdge> edges_;
    std::unordered_map<std::string, int> label_index_;
    std::vector<std::unordered_map<int, Entry>> table_; // per source state
    std::vector<std::pair<int, LabelString>> duplicate_entries_;
};

inline std::pair<int, double> rm_step(const RewardMachine& rm, int u, const LabelString& sigma) {
    return rm.step(u, sigma);
}

/// One counterfactual experience per non-terminal state: the transition the
/// machine would have taken from there under the observed label. The tuple's
/// terminal flag is env_terminal OR the counterfactual target being terminal.
inline std::vector<CounterfactualExperience> crm_batch(const RewardMachine& rm,
                                                       std::int64_t obs_key, int action,
                                                       std::int64_t next_obs_key,
                                                       const LabelString& sigma,
                                                       bool env_terminal) {
    std::vector<CounterfactualExperience> out;
    for (int u : rm.nonterminal_states()) {
        auto [next_u, r] = rm.step(u, sigma);
        CounterfactualExperience e;
        e.obs_key = obs_key;
        e.rm_state = u;
        e.action = action;
        e.reward = r;
        e.next_obs_key = next_obs_key;
        e.next_rm_state = next_u;
        e.terminal = env_terminal || rm.is_terminal(next_u);
        out.push_back(e);
    }
    return out;
}

/// Potentials for automated reward shaping: value iteration over the machine
/// itself, sweeping only the labels present in the transition table plus the
/// implicit zero-reward self-loop (any other label cannot raise the max).
/// In-place updates, stopping when the largest change is at most 1e-9.
inline PotentialTable ars_potentials(const RewardMachine& rm, double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0))
        throw std::invalid_argument("ars_potentials requires gamma in (0,1)");
    PotentialTable pt;
    pt.gamma = gamma;
    pt.values.assign(static_cast<std::size_t>(rm.num_states()), 0.0);
    const auto entries = rm.entries();
    const auto states = rm.nonterminal_states();
    double delta = 1.0;
    while (delta > 1e-9) {
        delta = 0.0;
        for (int u : states) {
            double best = gamma * pt.values[static_cast<std::size_t>(u)]; // self-loop
            for (const auto& [src, label, dst, reward] : entries) {
                if (src != u) continue;
                best = std::max(best, reward + gamma * pt.values[static_cast<std::size_t>(dst)]);
            }
            delta = std::max(delta, std::abs(best - pt.values[static_cast<std::size_t>(u)]));
            pt.values[static_cast<std::size_t>(u)] = best;
        }
    }
    return pt;
}

/// Potential-based shaped reward: r + gamma * phi(u') - phi(u).
inline double shape_reward(double r, double phi_u, double phi_next, double gamma) {
    return r + gamma * phi_next - phi_u;
}

/// Parses the RM text format:
///
///   # comment
///   rm <name> initial=<id>
///   state <id> [terminal]
///   edge <src> "<label>[|<label>...]" <dst> <reward>
///
/// Labels are canonical label strings; "" is the empty label. Errors carry
/// the offending line number.
inline RewardMachine parse_rm(const std::string& text) {
    RewardMachine rm;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    bool have_header = false;
    std::string pending_initial;
    auto fail = [&](const std::string& msg) -> void {
        throw ParseError("rm parse error at line " + std::to_string(lineno) + ": " + msg);
    };
    while (std::getline(in, line)) {
        ++lineno;
        std::string stripped = line.substr(0, line.find('#'));
        std::istringstream ls(stripped);
        std::string tok;
        if (!(ls >> tok)) continue;
        if (tok == "rm") {
            if (have_header) fail("duplicate header");
            std::string nm, init;
            if (!(ls >> nm >> init)) fail("expected 'rm <name> initial=<id>'");
            if (init.rfind("initial=", 0) != 0) fail("expected initial=<id>");
            rm.set_name(nm);
            pending_initial = init.substr(8);
            have_header = true;
        } else if (tok == "state") {
            if (!have_header) fail("state before header");
            std::string id, flag;
            if (!(ls >> id)) fail("expected 'state <id> [terminal]'");
            bool terminal = false;
            if (ls >> flag) {
                if (flag != "terminal") fail("unexpected token '" + flag + "'");
                terminal = true;
            }
            try {
                rm.add_state(id, terminal);
            } catch (const std::invalid_argument& e) {
                fail(e.what());
            }
        } else if (tok == "edge") {
            if (!have_header) fail("edge before header");
            std::string src;
            if (!(ls >> src)) fail("expected 'edge <src> \"<label>\" <dst> <reward>'");
            std::string rest;
            std::getline(ls, rest);
            const auto q1 = rest.find('"');
            const auto q2 = rest.find('"', q1 == std::string::npos ? q1 : q1 + 1);
            if (q1 == std::string::npos || q2 == std::string::npos) fail("label must be quoted");
            const std::string label_field = rest.substr(q1 + 1, q2 - q1 - 1);
            std::istringstream tail(rest.substr(q2 + 1));
            std::string dst;
            double reward;
            if (!(tail >> dst >> reward)) fail("expected '<dst> <reward>' after label");
            std::string extra;
            if (tail >> extra) fail("unexpected token '" + extra + "'");
            std::vector<LabelString> labels;
            std::size_t pos = 0;
            while (true) {
                const auto bar = label_field.find('|', pos);
                const std::string one = label_field.substr(pos, bar == std::string::npos ? bar : bar - pos);
                try {
                    labels.push_back(LabelString::parse(one));
                } catch (const ParseError& e) {
                    fail(e.what());
                }
                if (bar == std::string::npos) break;
                pos = bar + 1;
            }
            try {
                rm.add_edge(src, labels, dst, reward);
            } catch (const std::invalid_argument& e) {
                fail(e.what());
            }
        } else {
            fail("unknown directive '" + tok + "'");
        }
    }
    if (!have_header) throw ParseError("rm parse error: empty input (missing header)");
    try {
        rm.set_initial(pending_initial);
    } catch (const std::invalid_argument& e) {
        throw ParseError("rm parse error: initial state: " + std::string(e.what()));
    }
    return rm;
}

/// Serializes a machine back into the text format accepted by parse_rm.
inline std::string serialize_rm(const RewardMachine& rm) {
    std::ostringstream out;
    out << "rm " << rm.name() << " initial=" << rm.state_name(rm.initial()) << "\n";
    for (int u = 0; u < rm.num_states(); ++u) {
        out << "state " << rm.state_name(u);
        if (rm.is_terminal(u)) out << " terminal";
        out << "\n";
    }
    out.precision(17);
    for (const RmEdge& e : rm.edges()) {
        out << "edge " << rm.state_name(e.src) << " \"";
        for (std::size_t i = 0; i < e.labels.size(); ++i) {
            if (i) out << '|';
            out << e.labels[i].str();
        }
        out << "\" " << rm.state_name(e.dst) << " " << e.reward << "\n";
    }
    return out.str();
}

} // namespace rmsec

#endif
