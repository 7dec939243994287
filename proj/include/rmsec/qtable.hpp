#ifndef RMSEC_QTABLE_HPP
#define RMSEC_QTABLE_HPP

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "rmsec/grid_map.hpp"
#include "rmsec/reward_machine.hpp"
#include "rmsec/rng.hpp"

namespace rmsec {

/// One action-value table per RM state, keyed by the canonical observation
/// serialization. Unseen (key, action) cells read as zero. Observation keys
/// are interned to dense ids once; training uses the ids on the hot path.
class QTable {
public:
    QTable() = default;
    explicit QTable(int n_rm_states) : q_(static_cast<std::size_t>(n_rm_states)) {}

    int num_rm_states() const { return static_cast<int>(q_.size()); }
    int num_keys() const { return static_cast<int>(names_.size()); }
    const std::string& key_name(int id) const { return names_[static_cast<std::size_t>(id)]; }

    /// Id for a key, creating it if new.
    int intern(const std::string& key) {
        auto it = index_.find(key);
        if (it != index_.end()) return it->second;
        const int id = static_cast<int>(names_.size());
        index_.emplace(key, id);
        names_.push_back(key);
        return id;
    }

    /// Id for a key, or -1 when it was never seen. Never mutates the table,
    /// so evaluation under tampering cannot grow it.
    int lookup(const std::string& key) const {
        auto it = index_.find(key);
        return it == index_.end() ? -1 : it->second;
    }

    std::array<double, 4> row(int u, int key_id) const {
        const auto& t = q_[static_cast<std::size_t>(u)];
        if (key_id < 0 || key_id >= static_cast<int>(t.size())) return {0.0, 0.0, 0.0, 0.0};
        return t[static_cast<std::size_t>(key_id)];
    }

    double value(int u, int key_id, int action) const { return row(u, key_id)[static_cast<std::size_t>(action)]; }

    double max_value(int u, int key_id) const {
        const auto r = row(u, key_id);
        double m = r[0];
        for (int a = 1; a < 4; ++a) m = std::max(m, r[static_cast<std::size_t>(a)]);
        return m;
    }

    void set(int u, int key_id, int action, double v) {
        auto& t = q_[static_cast<std::size_t>(u)];
        if (key_id >= static_cast<int>(t.size())) t.resize(static_cast<std::size_t>(key_id) + 1, {0.0, 0.0, 0.0, 0.0});
        t[static_cast<std::size_t>(key_id)][static_cast<std::size_t>(action)] = v;
    }

    /// Value equality: same values for every (rm state, key string, action),
    /// regardless of interning order; all-zero rows count as absent.
    bool operator==(const QTable& other) const {
        if (q_.size() != other.q_.size()) return false;
        auto covered = [](const QTable& a, const QTable& b) {
            for (int u = 0; u < a.num_rm_states(); ++u)
                for (int k = 0; k < a.num_keys(); ++k) {
                    const int bk = b.lookup(a.key_name(k));
                    if (a.row(u, k) != b.row(u, bk)) return false;
                }
            return true;
        };
        return covered(*this, other) && covered(other, *this);
    }

private:
    std::unordered_map<std::string, int> index_;
    std::vector<std::string> names_;
    std::vector<std::vector<std::array<double, 4>>> q_; // [rm state][key id][action]
};

/// Epsilon-greedy action choice: with probability eps a uniform random
/// action, otherwise the argmax with ties broken uniformly at random.
inline int epsilon_greedy(const QTable& q, int u, int key_id, double eps, Rng& rng) {
    if (eps > 0.0 && rng.chance(eps)) return rng.next_int(kNumActions);
    const auto row = q.row(u, key_id);
    double best = row[0];
    for (int a = 1; a < kNumActions; ++a) best = std::max(best, row[static_cast<std::size_t>(a)]);
    std::array<int, 4> ties{};
    int n_ties = 0;
    for (int a = 0; a < kNumActions; ++a)
        if (row[static_cast<std::size_t>(a)] == best) ties[static_cast<std::size_t>(n_ties++)] = a;
    if (n_ties == 1) return ties[0];
    return ties[static_cast<std::size_t>(rng.next_int(n_ties))];
}

/// The QRM backup: target is r for terminal experiences, otherwise
/// r + gamma * max_a' q[u'](s', a'); the cell moves toward the target by
/// alpha. The experience's reward is taken as given (shaping happens before
/// the update).
inline void qrm_update(QTable& q, const CounterfactualExperience& exp, double alpha, double gamma) {
    double target = exp.reward;
    if (!exp.terminal)
        target += gamma * q.max_value(exp.next_rm_state, static_cast<int>(exp.next_obs_key));
    const int key = static_cast<int>(exp.obs_key);
    const double old = q.value(exp.rm_state, key, exp.action);
    q.set(exp.rm_state, key, exp.action, old + alpha * (target - old));
}

} // namespace rmsec

#endif
