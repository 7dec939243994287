#ifndef RMSEC_AGENT_IO_HPP
#define RMSEC_AGENT_IO_HPP

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "rmsec/qtable.hpp"
#include "rmsec/training.hpp"

namespace rmsec {

inline constexpr const char* kAgentFormatTag = "rmsec-agent";
inline constexpr const char* kAgentFormatVersion = "v1";

struct AgentFile {
    QTable q;
    std::string rm_name;
    std::string domain;
    TrainConfig cfg;
};

namespace detail {
inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}
} // namespace detail

/// Versioned sparse text dump: header, config echo, then one
/// `<rm state> <obs key> <action> <value>` line per non-zero cell. Values
/// are printed with 17 significant digits so the round trip is exact.
inline void save_agent(const QTable& q, const std::string& rm_name, const std::string& domain,
                       const TrainConfig& cfg, const std::string& path) {
    std::ostringstream out;
    out << kAgentFormatTag << ' ' << kAgentFormatVersion << '\n';
    out << "rm " << rm_name << '\n';
    out << "domain " << domain << '\n';
    out << "gamma " << detail::fmt_double(cfg.gamma) << '\n';
    out << "epsilon " << detail::fmt_double(cfg.epsilon) << '\n';
    out << "alpha " << detail::fmt_double(cfg.alpha) << '\n';
    out << "total_steps " << cfg.total_steps << '\n';
    out << "use_crm " << (cfg.use_crm ? 1 : 0) << '\n';
    out << "use_ars " << (cfg.use_ars ? 1 : 0) << '\n';
    out << "episode_cap " << cfg.episode_cap << '\n';
    out << "seed " << cfg.seed << '\n';
    out << "rm_states " << q.num_rm_states() << '\n';
    long long entries = 0;
    for (int u = 0; u < q.num_rm_states(); ++u)
        for (int k = 0; k < q.num_keys(); ++k)
            for (int a = 0; a < kNumActions; ++a)
                if (q.value(u, k, a) != 0.0) ++entries;
    out << "entries " << entries << '\n';
    for (int u = 0; u < q.num_rm_states(); ++u)
        for (int k = 0; k < q.num_keys(); ++k)
            for (int a = 0; a < kNumActions; ++a) {
                const double v = q.value(u, k, a);
                if (v == 0.0) continue;
                out << u << ' ' << q.key_name(k) << ' ' << a << ' ' << detail::fmt_double(v) << '\n';
            }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write agent file '" + path + "'");
    f << out.str();
    if (!f) throw std::runtime_error("short write to agent file '" + path + "'");
}

inline AgentFile load_agent(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read agent file '" + path + "'");
    std::string tag, version;
    if (!(f >> tag >> version) || tag != kAgentFormatTag)
        throw ParseError("'" + path + "' is not an agent file");
    if (version != kAgentFormatVersion)
        throw ParseError("agent file '" + path + "' has unsupported version '" + version + "'");
    AgentFile agent;
    int rm_states = -1;
    long long entries = -1;
    std::string field;
    while (f >> field) {
        if (field == "rm") {
            f >> agent.rm_name;
        } else if (field == "domain") {
            f >> agent.domain;
        } else if (field == "gamma") {
            f >> agent.cfg.gamma;
        } else if (field == "epsilon") {
            f >> agent.cfg.epsilon;
        } else if (field == "alpha") {
            f >> agent.cfg.alpha;
        } else if (field == "total_steps") {
            f >> agent.cfg.total_steps;
        } else if (field == "use_crm") {
            int v;
            f >> v;
            agent.cfg.use_crm = v != 0;
        } else if (field == "use_ars") {
            int v;
            f >> v;
            agent.cfg.use_ars = v != 0;
        } else if (field == "episode_cap") {
            f >> agent.cfg.episode_cap;
        } else if (field == "seed") {
            f >> agent.cfg.seed;
        } else if (field == "rm_states") {
            f >> rm_states;
        } else if (field == "entries") {
            f >> entries;
            break;
        } else {
            throw ParseError("agent file '" + path + "': unknown field '" + field + "'");
        }
        if (!f) throw ParseError("agent file '" + path + "': malformed header");
    }
    if (rm_states < 0 || entries < 0)
        throw ParseError("agent file '" + path + "': missing rm_states/entries header");
    agent.q = QTable(rm_states);
    for (long long i = 0; i < entries; ++i) {
        int u, action;
        std::string key;
        double value;
        if (!(f >> u >> key >> action >> value))
            throw ParseError("agent file '" + path + "': truncated at entry " + std::to_string(i) + " of " +
                             std::to_string(entries));
        if (u < 0 || u >= rm_states || action < 0 || action >= kNumActions)
            throw ParseError("agent file '" + path + "': entry out of range");
        agent.q.set(u, agent.q.intern(key), action, value);
    }
    return agent;
}

} // namespace rmsec

#endif
