#ifndef RMSEC_SESSION_HPP
#define RMSEC_SESSION_HPP

#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>
#include <tuple>

#include <json.hpp>

#include "rmsec/agent_io.hpp"
#include "rmsec/evaluate.hpp"
#include "rmsec/metrics.hpp"

namespace rmsec {

/// Full description of one attack configuration. Targets may be given
/// explicitly (reproducible sessions); otherwise event/edge kinds run the
/// passive selection phase per victim before the evaluation episodes.
struct AttackConfig {
    TamperKind kind = TamperKind::identity;
    BlindMode mode = BlindMode::compound;
    TimingKind timing = TimingKind::all_instances;
    double trigger_p = 0.3;
    bool per_occurrence = false;
    double rho = 0.0;
    long long observe_k = 50000; // selection budget: labeling outputs

    std::optional<std::string> target_atomic;                                      // e.g. "B"
    std::optional<std::vector<std::string>> target_compound;                       // label texts
    std::optional<std::vector<std::pair<std::string, std::string>>> target_edges;  // (state, label)
    std::optional<std::string> target_state;

    bool needs_strategy() const {
        return kind == TamperKind::event_blinding || kind == TamperKind::edge_blinding;
    }
    bool is_random() const {
        return kind == TamperKind::random_blinding || kind == TamperKind::random_hallucination;
    }
    bool has_explicit_target() const {
        return target_atomic || target_compound || target_edges || target_state;
    }
};

inline std::string timing_token(TimingKind k, double trigger_p) {
    switch (k) {
        case TimingKind::all_instances: return "all";
        case TimingKind::first_stream: return "first";
        case TimingKind::triggered_stream: {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "trigger_%g", trigger_p * 100.0);
            return buf;
        }
    }
    return "?";
}

/// Strategy for one victim: explicit targets when given, otherwise the head
/// of the ranked candidates observed passively over the selection budget.
inline BlindingStrategy select_strategy(const AttackConfig& attack, const QTable& q,
                                        const Domain& domain, const RewardMachine& rm, int cap,
                                        std::uint64_t select_seed) {
    if (attack.has_explicit_target()) {
        switch (attack.mode) {
            case BlindMode::atomic:
                return BlindingStrategy::atomic(*attack.target_atomic);
            case BlindMode::compound: {
                std::vector<LabelString> labels;
                for (const auto& t : *attack.target_compound) labels.push_back(LabelString::parse(t));
                return BlindingStrategy::compound(std::move(labels));
            }
            case BlindMode::edge: {
                std::vector<std::pair<int, LabelString>> edges;
                for (const auto& [state, label] : *attack.target_edges)
                    edges.emplace_back(rm.state_id(state), LabelString::parse(label));
                return BlindingStrategy::edge(std::move(edges));
            }
            case BlindMode::state:
                return BlindingStrategy::state(rm, rm.state_id(*attack.target_state));
        }
    }
    GreedyRunSource source(q, domain, rm, cap, select_seed);
    const CandidateStats stats = collect_candidates(source, attack.mode, attack.observe_k);
    const std::vector<CandidateKey> ranked = rank_candidates(stats);
    const CandidateKey& head = ranked.front();
    switch (attack.mode) {
        case BlindMode::atomic: return BlindingStrategy::atomic(head.text);
        case BlindMode::compound: return BlindingStrategy::compound({LabelString::parse(head.text)});
        case BlindMode::edge:
            return BlindingStrategy::edge({{head.state, LabelString::parse(head.text)}});
        case BlindMode::state: return BlindingStrategy::state(rm, head.state);
    }
    throw std::logic_error("unreachable");
}

inline std::string describe_strategy(const BlindingStrategy& s, const RewardMachine& rm) {
    std::string out = blind_mode_name(s.mode);
    out += ":";
    switch (s.mode) {
        case BlindMode::atomic: out += s.atomic_targets; break;
        case BlindMode::compound:
            for (const auto& l : s.compound_targets) out += "\"" + l.str() + "\"";
            break;
        case BlindMode::edge:
        case BlindMode::state:
            if (s.state_target >= 0) out += rm.state_name(s.state_target) + "=";
            for (const auto& [u, l] : s.edge_targets)
                out += "(" + rm.state_name(u) + ",\"" + l.str() + "\")";
            break;
    }
    return out;
}

struct SessionAgent {
    const QTable* q = nullptr;
    int id = 0;
};

struct SessionResult {
    std::vector<EpisodeRecord> records;       // sorted by (agent, episode)
    Metrics metrics;
    std::vector<std::string> selected_targets; // per agent, empty for non-strategy kinds
};

/// Factory for per-agent tamper-log sinks (may return an empty function).
using TamperLogSinkFactory = std::function<TamperLogSink(int agent_id)>;

/// Runs `episodes` evaluation episodes per agent under one attack
/// configuration. Per-episode seeds derive from (base_seed, agent id,
/// episode index), so the worker count never changes any output; records are
/// canonicalized to (agent, episode) order before metrics are computed.
/// Strategy-selection episodes are separate from (and not counted in) the
/// evaluation episodes.
inline SessionResult run_session(const std::vector<SessionAgent>& agents, const Domain& domain,
                                 const RewardMachine& rm, const AttackConfig& attack, int episodes,
                                 int cap, std::uint64_t base_seed, int workers = 1,
                                 const TamperLogSinkFactory& log_factory = {}) {
    SessionResult result;
    result.selected_targets.assign(agents.size(), "");
    std::vector<std::vector<EpisodeRecord>> per_agent(agents.size());

    auto run_agent = [&](std::size_t i) {
        const SessionAgent& agent = agents[i];
        Tamperer tamperer;
        tamperer.kind = attack.kind;
        tamperer.rho = attack.rho;
        tamperer.timing.kind = attack.timing;
        tamperer.timing.trigger_p = attack.trigger_p;
        tamperer.timing.per_occurrence = attack.per_occurrence;
        tamperer.rm = &rm;
        if (attack.kind == TamperKind::random_hallucination) tamperer.alphabet = domain.emittable_labels();
        if (attack.needs_strategy()) {
            const std::uint64_t select_seed = derive_seed(base_seed, static_cast<std::uint64_t>(agent.id),
                                                          0, detail::kSelectStream);
            tamperer.strategy = select_strategy(attack, *agent.q, domain, rm, cap, select_seed);
            result.selected_targets[i] = describe_strategy(tamperer.strategy, rm);
        }
        TamperLogSink sink = log_factory ? log_factory(agent.id) : TamperLogSink{};
        per_agent[i] = evaluate_policy(*agent.q, domain, rm, episodes, cap, base_seed, agent.id,
                                       &tamperer, sink);
    };

    if (workers <= 1 || agents.size() <= 1) {
        for (std::size_t i = 0; i < agents.size(); ++i) run_agent(i);
    } else {
        std::vector<std::thread> pool;
        std::size_t next = 0;
        std::mutex mu;
        const int n = std::min<int>(workers, static_cast<int>(agents.size()));
        for (int w = 0; w < n; ++w)
            pool.emplace_back([&] {
                while (true) {
                    std::size_t i;
                    {
                        std::lock_guard<std::mutex> lock(mu);
                        if (next >= agents.size()) return;
                        i = next++;
                    }
                    run_agent(i);
                }
            });
        for (auto& th : pool) th.join();
    }

    for (auto& chunk : per_agent)
        result.records.insert(result.records.end(), chunk.begin(), chunk.end());
    std::sort(result.records.begin(), result.records.end(),
              [](const EpisodeRecord& a, const EpisodeRecord& b) {
                  return std::tie(a.agent_id, a.episode) < std::tie(b.agent_id, b.episode);
              });
    if (!result.records.empty()) {
        std::optional<double> nominal;
        if (attack.is_random()) nominal = attack.rho;
        result.metrics = compute_metrics(result.records, 0.5, nominal);
        if (domain.kind != DomainKind::symbol) {
            result.metrics.atf.reset();
            result.metrics.arf.reset();
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Report emission.

/// One metrics row in the report tables.
struct SessionRow {
    std::string domain;
    std::string variant; // agent family, e.g. "crm" or "crm+ars"
    std::string attack_type;
    std::string mode;
    std::string timing;
    std::optional<double> noise_level;
    Metrics m;
};

namespace detail {
inline std::string csv_opt(const std::optional<double>& v) {
    return v ? fmt_double(*v) : std::string();
}
} // namespace detail

inline constexpr const char* kMetricsCsvHeader =
    "domain,variant,attack_type,mode,timing,noise_level,atr,measured_atr,afr,impact_score,ats,atf,arf,"
    "n_agents,n_episodes";

inline void emit_metrics_csv(const std::vector<SessionRow>& rows, std::ostream& out) {
    out << kMetricsCsvHeader << "\n";
    for (const SessionRow& r : rows) {
        out << r.domain << ',' << r.variant << ',' << r.attack_type << ',' << r.mode << ',' << r.timing
            << ',' << detail::csv_opt(r.noise_level) << ',' << detail::fmt_double(r.m.atr_for_is) << ','
            << detail::fmt_double(r.m.atr) << ',' << detail::fmt_double(r.m.afr) << ','
            << detail::fmt_double(r.m.is) << ',' << detail::csv_opt(r.m.ats) << ','
            << detail::csv_opt(r.m.atf) << ',' << detail::csv_opt(r.m.arf) << ',' << r.m.n_agents << ','
            << r.m.n_episodes << "\n";
    }
}

inline void emit_records_jsonl(const std::vector<EpisodeRecord>& records, std::ostream& out) {
    for (const EpisodeRecord& r : records) {
        nlohmann::json j;
        j["agent"] = r.agent_id;
        j["episode"] = r.episode;
        j["success"] = r.success;
        j["steps"] = r.steps;
        j["reward"] = r.reward;
        j["tamper_count"] = r.tamper_count;
        j["episode_length"] = r.episode_length;
        j["seed"] = r.seed;
        out << j.dump() << "\n";
    }
}

inline std::vector<EpisodeRecord> load_records_jsonl(std::istream& in) {
    std::vector<EpisodeRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const nlohmann::json j = nlohmann::json::parse(line);
        EpisodeRecord r;
        r.agent_id = j.at("agent").get<int>();
        r.episode = j.at("episode").get<int>();
        r.success = j.at("success").get<bool>();
        r.steps = j.at("steps").get<int>();
        r.reward = j.at("reward").get<double>();
        r.tamper_count = j.at("tamper_count").get<long long>();
        r.episode_length = j.at("episode_length").get<long long>();
        r.seed = j.at("seed").get<std::uint64_t>();
        records.push_back(r);
    }
    return records;
}

/// Writes either view of a session: "csv" emits the metrics rows (header
/// only when there are none), "json" emits the per-episode records as JSONL.
inline void emit_report(const std::vector<SessionRow>& rows, const std::vector<EpisodeRecord>& records,
                        const std::string& path, const std::string& format) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write report '" + path + "'");
    if (format == "csv") {
        emit_metrics_csv(rows, out);
    } else if (format == "json") {
        emit_records_jsonl(records, out);
    } else {
        throw std::invalid_argument("unknown report format '" + format + "' (expected csv or json)");
    }
}

/// Parses a metrics CSV produced by emit_metrics_csv.
inline std::vector<SessionRow> load_metrics_csv(std::istream& in, const std::string& source = "<csv>") {
    std::vector<SessionRow> rows;
    std::string line;
    if (!std::getline(in, line)) throw ParseError(source + ": empty metrics file");
    if (line != kMetricsCsvHeader) throw ParseError(source + ": unexpected metrics header");
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::size_t pos = 0;
        while (true) {
            const auto comma = line.find(',', pos);
            f.push_back(line.substr(pos, comma == std::string::npos ? comma : comma - pos));
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        if (f.size() != 15)
            throw ParseError(source + ": line " + std::to_string(lineno) + ": expected 15 columns");
        SessionRow r;
        r.domain = f[0];
        r.variant = f[1];
        r.attack_type = f[2];
        r.mode = f[3];
        r.timing = f[4];
        auto opt = [](const std::string& s) -> std::optional<double> {
            if (s.empty()) return std::nullopt;
            return std::stod(s);
        };
        r.noise_level = opt(f[5]);
        r.m.atr_for_is = std::stod(f[6]);
        r.m.atr = std::stod(f[7]);
        r.m.afr = std::stod(f[8]);
        r.m.asr = 1.0 - r.m.afr;
        r.m.is = std::stod(f[9]);
        r.m.ats = opt(f[10]);
        r.m.atf = opt(f[11]);
        r.m.arf = opt(f[12]);
        r.m.n_agents = std::stoi(f[13]);
        r.m.n_episodes = std::stoll(f[14]);
        rows.push_back(r);
    }
    return rows;
}

/// Merges metrics files into one table keyed by (domain, variant, attack,
/// mode, timing, noise level); a key appearing in two sources is an error.
inline std::vector<SessionRow> merge_reports(const std::vector<std::string>& paths) {
    std::vector<SessionRow> merged;
    std::map<std::string, std::string> seen; // key -> source path
    for (const std::string& path : paths) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot read metrics file '" + path + "'");
        for (SessionRow& r : load_metrics_csv(in, path)) {
            const std::string key = r.domain + "|" + r.variant + "|" + r.attack_type + "|" + r.mode +
                                    "|" + r.timing + "|" + detail::csv_opt(r.noise_level);
            auto [it, inserted] = seen.emplace(key, path);
            if (!inserted)
                throw std::runtime_error("duplicate metrics row '" + key + "' in both '" + it->second +
                                         "' and '" + path + "'");
            merged.push_back(std::move(r));
        }
    }
    return merged;
}

} // namespace rmsec

#endif
