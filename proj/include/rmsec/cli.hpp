#ifndef RMSEC_CLI_HPP
#define RMSEC_CLI_HPP

#include <filesystem>
#include <iostream>
#include <memory>

#include "rmsec/config.hpp"
#include "rmsec/env_model.hpp"
#include "rmsec/session.hpp"

namespace rmsec::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;

/// Command-line overrides applied on top of the config file.
struct CliOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    int workers = 1;
};

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot read file '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline GridMap load_map_file(const std::string& path) { return load_map(read_file(path)); }

inline RewardMachine load_rm_file(const std::string& path) {
    RewardMachine rm = parse_rm(read_file(path));
    const auto violations = rm.validate();
    if (!violations.empty()) {
        std::string msg = "reward machine '" + path + "' is invalid:";
        for (const auto& v : violations) msg += "\n  " + v;
        throw ConfigError(msg);
    }
    return rm;
}

struct CommonSetup {
    DomainKind kind;
    GridMap map;
    RewardMachine rm;
    std::string map_path, rm_path;
};

inline CommonSetup load_common(KvConfig& cfg) {
    CommonSetup s;
    s.kind = parse_domain(cfg.get_string("domain"));
    s.map_path = cfg.get_string("map");
    s.rm_path = cfg.get_string("rm");
    if (!fs::exists(s.map_path)) throw ConfigError("map path does not exist: '" + s.map_path + "'");
    if (!fs::exists(s.rm_path)) throw ConfigError("rm path does not exist: '" + s.rm_path + "'");
    s.map = load_map_file(s.map_path);
    s.rm = load_rm_file(s.rm_path);
    return s;
}

// ---------------------------------------------------------------------------
// train

inline int cmd_train(const std::string& config_path, const CliOverrides& ovr) {
    KvConfig cfg = KvConfig::load(config_path);
    CommonSetup setup = load_common(cfg);

    TrainConfig tc;
    tc.gamma = cfg.get_double("gamma", 0.9);
    tc.epsilon = cfg.get_double("epsilon", 0.1);
    tc.alpha = cfg.get_double("alpha", 0.1);
    tc.total_steps = cfg.get_int("total_steps");
    tc.use_crm = cfg.get_bool("use_crm", true);
    tc.use_ars = cfg.get_bool("use_ars", false);
    tc.episode_cap = static_cast<int>(cfg.get_int("episode_cap", 500));
    tc.seed = static_cast<std::uint64_t>(cfg.get_int("seed", 0));
    tc.curve_bin = cfg.get_int("curve_bin", 10000);
    const int n_agents = static_cast<int>(cfg.get_int("agents", 1));
    std::string out_dir = cfg.get_string("out", "");
    cfg.finish();
    if (ovr.seed) tc.seed = *ovr.seed;
    if (ovr.out) out_dir = *ovr.out;
    if (out_dir.empty()) throw ConfigError("no output directory (set 'out' or pass --out)");
    try {
        tc.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("invalid training config: ") + e.what());
    }
    if (n_agents == 0) {
        std::cerr << "warning: agents = 0, nothing to train\n";
        return kExitOk;
    }
    if (n_agents < 0) throw ConfigError("agents must be >= 0");

    fs::create_directories(out_dir);
    Domain domain = Domain::bind(setup.kind, setup.map, 0.1, tc.episode_cap);

    std::mutex io_mu;
    std::vector<std::thread> pool;
    std::size_t next = 0;
    std::mutex mu;
    auto work = [&] {
        while (true) {
            std::size_t i;
            {
                std::lock_guard<std::mutex> lock(mu);
                if (next >= static_cast<std::size_t>(n_agents)) return;
                i = next++;
            }
            TrainConfig agent_cfg = tc;
            agent_cfg.seed = tc.seed + i;
            TrainResult res = train(domain, setup.rm, agent_cfg);
            char suffix[32];
            std::snprintf(suffix, sizeof(suffix), "%03zu", i);
            const std::string agent_path = out_dir + "/agent_" + suffix + ".txt";
            save_agent(res.q, setup.rm.name(), domain.name(), agent_cfg, agent_path);
            std::ofstream curve(out_dir + "/curve_" + suffix + ".csv", std::ios::binary);
            curve << "bin_start,reward\n";
            for (std::size_t b = 0; b < res.curve.bin_reward.size(); ++b)
                curve << b * static_cast<std::size_t>(res.curve.bin_width) << ","
                      << detail::fmt_double(res.curve.bin_reward[b]) << "\n";
            std::lock_guard<std::mutex> lock(io_mu);
            std::cout << "trained agent " << i << " (seed " << agent_cfg.seed << ") -> " << agent_path
                      << "\n";
        }
    };
    const int n_workers = std::max(1, std::min(ovr.workers, n_agents));
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
    return kExitOk;
}

// ---------------------------------------------------------------------------
// attack

struct LoadedAgent {
    AgentFile file;
    std::string path;
    int id = 0;
    std::string variant;
};

inline std::vector<LoadedAgent> load_agents(const std::string& source, const CommonSetup& setup) {
    std::vector<std::string> paths;
    if (fs::is_directory(source)) {
        for (const auto& entry : fs::directory_iterator(source)) {
            const std::string name = entry.path().filename().string();
            if (name.rfind("agent_", 0) == 0 && entry.path().extension() == ".txt")
                paths.push_back(entry.path().string());
        }
        std::sort(paths.begin(), paths.end());
    } else {
        std::size_t pos = 0;
        while (pos <= source.size()) {
            const auto comma = source.find(',', pos);
            const std::string item = source.substr(pos, comma == std::string::npos ? comma : comma - pos);
            if (!item.empty()) paths.push_back(item);
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
    }
    if (paths.empty()) throw ConfigError("no agent files found in '" + source + "'");
    std::vector<LoadedAgent> agents;
    int id = 0;
    for (const std::string& path : paths) {
        LoadedAgent a;
        a.file = load_agent(path);
        a.path = path;
        a.id = id++;
        if (a.file.domain != domain_name(setup.kind))
            throw ConfigError("agent '" + path + "' was trained for domain '" + a.file.domain +
                              "', session runs '" + domain_name(setup.kind) + "'");
        if (a.file.rm_name != setup.rm.name())
            throw ConfigError("agent '" + path + "' was trained against rm '" + a.file.rm_name +
                              "', session uses '" + setup.rm.name() + "'");
        a.variant = a.file.cfg.use_crm ? (a.file.cfg.use_ars ? "crm+ars" : "crm") : "q";
        agents.push_back(std::move(a));
    }
    return agents;
}

inline TamperKind parse_tamper_kind(const std::string& s) {
    if (s == "identity") return TamperKind::identity;
    if (s == "random_hallucination") return TamperKind::random_hallucination;
    if (s == "random_blinding") return TamperKind::random_blinding;
    if (s == "event_blinding") return TamperKind::event_blinding;
    if (s == "edge_blinding") return TamperKind::edge_blinding;
    throw ConfigError("unknown attack kind '" + s + "'");
}

inline BlindMode parse_blind_mode(const std::string& s) {
    if (s == "atomic") return BlindMode::atomic;
    if (s == "compound") return BlindMode::compound;
    if (s == "edge") return BlindMode::edge;
    if (s == "state") return BlindMode::state;
    throw ConfigError("unknown blinding mode '" + s + "'");
}

/// Explicit target syntax: atomic "B" or "Bk"; compound label list
/// "3B|1"; edge list "u0:3B|u2:3B"; state "u1".
inline void apply_explicit_target(AttackConfig& attack, const std::string& text) {
    auto split_bar = [](const std::string& s) {
        std::vector<std::string> out;
        std::size_t pos = 0;
        while (pos <= s.size()) {
            const auto bar = s.find('|', pos);
            out.push_back(s.substr(pos, bar == std::string::npos ? bar : bar - pos));
            if (bar == std::string::npos) break;
            pos = bar + 1;
        }
        return out;
    };
    switch (attack.mode) {
        case BlindMode::atomic:
            attack.target_atomic = text;
            break;
        case BlindMode::compound:
            attack.target_compound = split_bar(text);
            break;
        case BlindMode::edge: {
            std::vector<std::pair<std::string, std::string>> edges;
            for (const std::string& item : split_bar(text)) {
                const auto colon = item.find(':');
                if (colon == std::string::npos)
                    throw ConfigError("edge target must look like 'u0:3B', got '" + item + "'");
                edges.emplace_back(item.substr(0, colon), item.substr(colon + 1));
            }
            attack.target_edges = std::move(edges);
            break;
        }
        case BlindMode::state:
            attack.target_state = text;
            break;
    }
}

inline int cmd_attack(const std::string& config_path, const CliOverrides& ovr) {
    KvConfig cfg = KvConfig::load(config_path);
    CommonSetup setup = load_common(cfg);

    const int episodes = static_cast<int>(cfg.get_int("episodes", 1000));
    const int cap = static_cast<int>(cfg.get_int("cap", 500));
    std::uint64_t base_seed = static_cast<std::uint64_t>(cfg.get_int("seed", 0));
    const std::string agents_source = cfg.get_string("agents");
    std::string out_dir = cfg.get_string("out", "");
    const bool tamper_logs = cfg.get_bool("tamper_logs", false);

    AttackConfig base;
    base.kind = parse_tamper_kind(cfg.get_string("attack", "identity"));
    if (cfg.has("mode")) base.mode = parse_blind_mode(cfg.get_string("mode"));
    base.observe_k = cfg.get_int("observe_k", 50000);
    base.per_occurrence = cfg.get_bool("trigger_per_occurrence", false);
    if (cfg.has("target")) apply_explicit_target(base, cfg.get_string("target"));

    std::vector<std::string> timing_tokens = {"all"};
    if (cfg.has("timing")) timing_tokens = cfg.get_list("timing");
    std::vector<double> trigger_ps = {0.3};
    if (cfg.has("trigger_p")) trigger_ps = cfg.get_double_list("trigger_p");
    std::vector<double> rhos = {0.0};
    if (cfg.has("rho")) rhos = cfg.get_double_list("rho");
    cfg.finish();
    if (ovr.seed) base_seed = *ovr.seed;
    if (ovr.out) out_dir = *ovr.out;
    if (out_dir.empty()) throw ConfigError("no output directory (set 'out' or pass --out)");
    if (episodes < 0) throw ConfigError("episodes must be >= 0");

    Domain domain = Domain::bind(setup.kind, setup.map, 0.1, cap);
    const std::vector<LoadedAgent> agents = load_agents(agents_source, setup);
    fs::create_directories(out_dir);

    // Sweep axes: timing entries (triggered ones expand over trigger_p) and,
    // for random kinds, the noise levels.
    struct Combo {
        AttackConfig attack;
        std::string timing_label;
        std::optional<double> noise;
        std::string file_tag;
    };
    std::vector<Combo> combos;
    auto add_combo = [&](AttackConfig a, std::optional<double> noise) {
        Combo c;
        c.attack = a;
        c.timing_label = timing_token(a.timing, a.trigger_p);
        c.noise = noise;
        c.file_tag = std::string(tamper_kind_name(a.kind));
        if (a.needs_strategy()) c.file_tag += std::string("_") + blind_mode_name(a.mode);
        if (a.needs_strategy()) c.file_tag += "_" + c.timing_label;
        if (noise) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "_%g", *noise * 100.0);
            c.file_tag += buf;
        }
        combos.push_back(std::move(c));
    };
    if (base.is_random()) {
        for (double rho : rhos) {
            AttackConfig a = base;
            a.rho = rho;
            add_combo(a, rho);
        }
    } else if (base.needs_strategy()) {
        for (const std::string& token : timing_tokens) {
            AttackConfig a = base;
            if (token == "all") {
                a.timing = TimingKind::all_instances;
                add_combo(a, std::nullopt);
            } else if (token == "first") {
                a.timing = TimingKind::first_stream;
                add_combo(a, std::nullopt);
            } else if (token == "trigger") {
                a.timing = TimingKind::triggered_stream;
                for (double p : trigger_ps) {
                    AttackConfig b = a;
                    b.trigger_p = p;
                    add_combo(b, std::nullopt);
                }
            } else {
                throw ConfigError("unknown timing '" + token + "' (expected all, first or trigger)");
            }
        }
    } else {
        add_combo(base, std::nullopt);
    }

    // Group agents by variant: metrics average within an agent family.
    std::map<std::string, std::vector<SessionAgent>> groups;
    for (const LoadedAgent& a : agents) groups[a.variant].push_back(SessionAgent{&a.file.q, a.id});

    std::vector<SessionRow> rows;
    for (const Combo& combo : combos) {
        for (const auto& [variant, group] : groups) {
            TamperLogSinkFactory log_factory;
            if (tamper_logs) {
                log_factory = [&, tag = combo.file_tag](int agent_id) -> TamperLogSink {
                    char buf[32];
                    std::snprintf(buf, sizeof(buf), "%03d", agent_id);
                    auto f = std::make_shared<std::ofstream>(
                        out_dir + "/tamper_" + tag + "_agent" + buf + ".csv", std::ios::binary);
                    (*f) << "episode,t,sigma_in,sigma_out,blinded\n";
                    return [f](const TamperLogLine& l) {
                        (*f) << l.episode << ',' << l.t << ',' << l.sigma_in << ',' << l.sigma_out << ','
                             << (l.blinded ? 1 : 0) << "\n";
                    };
                };
            }
            SessionResult res = run_session(group, domain, setup.rm, combo.attack, episodes, cap,
                                            base_seed, ovr.workers, log_factory);
            SessionRow row;
            row.domain = domain.name();
            row.variant = variant;
            row.attack_type = tamper_kind_name(combo.attack.kind);
            row.mode = combo.attack.needs_strategy() ? blind_mode_name(combo.attack.mode) : "";
            row.timing = combo.attack.needs_strategy() ? combo.timing_label : "";
            row.noise_level = combo.noise;
            row.m = res.metrics;
            rows.push_back(row);
            std::ofstream rec(out_dir + "/records_" + combo.file_tag + "_" + variant + ".jsonl",
                              std::ios::binary);
            emit_records_jsonl(res.records, rec);
            for (std::size_t i = 0; i < group.size(); ++i)
                if (!res.selected_targets[i].empty())
                    std::cout << "agent " << group[i].id << " [" << variant << "] " << combo.file_tag
                              << ": target " << res.selected_targets[i] << "\n";
        }
    }
    std::ofstream metrics_out(out_dir + "/metrics.csv", std::ios::binary);
    emit_metrics_csv(rows, metrics_out);
    std::cout << "wrote " << rows.size() << " metric row(s) to " << out_dir << "/metrics.csv\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// report

inline int cmd_report(const std::vector<std::string>& paths, const CliOverrides& ovr) {
    if (paths.empty()) throw ConfigError("report needs at least one metrics file");
    const std::vector<SessionRow> merged = merge_reports(paths);
    if (ovr.out) {
        std::ofstream out(*ovr.out, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write '" + *ovr.out + "'");
        emit_metrics_csv(merged, out);
    } else {
        emit_metrics_csv(merged, std::cout);
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// validate

inline int cmd_validate(const std::string& map_path, const std::string& rm_path,
                        const std::string& domain_str) {
    bool ok = true;
    std::optional<GridMap> map;
    if (!map_path.empty()) {
        try {
            map = load_map_file(map_path);
            std::cout << "map ok: " << map_path << " (" << map->width << "x" << map->height << ")\n";
        } catch (const std::exception& e) {
            std::cout << "map invalid: " << e.what() << "\n";
            ok = false;
        }
    }
    if (!rm_path.empty()) {
        try {
            RewardMachine rm = parse_rm(read_file(rm_path));
            const auto violations = rm.validate();
            if (violations.empty()) {
                std::cout << "rm ok: " << rm_path << " (" << rm.num_states() << " states, "
                          << rm.num_edges() << " edges)\n";
            } else {
                for (const auto& v : violations) std::cout << "rm violation: " << v << "\n";
                ok = false;
            }
        } catch (const std::exception& e) {
            std::cout << "rm invalid: " << e.what() << "\n";
            ok = false;
        }
    }
    if (!domain_str.empty()) {
        if (!map) {
            std::cout << "domain check needs --map\n";
            ok = false;
        } else {
            try {
                Domain::bind(parse_domain(domain_str), *map);
                std::cout << "domain ok: " << domain_str << " binds to " << map_path << "\n";
            } catch (const std::exception& e) {
                std::cout << "domain binding failed: " << e.what() << "\n";
                ok = false;
            }
        }
    }
    return ok ? kExitOk : kExitConfig;
}

} // namespace rmsec::cli

#endif
