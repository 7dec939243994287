#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "rmsec/session.hpp"
#include "rmsec/training.hpp"

using namespace rmsec;

namespace {

std::string read_asset(const std::string& name) {
    std::ifstream f(std::string(RMSEC_ASSET_DIR) + "/" + name, std::ios::binary);
    REQUIRE(f.good());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

const GridMap& default_map() {
    static GridMap m = load_map(read_asset("default.map"));
    return m;
}

const RewardMachine& cookie_rm() {
    static RewardMachine rm = parse_rm(read_asset("cookie.rm"));
    return rm;
}

Domain cookie_domain() { return Domain::bind(DomainKind::cookie, default_map(), 0.1); }

const QTable& trained_cookie() {
    static QTable q = [] {
        TrainConfig cfg;
        cfg.total_steps = 150000;
        cfg.seed = 5;
        return train(cookie_domain(), cookie_rm(), cfg).q;
    }();
    return q;
}

/// Synthetic records realizing an exact (afr, tamper ratio) pair.
std::vector<EpisodeRecord> synthetic_records(double afr, double tamper_ratio, int episodes = 1000,
                                             int agents = 1) {
    std::vector<EpisodeRecord> out;
    const long long length = 10000;
    for (int a = 0; a < agents; ++a) {
        const int failures = static_cast<int>(afr * episodes + 0.5);
        for (int e = 0; e < episodes; ++e) {
            EpisodeRecord r;
            r.agent_id = a;
            r.episode = e;
            r.success = e >= failures;
            r.steps = r.success ? 40 : 500;
            r.reward = r.success ? 1.0 : 0.0;
            r.episode_length = length;
            r.tamper_count = static_cast<long long>(tamper_ratio * static_cast<double>(length) + 0.5);
            out.push_back(r);
        }
    }
    return out;
}

} // namespace

TEST_CASE("impact score formula") {
    CHECK(impact_score(1.0, 0.7344) == Catch::Approx(0.4051).margin(5e-4));
    CHECK(impact_score(0.664, 0.0019) == Catch::Approx(0.8118).margin(5e-4));
    CHECK(impact_score(0.0, 0.5) == 0.0);
}

TEST_CASE("compute_metrics reproduces published impact scores from (ATR, AFR)") {
    struct Row {
        double atr, afr, is;
    };
    // Edge-blinding result rows: (tampering rate, failure rate, score).
    const std::vector<Row> rows = {
        {0.7344, 1.0, 0.4051},  {0.0268, 0.0, 0.0},     {0.6393, 1.0, 0.4389},
        {0.0019, 0.664, 0.8118}, {0.0013, 0.664, 0.8127}, {0.9569, 1.0, 0.3432},
        {0.0028, 0.664, 0.8103},
    };
    for (const Row& row : rows) {
        const Metrics m = compute_metrics(synthetic_records(row.afr, row.atr));
        CHECK(m.afr == Catch::Approx(row.afr).margin(1e-12));
        CHECK(m.atr == Catch::Approx(row.atr).margin(1e-4));
        CHECK(m.is == Catch::Approx(row.is).margin(5e-4));
    }
}

TEST_CASE("asr and afr are exact complements") {
    const Metrics m = compute_metrics(synthetic_records(0.37, 0.2));
    CHECK(m.asr + m.afr == 1.0);
}

TEST_CASE("nominal noise level overrides the measured rate for the score only") {
    const auto records = synthetic_records(0.3865, 0.27); // measured rate differs from nominal
    const Metrics m = compute_metrics(records, 0.5, 0.30);
    CHECK(m.atr == Catch::Approx(0.27).margin(1e-6));
    CHECK(m.atr_for_is == 0.30);
    // Matches the cookie 30%-noise published score.
    CHECK(m.is == Catch::Approx(0.3886).margin(5e-4));
}

TEST_CASE("ats averages only agents with successes; failure metrics need failures") {
    std::vector<EpisodeRecord> records;
    auto add = [&](int agent, bool success, int steps, double reward) {
        EpisodeRecord r;
        r.agent_id = agent;
        r.episode = static_cast<int>(records.size());
        r.success = success;
        r.steps = steps;
        r.reward = reward;
        r.episode_length = steps;
        records.push_back(r);
    };
    // Agent 0 never succeeds; agent 1 succeeds in 30 and 50 steps.
    add(0, false, 500, 0.0);
    add(1, true, 30, 1.0);
    add(1, true, 50, 1.0);
    const Metrics m = compute_metrics(records);
    REQUIRE(m.ats.has_value());
    CHECK(*m.ats == Catch::Approx(40.0));
    REQUIRE(m.atf.has_value());
    CHECK(*m.atf == Catch::Approx(500.0));
    CHECK(*m.arf == Catch::Approx(0.0));
    // All successes: no failure metrics.
    const Metrics clean = compute_metrics(synthetic_records(0.0, 0.0, 10));
    CHECK(clean.ats.has_value());
    CHECK_FALSE(clean.atf.has_value());
    CHECK_FALSE(clean.arf.has_value());
    CHECK_THROWS_AS(compute_metrics({}), std::invalid_argument);
}

TEST_CASE("impact score is monotone in afr and atr") {
    for (double afr : {0.1, 0.4, 0.8}) {
        for (double atr : {0.05, 0.3, 0.7}) {
            CHECK(impact_score(afr + 0.05, atr) > impact_score(afr, atr));
            CHECK(impact_score(afr, atr + 0.05) < impact_score(afr, atr));
        }
    }
}

TEST_CASE("curve_summary order statistics") {
    LearningCurve a, b, c;
    a.bin_width = b.bin_width = c.bin_width = 10000;
    a.bin_reward = {0.0};
    b.bin_reward = {10.0};
    c.bin_reward = {20.0};
    const CurveSummary s = curve_summary({a, b, c});
    CHECK(s.median[0] == Catch::Approx(10.0));
    CHECK(s.p25[0] == Catch::Approx(5.0));
    CHECK(s.p75[0] == Catch::Approx(15.0));
    // Identical curves collapse.
    const CurveSummary same = curve_summary({b, b, b});
    CHECK(same.median[0] == 10.0);
    CHECK(same.p25[0] == 10.0);
    CHECK(same.p75[0] == 10.0);
    // A single curve is its own summary.
    const CurveSummary single = curve_summary({c});
    CHECK(single.median[0] == 20.0);
    CHECK(single.p25[0] == 20.0);
    CHECK(single.p75[0] == 20.0);
    LearningCurve ragged;
    ragged.bin_width = 10000;
    ragged.bin_reward = {1.0, 2.0};
    CHECK_THROWS_AS(curve_summary({a, ragged}), std::invalid_argument);
}

TEST_CASE("records round-trip through jsonl with identical metrics") {
    const auto records = synthetic_records(0.234, 0.0567, 500, 3);
    std::stringstream buf;
    emit_records_jsonl(records, buf);
    const auto loaded = load_records_jsonl(buf);
    REQUIRE(loaded.size() == records.size());
    const Metrics a = compute_metrics(records);
    const Metrics b = compute_metrics(loaded);
    CHECK(a.asr == b.asr);
    CHECK(a.atr == b.atr);
    CHECK(a.is == b.is);
    CHECK(a.ats == b.ats);
}

TEST_CASE("emit_report dispatches on format") {
    namespace fs = std::filesystem;
    const std::string path = (fs::temp_directory_path() / "rmsec_report_test.csv").string();
    CHECK_THROWS_AS(emit_report({}, {}, path, "xml"), std::invalid_argument);
    emit_report({}, {}, path, "csv");
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == kMetricsCsvHeader);
    std::string rest;
    CHECK_FALSE(std::getline(in, rest)); // header-only for empty rows
    fs::remove(path);
}

TEST_CASE("metrics csv round trip and merge") {
    namespace fs = std::filesystem;
    SessionRow row1;
    row1.domain = "cookie";
    row1.variant = "crm";
    row1.attack_type = "random_blinding";
    row1.timing = "";
    row1.noise_level = 0.3;
    row1.m = compute_metrics(synthetic_records(0.0604, 0.05), 0.5, 0.3);
    SessionRow row2 = row1;
    row2.noise_level = 0.5;
    const std::string p1 = (fs::temp_directory_path() / "rmsec_m1.csv").string();
    const std::string p2 = (fs::temp_directory_path() / "rmsec_m2.csv").string();
    {
        std::ofstream f1(p1), f2(p2);
        emit_metrics_csv({row1}, f1);
        emit_metrics_csv({row2}, f2);
    }
    const auto merged = merge_reports({p1, p2});
    REQUIRE(merged.size() == 2);
    CHECK(merged[0].noise_level == 0.3);
    CHECK(merged[0].m.is == Catch::Approx(row1.m.is).margin(1e-12));
    // Duplicate keys across files are an error naming both sources.
    CHECK_THROWS_WITH(merge_reports({p1, p1}), Catch::Matchers::ContainsSubstring("duplicate"));
    fs::remove(p1);
    fs::remove(p2);
}

TEST_CASE("run_session with the identity attack keeps a trained agent perfect") {
    const QTable& q = trained_cookie();
    AttackConfig attack; // identity
    const SessionResult res = run_session({{&q, 0}}, cookie_domain(), cookie_rm(), attack, 200, 500, 42);
    CHECK(res.records.size() == 200);
    CHECK(res.metrics.asr == 1.0);
    CHECK(res.metrics.atr == 0.0);
    // ATF/ARF are suppressed outside the symbol domain.
    CHECK_FALSE(res.metrics.atf.has_value());
}

TEST_CASE("run_session yields byte-identical records regardless of workers") {
    const QTable& q = trained_cookie();
    QTable q2 = q;
    AttackConfig attack;
    attack.kind = TamperKind::random_blinding;
    attack.rho = 0.25;
    const SessionResult a =
        run_session({{&q, 0}, {&q2, 1}}, cookie_domain(), cookie_rm(), attack, 60, 500, 9, 1);
    const SessionResult b =
        run_session({{&q, 0}, {&q2, 1}}, cookie_domain(), cookie_rm(), attack, 60, 500, 9, 3);
    std::stringstream sa, sb;
    emit_records_jsonl(a.records, sa);
    emit_records_jsonl(b.records, sb);
    CHECK(sa.str() == sb.str());
    // And identical nominal-vs-measured rates.
    CHECK(a.metrics.atr_for_is == 0.25);
    CHECK(a.metrics.atr == b.metrics.atr);
}

TEST_CASE("run_session with zero episodes returns nothing") {
    const QTable& q = trained_cookie();
    AttackConfig attack;
    const SessionResult res = run_session({{&q, 0}}, cookie_domain(), cookie_rm(), attack, 0, 500, 1);
    CHECK(res.records.empty());
}

TEST_CASE("tamper-log recount matches the metrics' tampering rate") {
    const QTable& q = trained_cookie();
    AttackConfig attack;
    attack.kind = TamperKind::random_blinding;
    attack.rho = 0.4;
    std::map<int, std::pair<long long, long long>> per_episode; // episode -> (blinded, lines)
    TamperLogSinkFactory factory = [&](int) -> TamperLogSink {
        return [&](const TamperLogLine& l) {
            auto& e = per_episode[l.episode];
            e.first += l.blinded ? 1 : 0;
            e.second += 1;
        };
    };
    const SessionResult res =
        run_session({{&q, 0}}, cookie_domain(), cookie_rm(), attack, 50, 500, 77, 1, factory);
    REQUIRE(res.records.size() == 50);
    double recount = 0.0;
    for (const EpisodeRecord& r : res.records) {
        const auto& [blinded, lines] = per_episode.at(r.episode);
        CHECK(blinded == r.tamper_count);
        CHECK(lines == r.episode_length);
        recount += static_cast<double>(blinded) / static_cast<double>(lines);
    }
    CHECK(res.metrics.atr == Catch::Approx(recount / 50).margin(1e-12));
}

TEST_CASE("automatic strategy selection targets the hallway label on cookie") {
    const QTable& q = trained_cookie();
    AttackConfig attack;
    attack.kind = TamperKind::event_blinding;
    attack.mode = BlindMode::compound;
    attack.timing = TimingKind::all_instances;
    attack.observe_k = 4000;
    const SessionResult res = run_session({{&q, 0}}, cookie_domain(), cookie_rm(), attack, 20, 500, 11);
    // The hallway label is emitted in every episode from t=1: reliability and
    // earliness make it the head of the ranking.
    CHECK(res.selected_targets[0] == "compound:\"1\"");
}

TEST_CASE("edge-blinding the button transition traps a trained cookie agent") {
    const QTable& q = trained_cookie();
    AttackConfig attack;
    attack.kind = TamperKind::edge_blinding;
    attack.mode = BlindMode::edge;
    attack.timing = TimingKind::all_instances;
    attack.target_edges = {{{"u0", "3B"}}};
    const SessionResult res = run_session({{&q, 0}}, cookie_domain(), cookie_rm(), attack, 100, 500, 5);
    CHECK(res.metrics.afr == 1.0);
    // First-stream timing only hides one press; the agent recovers.
    AttackConfig first = attack;
    first.timing = TimingKind::first_stream;
    const SessionResult res2 = run_session({{&q, 0}}, cookie_domain(), cookie_rm(), first, 100, 500, 5);
    CHECK(res2.metrics.afr <= 0.05);
    CHECK(res2.metrics.atr < 0.05);
}

TEST_CASE("a victim whose machine was hallucinated into a terminal keeps acting") {
    // Injected labels can walk the victim's machine into its terminal while
    // the true episode continues; the victim then acts on the terminal
    // state's (empty) table until the truthful environment ends the episode.
    const QTable& q = trained_cookie();
    Tamperer tamperer;
    tamperer.kind = TamperKind::random_hallucination;
    tamperer.rho = 0.5;
    tamperer.alphabet = {LabelString::parse("3B"), LabelString::parse("0c"),
                         LabelString::parse("0C")};
    const auto records =
        evaluate_policy(q, cookie_domain(), cookie_rm(), 80, 500, 4242, 0, &tamperer);
    REQUIRE(records.size() == 80);
    for (const EpisodeRecord& r : records) CHECK(r.steps <= 500);
    // Under this much misdirection most episodes fail.
    const Metrics m = compute_metrics(records);
    CHECK(m.afr > 0.3);
}
