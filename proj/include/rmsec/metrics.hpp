#ifndef RMSEC_METRICS_HPP
#define RMSEC_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "rmsec/evaluate.hpp"
#include "rmsec/training.hpp"

namespace rmsec {

/// Session-level aggregates. ATS/ATF/ARF are absent when no agent had a
/// success/failure to average over; ATF and ARF are only reported for the
/// symbol domain (elsewhere a failure is always a 500-step timeout with zero
/// reward, so they carry no information).
struct Metrics {
    double asr = 0.0;
    double afr = 0.0;
    std::optional<double> ats;
    std::optional<double> atf;
    std::optional<double> arf;
    double atr = 0.0;        // measured mean tampering rate
    double atr_for_is = 0.0; // the rate plugged into the impact score
    double is = 0.0;
    double alpha = 0.5;
    int n_agents = 0;
    long long n_episodes = 0;
};

/// alpha * sqrt(afr) / (atr + alpha).
inline double impact_score(double afr, double atr, double alpha = 0.5) {
    return alpha * std::sqrt(afr) / (atr + alpha);
}

/// Aggregates per-episode records into the session metrics: per-agent rates
/// first, then a plain mean over agents. Agents without successes are left
/// out of the ATS mean (and likewise for ATF/ARF over failures). When
/// nominal_atr is given (random-noise sessions) it is used for the impact
/// score instead of the measured rate.
inline Metrics compute_metrics(const std::vector<EpisodeRecord>& records, double alpha = 0.5,
                               std::optional<double> nominal_atr = std::nullopt) {
    if (records.empty()) throw std::invalid_argument("compute_metrics: no records");
    struct PerAgent {
        long long episodes = 0;
        long long successes = 0;
        long long success_steps = 0;
        long long failure_steps = 0;
        double failure_reward = 0.0;
        double tamper_ratio_sum = 0.0;
    };
    std::map<int, PerAgent> agents;
    for (const EpisodeRecord& r : records) {
        PerAgent& a = agents[r.agent_id];
        ++a.episodes;
        if (r.success) {
            ++a.successes;
            a.success_steps += r.steps;
        } else {
            a.failure_steps += r.steps;
            a.failure_reward += r.reward;
        }
        a.tamper_ratio_sum += r.episode_length > 0
                                  ? static_cast<double>(r.tamper_count) / static_cast<double>(r.episode_length)
                                  : 0.0;
    }
    Metrics m;
    m.alpha = alpha;
    m.n_agents = static_cast<int>(agents.size());
    double asr_sum = 0.0, atr_sum = 0.0;
    double ats_sum = 0.0, atf_sum = 0.0, arf_sum = 0.0;
    int ats_agents = 0, fail_agents = 0;
    for (const auto& [id, a] : agents) {
        m.n_episodes += a.episodes;
        asr_sum += static_cast<double>(a.successes) / static_cast<double>(a.episodes);
        atr_sum += a.tamper_ratio_sum / static_cast<double>(a.episodes);
        if (a.successes > 0) {
            ats_sum += static_cast<double>(a.success_steps) / static_cast<double>(a.successes);
            ++ats_agents;
        }
        const long long failures = a.episodes - a.successes;
        if (failures > 0) {
            atf_sum += static_cast<double>(a.failure_steps) / static_cast<double>(failures);
            arf_sum += a.failure_reward / static_cast<double>(failures);
            ++fail_agents;
        }
    }
    m.asr = asr_sum / m.n_agents;
    m.afr = 1.0 - m.asr;
    m.atr = atr_sum / m.n_agents;
    if (ats_agents > 0) m.ats = ats_sum / ats_agents;
    if (fail_agents > 0) {
        m.atf = atf_sum / fail_agents;
        m.arf = arf_sum / fail_agents;
    }
    m.atr_for_is = nominal_atr.value_or(m.atr);
    m.is = impact_score(m.afr, m.atr_for_is, alpha);
    return m;
}

/// Per-bin order statistics across learning curves: (median, p25, p75) with
/// linearly interpolated percentiles. All curves must share the bin layout.
struct CurveSummary {
    long long bin_width = 0;
    std::vector<double> median, p25, p75;
};

inline double interpolated_percentile(std::vector<double> values, double q) {
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] + (values[lo + 1] - values[lo]) * frac;
}

inline CurveSummary curve_summary(const std::vector<LearningCurve>& curves) {
    if (curves.empty()) throw std::invalid_argument("curve_summary: no curves");
    const std::size_t bins = curves[0].bin_reward.size();
    for (const LearningCurve& c : curves)
        if (c.bin_reward.size() != bins || c.bin_width != curves[0].bin_width)
            throw std::invalid_argument("curve_summary: bin layouts differ");
    CurveSummary s;
    s.bin_width = curves[0].bin_width;
    for (std::size_t b = 0; b < bins; ++b) {
        std::vector<double> v;
        v.reserve(curves.size());
        for (const LearningCurve& c : curves) v.push_back(c.bin_reward[b]);
        s.median.push_back(interpolated_percentile(v, 0.5));
        s.p25.push_back(interpolated_percentile(v, 0.25));
        s.p75.push_back(interpolated_percentile(v, 0.75));
    }
    return s;
}

} // namespace rmsec

#endif
