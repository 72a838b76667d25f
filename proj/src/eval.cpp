#include "isac/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace isac {

using nlohmann::json;

MatchResult match_detections(const std::vector<Detection>& detections,
                             const std::vector<TruthPoint>& truth, const MatchGate& gate) {
    if (!(gate.delay_bin_s > 0.0) || !(gate.doppler_bin_hz > 0.0))
        throw ConfigError("match gate needs positive bin sizes");

    MatchResult result;

    // Group by (link, CPI); CPI keyed by rounded start time to be robust to
    // formatting round trips.
    const auto key_of = [](int link, double t) {
        return std::make_pair(link, static_cast<long long>(std::llround(t * 1e6)));
    };
    std::map<std::pair<int, long long>, std::vector<std::size_t>> det_by_key;
    for (std::size_t i = 0; i < detections.size(); ++i)
        det_by_key[key_of(detections[i].link, detections[i].cpi_start_s)].push_back(i);

    std::vector<bool> det_used(detections.size(), false);
    for (const auto& tp : truth) {
        if (!tp.visible) continue;
        const auto it = det_by_key.find(key_of(tp.link, tp.cpi_start_s));
        double best_dist = std::numeric_limits<double>::infinity();
        std::size_t best_idx = detections.size();
        if (it != det_by_key.end()) {
            for (std::size_t idx : it->second) {
                if (det_used[idx]) continue;
                const double ed = (detections[idx].delay_s - tp.delay_s) / gate.delay_bin_s;
                const double ev = (detections[idx].doppler_hz - tp.doppler_hz) / gate.doppler_bin_hz;
                if (std::abs(ed) > gate.delay_bins || std::abs(ev) > gate.doppler_bins) continue;
                const double dist = ed * ed + ev * ev;
                if (dist < best_dist) {
                    best_dist = dist;
                    best_idx = idx;
                }
            }
        }
        if (best_idx < detections.size()) {
            det_used[best_idx] = true;
            MatchedPair pair;
            pair.detection = detections[best_idx];
            pair.truth = tp;
            pair.delay_error_s = detections[best_idx].delay_s - tp.delay_s;
            pair.doppler_error_hz = detections[best_idx].doppler_hz - tp.doppler_hz;
            result.matches.push_back(pair);
        } else {
            result.misses.push_back(tp);
        }
    }
    for (std::size_t i = 0; i < detections.size(); ++i)
        if (!det_used[i]) result.false_alarms.push_back(detections[i]);
    return result;
}

namespace {

void finalize_metrics(LinkMetrics& m, double delay_sq_sum, double doppler_sq_sum) {
    const std::size_t det_total = m.n_matches + m.n_false_alarms;
    const std::size_t truth_total = m.n_matches + m.n_misses;
    if (det_total > 0)
        m.precision = static_cast<double>(m.n_matches) / static_cast<double>(det_total);
    if (truth_total > 0)
        m.recall = static_cast<double>(m.n_matches) / static_cast<double>(truth_total);
    if (m.n_matches > 0) {
        m.delay_rmse_s = std::sqrt(delay_sq_sum / static_cast<double>(m.n_matches));
        m.doppler_rmse_hz = std::sqrt(doppler_sq_sum / static_cast<double>(m.n_matches));
    }
}

}  // namespace

EvalReport summarize(const MatchResult& matches, std::size_t n_maps,
                     const std::vector<PositionFix>& fixes,
                     const std::vector<FixTruth>& fix_truth, std::size_t n_confirmed_tracks,
                     std::size_t n_false_tracks) {
    EvalReport report;
    std::map<int, std::pair<double, double>> sq_sums;  // link -> (delay^2, doppler^2)
    double all_delay_sq = 0.0, all_doppler_sq = 0.0;

    for (const auto& p : matches.matches) {
        auto& m = report.per_link[p.detection.link];
        m.n_matches += 1;
        auto& [dsq, vsq] = sq_sums[p.detection.link];
        dsq += p.delay_error_s * p.delay_error_s;
        vsq += p.doppler_error_hz * p.doppler_error_hz;
        all_delay_sq += p.delay_error_s * p.delay_error_s;
        all_doppler_sq += p.doppler_error_hz * p.doppler_error_hz;
        report.overall.n_matches += 1;
    }
    for (const auto& t : matches.misses) {
        report.per_link[t.link].n_misses += 1;
        report.overall.n_misses += 1;
    }
    for (const auto& d : matches.false_alarms) {
        report.per_link[d.link].n_false_alarms += 1;
        report.overall.n_false_alarms += 1;
    }

    for (auto& [link, m] : report.per_link) {
        const auto it = sq_sums.find(link);
        finalize_metrics(m, it == sq_sums.end() ? 0.0 : it->second.first,
                         it == sq_sums.end() ? 0.0 : it->second.second);
    }
    finalize_metrics(report.overall, all_delay_sq, all_doppler_sq);

    report.n_maps = n_maps;
    report.false_alarms_per_map =
        n_maps > 0 ? static_cast<double>(report.overall.n_false_alarms) /
                         static_cast<double>(n_maps)
                   : 0.0;

    report.n_fixes = fixes.size();
    if (!fixes.empty() && !fix_truth.empty()) {
        double sq = 0.0;
        std::size_t n = 0;
        for (const auto& f : fixes) {
            // Nearest truth sample in time (truth is interpolated upstream).
            const auto it = std::min_element(
                fix_truth.begin(), fix_truth.end(), [&](const FixTruth& a, const FixTruth& b) {
                    return std::abs(a.t_s - f.t_s) < std::abs(b.t_s - f.t_s);
                });
            const Vec3 err = f.position - it->position;
            sq += err.dot(err);
            ++n;
        }
        if (n > 0) report.position_rmse_m = std::sqrt(sq / static_cast<double>(n));
    }

    report.n_confirmed_tracks = n_confirmed_tracks;
    report.n_false_tracks = n_false_tracks;
    return report;
}

namespace {

json metrics_to_json(const LinkMetrics& m) {
    json j;
    j["n_matches"] = m.n_matches;
    j["n_misses"] = m.n_misses;
    j["n_false_alarms"] = m.n_false_alarms;
    j["precision"] = m.precision ? json(*m.precision) : json(nullptr);
    j["recall"] = m.recall ? json(*m.recall) : json(nullptr);
    j["delay_rmse_s"] = m.delay_rmse_s ? json(*m.delay_rmse_s) : json(nullptr);
    j["doppler_rmse_hz"] = m.doppler_rmse_hz ? json(*m.doppler_rmse_hz) : json(nullptr);
    return j;
}

std::string opt_str(const std::optional<double>& v, const char* unit = "") {
    if (!v) return "absent";
    std::ostringstream ss;
    ss << std::setprecision(6) << *v << unit;
    return ss.str();
}

}  // namespace

std::string report_to_json(const EvalReport& report) {
    json j;
    json links = json::object();
    for (const auto& [link, m] : report.per_link) links[std::to_string(link)] = metrics_to_json(m);
    j["per_link"] = links;
    j["overall"] = metrics_to_json(report.overall);
    j["position_rmse_m"] =
        report.position_rmse_m ? json(*report.position_rmse_m) : json(nullptr);
    j["n_fixes"] = report.n_fixes;
    j["false_alarms_per_map"] = report.false_alarms_per_map;
    j["n_maps"] = report.n_maps;
    j["n_confirmed_tracks"] = report.n_confirmed_tracks;
    j["n_false_tracks"] = report.n_false_tracks;
    return j.dump(2);
}

void print_report(const EvalReport& report, std::ostream& out) {
    out << "link  matches  misses  false  precision  recall  delay RMSE    Doppler RMSE\n";
    const auto row = [&](const std::string& name, const LinkMetrics& m) {
        out << std::left << std::setw(6) << name << std::setw(9) << m.n_matches << std::setw(8)
            << m.n_misses << std::setw(7) << m.n_false_alarms << std::setw(11)
            << opt_str(m.precision) << std::setw(8) << opt_str(m.recall) << std::setw(14)
            << opt_str(m.delay_rmse_s, " s") << opt_str(m.doppler_rmse_hz, " Hz") << "\n";
    };
    for (const auto& [link, m] : report.per_link) row(std::to_string(link), m);
    row("all", report.overall);
    out << "false alarms per map: " << report.false_alarms_per_map << " (" << report.n_maps
        << " maps)\n";
    out << "position RMSE: " << opt_str(report.position_rmse_m, " m") << " over " << report.n_fixes
        << " fixes\n";
    out << "confirmed tracks: " << report.n_confirmed_tracks
        << ", false tracks: " << report.n_false_tracks << "\n";
}

}  // namespace isac
