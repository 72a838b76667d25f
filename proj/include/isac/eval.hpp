#pragma once

#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "isac/dsp.hpp"
#include "isac/geometry.hpp"
#include "isac/tracking.hpp"

namespace isac {

/// Per-link ground-truth measurement at one CPI: the (tau, nu) the pipeline
/// should have produced.
struct TruthPoint {
    int link = 0;
    double cpi_start_s = 0.0;
    double delay_s = 0.0;
    double doppler_hz = 0.0;
    bool visible = true;
};

struct MatchGate {
    double delay_bins = 1.0;
    double doppler_bins = 1.0;
    double delay_bin_s = 0.0;
    double doppler_bin_hz = 0.0;
};

struct MatchedPair {
    Detection detection;
    TruthPoint truth;
    double delay_error_s = 0.0;
    double doppler_error_hz = 0.0;
};

struct MatchResult {
    std::vector<MatchedPair> matches;
    std::vector<TruthPoint> misses;
    std::vector<Detection> false_alarms;
};

/// One-to-one matching per (link, CPI), closest detection first. A detection
/// matches when both |delay error| and |Doppler error| fall inside the gate.
MatchResult match_detections(const std::vector<Detection>& detections,
                             const std::vector<TruthPoint>& truth, const MatchGate& gate);

struct LinkMetrics {
    std::size_t n_matches = 0;
    std::size_t n_misses = 0;
    std::size_t n_false_alarms = 0;
    std::optional<double> precision;  // absent when no detections (0/0)
    std::optional<double> recall;     // absent when no truth points
    std::optional<double> delay_rmse_s;
    std::optional<double> doppler_rmse_hz;
};

struct EvalReport {
    std::map<int, LinkMetrics> per_link;
    LinkMetrics overall;
    std::optional<double> position_rmse_m;
    std::size_t n_fixes = 0;
    double false_alarms_per_map = 0.0;
    std::size_t n_maps = 0;
    std::size_t n_confirmed_tracks = 0;
    std::size_t n_false_tracks = 0;
};

struct FixTruth {
    double t_s = 0.0;
    Vec3 position;
};

EvalReport summarize(const MatchResult& matches, std::size_t n_maps,
                     const std::vector<PositionFix>& fixes,
                     const std::vector<FixTruth>& fix_truth,
                     std::size_t n_confirmed_tracks = 0, std::size_t n_false_tracks = 0);

std::string report_to_json(const EvalReport& report);
void print_report(const EvalReport& report, std::ostream& out);

}  // namespace isac
