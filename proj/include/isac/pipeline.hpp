#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "isac/eval.hpp"
#include "isac/sounding_io.hpp"
#include "isac/tracking.hpp"

namespace isac {

inline constexpr const char* kToolVersion = "0.1.0";

/// Provenance record written alongside every command output. Re-running a
/// command with the same resolved config and inputs reproduces the data
/// outputs byte-identically (noise is seed-derived).
struct RunManifest {
    std::string command;
    std::string tool_version = kToolVersion;
    std::string resolved_config_json;  // full config after defaults/overrides
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::uint64_t rng_seed = 0;
    int threads = 0;
    double wall_clock_s = 0.0;
};

void write_manifest(const RunManifest& manifest, const std::filesystem::path& dir);

struct GlobalOptions {
    std::optional<std::uint64_t> seed_override;
    int threads = 0;  // 0 = all available cores
    bool verbose = false;
};

/// synth: scenario JSON -> dataset container (+ ground truth + manifest).
void run_synth(const std::filesystem::path& scenario_path, const std::filesystem::path& out_dir,
               const GlobalOptions& opts = {});

struct ProcessOptions {
    bool export_maps = false;  // per-CPI CSV + PGM map dumps
};

/// process: container + dsp JSON -> detections.csv (+ optional map exports).
void run_process(const std::filesystem::path& in_dir, const std::filesystem::path& dsp_json,
                 const std::filesystem::path& out_dir, const GlobalOptions& opts = {},
                 const ProcessOptions& popts = {});

/// track: detections.csv + tracker JSON -> tracks.csv.
void run_track(const std::filesystem::path& detections_csv,
               const std::filesystem::path& tracker_json, const std::filesystem::path& out_dir,
               const GlobalOptions& opts = {});

/// localize: tracks.csv + dataset dir (geometry) -> fixes.csv.
void run_localize(const std::filesystem::path& tracks_csv, const std::filesystem::path& dataset_dir,
                  const std::filesystem::path& out_dir, const GlobalOptions& opts = {});

struct EvalOptions {
    double gate_delay_bins = 1.0;
    double gate_doppler_bins = 1.0;
    std::optional<std::filesystem::path> tracks_csv;
    std::optional<std::filesystem::path> fixes_csv;
};

/// eval: dataset dir + process output dir -> report.json (+ stdout table).
EvalReport run_eval(const std::filesystem::path& dataset_dir,
                    const std::filesystem::path& process_dir,
                    const std::filesystem::path& out_dir, const GlobalOptions& opts = {},
                    const EvalOptions& eopts = {});

// CSV codecs shared by the stages (headers are part of the interface).
void write_detections_csv(const std::vector<Detection>& detections,
                          const std::filesystem::path& path);
std::vector<Detection> read_detections_csv(const std::filesystem::path& path);

struct TrackRow {
    double t_s = 0.0;
    int link = 0;
    int track_id = 0;
    std::string status;
    double delay_s = 0.0;
    double doppler_hz = 0.0;
};
void write_tracks_csv(const std::vector<TrackRow>& rows, const std::filesystem::path& path);
std::vector<TrackRow> read_tracks_csv(const std::filesystem::path& path);

void write_fixes_csv(const std::vector<PositionFix>& fixes, const std::filesystem::path& path);
std::vector<PositionFix> read_fixes_csv(const std::filesystem::path& path);

DspConfig load_dsp_config(const std::filesystem::path& json_path);
TrackerConfig load_tracker_config(const std::filesystem::path& json_path);

/// Deterministic index-parallel loop: partitions [0, n) into fixed chunks;
/// results must be written by index so the outcome is thread-count independent.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body);

}  // namespace isac
