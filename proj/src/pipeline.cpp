#include "isac/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include "isac/channel.hpp"
#include "json.hpp"

namespace isac {

using nlohmann::json;

namespace {

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    return fields;
}

std::ifstream open_csv(const std::filesystem::path& path, const std::string& expected_header) {
    std::ifstream in(path);
    if (!in) throw FileMissingError("cannot open " + path.string());
    std::string header;
    if (!std::getline(in, header) || header != expected_header)
        throw DataError(path.string() + ": expected header '" + expected_header + "'");
    return in;
}

int effective_threads(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

}  // namespace

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body) {
    const int nt = static_cast<int>(
        std::min<std::size_t>(static_cast<std::size_t>(effective_threads(threads)), n));
    if (nt <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(nt));
    std::exception_ptr first_error;
    std::mutex error_mutex;
    for (int t = 0; t < nt; ++t) {
        pool.emplace_back([&, t] {
            const std::size_t lo = n * static_cast<std::size_t>(t) / nt;
            const std::size_t hi = n * (static_cast<std::size_t>(t) + 1) / nt;
            try {
                for (std::size_t i = lo; i < hi; ++i) body(i);
            } catch (...) {
                std::scoped_lock lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

void write_manifest(const RunManifest& manifest, const std::filesystem::path& dir) {
    json j;
    j["command"] = manifest.command;
    j["tool_version"] = manifest.tool_version;
    j["resolved_config"] =
        manifest.resolved_config_json.empty() ? json(nullptr)
                                              : json::parse(manifest.resolved_config_json);
    j["inputs"] = manifest.inputs;
    j["outputs"] = manifest.outputs;
    j["rng_seed"] = manifest.rng_seed;
    j["threads"] = manifest.threads;
    j["wall_clock_s"] = manifest.wall_clock_s;
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    if (!out) throw DataError("cannot write " + (dir / "manifest.json").string());
    out << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// CSV codecs

void write_detections_csv(const std::vector<Detection>& detections,
                          const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << "cpi_start_s,link,delay_s,doppler_hz,snr_db\n";
    for (const auto& d : detections) {
        out << format_double(d.cpi_start_s) << ',' << d.link << ',' << format_double(d.delay_s)
            << ',' << format_double(d.doppler_hz) << ',' << format_double(d.snr_db) << "\n";
    }
}

std::vector<Detection> read_detections_csv(const std::filesystem::path& path) {
    auto in = open_csv(path, "cpi_start_s,link,delay_s,doppler_hz,snr_db");
    std::vector<Detection> detections;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 5) throw DataError(path.string() + ": malformed row '" + line + "'");
        Detection d;
        d.cpi_start_s = std::stod(f[0]);
        d.link = std::stoi(f[1]);
        d.delay_s = std::stod(f[2]);
        d.doppler_hz = std::stod(f[3]);
        d.snr_db = std::stod(f[4]);
        detections.push_back(d);
    }
    return detections;
}

void write_tracks_csv(const std::vector<TrackRow>& rows, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << "t_s,link,track_id,status,delay_s,doppler_hz\n";
    for (const auto& r : rows) {
        out << format_double(r.t_s) << ',' << r.link << ',' << r.track_id << ',' << r.status << ','
            << format_double(r.delay_s) << ',' << format_double(r.doppler_hz) << "\n";
    }
}

std::vector<TrackRow> read_tracks_csv(const std::filesystem::path& path) {
    auto in = open_csv(path, "t_s,link,track_id,status,delay_s,doppler_hz");
    std::vector<TrackRow> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 6) throw DataError(path.string() + ": malformed row '" + line + "'");
        rows.push_back({std::stod(f[0]), std::stoi(f[1]), std::stoi(f[2]), f[3], std::stod(f[4]),
                        std::stod(f[5])});
    }
    return rows;
}

void write_fixes_csv(const std::vector<PositionFix>& fixes, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << "t_s,x,y,z,residual_m,n_links\n";
    for (const auto& f : fixes) {
        out << format_double(f.t_s) << ',' << format_double(f.position.x) << ','
            << format_double(f.position.y) << ',' << format_double(f.position.z) << ','
            << format_double(f.residual_m) << ',' << f.n_links << "\n";
    }
}

std::vector<PositionFix> read_fixes_csv(const std::filesystem::path& path) {
    auto in = open_csv(path, "t_s,x,y,z,residual_m,n_links");
    std::vector<PositionFix> fixes;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 6) throw DataError(path.string() + ": malformed row '" + line + "'");
        PositionFix fix;
        fix.t_s = std::stod(f[0]);
        fix.position = {std::stod(f[1]), std::stod(f[2]), std::stod(f[3])};
        fix.residual_m = std::stod(f[4]);
        fix.n_links = std::stoi(f[5]);
        fixes.push_back(fix);
    }
    return fixes;
}

// ---------------------------------------------------------------------------
// Config loaders

DspConfig load_dsp_config(const std::filesystem::path& json_path) {
    std::ifstream in(json_path);
    if (!in) throw FileMissingError("cannot open dsp config " + json_path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("dsp config " + json_path.string() + ": " + e.what());
    }
    DspConfig cfg;
    cfg.cpi_len = j.value("cpi_len", cfg.cpi_len);
    cfg.beta_bg = j.value("beta_bg", cfg.beta_bg);
    cfg.notch_halfwidth_bins = j.value("notch_halfwidth_bins", cfg.notch_halfwidth_bins);
    if (j.contains("cfar")) {
        const auto& c = j.at("cfar");
        if (c.contains("guard")) {
            cfg.cfar.guard_delay = c.at("guard").at(0).get<int>();
            cfg.cfar.guard_doppler = c.at("guard").at(1).get<int>();
        }
        if (c.contains("train")) {
            cfg.cfar.train_delay = c.at("train").at(0).get<int>();
            cfg.cfar.train_doppler = c.at("train").at(1).get<int>();
        }
        cfg.cfar.pfa = c.value("pfa", cfg.cfar.pfa);
    }
    cfg.validate();
    return cfg;
}

namespace {

json dsp_config_to_json(const DspConfig& cfg) {
    json j;
    j["cpi_len"] = cfg.cpi_len;
    j["beta_bg"] = cfg.beta_bg;
    j["notch_halfwidth_bins"] = cfg.notch_halfwidth_bins;
    j["cfar"] = {{"guard", {cfg.cfar.guard_delay, cfg.cfar.guard_doppler}},
                 {"train", {cfg.cfar.train_delay, cfg.cfar.train_doppler}},
                 {"pfa", cfg.cfar.pfa}};
    return j;
}

json tracker_config_to_json(const TrackerConfig& cfg) {
    json j;
    j["carrier_hz"] = cfg.carrier_hz;
    j["q_process"] = cfg.q_process;
    j["r_meas"] = {{cfg.r_meas[0], cfg.r_meas[1]}, {cfg.r_meas[2], cfg.r_meas[3]}};
    j["gate_threshold"] = cfg.gate_threshold;
    j["confirm_m"] = cfg.confirm_m;
    j["confirm_n"] = cfg.confirm_n;
    j["delete_after_misses"] = cfg.delete_after_misses;
    return j;
}

}  // namespace

TrackerConfig load_tracker_config(const std::filesystem::path& json_path) {
    std::ifstream in(json_path);
    if (!in) throw FileMissingError("cannot open tracker config " + json_path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("tracker config " + json_path.string() + ": " + e.what());
    }
    TrackerConfig cfg;
    cfg.carrier_hz = j.value("carrier_hz", cfg.carrier_hz);
    cfg.q_process = j.value("q_process", cfg.q_process);
    if (j.contains("r_meas")) {
        const auto& r = j.at("r_meas");
        cfg.r_meas = {r.at(0).at(0).get<double>(), r.at(0).at(1).get<double>(),
                      r.at(1).at(0).get<double>(), r.at(1).at(1).get<double>()};
    }
    cfg.gate_threshold = j.value("gate_threshold", cfg.gate_threshold);
    cfg.confirm_m = j.value("confirm_m", cfg.confirm_m);
    cfg.confirm_n = j.value("confirm_n", cfg.confirm_n);
    cfg.delete_after_misses = j.value("delete_after_misses", cfg.delete_after_misses);
    cfg.validate();
    return cfg;
}

// ---------------------------------------------------------------------------
// synth

void run_synth(const std::filesystem::path& scenario_path, const std::filesystem::path& out_dir,
               const GlobalOptions& opts) {
    Stopwatch clock;
    ScenarioConfig scenario = load_scenario(scenario_path);
    if (opts.seed_override) scenario.rng_seed = *opts.seed_override;

    const ChannelSynthesizer synth(scenario);
    DatasetMeta meta = make_meta(scenario);
    std::filesystem::create_directories(out_dir);
    write_node_trajectories(scenario, meta, out_dir);
    DatasetWriter writer(out_dir, meta);

    const std::size_t n = scenario.n_snapshots();
    const std::size_t block = 512;
    std::vector<CfrSnapshot> buffer;
    for (std::size_t start = 0; start < n; start += block) {
        const std::size_t count = std::min(block, n - start);
        buffer.assign(count, CfrSnapshot{});
        parallel_for(count, opts.threads,
                     [&](std::size_t i) { buffer[i] = synth.snapshot(start + i); });
        for (const auto& snap : buffer) writer.append(snap);
        if (opts.verbose)
            std::cerr << "synth: " << (start + count) << "/" << n << " snapshots\n";
    }

    // Ground truth at 100 Hz (or the snapshot rate when slower), plus the
    // final snapshot time.
    const double gt_interval = 1.0 / std::min(scenario.snapshot_rate_hz, 100.0);
    for (const auto& target : scenario.targets) {
        const double t_end = n > 0 ? (n - 1) / scenario.snapshot_rate_hz : 0.0;
        for (double t = 0.0; t <= t_end + 1e-12; t += gt_interval) {
            GroundTruthRecord r;
            r.t_s = std::min(t, t_end);
            r.target_id = target.id;
            r.position = target.trajectory.position_at(r.t_s);
            r.velocity = target.trajectory.velocity_at(r.t_s);
            writer.append_ground_truth(r);
            if (r.t_s >= t_end) break;
        }
    }
    writer.close();

    RunManifest manifest;
    manifest.command = "synth";
    {
        std::ifstream in(scenario_path);
        std::stringstream ss;
        ss << in.rdbuf();
        json resolved = json::parse(ss.str());
        resolved["rng_seed"] = scenario.rng_seed;
        manifest.resolved_config_json = resolved.dump();
    }
    manifest.inputs = {scenario_path.string()};
    manifest.outputs = {(out_dir / "meta.json").string(), (out_dir / "cfr.bin").string(),
                        (out_dir / "gt.csv").string()};
    manifest.rng_seed = scenario.rng_seed;
    manifest.threads = opts.threads;
    manifest.wall_clock_s = clock.seconds();
    write_manifest(manifest, out_dir);
}

// ---------------------------------------------------------------------------
// process

void run_process(const std::filesystem::path& in_dir, const std::filesystem::path& dsp_json,
                 const std::filesystem::path& out_dir, const GlobalOptions& opts,
                 const ProcessOptions& popts) {
    Stopwatch clock;
    const DspConfig cfg = load_dsp_config(dsp_json);
    DatasetReader reader(in_dir);
    const DatasetMeta& meta = reader.meta();

    const std::size_t m = static_cast<std::size_t>(cfg.cpi_len);
    const std::size_t k = static_cast<std::size_t>(meta.n_subcarriers);
    const std::size_t n_links = static_cast<std::size_t>(meta.n_links);
    const std::size_t n_cpis = meta.n_snapshots / m;

    std::filesystem::create_directories(out_dir);

    // Known pilot for the synthetic containers: all ones (the container
    // stores the channel itself).
    const std::vector<Complex> pilot(k, Complex{1.0, 0.0});

    std::vector<BackgroundSubtractor> background(n_links, BackgroundSubtractor(cfg.beta_bg));
    std::vector<Detection> detections;

    const std::size_t batch = std::max<std::size_t>(1, 2048 / std::max<std::size_t>(m, 1));
    std::vector<std::vector<std::vector<Complex>>> cpi_link_rows;  // [cpi_in_batch*links][m][k]
    std::vector<DelayDopplerMap> maps;

    for (std::size_t cpi0 = 0; cpi0 < n_cpis; cpi0 += batch) {
        const std::size_t n_batch = std::min(batch, n_cpis - cpi0);

        // Sequential read, channel estimation per snapshot per link.
        cpi_link_rows.assign(n_batch * n_links,
                             std::vector<std::vector<Complex>>(m, std::vector<Complex>(k)));
        for (std::size_t bc = 0; bc < n_batch; ++bc) {
            for (std::size_t s = 0; s < m; ++s) {
                const CfrSnapshot snap = reader.snapshot((cpi0 + bc) * m + s);
                for (std::size_t li = 0; li < n_links; ++li) {
                    std::vector<Complex> rx(k);
                    for (std::size_t i = 0; i < k; ++i)
                        rx[i] = Complex(snap.links[li][i].real(), snap.links[li][i].imag());
                    cpi_link_rows[bc * n_links + li][s] = estimate_channel(rx, pilot).h;
                }
            }
        }

        maps.assign(n_batch * n_links, DelayDopplerMap{});
        parallel_for(n_batch * n_links, opts.threads, [&](std::size_t idx) {
            const std::size_t bc = idx / n_links;
            const std::size_t li = idx % n_links;
            maps[idx] = form_map(cpi_link_rows[idx], meta.bandwidth_hz, meta.snapshot_rate_hz,
                                 static_cast<int>(li),
                                 static_cast<double>((cpi0 + bc) * m) / meta.snapshot_rate_hz);
        });

        // Ordered stage: background fold per link, then detect.
        for (std::size_t bc = 0; bc < n_batch; ++bc) {
            for (std::size_t li = 0; li < n_links; ++li) {
                DelayDopplerMap residual = background[li].step(maps[bc * n_links + li]);
                residual = notch_zero_doppler(std::move(residual), cfg.notch_halfwidth_bins);
                const auto hits = cfar_detect(residual, cfg.cfar);
                const auto peaks = cluster_hits(hits);
                for (const auto& peak : peaks) detections.push_back(refine_peak(residual, peak));

                if (popts.export_maps) {
                    char name[64];
                    std::snprintf(name, sizeof(name), "map_cpi%05zu_link%zu", cpi0 + bc, li);
                    export_map_csv(residual, out_dir / (std::string(name) + ".csv"));
                    export_map_pgm(residual, out_dir / (std::string(name) + ".pgm"));
                }
            }
        }
        if (opts.verbose) std::cerr << "process: " << (cpi0 + n_batch) << "/" << n_cpis << " CPIs\n";
    }

    write_detections_csv(detections, out_dir / "detections.csv");

    RunManifest manifest;
    manifest.command = "process";
    json resolved = dsp_config_to_json(cfg);
    resolved["n_cpis"] = n_cpis;
    manifest.resolved_config_json = resolved.dump();
    manifest.inputs = {in_dir.string(), dsp_json.string()};
    manifest.outputs = {(out_dir / "detections.csv").string()};
    manifest.threads = opts.threads;
    manifest.wall_clock_s = clock.seconds();
    write_manifest(manifest, out_dir);
}

// ---------------------------------------------------------------------------
// track

void run_track(const std::filesystem::path& detections_csv,
               const std::filesystem::path& tracker_json, const std::filesystem::path& out_dir,
               const GlobalOptions& opts) {
    Stopwatch clock;
    const TrackerConfig cfg = load_tracker_config(tracker_json);
    const std::vector<Detection> detections = read_detections_csv(detections_csv);

    // CPI cadence: explicit in the config, else the smallest positive gap
    // between distinct CPI start times.
    std::set<double> times;
    std::set<int> links;
    for (const auto& d : detections) {
        times.insert(d.cpi_start_s);
        links.insert(d.link);
    }
    double cpi_interval = 0.0;
    {
        std::ifstream in(tracker_json);
        json j;
        in >> j;
        cpi_interval = j.value("cpi_interval_s", 0.0);
    }
    if (cpi_interval <= 0.0 && times.size() >= 2) {
        double prev = *times.begin();
        cpi_interval = std::numeric_limits<double>::infinity();
        for (auto it = std::next(times.begin()); it != times.end(); ++it) {
            cpi_interval = std::min(cpi_interval, *it - prev);
            prev = *it;
        }
    }

    std::vector<TrackRow> rows;
    for (int link : links) {
        // Index detections by integer CPI number so the stepping grid also
        // covers detection-free CPIs (misses).
        std::map<long long, std::vector<Detection>> by_cpi;
        long long idx_min = std::numeric_limits<long long>::max();
        long long idx_max = std::numeric_limits<long long>::min();
        for (const auto& d : detections) {
            if (d.link != link) continue;
            const long long idx =
                cpi_interval > 0.0 ? std::llround(d.cpi_start_s / cpi_interval) : 0;
            by_cpi[idx].push_back(d);
            idx_min = std::min(idx_min, idx);
            idx_max = std::max(idx_max, idx);
        }
        if (by_cpi.empty()) continue;

        Tracker tracker(cfg);
        for (long long idx = idx_min; idx <= idx_max; ++idx) {
            const double t = cpi_interval > 0.0 ? static_cast<double>(idx) * cpi_interval
                                                : by_cpi.begin()->second.front().cpi_start_s;
            const auto it = by_cpi.find(idx);
            static const std::vector<Detection> kNone;
            const auto confirmed = tracker.step(it != by_cpi.end() ? it->second : kNone, t);
            for (const auto& track : confirmed) {
                rows.push_back({t, link, track.id, to_string(track.status), track.delay_s(),
                                -cfg.carrier_hz * track.delay_rate()});
            }
        }
    }
    std::sort(rows.begin(), rows.end(), [](const TrackRow& a, const TrackRow& b) {
        return std::tie(a.t_s, a.link, a.track_id) < std::tie(b.t_s, b.link, b.track_id);
    });

    std::filesystem::create_directories(out_dir);
    write_tracks_csv(rows, out_dir / "tracks.csv");

    RunManifest manifest;
    manifest.command = "track";
    json resolved = tracker_config_to_json(cfg);
    resolved["cpi_interval_s"] = cpi_interval;
    manifest.resolved_config_json = resolved.dump();
    manifest.inputs = {detections_csv.string(), tracker_json.string()};
    manifest.outputs = {(out_dir / "tracks.csv").string()};
    manifest.threads = opts.threads;
    manifest.wall_clock_s = clock.seconds();
    write_manifest(manifest, out_dir);
}

// ---------------------------------------------------------------------------
// localize

void run_localize(const std::filesystem::path& tracks_csv, const std::filesystem::path& dataset_dir,
                  const std::filesystem::path& out_dir, const GlobalOptions& opts) {
    Stopwatch clock;
    const std::vector<TrackRow> rows = read_tracks_csv(tracks_csv);
    DatasetReader reader(dataset_dir);
    const DatasetMeta& meta = reader.meta();

    std::map<double, std::map<int, const TrackRow*>> by_time;  // keep best per link
    for (const auto& r : rows) {
        if (r.status != "confirmed") continue;
        by_time[r.t_s].emplace(r.link, &r);
    }

    std::vector<PositionFix> fixes;
    std::optional<Vec3> warm_start;
    std::size_t degenerate = 0;
    for (const auto& [t, per_link] : by_time) {
        if (per_link.size() < 3) continue;
        std::vector<BistaticObservation> obs;
        for (const auto& [link, row] : per_link) {
            const auto& [tx_id, rx_id] = meta.links.at(static_cast<std::size_t>(link));
            BistaticObservation o;
            o.tx_pos = meta.node_position(tx_id, t, dataset_dir);
            o.rx_pos = meta.node_position(rx_id, t, dataset_dir);
            o.range_m = kSpeedOfLight * row->delay_s;
            obs.push_back(o);
        }
        LocalizeOptions lopts;
        lopts.initial_guess = warm_start;
        try {
            PositionFix fix = localize(obs, t, lopts);
            warm_start = fix.position;
            fixes.push_back(fix);
        } catch (const DegeneracyError&) {
            ++degenerate;
            warm_start.reset();
        }
    }
    if (fixes.empty() && degenerate > 0)
        throw DegeneracyError("localize: every fix attempt hit degenerate geometry (" +
                              std::to_string(degenerate) + " times)");

    std::filesystem::create_directories(out_dir);
    write_fixes_csv(fixes, out_dir / "fixes.csv");

    RunManifest manifest;
    manifest.command = "localize";
    manifest.inputs = {tracks_csv.string(), dataset_dir.string()};
    manifest.outputs = {(out_dir / "fixes.csv").string()};
    manifest.threads = opts.threads;
    manifest.wall_clock_s = clock.seconds();
    write_manifest(manifest, out_dir);
}

// ---------------------------------------------------------------------------
// eval

EvalReport run_eval(const std::filesystem::path& dataset_dir,
                    const std::filesystem::path& process_dir,
                    const std::filesystem::path& out_dir, const GlobalOptions& opts,
                    const EvalOptions& eopts) {
    Stopwatch clock;
    DatasetReader reader(dataset_dir);
    const DatasetMeta& meta = reader.meta();
    const std::vector<GroundTruthRecord> gt = reader.ground_truth();
    const std::vector<Detection> detections =
        read_detections_csv(process_dir / "detections.csv");

    // CPI length from the process manifest.
    int cpi_len = 0;
    {
        std::ifstream in(process_dir / "manifest.json");
        if (!in)
            throw FileMissingError("process manifest missing: " +
                                   (process_dir / "manifest.json").string());
        json j;
        in >> j;
        cpi_len = j.at("resolved_config").at("cpi_len").get<int>();
    }
    const double cpi_interval = cpi_len / meta.snapshot_rate_hz;
    const double center_offset = (cpi_len - 1) / (2.0 * meta.snapshot_rate_hz);
    const std::size_t n_cpis = meta.n_snapshots / static_cast<std::size_t>(cpi_len);

    // Group ground truth per target.
    std::map<std::string, std::vector<GroundTruthRecord>> gt_by_target;
    for (const auto& r : gt) gt_by_target[r.target_id].push_back(r);

    MatchGate gate;
    gate.delay_bins = eopts.gate_delay_bins;
    gate.doppler_bins = eopts.gate_doppler_bins;
    gate.delay_bin_s = 1.0 / meta.bandwidth_hz;
    gate.doppler_bin_hz = meta.snapshot_rate_hz / cpi_len;

    const double delay_span = meta.n_subcarriers / meta.bandwidth_hz;

    // Truth (tau, nu) per link per CPI, evaluated at the CPI center. The first
    // CPI only initializes the background subtractor, so it is excluded.
    std::vector<TruthPoint> truth;
    for (const auto& [target_id, records] : gt_by_target) {
        for (std::size_t c = 1; c < n_cpis; ++c) {
            const double t_start = static_cast<double>(c) * cpi_interval;
            const double t_center = t_start + center_offset;
            const auto [pos, vel] = interpolate_ground_truth(records, t_center);
            for (std::size_t li = 0; li < meta.links.size(); ++li) {
                const auto& [tx_id, rx_id] = meta.links[li];
                const Vec3 tx = meta.node_position(tx_id, t_center, dataset_dir);
                const Vec3 rx = meta.node_position(rx_id, t_center, dataset_dir);
                TruthPoint tp;
                tp.link = static_cast<int>(li);
                tp.cpi_start_s = t_start;
                tp.delay_s = bistatic_range(tx, rx, pos) / kSpeedOfLight;
                tp.doppler_hz = bistatic_doppler(tx, rx, pos, vel, meta.carrier_hz);
                tp.visible = tp.delay_s < delay_span &&
                             std::abs(tp.doppler_hz) <= meta.snapshot_rate_hz / 2.0;
                truth.push_back(tp);
            }
        }
    }

    const MatchResult matches = match_detections(detections, truth, gate);

    // Track quality: a confirmed track is "true" when at least half of its
    // points sit within the match gate of some truth point.
    std::size_t n_confirmed = 0, n_false = 0;
    if (eopts.tracks_csv) {
        const std::vector<TrackRow> rows = read_tracks_csv(*eopts.tracks_csv);
        std::map<std::pair<int, long long>, const TruthPoint*> truth_by_key;
        for (const auto& tp : truth)
            truth_by_key[{tp.link, static_cast<long long>(std::llround(tp.cpi_start_s * 1e6))}] =
                &tp;
        std::map<std::pair<int, int>, std::pair<std::size_t, std::size_t>> track_points;
        for (const auto& r : rows) {
            auto& [good, total] = track_points[{r.link, r.track_id}];
            ++total;
            const auto it = truth_by_key.find(
                {r.link, static_cast<long long>(std::llround(r.t_s * 1e6))});
            if (it != truth_by_key.end()) {
                const double ed = (r.delay_s - it->second->delay_s) / gate.delay_bin_s;
                const double ev = (r.doppler_hz - it->second->doppler_hz) / gate.doppler_bin_hz;
                if (std::abs(ed) <= gate.delay_bins && std::abs(ev) <= gate.doppler_bins) ++good;
            }
        }
        for (const auto& [key, counts] : track_points) {
            ++n_confirmed;
            if (counts.first * 2 < counts.second) ++n_false;
        }
    }

    std::vector<PositionFix> fixes;
    std::vector<FixTruth> fix_truth;
    if (eopts.fixes_csv) {
        fixes = read_fixes_csv(*eopts.fixes_csv);
        for (const auto& f : fixes) {
            for (const auto& [target_id, records] : gt_by_target) {
                const auto [pos, vel] = interpolate_ground_truth(records, f.t_s + center_offset);
                fix_truth.push_back({f.t_s, pos});
            }
        }
    }

    const std::size_t n_maps = (n_cpis > 0 ? n_cpis - 1 : 0) * meta.links.size();
    EvalReport report = summarize(matches, n_maps, fixes, fix_truth, n_confirmed, n_false);

    std::filesystem::create_directories(out_dir);
    {
        std::ofstream out(out_dir / "report.json", std::ios::trunc);
        if (!out) throw DataError("cannot write " + (out_dir / "report.json").string());
        out << report_to_json(report) << "\n";
    }
    print_report(report, std::cout);

    RunManifest manifest;
    manifest.command = "eval";
    json resolved;
    resolved["gate_delay_bins"] = eopts.gate_delay_bins;
    resolved["gate_doppler_bins"] = eopts.gate_doppler_bins;
    resolved["cpi_len"] = cpi_len;
    manifest.resolved_config_json = resolved.dump();
    manifest.inputs = {dataset_dir.string(), process_dir.string()};
    manifest.outputs = {(out_dir / "report.json").string()};
    manifest.threads = opts.threads;
    manifest.wall_clock_s = clock.seconds();
    write_manifest(manifest, out_dir);
    return report;
}

}  // namespace isac
