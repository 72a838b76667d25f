#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "isac/errors.hpp"
#include "isac/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Distributed multi-static ISAC radar simulator and processing chain"};
    app.require_subcommand(1);

    isac::GlobalOptions global;
    std::uint64_t seed_value = 0;
    auto* seed_opt = app.add_option("--seed", seed_value, "Override the scenario RNG seed");
    app.add_option("--threads", global.threads, "Worker thread count (0 = all cores)");
    app.add_flag("--verbose", global.verbose, "Progress output on stderr");

    std::string scenario_path, in_dir, out_dir, dsp_json, tracker_json;
    std::string detections_csv, tracks_csv, dataset_dir, process_dir, fixes_csv;
    bool export_maps = false;
    isac::EvalOptions eval_opts;

    auto* synth = app.add_subcommand("synth", "Synthesize a CFR dataset from a scenario");
    synth->add_option("scenario", scenario_path, "Scenario JSON")->required();
    synth->add_option("out_dir", out_dir, "Output container directory")->required();

    auto* process = app.add_subcommand("process", "Detect targets in a CFR dataset");
    process->add_option("in_dir", in_dir, "Input container directory")->required();
    process->add_option("dsp", dsp_json, "DSP config JSON")->required();
    process->add_option("out_dir", out_dir, "Output directory")->required();
    process->add_flag("--maps", export_maps, "Export per-CPI delay-Doppler maps (CSV + PGM)");

    auto* track = app.add_subcommand("track", "Track detections per link");
    track->add_option("detections", detections_csv, "detections.csv from process")->required();
    track->add_option("tracker", tracker_json, "Tracker config JSON")->required();
    track->add_option("out_dir", out_dir, "Output directory")->required();

    auto* localize = app.add_subcommand("localize", "Fuse confirmed tracks into position fixes");
    localize->add_option("tracks", tracks_csv, "tracks.csv from track")->required();
    localize->add_option("dataset", dataset_dir, "Dataset directory (geometry)")->required();
    localize->add_option("out_dir", out_dir, "Output directory")->required();

    auto* eval = app.add_subcommand("eval", "Score pipeline outputs against ground truth");
    eval->add_option("dataset", dataset_dir, "Dataset directory (ground truth)")->required();
    eval->add_option("process_dir", process_dir, "process output directory")->required();
    eval->add_option("out_dir", out_dir, "Output directory")->required();
    eval->add_option("--tracks", tracks_csv, "tracks.csv for track quality metrics");
    eval->add_option("--fixes", fixes_csv, "fixes.csv for position RMSE");
    eval->add_option("--gate-delay-bins", eval_opts.gate_delay_bins, "Match gate, delay bins");
    eval->add_option("--gate-doppler-bins", eval_opts.gate_doppler_bins,
                     "Match gate, Doppler bins");

    CLI11_PARSE(app, argc, argv);
    if (!seed_opt->empty()) global.seed_override = seed_value;

    try {
        if (synth->parsed()) {
            isac::run_synth(scenario_path, out_dir, global);
        } else if (process->parsed()) {
            isac::ProcessOptions popts;
            popts.export_maps = export_maps;
            isac::run_process(in_dir, dsp_json, out_dir, global, popts);
        } else if (track->parsed()) {
            isac::run_track(detections_csv, tracker_json, out_dir, global);
        } else if (localize->parsed()) {
            isac::run_localize(tracks_csv, dataset_dir, out_dir, global);
        } else if (eval->parsed()) {
            if (!tracks_csv.empty()) eval_opts.tracks_csv = tracks_csv;
            if (!fixes_csv.empty()) eval_opts.fixes_csv = fixes_csv;
            isac::run_eval(dataset_dir, process_dir, out_dir, global, eval_opts);
        }
    } catch (const isac::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.exit_code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(isac::ExitCode::numeric_error);
    }
    return 0;
}
