#pragma once

#include <cstdint>
#include <vector>

#include "isac/scenario.hpp"

namespace isac {

enum class PathKind { los, target, rotor, clutter };

struct PathComponent {
    double delay_s = 0.0;
    Complex amplitude{0.0, 0.0};
    PathKind kind = PathKind::los;
};

/// One streamed channel snapshot: per-link CFR vectors of length n_subcarriers.
/// Stored as float32 to match the on-disk capture precision.
struct CfrSnapshot {
    double t_s = 0.0;
    std::vector<std::vector<Complex32>> links;  // [link][subcarrier]
};

struct CfrStream {
    double snapshot_rate_hz = 0.0;
    std::size_t n_subcarriers = 0;
    std::vector<CfrSnapshot> snapshots;
};

/// Subcarrier frequency offset from the carrier: f_k = (k - K/2) * B / K.
/// Delay bin 0 of the dsp transform corresponds to tau = 0 with this centering.
inline double subcarrier_offset_hz(int k, int n_subcarriers, double bandwidth_hz) {
    return (static_cast<double>(k) - n_subcarriers / 2.0) * bandwidth_hz / n_subcarriers;
}

/// Sum of path phasors on the subcarrier grid (no noise, double precision):
/// H[k] = sum_p a_p exp(-j 2 pi (f_c + f_k) tau_p).
std::vector<Complex> synthesize_components(const std::vector<PathComponent>& paths,
                                           int n_subcarriers, double bandwidth_hz,
                                           double carrier_hz);

/// Geometric snapshot synthesis with per-snapshot seeded noise. Snapshots are
/// pure functions of (scenario, index), so they may be generated out of order
/// and in parallel. Doppler is emergent from the time variation of the path
/// delays; no Doppler phasor is injected.
class ChannelSynthesizer {
public:
    explicit ChannelSynthesizer(const ScenarioConfig& scenario);

    /// All path components of one link at time t, in order: LOS, per-target
    /// echo, per-rotor-blade tips, clutter clusters.
    std::vector<PathComponent> paths_at(std::size_t link_index, double t_s) const;

    /// Double-precision noiseless CFR of one link (oracle surface for tests).
    std::vector<Complex> link_response(std::size_t link_index, double t_s) const;

    /// One full snapshot at index n (t = n / snapshot_rate), noise included
    /// unless disabled in the scenario by noise_power_dbm = -inf.
    CfrSnapshot snapshot(std::size_t n) const;

    const ScenarioConfig& scenario() const { return scenario_; }
    const std::vector<ClutterCluster>& clutter() const { return clutter_; }

private:
    ScenarioConfig scenario_;
    std::vector<ClutterCluster> clutter_;
    // Per-link clutter reference amplitude (target echo magnitude at t = 0).
    std::vector<double> clutter_reference_;
    // Per-link static phasor sum (LOS + clutter when the link endpoints are
    // stationary); empty when the link has any moving endpoint.
    std::vector<std::vector<Complex>> static_base_;
    std::vector<bool> link_static_;
    double noise_power_w_ = 0.0;

    std::vector<PathComponent> dynamic_paths_at(std::size_t link_index, double t_s) const;
    std::vector<PathComponent> static_paths_at(std::size_t link_index, double t_s) const;
};

/// Convenience one-shot synthesis used by tests and small scenarios.
std::vector<PathComponent> paths_at(const ScenarioConfig& scenario, std::size_t link_index,
                                    double t_s);
CfrSnapshot synthesize_snapshot(const ScenarioConfig& scenario, std::size_t snapshot_index);

/// Materializes the whole stream in memory. Large runs should drive
/// ChannelSynthesizer::snapshot directly through the dataset writer.
CfrStream synthesize_stream(const ScenarioConfig& scenario);

}  // namespace isac
