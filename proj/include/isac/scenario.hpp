#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "isac/errors.hpp"
#include "isac/geometry.hpp"
#include "isac/signature.hpp"

namespace isac {

enum class NodeRole { tx, rx, txrx };

NodeRole parse_node_role(const std::string& s);
std::string to_string(NodeRole role);

enum class Interpolation { linear, cubic };

/// Piecewise trajectory through timed waypoints. Query times outside the
/// waypoint span clamp to the first/last waypoint (positions hold, velocities
/// return the one-sided derivative).
class TrajectorySpec {
public:
    struct Waypoint {
        double t_s;
        Vec3 position_m;
    };

    TrajectorySpec() = default;
    TrajectorySpec(std::vector<Waypoint> waypoints, Interpolation interp);

    /// Stationary trajectory (single waypoint at t=0).
    static TrajectorySpec stationary(const Vec3& position);

    Vec3 position_at(double t_s) const;
    Vec3 velocity_at(double t_s) const;

    const std::vector<Waypoint>& waypoints() const { return waypoints_; }
    Interpolation interpolation() const { return interp_; }
    bool is_stationary() const { return waypoints_.size() == 1; }
    double t_first() const { return waypoints_.front().t_s; }
    double t_last() const { return waypoints_.back().t_s; }

    /// Upper bound of |velocity| over the span (sampled; exact for linear).
    double max_speed() const;

private:
    std::vector<Waypoint> waypoints_;
    Interpolation interp_ = Interpolation::linear;
    // Natural cubic spline second derivatives per axis, built on construction.
    std::vector<Vec3> second_derivs_;

    std::size_t segment_index(double t) const;
};

struct NodeSpec {
    std::string id;
    NodeRole role = NodeRole::rx;
    TrajectorySpec trajectory;
    double antenna_gain_dbi = 0.0;
    double tx_power_dbm = 0.0;  // meaningful for tx-capable roles only

    bool tx_capable() const { return role == NodeRole::tx || role == NodeRole::txrx; }
    bool rx_capable() const { return role == NodeRole::rx || role == NodeRole::txrx; }
};

struct TargetSpec {
    std::string id;
    TrajectorySpec trajectory;
    std::string signature_id;
    std::optional<RotorSpec> rotor;
};

struct LinkSpec {
    std::string tx_id;
    std::string rx_id;
};

struct ClutterSpec {
    int n_clusters = 0;
    Vec3 region_min_m;
    Vec3 region_max_m;
    double amplitude_db_min = -20.0;  // relative to the target echo reference
    double amplitude_db_max = 0.0;
    std::uint64_t rng_seed = 0;
};

/// A drawn clutter cluster: fixed position and complex gain for the whole run.
struct ClutterCluster {
    Vec3 position;
    Complex gain;  // relative to the per-link target echo reference amplitude
};

/// Target reflectivity source: either a table or a fixed scalar gain.
struct SignatureEntry {
    std::string id;
    std::shared_ptr<const ReflectivityTable> table;  // null => scalar
    Complex scalar_gain{1.0, 0.0};

    Complex gain(double f_hz, double beta_deg) const {
        return table ? table->lookup(f_hz, beta_deg) : scalar_gain;
    }
};

struct ScenarioConfig {
    std::vector<NodeSpec> nodes;
    std::vector<LinkSpec> links;
    std::vector<TargetSpec> targets;
    std::vector<SignatureEntry> signatures;
    ClutterSpec clutter;
    double carrier_hz = 3e9;
    double bandwidth_hz = 50e6;
    int n_subcarriers = 256;
    double snapshot_rate_hz = 1000.0;
    double duration_s = 1.0;
    double noise_power_dbm = -100.0;
    std::uint64_t rng_seed = 0;

    const NodeSpec& node(const std::string& id) const;
    const SignatureEntry& signature(const std::string& id) const;
    std::size_t n_snapshots() const {
        return static_cast<std::size_t>(std::llround(duration_s * snapshot_rate_hz));
    }
    double snapshot_interval_s() const { return 1.0 / snapshot_rate_hz; }
    double wavelength_m() const { return kSpeedOfLight / carrier_hz; }

    /// Validates all invariants; emits the Doppler-support warning on stderr
    /// when snapshot_rate_hz < 2 * max expected |Doppler|.
    void validate() const;
};

/// Deterministic cluster draw: positions uniform in the region box, gain
/// magnitude log-uniform in the configured dB range, phase uniform. Same seed,
/// same clusters.
std::vector<ClutterCluster> draw_clutter(const ClutterSpec& spec);

/// Two-leg bistatic path length |target-tx| + |target-rx|.
double bistatic_range(const Vec3& tx_pos, const Vec3& rx_pos, const Vec3& target_pos);

/// Bistatic Doppler, Hz. Convention: decreasing bistatic range => positive.
/// Throws GeometryError when the target coincides with an endpoint.
double bistatic_doppler(const Vec3& tx_pos, const Vec3& rx_pos, const Vec3& target_pos,
                        const Vec3& target_vel, double carrier_hz);

/// Bistatic angle at the target between the target->tx and target->rx
/// directions, degrees; 0 is monostatic.
double bistatic_angle_deg(const Vec3& tx_pos, const Vec3& rx_pos, const Vec3& target_pos);

/// Scenario JSON load/save. Schema documented in docs/schemas.md; snake_case
/// keys, SI units. Reflectivity-table signatures reference files relative to
/// the scenario file's directory.
ScenarioConfig load_scenario(const std::filesystem::path& json_path);
ScenarioConfig parse_scenario(const std::string& json_text,
                              const std::filesystem::path& base_dir = {});

}  // namespace isac
