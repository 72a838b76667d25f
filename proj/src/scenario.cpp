#include "isac/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "isac/rng.hpp"
#include "json.hpp"

namespace isac {

using nlohmann::json;

NodeRole parse_node_role(const std::string& s) {
    if (s == "tx") return NodeRole::tx;
    if (s == "rx") return NodeRole::rx;
    if (s == "txrx") return NodeRole::txrx;
    throw ConfigError("unknown node role '" + s + "' (expected tx, rx or txrx)");
}

std::string to_string(NodeRole role) {
    switch (role) {
        case NodeRole::tx: return "tx";
        case NodeRole::rx: return "rx";
        default: return "txrx";
    }
}

TrajectorySpec::TrajectorySpec(std::vector<Waypoint> waypoints, Interpolation interp)
    : waypoints_(std::move(waypoints)), interp_(interp) {
    if (waypoints_.empty()) throw ConfigError("trajectory needs at least one waypoint");
    for (std::size_t i = 1; i < waypoints_.size(); ++i) {
        if (!(waypoints_[i].t_s > waypoints_[i - 1].t_s))
            throw ConfigError("trajectory waypoint times must be strictly increasing");
    }
    if (interp_ == Interpolation::cubic && waypoints_.size() >= 3) {
        // Natural cubic spline: tridiagonal solve for second derivatives,
        // zero curvature at the ends.
        const std::size_t n = waypoints_.size();
        std::vector<double> h(n - 1);
        for (std::size_t i = 0; i + 1 < n; ++i) h[i] = waypoints_[i + 1].t_s - waypoints_[i].t_s;

        second_derivs_.assign(n, Vec3{});
        std::vector<double> diag(n, 0.0), upper(n, 0.0);
        std::vector<Vec3> rhs(n, Vec3{});
        diag[0] = 1.0;
        for (std::size_t i = 1; i + 1 < n; ++i) {
            diag[i] = 2.0 * (h[i - 1] + h[i]);
            upper[i] = h[i];
            const Vec3 d1 = (waypoints_[i + 1].position_m - waypoints_[i].position_m) / h[i];
            const Vec3 d0 = (waypoints_[i].position_m - waypoints_[i - 1].position_m) / h[i - 1];
            rhs[i] = (d1 - d0) * 6.0;
        }
        diag[n - 1] = 1.0;

        // Thomas algorithm; lower diagonal equals h[i-1] on the interior rows.
        std::vector<double> cp(n, 0.0);
        std::vector<Vec3> dp(n, Vec3{});
        cp[0] = upper[0] / diag[0];
        dp[0] = rhs[0] / diag[0];
        for (std::size_t i = 1; i < n; ++i) {
            const double lower = (i + 1 < n) ? h[i - 1] : 0.0;
            const double m = diag[i] - lower * cp[i - 1];
            cp[i] = upper[i] / m;
            dp[i] = (rhs[i] - dp[i - 1] * lower) / m;
        }
        second_derivs_[n - 1] = dp[n - 1];
        for (std::size_t i = n - 1; i-- > 0;)
            second_derivs_[i] = dp[i] - second_derivs_[i + 1] * cp[i];
    }
}

TrajectorySpec TrajectorySpec::stationary(const Vec3& position) {
    return TrajectorySpec({{0.0, position}}, Interpolation::linear);
}

std::size_t TrajectorySpec::segment_index(double t) const {
    // Largest i with waypoints_[i].t_s <= t, clamped to the last segment start.
    const auto it = std::upper_bound(
        waypoints_.begin(), waypoints_.end(), t,
        [](double value, const Waypoint& w) { return value < w.t_s; });
    std::size_t i = static_cast<std::size_t>(std::distance(waypoints_.begin(), it));
    if (i > 0) --i;
    return std::min(i, waypoints_.size() - 2);
}

Vec3 TrajectorySpec::position_at(double t_s) const {
    if (waypoints_.size() == 1) return waypoints_.front().position_m;
    const double t = std::clamp(t_s, t_first(), t_last());
    const std::size_t i = segment_index(t);
    const Waypoint& a = waypoints_[i];
    const Waypoint& b = waypoints_[i + 1];
    const double h = b.t_s - a.t_s;
    if (interp_ == Interpolation::linear || waypoints_.size() < 3) {
        const double u = (t - a.t_s) / h;
        return a.position_m * (1.0 - u) + b.position_m * u;
    }
    const double x0 = t - a.t_s;
    const double x1 = b.t_s - t;
    const Vec3& m0 = second_derivs_[i];
    const Vec3& m1 = second_derivs_[i + 1];
    return m0 * (x1 * x1 * x1 / (6.0 * h)) + m1 * (x0 * x0 * x0 / (6.0 * h)) +
           (a.position_m / h - m0 * (h / 6.0)) * x1 + (b.position_m / h - m1 * (h / 6.0)) * x0;
}

Vec3 TrajectorySpec::velocity_at(double t_s) const {
    if (waypoints_.size() == 1) return Vec3{};
    const double t = std::clamp(t_s, t_first(), t_last());
    const std::size_t i = segment_index(t);
    const Waypoint& a = waypoints_[i];
    const Waypoint& b = waypoints_[i + 1];
    const double h = b.t_s - a.t_s;
    if (interp_ == Interpolation::linear || waypoints_.size() < 3) {
        return (b.position_m - a.position_m) / h;
    }
    const double x0 = t - a.t_s;
    const double x1 = b.t_s - t;
    const Vec3& m0 = second_derivs_[i];
    const Vec3& m1 = second_derivs_[i + 1];
    return m0 * (-x1 * x1 / (2.0 * h)) + m1 * (x0 * x0 / (2.0 * h)) +
           (b.position_m - a.position_m) / h - (m1 - m0) * (h / 6.0);
}

double TrajectorySpec::max_speed() const {
    if (waypoints_.size() == 1) return 0.0;
    double vmax = 0.0;
    // Sample each segment; cubic speed extrema are close to the samples.
    for (std::size_t i = 0; i + 1 < waypoints_.size(); ++i) {
        for (int k = 0; k <= 8; ++k) {
            const double t =
                waypoints_[i].t_s + (waypoints_[i + 1].t_s - waypoints_[i].t_s) * k / 8.0;
            vmax = std::max(vmax, velocity_at(t).norm());
        }
    }
    return vmax;
}

void RotorSpec::validate() const {
    if (n_blades < 1) throw ConfigError("rotor n_blades must be >= 1");
    if (!(blade_radius_m > 0.0)) throw ConfigError("rotor blade_radius_m must be > 0");
    if (std::abs(plane_normal.norm() - 1.0) > 1e-9)
        throw ConfigError("rotor plane_normal must be a unit vector (|n| = 1 within 1e-9)");
}

const NodeSpec& ScenarioConfig::node(const std::string& id) const {
    for (const auto& n : nodes)
        if (n.id == id) return n;
    throw ConfigError("unknown node id '" + id + "'");
}

const SignatureEntry& ScenarioConfig::signature(const std::string& id) const {
    for (const auto& s : signatures)
        if (s.id == id) return s;
    throw ConfigError("unknown signature id '" + id + "'");
}

void ScenarioConfig::validate() const {
    if (n_subcarriers < 2) throw ConfigError("n_subcarriers must be >= 2");
    if (!(bandwidth_hz > 0.0)) throw ConfigError("bandwidth_hz must be > 0");
    if (!(snapshot_rate_hz > 0.0)) throw ConfigError("snapshot_rate_hz must be > 0");
    if (!(carrier_hz > 0.0)) throw ConfigError("carrier_hz must be > 0");
    if (duration_s < 0.0) throw ConfigError("duration_s must be >= 0");

    std::set<std::string> ids;
    bool any_tx = false, any_rx = false;
    for (const auto& n : nodes) {
        if (!ids.insert(n.id).second) throw ConfigError("duplicate node id '" + n.id + "'");
        any_tx = any_tx || n.tx_capable();
        any_rx = any_rx || n.rx_capable();
    }
    if (nodes.empty() || !any_tx || !any_rx)
        throw ConfigError("scenario needs at least one tx-capable and one rx-capable node");
    if (links.empty()) throw ConfigError("scenario needs at least one link");

    for (const auto& l : links) {
        const NodeSpec& tx = node(l.tx_id);
        const NodeSpec& rx = node(l.rx_id);
        if (!tx.tx_capable()) throw ConfigError("link tx node '" + l.tx_id + "' is not tx-capable");
        if (!rx.rx_capable()) throw ConfigError("link rx node '" + l.rx_id + "' is not rx-capable");
        if (l.tx_id == l.rx_id && tx.role != NodeRole::txrx)
            throw ConfigError("monostatic link requires role txrx on node '" + l.tx_id + "'");
    }

    for (const auto& t : targets) {
        signature(t.signature_id);  // must resolve
        if (t.rotor) t.rotor->validate();
    }
    if (clutter.n_clusters < 0) throw ConfigError("clutter n_clusters must be >= 0");
    if (clutter.amplitude_db_max < clutter.amplitude_db_min)
        throw ConfigError("clutter amplitude_db_range must be (min, max) with min <= max");

    // Doppler support is the caller's responsibility; warn, do not fail.
    double vmax = 0.0;
    for (const auto& t : targets) vmax = std::max(vmax, t.trajectory.max_speed());
    for (const auto& n : nodes) vmax = std::max(vmax, n.trajectory.max_speed());
    const double doppler_max = (carrier_hz / kSpeedOfLight) * 2.0 * vmax;
    if (snapshot_rate_hz < 2.0 * doppler_max) {
        std::cerr << "warning: snapshot_rate_hz = " << snapshot_rate_hz
                  << " Hz is below twice the maximum expected Doppler (" << doppler_max
                  << " Hz); Doppler estimates will alias\n";
    }
}

std::vector<ClutterCluster> draw_clutter(const ClutterSpec& spec) {
    SplitMix64 rng(spec.rng_seed);
    std::vector<ClutterCluster> clusters;
    clusters.reserve(static_cast<std::size_t>(spec.n_clusters));
    for (int i = 0; i < spec.n_clusters; ++i) {
        ClutterCluster c;
        c.position.x = rng.next_uniform(spec.region_min_m.x, spec.region_max_m.x);
        c.position.y = rng.next_uniform(spec.region_min_m.y, spec.region_max_m.y);
        c.position.z = rng.next_uniform(spec.region_min_m.z, spec.region_max_m.z);
        const double amp_db = rng.next_uniform(spec.amplitude_db_min, spec.amplitude_db_max);
        const double phase = rng.next_uniform(0.0, 2.0 * kPi);
        c.gain = std::polar(db_to_linear_amplitude(amp_db), phase);
        clusters.push_back(c);
    }
    return clusters;
}

double bistatic_range(const Vec3& tx_pos, const Vec3& rx_pos, const Vec3& target_pos) {
    return (target_pos - tx_pos).norm() + (target_pos - rx_pos).norm();
}

double bistatic_doppler(const Vec3& tx_pos, const Vec3& rx_pos, const Vec3& target_pos,
                        const Vec3& target_vel, double carrier_hz) {
    const Vec3 dt = target_pos - tx_pos;
    const Vec3 dr = target_pos - rx_pos;
    const double nt = dt.norm();
    const double nr = dr.norm();
    if (nt <= 0.0 || nr <= 0.0)
        throw GeometryError("bistatic Doppler undefined: target coincides with tx or rx");
    const double range_rate = target_vel.dot(dt / nt) + target_vel.dot(dr / nr);
    return -(carrier_hz / kSpeedOfLight) * range_rate;
}

double bistatic_angle_deg(const Vec3& tx_pos, const Vec3& rx_pos, const Vec3& target_pos) {
    const Vec3 dt = tx_pos - target_pos;
    const Vec3 dr = rx_pos - target_pos;
    const double nt = dt.norm();
    const double nr = dr.norm();
    if (nt <= 0.0 || nr <= 0.0)
        throw GeometryError("bistatic angle undefined: target coincides with tx or rx");
    const double c = std::clamp(dt.dot(dr) / (nt * nr), -1.0, 1.0);
    return std::acos(c) * 180.0 / kPi;
}

namespace {

Vec3 parse_vec3(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 3)
        throw ConfigError(where + ": expected an array of 3 numbers");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

TrajectorySpec parse_trajectory(const json& j, const std::string& where) {
    if (!j.contains("waypoints")) throw ConfigError(where + ".waypoints: missing");
    Interpolation interp = Interpolation::linear;
    if (j.contains("interpolation")) {
        const std::string s = j.at("interpolation").get<std::string>();
        if (s == "linear")
            interp = Interpolation::linear;
        else if (s == "cubic")
            interp = Interpolation::cubic;
        else
            throw ConfigError(where + ".interpolation: unknown value '" + s + "'");
    }
    std::vector<TrajectorySpec::Waypoint> wps;
    for (const auto& w : j.at("waypoints")) {
        wps.push_back({w.at("t_s").get<double>(),
                       parse_vec3(w.at("position_m"), where + ".waypoints[].position_m")});
    }
    try {
        return TrajectorySpec(std::move(wps), interp);
    } catch (const ConfigError& e) {
        throw ConfigError(where + ": " + e.what());
    }
}

Complex parse_complex(const json& j) {
    if (j.is_number()) return {j.get<double>(), 0.0};
    if (j.is_array() && j.size() == 2) return {j[0].get<double>(), j[1].get<double>()};
    throw ConfigError("expected a number or [re, im] pair");
}

}  // namespace

ScenarioConfig parse_scenario(const std::string& json_text, const std::filesystem::path& base_dir) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("scenario JSON parse failure: ") + e.what());
    }

    ScenarioConfig cfg;
    try {
        cfg.carrier_hz = j.at("carrier_hz").get<double>();
        cfg.bandwidth_hz = j.at("bandwidth_hz").get<double>();
        cfg.n_subcarriers = j.at("n_subcarriers").get<int>();
        cfg.snapshot_rate_hz = j.at("snapshot_rate_hz").get<double>();
        cfg.duration_s = j.at("duration_s").get<double>();
        cfg.noise_power_dbm = j.at("noise_power_dbm").get<double>();
        cfg.rng_seed = j.value("rng_seed", std::uint64_t{0});

        for (const auto& n : j.at("nodes")) {
            NodeSpec node;
            node.id = n.at("id").get<std::string>();
            node.role = parse_node_role(n.at("role").get<std::string>());
            node.trajectory = parse_trajectory(n.at("trajectory"), "nodes[" + node.id + "].trajectory");
            node.antenna_gain_dbi = n.value("antenna_gain_dbi", 0.0);
            node.tx_power_dbm = n.value("tx_power_dbm", 0.0);
            cfg.nodes.push_back(std::move(node));
        }
        for (const auto& l : j.at("links")) {
            cfg.links.push_back({l.at("tx_id").get<std::string>(), l.at("rx_id").get<std::string>()});
        }
        if (j.contains("signatures")) {
            for (const auto& s : j.at("signatures")) {
                SignatureEntry e;
                e.id = s.at("id").get<std::string>();
                const std::string kind = s.at("kind").get<std::string>();
                if (kind == "scalar") {
                    e.scalar_gain = parse_complex(s.at("gain"));
                } else if (kind == "table") {
                    const std::filesystem::path p = s.at("path").get<std::string>();
                    e.table = std::make_shared<ReflectivityTable>(
                        read_reflectivity_table(p.is_absolute() ? p : base_dir / p));
                } else {
                    throw ConfigError("signatures[" + e.id + "].kind: unknown value '" + kind + "'");
                }
                cfg.signatures.push_back(std::move(e));
            }
        }
        if (j.contains("targets")) {
            for (const auto& t : j.at("targets")) {
                TargetSpec target;
                target.id = t.at("id").get<std::string>();
                target.trajectory =
                    parse_trajectory(t.at("trajectory"), "targets[" + target.id + "].trajectory");
                target.signature_id = t.at("signature_id").get<std::string>();
                if (t.contains("rotor")) {
                    const auto& r = t.at("rotor");
                    RotorSpec rotor;
                    rotor.n_blades = r.at("n_blades").get<int>();
                    rotor.blade_radius_m = r.at("blade_radius_m").get<double>();
                    rotor.rotation_hz = r.at("rotation_hz").get<double>();
                    rotor.plane_normal = parse_vec3(r.at("plane_normal"), "rotor.plane_normal");
                    rotor.tip_amplitude = parse_complex(r.at("tip_amplitude"));
                    rotor.phase0_rad = r.value("phase0_rad", 0.0);
                    target.rotor = rotor;
                }
                cfg.targets.push_back(std::move(target));
            }
        }
        if (j.contains("clutter")) {
            const auto& c = j.at("clutter");
            cfg.clutter.n_clusters = c.at("n_clusters").get<int>();
            if (cfg.clutter.n_clusters > 0) {
                cfg.clutter.region_min_m = parse_vec3(c.at("region_min_m"), "clutter.region_min_m");
                cfg.clutter.region_max_m = parse_vec3(c.at("region_max_m"), "clutter.region_max_m");
            }
            if (c.contains("amplitude_db_range")) {
                const auto& r = c.at("amplitude_db_range");
                cfg.clutter.amplitude_db_min = r.at(0).get<double>();
                cfg.clutter.amplitude_db_max = r.at(1).get<double>();
            }
            cfg.clutter.rng_seed = c.value("rng_seed", std::uint64_t{0});
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("scenario JSON: ") + e.what());
    }

    cfg.validate();
    return cfg;
}

ScenarioConfig load_scenario(const std::filesystem::path& json_path) {
    std::ifstream in(json_path);
    if (!in) throw FileMissingError("cannot open scenario file " + json_path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str(), json_path.parent_path());
}

}  // namespace isac
