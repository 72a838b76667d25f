#include "isac/channel.hpp"

#include <algorithm>
#include <cmath>

#include "isac/rng.hpp"

namespace isac {

std::vector<Complex> synthesize_components(const std::vector<PathComponent>& paths,
                                           int n_subcarriers, double bandwidth_hz,
                                           double carrier_hz) {
    std::vector<Complex> h(static_cast<std::size_t>(n_subcarriers), Complex{0.0, 0.0});
    const double df = bandwidth_hz / n_subcarriers;
    const double f0 = carrier_hz - (n_subcarriers / 2.0) * df;  // frequency of subcarrier 0
    for (const auto& p : paths) {
        // exp(-j 2 pi (f0 + k df) tau) via recurrence; re-anchored every 64
        // bins to keep the accumulated rounding at the 1e-15 level.
        const Complex step = std::polar(1.0, -2.0 * kPi * df * p.delay_s);
        Complex phasor;
        for (int k = 0; k < n_subcarriers; ++k) {
            if (k % 64 == 0)
                phasor = std::polar(1.0, -2.0 * kPi * (f0 + k * df) * p.delay_s);
            h[static_cast<std::size_t>(k)] += p.amplitude * phasor;
            phasor *= step;
        }
    }
    return h;
}

namespace {

struct LinkGeometry {
    const NodeSpec* tx;
    const NodeSpec* rx;
};

LinkGeometry resolve_link(const ScenarioConfig& sc, std::size_t link_index) {
    if (link_index >= sc.links.size()) throw ConfigError("link index out of range");
    const LinkSpec& l = sc.links[link_index];
    return {&sc.node(l.tx_id), &sc.node(l.rx_id)};
}

// Bistatic radar-equation amplitude with the reflectivity gain in place of
// sqrt(RCS); absolute calibration is arbitrary but consistent (tx power and
// antenna gains enter as linear factors).
Complex echo_amplitude(const ScenarioConfig& sc, const NodeSpec& tx, const NodeSpec& rx,
                       const Vec3& tx_pos, const Vec3& rx_pos, const Vec3& scatterer,
                       Complex gain) {
    const double r_tx = (scatterer - tx_pos).norm();
    const double r_rx = (scatterer - rx_pos).norm();
    if (r_tx <= 0.0 || r_rx <= 0.0)
        throw GeometryError("echo undefined: scatterer coincides with tx or rx");
    const double lambda = sc.wavelength_m();
    const double g = std::sqrt(db_to_linear_power(tx.antenna_gain_dbi) *
                               db_to_linear_power(rx.antenna_gain_dbi));
    const double p_tx = std::sqrt(dbm_to_power(tx.tx_power_dbm));
    const double four_pi = 4.0 * kPi;
    return gain * (p_tx * lambda * g / (std::pow(four_pi, 1.5) * r_tx * r_rx));
}

}  // namespace

ChannelSynthesizer::ChannelSynthesizer(const ScenarioConfig& scenario) : scenario_(scenario) {
    scenario_.validate();
    clutter_ = draw_clutter(scenario_.clutter);
    noise_power_w_ = std::isinf(scenario_.noise_power_dbm) && scenario_.noise_power_dbm < 0
                         ? 0.0
                         : dbm_to_power(scenario_.noise_power_dbm);

    const std::size_t n_links = scenario_.links.size();
    clutter_reference_.assign(n_links, 0.0);
    link_static_.assign(n_links, false);
    static_base_.assign(n_links, {});

    for (std::size_t li = 0; li < n_links; ++li) {
        const auto [tx, rx] = resolve_link(scenario_, li);
        // Clutter amplitudes are drawn relative to the target echo at t = 0
        // (LOS amplitude when the scene has no target).
        double ref = 0.0;
        if (!scenario_.targets.empty()) {
            const TargetSpec& tgt = scenario_.targets.front();
            const Vec3 p = tgt.trajectory.position_at(0.0);
            const Vec3 tx_pos = tx->trajectory.position_at(0.0);
            const Vec3 rx_pos = rx->trajectory.position_at(0.0);
            const Complex g = scenario_.signature(tgt.signature_id)
                                  .gain(scenario_.carrier_hz,
                                        bistatic_angle_deg(tx_pos, rx_pos, p));
            ref = std::abs(echo_amplitude(scenario_, *tx, *rx, tx_pos, rx_pos, p, g));
        } else {
            const Vec3 tx_pos = tx->trajectory.position_at(0.0);
            const Vec3 rx_pos = rx->trajectory.position_at(0.0);
            const double d = (rx_pos - tx_pos).norm();
            if (d > 0.0)
                ref = std::sqrt(dbm_to_power(tx->tx_power_dbm)) * scenario_.wavelength_m() /
                      (4.0 * kPi * d);
        }
        clutter_reference_[li] = ref;

        link_static_[li] = tx->trajectory.is_stationary() && rx->trajectory.is_stationary();
        if (link_static_[li]) {
            static_base_[li] = synthesize_components(static_paths_at(li, 0.0),
                                                     scenario_.n_subcarriers,
                                                     scenario_.bandwidth_hz, scenario_.carrier_hz);
        }
    }
}

std::vector<PathComponent> ChannelSynthesizer::static_paths_at(std::size_t link_index,
                                                               double t_s) const {
    const auto [tx, rx] = resolve_link(scenario_, link_index);
    const Vec3 tx_pos = tx->trajectory.position_at(t_s);
    const Vec3 rx_pos = rx->trajectory.position_at(t_s);

    std::vector<PathComponent> paths;
    const double d = (rx_pos - tx_pos).norm();
    if (d > 0.0) {
        PathComponent los;
        los.kind = PathKind::los;
        los.delay_s = d / kSpeedOfLight;
        los.amplitude = std::sqrt(dbm_to_power(tx->tx_power_dbm)) * scenario_.wavelength_m() /
                        (4.0 * kPi * d);
        paths.push_back(los);
    }
    for (const auto& cluster : clutter_) {
        PathComponent pc;
        pc.kind = PathKind::clutter;
        pc.delay_s = bistatic_range(tx_pos, rx_pos, cluster.position) / kSpeedOfLight;
        pc.amplitude = cluster.gain * clutter_reference_[link_index];
        paths.push_back(pc);
    }
    return paths;
}

std::vector<PathComponent> ChannelSynthesizer::dynamic_paths_at(std::size_t link_index,
                                                                double t_s) const {
    const auto [tx, rx] = resolve_link(scenario_, link_index);
    const Vec3 tx_pos = tx->trajectory.position_at(t_s);
    const Vec3 rx_pos = rx->trajectory.position_at(t_s);

    std::vector<PathComponent> paths;
    for (const auto& tgt : scenario_.targets) {
        const Vec3 p = tgt.trajectory.position_at(t_s);
        const Complex g =
            scenario_.signature(tgt.signature_id)
                .gain(scenario_.carrier_hz, bistatic_angle_deg(tx_pos, rx_pos, p));
        PathComponent pc;
        pc.kind = PathKind::target;
        pc.delay_s = bistatic_range(tx_pos, rx_pos, p) / kSpeedOfLight;
        pc.amplitude = echo_amplitude(scenario_, *tx, *rx, tx_pos, rx_pos, p, g);
        paths.push_back(pc);

        if (tgt.rotor) {
            for (const auto& tip : rotor_scatterers(*tgt.rotor, p, t_s)) {
                PathComponent rc;
                rc.kind = PathKind::rotor;
                rc.delay_s = bistatic_range(tx_pos, rx_pos, tip.position) / kSpeedOfLight;
                rc.amplitude =
                    echo_amplitude(scenario_, *tx, *rx, tx_pos, rx_pos, tip.position, tip.gain);
                paths.push_back(rc);
            }
        }
    }
    return paths;
}

std::vector<PathComponent> ChannelSynthesizer::paths_at(std::size_t link_index, double t_s) const {
    // Order: LOS, target echoes (with rotor tips), clutter.
    std::vector<PathComponent> paths = static_paths_at(link_index, t_s);
    std::vector<PathComponent> dyn = dynamic_paths_at(link_index, t_s);
    const auto clutter_begin =
        std::find_if(paths.begin(), paths.end(),
                     [](const PathComponent& p) { return p.kind == PathKind::clutter; });
    paths.insert(clutter_begin, dyn.begin(), dyn.end());
    return paths;
}

std::vector<Complex> ChannelSynthesizer::link_response(std::size_t link_index, double t_s) const {
    std::vector<Complex> h;
    if (link_static_[link_index]) {
        h = static_base_[link_index];
        const std::vector<Complex> dyn =
            synthesize_components(dynamic_paths_at(link_index, t_s), scenario_.n_subcarriers,
                                  scenario_.bandwidth_hz, scenario_.carrier_hz);
        for (std::size_t k = 0; k < h.size(); ++k) h[k] += dyn[k];
    } else {
        h = synthesize_components(paths_at(link_index, t_s), scenario_.n_subcarriers,
                                  scenario_.bandwidth_hz, scenario_.carrier_hz);
    }
    return h;
}

CfrSnapshot ChannelSynthesizer::snapshot(std::size_t n) const {
    CfrSnapshot snap;
    snap.t_s = static_cast<double>(n) / scenario_.snapshot_rate_hz;
    snap.links.resize(scenario_.links.size());
    for (std::size_t li = 0; li < scenario_.links.size(); ++li) {
        std::vector<Complex> h = link_response(li, snap.t_s);
        if (noise_power_w_ > 0.0) {
            SplitMix64 rng(derive_seed(scenario_.rng_seed, n, li));
            for (auto& v : h) v += rng.next_complex_normal(noise_power_w_);
        }
        auto& out = snap.links[li];
        out.resize(h.size());
        for (std::size_t k = 0; k < h.size(); ++k)
            out[k] = Complex32(static_cast<float>(h[k].real()), static_cast<float>(h[k].imag()));
    }
    return snap;
}

std::vector<PathComponent> paths_at(const ScenarioConfig& scenario, std::size_t link_index,
                                    double t_s) {
    return ChannelSynthesizer(scenario).paths_at(link_index, t_s);
}

CfrSnapshot synthesize_snapshot(const ScenarioConfig& scenario, std::size_t snapshot_index) {
    return ChannelSynthesizer(scenario).snapshot(snapshot_index);
}

CfrStream synthesize_stream(const ScenarioConfig& scenario) {
    ChannelSynthesizer synth(scenario);
    CfrStream stream;
    stream.snapshot_rate_hz = scenario.snapshot_rate_hz;
    stream.n_subcarriers = static_cast<std::size_t>(scenario.n_subcarriers);
    const std::size_t n = scenario.n_snapshots();
    stream.snapshots.reserve(n);
    for (std::size_t i = 0; i < n; ++i) stream.snapshots.push_back(synth.snapshot(i));
    return stream;
}

}  // namespace isac
