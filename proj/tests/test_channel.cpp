#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "isac/channel.hpp"
#include "isac/rng.hpp"

using namespace isac;

namespace {

// Minimal static 1-link scenario builder used throughout.
ScenarioConfig base_scenario() {
    ScenarioConfig cfg;
    cfg.carrier_hz = 3e9;
    cfg.bandwidth_hz = 50e6;
    cfg.n_subcarriers = 64;
    cfg.snapshot_rate_hz = 1000.0;
    cfg.duration_s = 0.1;
    cfg.noise_power_dbm = -std::numeric_limits<double>::infinity();  // noise off
    cfg.rng_seed = 1;

    NodeSpec tx;
    tx.id = "tx0";
    tx.role = NodeRole::tx;
    tx.trajectory = TrajectorySpec::stationary({0.0, 0.0, 10.0});
    tx.tx_power_dbm = 30.0;
    NodeSpec rx;
    rx.id = "rx0";
    rx.role = NodeRole::rx;
    rx.trajectory = TrajectorySpec::stationary({60.0, 0.0, 10.0});
    cfg.nodes = {tx, rx};
    cfg.links = {{"tx0", "rx0"}};

    SignatureEntry sig;
    sig.id = "sig";
    sig.scalar_gain = {1.0, 0.0};
    cfg.signatures = {sig};
    return cfg;
}

TargetSpec moving_target(const Vec3& start, const Vec3& velocity, double duration) {
    TargetSpec t;
    t.id = "uav";
    t.signature_id = "sig";
    t.trajectory = TrajectorySpec({{0.0, start}, {duration, start + velocity * duration}},
                                  Interpolation::linear);
    return t;
}

}  // namespace

TEST_CASE("scene with no targets and no clutter has exactly the LOS component") {
    const ScenarioConfig cfg = base_scenario();
    const auto paths = paths_at(cfg, 0, 0.05);
    REQUIRE(paths.size() == 1);
    CHECK(paths[0].kind == PathKind::los);
    CHECK(paths[0].delay_s == doctest::Approx(60.0 / kSpeedOfLight).epsilon(1e-12));
}

TEST_CASE("static scene path lists are time invariant") {
    ScenarioConfig cfg = base_scenario();
    cfg.targets = {moving_target({30.0, 40.0, 10.0}, {0.0, 0.0, 0.0}, cfg.duration_s)};
    cfg.clutter.n_clusters = 5;
    cfg.clutter.region_min_m = {-50, -50, 0};
    cfg.clutter.region_max_m = {100, 100, 30};
    cfg.clutter.rng_seed = 3;

    ChannelSynthesizer synth(cfg);
    const auto a = synth.paths_at(0, 0.01);
    const auto b = synth.paths_at(0, 0.09);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].delay_s == b[i].delay_s);
        CHECK(a[i].amplitude == b[i].amplitude);
        CHECK(a[i].kind == b[i].kind);
    }
}

TEST_CASE("target amplitude follows the 1/(R_tx R_rx) product law") {
    // Symmetric geometry: R_tx = R_rx = R; compare R and 2R via target height.
    ScenarioConfig cfg = base_scenario();
    cfg.nodes[0].trajectory = TrajectorySpec::stationary({-30.0, 0.0, 0.0});
    cfg.nodes[1].trajectory = TrajectorySpec::stationary({30.0, 0.0, 0.0});

    const double r1 = 100.0;
    const double y1 = std::sqrt(r1 * r1 - 30.0 * 30.0);
    const double r2 = 200.0;
    const double y2 = std::sqrt(r2 * r2 - 30.0 * 30.0);

    cfg.targets = {moving_target({0.0, y1, 0.0}, {0, 0, 0}, cfg.duration_s)};
    const auto p1 = paths_at(cfg, 0, 0.0);
    cfg.targets = {moving_target({0.0, y2, 0.0}, {0, 0, 0}, cfg.duration_s)};
    const auto p2 = paths_at(cfg, 0, 0.0);

    const auto target_of = [](const std::vector<PathComponent>& ps) {
        for (const auto& p : ps)
            if (p.kind == PathKind::target) return p;
        throw std::runtime_error("no target component");
    };
    const double ratio = std::abs(target_of(p1).amplitude) / std::abs(target_of(p2).amplitude);
    CHECK(ratio == doctest::Approx(4.0).epsilon(1e-6));
    const double ratio_db = 20.0 * std::log10(ratio);
    CHECK(ratio_db == doctest::Approx(12.04).epsilon(1e-3));
}

TEST_CASE("single unit path: flat magnitude and linear phase slope across subcarriers") {
    const std::vector<PathComponent> paths{{2.5e-7, Complex{1.0, 0.0}, PathKind::target}};
    const int k = 64;
    const double bw = 50e6;
    const auto h = synthesize_components(paths, k, bw, 3e9);

    for (const auto& v : h) CHECK(std::abs(v) == doctest::Approx(1.0).epsilon(1e-12));

    // Unwrapped phase difference between adjacent subcarriers: -2 pi tau df.
    const double df = bw / k;
    const double expected = -2.0 * kPi * 2.5e-7 * df;
    for (int i = 1; i < k; ++i) {
        double d = std::arg(h[i]) - std::arg(h[i - 1]);
        while (d > kPi) d -= 2.0 * kPi;
        while (d < -kPi) d += 2.0 * kPi;
        CHECK(d == doctest::Approx(expected).epsilon(1e-9));
    }
}

TEST_CASE("emergent Doppler matches bistatic_doppler through the carrier phase") {
    ScenarioConfig cfg = base_scenario();
    cfg.snapshot_rate_hz = 1000.0;
    cfg.duration_s = 0.2;
    cfg.targets = {moving_target({20.0, 80.0, 30.0}, {8.0, -11.0, 1.5}, cfg.duration_s)};
    ChannelSynthesizer synth(cfg);

    const NodeSpec& tx = cfg.node("tx0");
    const NodeSpec& rx = cfg.node("rx0");
    const double dt = cfg.snapshot_interval_s();

    for (double t : {0.05, 0.1, 0.15}) {
        // Target path phasor at the carrier (f_k = 0 bin is k = K/2).
        const auto target_phase = [&](double tq) {
            const auto paths = synth.paths_at(0, tq);
            for (const auto& p : paths)
                if (p.kind == PathKind::target)
                    return std::arg(p.amplitude * std::polar(1.0, -2.0 * kPi * cfg.carrier_hz *
                                                                      p.delay_s));
            throw std::runtime_error("no target");
        };
        double dphi = target_phase(t + dt) - target_phase(t - dt);
        while (dphi > kPi) dphi -= 2.0 * kPi;
        while (dphi < -kPi) dphi += 2.0 * kPi;
        const double emergent = dphi / (2.0 * dt) / (2.0 * kPi);

        const double analytic = bistatic_doppler(
            tx.trajectory.position_at(t), rx.trajectory.position_at(t),
            cfg.targets[0].trajectory.position_at(t), cfg.targets[0].trajectory.velocity_at(t),
            cfg.carrier_hz);
        CHECK(emergent == doctest::Approx(analytic).epsilon(1e-6));
    }
}

TEST_CASE("superposition: multi-path response equals the sum of single paths") {
    const std::vector<PathComponent> paths{
        {1.0e-7, Complex{0.5, 0.1}, PathKind::los},
        {2.3e-7, Complex{-0.2, 0.4}, PathKind::target},
        {4.1e-7, Complex{0.05, -0.33}, PathKind::clutter},
    };
    const int k = 128;
    const auto all = synthesize_components(paths, k, 50e6, 3e9);
    std::vector<Complex> sum(k, Complex{0, 0});
    for (const auto& p : paths) {
        const auto one = synthesize_components({p}, k, 50e6, 3e9);
        for (int i = 0; i < k; ++i) sum[i] += one[i];
    }
    for (int i = 0; i < k; ++i) {
        CHECK(std::abs(all[i] - sum[i]) <= 1e-12 * std::abs(all[i]) + 1e-15);
    }
}

TEST_CASE("noise-off response magnitude is bounded by the amplitude sum") {
    ScenarioConfig cfg = base_scenario();
    cfg.targets = {moving_target({30.0, 40.0, 10.0}, {5.0, 0.0, 0.0}, cfg.duration_s)};
    cfg.clutter.n_clusters = 8;
    cfg.clutter.region_min_m = {-50, -50, 0};
    cfg.clutter.region_max_m = {100, 100, 30};
    ChannelSynthesizer synth(cfg);

    const auto paths = synth.paths_at(0, 0.03);
    double amp_sum = 0.0;
    for (const auto& p : paths) amp_sum += std::abs(p.amplitude);
    for (const auto& v : synth.link_response(0, 0.03)) CHECK(std::abs(v) <= amp_sum + 1e-12);
}

TEST_CASE("configured noise power is reproduced within 5 percent per subcarrier") {
    ScenarioConfig cfg = base_scenario();
    cfg.n_subcarriers = 8;
    cfg.noise_power_dbm = -90.0;
    cfg.duration_s = 10.0;  // 10^4 snapshots
    ChannelSynthesizer synth(cfg);

    const std::size_t n = cfg.n_snapshots();
    REQUIRE(n == 10000);
    const double p_noise = dbm_to_power(cfg.noise_power_dbm);

    // LOS is constant; the per-subcarrier variance around the mean is the
    // noise power.
    std::vector<Complex> mean(8, Complex{0, 0});
    std::vector<CfrSnapshot> snaps(n);
    for (std::size_t i = 0; i < n; ++i) {
        snaps[i] = synth.snapshot(i);
        for (int k = 0; k < 8; ++k)
            mean[k] += Complex(snaps[i].links[0][k].real(), snaps[i].links[0][k].imag());
    }
    for (auto& m : mean) m /= static_cast<double>(n);
    for (int k = 0; k < 8; ++k) {
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const Complex v(snaps[i].links[0][k].real(), snaps[i].links[0][k].imag());
            var += std::norm(v - mean[k]);
        }
        var /= static_cast<double>(n - 1);
        CHECK(var == doctest::Approx(p_noise).epsilon(0.05));
    }
}

TEST_CASE("stream has exactly duration times rate snapshots") {
    ScenarioConfig cfg = base_scenario();
    cfg.duration_s = 1.0;
    cfg.n_subcarriers = 8;
    const CfrStream stream = synthesize_stream(cfg);
    CHECK(stream.snapshots.size() == 1000);
    for (std::size_t i = 0; i < stream.snapshots.size(); ++i)
        CHECK(stream.snapshots[i].t_s == doctest::Approx(i / 1000.0));
}

TEST_CASE("same seed gives bit-identical streams; different seed differs") {
    ScenarioConfig cfg = base_scenario();
    cfg.duration_s = 0.05;
    cfg.n_subcarriers = 16;
    cfg.noise_power_dbm = -90.0;

    const CfrStream a = synthesize_stream(cfg);
    const CfrStream b = synthesize_stream(cfg);
    REQUIRE(a.snapshots.size() == b.snapshots.size());
    for (std::size_t i = 0; i < a.snapshots.size(); ++i)
        for (std::size_t k = 0; k < a.snapshots[i].links[0].size(); ++k)
            CHECK(a.snapshots[i].links[0][k] == b.snapshots[i].links[0][k]);

    cfg.rng_seed = 999;
    const CfrStream c = synthesize_stream(cfg);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.snapshots.size() && !any_diff; ++i)
        for (std::size_t k = 0; k < a.snapshots[i].links[0].size(); ++k)
            if (a.snapshots[i].links[0][k] != c.snapshots[i].links[0][k]) any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("restarting the stream mid-way reproduces the remaining snapshots bitwise") {
    ScenarioConfig cfg = base_scenario();
    cfg.duration_s = 0.05;
    cfg.n_subcarriers = 16;
    cfg.noise_power_dbm = -95.0;
    cfg.targets = {moving_target({30.0, 40.0, 10.0}, {3.0, 2.0, 0.0}, cfg.duration_s)};

    const CfrStream full = synthesize_stream(cfg);
    ChannelSynthesizer restarted(cfg);  // fresh synthesizer, seek to n
    for (std::size_t n = 20; n < full.snapshots.size(); ++n) {
        const CfrSnapshot snap = restarted.snapshot(n);
        for (std::size_t k = 0; k < snap.links[0].size(); ++k)
            CHECK(snap.links[0][k] == full.snapshots[n].links[0][k]);
    }
}

TEST_CASE("static clutter contributes identical phasors in every snapshot") {
    ScenarioConfig cfg = base_scenario();
    cfg.clutter.n_clusters = 4;
    cfg.clutter.region_min_m = {-50, -50, 0};
    cfg.clutter.region_max_m = {100, 100, 30};
    ChannelSynthesizer synth(cfg);

    const auto phasor_of = [&](double t) {
        std::vector<Complex> acc;
        for (const auto& p : synth.paths_at(0, t))
            if (p.kind == PathKind::clutter)
                acc.push_back(p.amplitude *
                              std::polar(1.0, -2.0 * kPi * cfg.carrier_hz * p.delay_s));
        return acc;
    };
    const auto a = phasor_of(0.0);
    const auto b = phasor_of(0.07);
    REQUIRE(a.size() == 4);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("rotor tips add one path component per blade") {
    ScenarioConfig cfg = base_scenario();
    TargetSpec t = moving_target({30.0, 40.0, 10.0}, {0, 0, 0}, cfg.duration_s);
    RotorSpec rotor;
    rotor.n_blades = 4;
    rotor.blade_radius_m = 0.15;
    rotor.rotation_hz = 60.0;
    rotor.plane_normal = {0, 0, 1};
    rotor.tip_amplitude = {0.05, 0.0};
    t.rotor = rotor;
    cfg.targets = {t};

    const auto paths = paths_at(cfg, 0, 0.01);
    int rotor_count = 0, target_count = 0;
    for (const auto& p : paths) {
        rotor_count += p.kind == PathKind::rotor ? 1 : 0;
        target_count += p.kind == PathKind::target ? 1 : 0;
    }
    CHECK(rotor_count == 4);
    CHECK(target_count == 1);
}
