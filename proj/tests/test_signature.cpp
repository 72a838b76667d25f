#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "isac/scenario.hpp"
#include "isac/signature.hpp"

using namespace isac;

namespace {

ReflectivityTable make_2x2(double g00, double g01, double g10, double g11) {
    return ReflectivityTable({2e9, 4e9}, {10.0, 50.0},
                             {Complex{g00, 0}, Complex{g01, 0}, Complex{g10, 0}, Complex{g11, 0}},
                             "vv");
}

// Monostatic slow-time series of a rotating tip scatterer: the independent
// point-scatterer simulation oracle behind the spectrogram checks.
std::vector<Complex> rotor_series(const RotorSpec& rotor, const Vec3& hub, const Vec3& radar,
                                  double carrier_hz, double rate_hz, std::size_t n) {
    std::vector<Complex> series(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / rate_hz;
        Complex acc{0.0, 0.0};
        for (const auto& tip : rotor_scatterers(rotor, hub, t)) {
            const double tau = 2.0 * (tip.position - radar).norm() / kSpeedOfLight;
            acc += tip.gain * std::polar(1.0, -2.0 * kPi * carrier_hz * tau);
        }
        series[i] = acc;
    }
    return series;
}

}  // namespace

TEST_CASE("lookup reproduces grid points exactly") {
    const ReflectivityTable t = make_2x2(1.0, 2.0, 3.0, 4.0);
    CHECK(t.lookup(2e9, 10.0) == Complex{1.0, 0.0});
    CHECK(t.lookup(2e9, 50.0) == Complex{2.0, 0.0});
    CHECK(t.lookup(4e9, 10.0) == Complex{3.0, 0.0});
    CHECK(t.lookup(4e9, 50.0) == Complex{4.0, 0.0});
}

TEST_CASE("constant table returns the constant everywhere") {
    const ReflectivityTable t = make_2x2(0.7, 0.7, 0.7, 0.7);
    for (double f : {2e9, 2.7e9, 3.9e9})
        for (double b : {10.0, 23.0, 50.0})
            CHECK(t.lookup(f, b).real() == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("bilinear closed form at the cell center") {
    const ReflectivityTable t = make_2x2(1.0, 2.0, 3.0, 4.0);
    CHECK(t.lookup(3e9, 30.0).real() == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("out-of-span queries clamp to the nearest edge") {
    const ReflectivityTable t = make_2x2(1.0, 2.0, 3.0, 4.0);
    CHECK(t.lookup(1e9, 10.0).real() == doctest::Approx(1.0));
    CHECK(t.lookup(9e9, 50.0).real() == doctest::Approx(4.0));
    CHECK(t.lookup(2e9, 0.0).real() == doctest::Approx(1.0));
    CHECK(t.lookup(4e9, 170.0).real() == doctest::Approx(4.0));
}

TEST_CASE("lookup is continuous across interior grid lines") {
    const ReflectivityTable t(
        {2e9, 3e9, 4e9}, {10.0, 30.0, 60.0},
        {Complex{1, 1}, Complex{2, -1}, Complex{3, 0}, Complex{4, 2}, Complex{5, -3},
         Complex{6, 1}, Complex{7, 0}, Complex{8, 4}, Complex{9, -2}},
        "hh");
    for (double f : {3e9}) {
        for (double b : {30.0}) {
            const Complex lo = t.lookup(f - 1e-9, b - 1e-9);
            const Complex hi = t.lookup(f + 1e-9, b + 1e-9);
            CHECK(std::abs(lo - hi) / std::abs(lo) < 1e-6);
        }
    }
}

TEST_CASE("empty table is a configuration error") {
    CHECK_THROWS_AS(ReflectivityTable({}, {10.0}, {}, "vv"), ConfigError);
    CHECK_THROWS_AS(ReflectivityTable({2e9}, {10.0}, {Complex{1, 0}, Complex{2, 0}}, "vv"),
                    ConfigError);
}

TEST_CASE("table file round trip is bit exact") {
    // Values chosen representable in float32 so the raw payload is lossless.
    std::vector<Complex> gains;
    for (int i = 0; i < 6; ++i)
        gains.push_back({static_cast<float>(i) * 0.25f, static_cast<float>(-i) * 0.5f});
    const ReflectivityTable table({2e9, 10e9, 18e9}, {10.0, 180.0}, gains, "vh");

    const auto dir = std::filesystem::temp_directory_path() / "isac_test_refl";
    std::filesystem::create_directories(dir);
    const auto json_path = dir / "table.json";
    write_reflectivity_table(table, json_path);
    const ReflectivityTable back = read_reflectivity_table(json_path);

    REQUIRE(back.n_freq() == 3);
    REQUIRE(back.n_angle() == 2);
    CHECK(back.polarization_tag() == "vh");
    for (std::size_t i = 0; i < gains.size(); ++i) CHECK(back.gains()[i] == gains[i]);

    // Writing the reread table again reproduces the binary byte for byte.
    const auto json2 = dir / "table2.json";
    write_reflectivity_table(back, json2);
    std::ifstream a(dir / "table.bin", std::ios::binary);
    std::ifstream b(dir / "table2.bin", std::ios::binary);
    const std::string bytes_a((std::istreambuf_iterator<char>(a)), {});
    const std::string bytes_b((std::istreambuf_iterator<char>(b)), {});
    CHECK(bytes_a == bytes_b);
    CHECK(bytes_a.size() == 6 * 2 * sizeof(float));
}

TEST_CASE("truncated table payload raises a length mismatch") {
    const ReflectivityTable table = make_2x2(1, 2, 3, 4);
    const auto dir = std::filesystem::temp_directory_path() / "isac_test_refl_trunc";
    std::filesystem::create_directories(dir);
    write_reflectivity_table(table, dir / "t.json");
    std::filesystem::resize_file(dir / "t.bin", 8);
    CHECK_THROWS_AS(read_reflectivity_table(dir / "t.json"), LengthMismatchError);
}

TEST_CASE("rotor scatterers sit on the blade circle at all times") {
    RotorSpec rotor;
    rotor.n_blades = 3;
    rotor.blade_radius_m = 0.21;
    rotor.rotation_hz = 47.0;
    rotor.plane_normal = Vec3{1.0, 2.0, 2.0}.normalized();
    rotor.phase0_rad = 0.4;
    const Vec3 hub{5.0, -3.0, 12.0};

    for (double t = 0.0; t < 0.05; t += 0.0013) {
        const auto tips = rotor_scatterers(rotor, hub, t);
        REQUIRE(tips.size() == 3);
        for (const auto& tip : tips) {
            CHECK(std::abs((tip.position - hub).norm() - rotor.blade_radius_m) < 1e-9);
            // Tips stay in the rotation plane.
            CHECK(std::abs((tip.position - hub).dot(rotor.plane_normal)) < 1e-9);
        }
    }
}

TEST_CASE("zero rotation rate freezes the tips") {
    RotorSpec rotor;
    rotor.n_blades = 2;
    rotor.blade_radius_m = 0.1;
    rotor.rotation_hz = 0.0;
    const auto a = rotor_scatterers(rotor, {0, 0, 0}, 0.0);
    const auto b = rotor_scatterers(rotor, {0, 0, 0}, 12.3);
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK((a[i].position - b[i].position).norm() < 1e-12);
}

TEST_CASE("one full period returns the tips to their start") {
    RotorSpec rotor;
    rotor.n_blades = 3;
    rotor.blade_radius_m = 0.3;
    rotor.rotation_hz = 50.0;
    const auto a = rotor_scatterers(rotor, {1, 2, 3}, 0.0);
    const auto b = rotor_scatterers(rotor, {1, 2, 3}, 1.0 / 50.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK((a[i].position - b[i].position).norm() < 1e-9);
}

TEST_CASE("two blades are antipodal about the hub") {
    RotorSpec rotor;
    rotor.n_blades = 2;
    rotor.blade_radius_m = 0.25;
    rotor.rotation_hz = 31.0;
    const Vec3 hub{2, 2, 2};
    for (double t : {0.0, 0.004, 0.013}) {
        const auto tips = rotor_scatterers(rotor, hub, t);
        const Vec3 sum = (tips[0].position - hub) + (tips[1].position - hub);
        CHECK(sum.norm() < 1e-9);
    }
}

TEST_CASE("non-unit plane normal is rejected") {
    RotorSpec rotor;
    rotor.plane_normal = {1.0, 1.0, 0.0};
    CHECK_THROWS_AS(rotor_scatterers(rotor, {0, 0, 0}, 0.0), ConfigError);
}

TEST_CASE("spectrogram of an on-bin tone peaks at its bin in every column") {
    const double rate = 1000.0;
    const std::size_t window = 64, hop = 16;
    const double tone = 125.0;  // bin 8 above center at 1000/64 Hz resolution
    std::vector<Complex> series(512);
    for (std::size_t i = 0; i < series.size(); ++i)
        series[i] = std::polar(1.0, 2.0 * kPi * tone * i / rate);

    const Spectrogram spec = spectrogram(series, rate, window, hop);
    for (std::size_t col = 0; col < spec.n_cols(); ++col) {
        std::size_t best = 0;
        for (std::size_t b = 1; b < spec.n_bins(); ++b)
            if (spec.at(col, b) > spec.at(col, best)) best = b;
        CHECK(spec.doppler_axis_hz[best] == doctest::Approx(tone));
    }
}

TEST_CASE("all-zero series yields an all-zero spectrogram") {
    const Spectrogram spec = spectrogram(std::vector<Complex>(256), 1000.0, 64, 8);
    for (double v : spec.power) CHECK(v == 0.0);
}

TEST_CASE("series shorter than the window is a size error") {
    CHECK_THROWS_AS(spectrogram(std::vector<Complex>(10), 1000.0, 64, 8), SizeError);
}

TEST_CASE("column power never exceeds the windowed segment energy") {
    // Unitary DFT: per-column power <= segment energy <= series energy.
    std::vector<Complex> series(300);
    for (std::size_t i = 0; i < series.size(); ++i)
        series[i] = std::polar(1.5, 0.1 * i) + Complex{0.2, -0.3};
    double series_energy = 0.0;
    for (const auto& v : series) series_energy += std::norm(v);

    const Spectrogram spec = spectrogram(series, 500.0, 32, 8);
    double window_energy = 0.0;
    for (std::size_t n = 0; n < 32; ++n) {
        const double w = 0.5 - 0.5 * std::cos(2.0 * kPi * n / 32);
        window_energy += w * w;
    }
    for (std::size_t col = 0; col < spec.n_cols(); ++col) {
        double col_energy = 0.0;
        for (std::size_t b = 0; b < spec.n_bins(); ++b) col_energy += spec.at(col, b);
        CHECK(col_energy <= window_energy * series_energy + 1e-9);
    }
}

TEST_CASE("rotating tip traces a sinusoid: period and excursion vs the geometry oracle") {
    RotorSpec rotor;
    rotor.n_blades = 1;
    rotor.blade_radius_m = 0.2;
    rotor.rotation_hz = 50.0;
    rotor.plane_normal = {0.0, 0.0, 1.0};  // radar LOS lies in the rotation plane
    const Vec3 hub{0, 0, 0};
    const Vec3 radar{100.0, 0.0, 0.0};
    const double fc = 3e9;
    const double rate = 8000.0;

    const auto series = rotor_series(rotor, hub, radar, fc, rate, 4000);
    const Spectrogram spec = spectrogram(series, rate, 256, 4);

    // Trace period: one rotation = 20 ms.
    CHECK(trace_period(spec) == doctest::Approx(0.020).epsilon(0.02));

    // Peak Doppler excursion ~ 2 * (2 pi f_rot r) * fc / c ~ 1257 Hz; oracle
    // from bistatic_doppler on the rotating tip with finite-difference velocity.
    double oracle_max = 0.0;
    const double h = 1e-6;
    for (double t = 0.0; t < 0.02; t += 1e-4) {
        const Vec3 tip0 = rotor_scatterers(rotor, hub, t - h)[0].position;
        const Vec3 tip1 = rotor_scatterers(rotor, hub, t + h)[0].position;
        const Vec3 tip = rotor_scatterers(rotor, hub, t)[0].position;
        const Vec3 vel = (tip1 - tip0) / (2.0 * h);
        oracle_max = std::max(oracle_max, std::abs(bistatic_doppler(radar, radar, tip, vel, fc)));
    }
    CHECK(oracle_max == doctest::Approx(1257.0).epsilon(0.01));

    // Measured excursion: outermost Doppler bin whose power stays within
    // 10 dB of the spectrogram maximum (the blade-flash edge lobes).
    double global_max = 0.0;
    for (double v : spec.power) global_max = std::max(global_max, v);
    double measured_max = 0.0;
    for (std::size_t col = 0; col < spec.n_cols(); ++col)
        for (std::size_t b = 0; b < spec.n_bins(); ++b)
            if (spec.at(col, b) >= 0.1 * global_max)
                measured_max = std::max(measured_max, std::abs(spec.doppler_axis_hz[b]));
    CHECK(measured_max == doctest::Approx(oracle_max).epsilon(0.08));
}

TEST_CASE("flash rate equals blades times rotation rate") {
    const Vec3 hub{0, 0, 0};
    const Vec3 radar{100.0, 0.0, 0.0};
    const double fc = 3e9;
    const double rate = 8000.0;

    RotorSpec rotor;
    rotor.blade_radius_m = 0.2;
    rotor.rotation_hz = 50.0;
    rotor.plane_normal = {0.0, 0.0, 1.0};

    rotor.n_blades = 2;
    {
        const auto series = rotor_series(rotor, hub, radar, fc, rate, 4000);
        const Spectrogram spec = spectrogram(series, rate, 256, 4);
        CHECK(flash_rate(spec) == doctest::Approx(100.0).epsilon(0.02));
    }
    rotor.n_blades = 1;
    {
        const auto series = rotor_series(rotor, hub, radar, fc, rate, 4000);
        const Spectrogram spec = spectrogram(series, rate, 256, 4);
        CHECK(flash_rate(spec) == doctest::Approx(50.0).epsilon(0.02));
    }
}

TEST_CASE("flash rate is invariant to uniform amplitude scaling") {
    RotorSpec rotor;
    rotor.n_blades = 2;
    rotor.blade_radius_m = 0.2;
    rotor.rotation_hz = 40.0;
    rotor.plane_normal = {0.0, 0.0, 1.0};
    auto series = rotor_series(rotor, {0, 0, 0}, {80, 0, 0}, 3e9, 8000.0, 4000);
    const double r1 = flash_rate(spectrogram(series, 8000.0, 256, 4));
    for (auto& v : series) v *= 3.7;
    const double r2 = flash_rate(spectrogram(series, 8000.0, 256, 4));
    // The integer autocorrelation argmax is scale invariant; the sub-lag
    // refinement agrees to rounding.
    CHECK(std::abs(r1 - r2) < 1e-9 * r1);
}

TEST_CASE("static scene has no flash") {
    std::vector<Complex> series(2048, std::polar(1.0, 0.3));
    const Spectrogram spec = spectrogram(series, 8000.0, 256, 4);
    CHECK_THROWS_AS(flash_rate(spec), InsufficientDataError);
}

TEST_CASE("too-short spectrogram is insufficient data") {
    std::vector<Complex> series(300);
    for (std::size_t i = 0; i < series.size(); ++i)
        series[i] = std::polar(1.0, 2.0 * kPi * 100.0 * i / 8000.0);
    const Spectrogram spec = spectrogram(series, 8000.0, 256, 16);  // 3 columns
    CHECK_THROWS_AS(flash_rate(spec), InsufficientDataError);
}
