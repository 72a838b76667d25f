#include "isac/signature.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "isac/fft.hpp"
#include "json.hpp"

namespace isac {

using nlohmann::json;

ReflectivityTable::ReflectivityTable(std::vector<double> freq_grid_hz,
                                     std::vector<double> angle_grid_deg,
                                     std::vector<Complex> gains, std::string polarization_tag)
    : freq_grid_hz_(std::move(freq_grid_hz)),
      angle_grid_deg_(std::move(angle_grid_deg)),
      gains_(std::move(gains)),
      polarization_tag_(std::move(polarization_tag)) {
    if (freq_grid_hz_.empty() || angle_grid_deg_.empty())
        throw ConfigError("reflectivity table grids must be non-empty");
    if (gains_.size() != freq_grid_hz_.size() * angle_grid_deg_.size())
        throw ConfigError("reflectivity table gain matrix does not match grid dimensions");
    for (std::size_t i = 1; i < freq_grid_hz_.size(); ++i)
        if (!(freq_grid_hz_[i] > freq_grid_hz_[i - 1]))
            throw ConfigError("reflectivity frequency grid must be strictly ascending");
    for (std::size_t i = 1; i < angle_grid_deg_.size(); ++i)
        if (!(angle_grid_deg_[i] > angle_grid_deg_[i - 1]))
            throw ConfigError("reflectivity angle grid must be strictly ascending");
    if (angle_grid_deg_.front() < 0.0 || angle_grid_deg_.back() > 180.0)
        throw ConfigError("reflectivity angle grid must lie in [0, 180] degrees");
    for (const auto& g : gains_)
        if (!std::isfinite(g.real()) || !std::isfinite(g.imag()))
            throw ConfigError("reflectivity table contains non-finite gains");
}

namespace {

// Index i and normalized offset u with grid[i] <= q < grid[i+1]; clamps and
// reports whether clamping occurred. Single-point grids collapse to (0, 0).
struct GridPos {
    std::size_t i;
    double u;
    bool clamped;
};

GridPos locate(const std::vector<double>& grid, double q) {
    if (grid.size() == 1) return {0, 0.0, q != grid.front()};
    if (q <= grid.front()) return {0, 0.0, q < grid.front()};
    if (q >= grid.back()) return {grid.size() - 2, 1.0, q > grid.back()};
    const auto it = std::upper_bound(grid.begin(), grid.end(), q);
    const std::size_t i = static_cast<std::size_t>(std::distance(grid.begin(), it)) - 1;
    return {i, (q - grid[i]) / (grid[i + 1] - grid[i]), false};
}

}  // namespace

Complex ReflectivityTable::lookup(double f_hz, double beta_deg) const {
    const GridPos fp = locate(freq_grid_hz_, f_hz);
    const GridPos ap = locate(angle_grid_deg_, beta_deg);
    if ((fp.clamped || ap.clamped) && !clamp_warned_.exchange(true)) {
        std::cerr << "warning: reflectivity query (" << f_hz << " Hz, " << beta_deg
                  << " deg) outside table span; clamping to grid edge\n";
    }
    const std::size_t na = n_angle();
    const std::size_t f1 = std::min(fp.i + 1, n_freq() - 1);
    const std::size_t a1 = std::min(ap.i + 1, na - 1);
    const Complex g00 = gains_[fp.i * na + ap.i];
    const Complex g01 = gains_[fp.i * na + a1];
    const Complex g10 = gains_[f1 * na + ap.i];
    const Complex g11 = gains_[f1 * na + a1];
    const double fu = fp.u, au = ap.u;
    return g00 * ((1.0 - fu) * (1.0 - au)) + g01 * ((1.0 - fu) * au) +
           g10 * (fu * (1.0 - au)) + g11 * (fu * au);
}

void write_reflectivity_table(const ReflectivityTable& table,
                              const std::filesystem::path& json_path) {
    std::filesystem::path bin_path = json_path;
    bin_path.replace_extension(".bin");

    json j;
    j["freq_grid_hz"] = table.freq_grid_hz();
    j["angle_grid_deg"] = table.angle_grid_deg();
    j["polarization_tag"] = table.polarization_tag();
    j["n_freq"] = table.n_freq();
    j["n_angle"] = table.n_angle();
    j["data_file"] = bin_path.filename().string();

    std::ofstream jout(json_path);
    if (!jout) throw DataError("cannot write " + json_path.string());
    jout << j.dump(2) << "\n";

    std::ofstream bout(bin_path, std::ios::binary);
    if (!bout) throw DataError("cannot write " + bin_path.string());
    for (const auto& g : table.gains()) {
        const float re = static_cast<float>(g.real());
        const float im = static_cast<float>(g.imag());
        bout.write(reinterpret_cast<const char*>(&re), sizeof(float));
        bout.write(reinterpret_cast<const char*>(&im), sizeof(float));
    }
}

ReflectivityTable read_reflectivity_table(const std::filesystem::path& json_path) {
    std::ifstream jin(json_path);
    if (!jin) throw FileMissingError("reflectivity table header missing: " + json_path.string());
    json j;
    try {
        jin >> j;
    } catch (const json::exception& e) {
        throw DataError("reflectivity table header " + json_path.string() + ": " + e.what());
    }

    std::vector<double> freqs = j.at("freq_grid_hz").get<std::vector<double>>();
    std::vector<double> angles = j.at("angle_grid_deg").get<std::vector<double>>();
    const std::size_t nf = j.at("n_freq").get<std::size_t>();
    const std::size_t na = j.at("n_angle").get<std::size_t>();
    if (nf != freqs.size() || na != angles.size())
        throw DataError("reflectivity table header dimensions disagree with grids");

    const std::filesystem::path bin_path =
        json_path.parent_path() / j.at("data_file").get<std::string>();
    std::ifstream bin(bin_path, std::ios::binary | std::ios::ate);
    if (!bin) throw FileMissingError("reflectivity table data missing: " + bin_path.string());
    const std::size_t expected = nf * na * 2 * sizeof(float);
    const std::size_t actual = static_cast<std::size_t>(bin.tellg());
    if (actual != expected)
        throw LengthMismatchError("reflectivity table data: expected " + std::to_string(expected) +
                                  " bytes, found " + std::to_string(actual));
    bin.seekg(0);

    std::vector<Complex> gains(nf * na);
    for (auto& g : gains) {
        float re = 0.0f, im = 0.0f;
        bin.read(reinterpret_cast<char*>(&re), sizeof(float));
        bin.read(reinterpret_cast<char*>(&im), sizeof(float));
        g = {re, im};
    }
    return ReflectivityTable(std::move(freqs), std::move(angles), std::move(gains),
                             j.value("polarization_tag", std::string{}));
}

std::vector<RotorScatterer> rotor_scatterers(const RotorSpec& rotor, const Vec3& hub_pos,
                                             double t_s) {
    rotor.validate();
    const Vec3 n = rotor.plane_normal;

    // Fixed in-plane basis: pick the global axis least aligned with n.
    const double ax = std::abs(n.x), ay = std::abs(n.y), az = std::abs(n.z);
    Vec3 a{1.0, 0.0, 0.0};
    if (ay <= ax && ay <= az)
        a = {0.0, 1.0, 0.0};
    else if (az <= ax && az <= ay)
        a = {0.0, 0.0, 1.0};
    const Vec3 e1 = n.cross(a).normalized();
    const Vec3 e2 = n.cross(e1);

    std::vector<RotorScatterer> out;
    out.reserve(static_cast<std::size_t>(rotor.n_blades));
    for (int blade = 0; blade < rotor.n_blades; ++blade) {
        const double theta = 2.0 * kPi * rotor.rotation_hz * t_s + rotor.phase0_rad +
                             2.0 * kPi * blade / rotor.n_blades;
        const Vec3 tip =
            hub_pos + (e1 * std::cos(theta) + e2 * std::sin(theta)) * rotor.blade_radius_m;
        out.push_back({tip, rotor.tip_amplitude});
    }
    return out;
}

Spectrogram spectrogram(const std::vector<Complex>& series, double rate_hz,
                        std::size_t window_len, std::size_t hop) {
    if (window_len == 0 || hop == 0) throw SizeError("spectrogram window_len and hop must be >= 1");
    if (series.size() < window_len)
        throw SizeError("spectrogram: series length " + std::to_string(series.size()) +
                        " shorter than window " + std::to_string(window_len));

    std::vector<double> window(window_len);
    for (std::size_t n = 0; n < window_len; ++n)
        window[n] = 0.5 - 0.5 * std::cos(2.0 * kPi * n / window_len);

    const std::size_t n_cols = (series.size() - window_len) / hop + 1;
    const std::size_t half = window_len / 2;

    Spectrogram spec;
    spec.doppler_axis_hz.resize(window_len);
    for (std::size_t b = 0; b < window_len; ++b)
        spec.doppler_axis_hz[b] =
            (static_cast<double>(b) - static_cast<double>(half)) * rate_hz / window_len;
    spec.time_axis_s.resize(n_cols);
    spec.power.assign(n_cols * window_len, 0.0);

    std::vector<Complex> buf(window_len), out(window_len);
    const double norm = 1.0 / std::sqrt(static_cast<double>(window_len));
    for (std::size_t col = 0; col < n_cols; ++col) {
        const std::size_t start = col * hop;
        spec.time_axis_s[col] = (start + (window_len - 1) * 0.5) / rate_hz;
        for (std::size_t n = 0; n < window_len; ++n) buf[n] = series[start + n] * window[n];
        fft_forward(buf.data(), out.data(), window_len);
        // fftshift: output bin b holds DFT bin (b + ceil(N/2)) mod N, placing
        // zero Doppler at index floor(N/2).
        for (std::size_t b = 0; b < window_len; ++b) {
            const std::size_t q = (b + window_len - half) % window_len;
            spec.power[col * window_len + b] = std::norm(out[q] * norm);
        }
    }
    return spec;
}

namespace {

// Fundamental periodicity of a signal from its unbiased autocorrelation over
// lags [2, max_lag]: the earliest local maximum whose height reaches 80% of
// the strongest one (harmonic peaks of an exactly periodic signal are equal
// under per-term normalization, so the earliest strong peak is the
// fundamental). Parabolic sub-lag refinement. Returns (lag, height / r(0)).
std::pair<double, double> dominant_autocorr_peak(const std::vector<double>& signal,
                                                 std::size_t max_lag) {
    const std::size_t n = signal.size();
    if (max_lag + 1 >= n || max_lag < 3) return {0.0, 0.0};
    double mean = 0.0;
    for (double v : signal) mean += v;
    mean /= static_cast<double>(n);

    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = signal[i] - mean;

    double r0 = 0.0, ms = 0.0;
    for (double v : x) r0 += v * v;
    for (double v : signal) ms += v * v;
    r0 /= static_cast<double>(n);
    ms /= static_cast<double>(n);
    // A variance at rounding level of the raw signal is no modulation at all.
    if (r0 <= 1e-20 * ms) return {0.0, 0.0};

    std::vector<double> r(max_lag + 1, 0.0);
    for (std::size_t lag = 1; lag <= max_lag; ++lag) {
        double acc = 0.0;
        for (std::size_t i = 0; i + lag < n; ++i) acc += x[i] * x[i + lag];
        r[lag] = acc / static_cast<double>(n - lag);
    }

    std::vector<std::size_t> peaks;
    double h_max = 0.0;
    for (std::size_t lag = 2; lag + 1 <= max_lag; ++lag) {
        if (r[lag] >= r[lag - 1] && r[lag] >= r[lag + 1]) {
            peaks.push_back(lag);
            h_max = std::max(h_max, r[lag]);
        }
    }
    if (peaks.empty() || h_max <= 0.0) return {0.0, 0.0};

    std::size_t best = 0;
    for (std::size_t lag : peaks) {
        if (r[lag] >= 0.8 * h_max) {
            best = lag;
            break;
        }
    }
    const double ym = r[best - 1], y0 = r[best], yp = r[best + 1];
    const double denom = ym - 2.0 * y0 + yp;
    const double delta = (denom < 0.0) ? std::clamp((ym - yp) / (2.0 * denom), -0.5, 0.5) : 0.0;
    return {static_cast<double>(best) + delta, y0 / r0};
}

}  // namespace

double flash_rate(const Spectrogram& spec, const FlashRateOptions& opts) {
    const std::size_t n_cols = spec.n_cols();
    const std::size_t n_bins = spec.n_bins();
    if (n_cols < 16) throw InsufficientDataError("flash_rate: spectrogram too short");
    if (n_bins == 0) throw InsufficientDataError("flash_rate: empty spectrogram");

    // Per-column spectral bandwidth occupancy (bins above median + threshold)
    // and signed Doppler centroid. Occupancy is blind to the Doppler sign, so
    // a single blade's approach/recede flashes look identical to it; the
    // centroid carries the sign and disambiguates that case.
    const double thresh_factor = db_to_linear_power(opts.occupancy_threshold_db);
    std::vector<double> occupancy(n_cols, 0.0);
    std::vector<double> centroid(n_cols, 0.0);
    std::vector<double> column(n_bins);
    for (std::size_t col = 0; col < n_cols; ++col) {
        for (std::size_t b = 0; b < n_bins; ++b) column[b] = spec.at(col, b);
        std::vector<double> sorted = column;
        std::nth_element(sorted.begin(), sorted.begin() + n_bins / 2, sorted.end());
        const double median = sorted[n_bins / 2];
        const double threshold = median * thresh_factor;
        int count = 0;
        double weighted = 0.0, total = 0.0;
        for (std::size_t b = 0; b < n_bins; ++b) {
            if (column[b] > threshold && column[b] > 0.0) ++count;
            weighted += spec.doppler_axis_hz[b] * column[b];
            total += column[b];
        }
        occupancy[col] = count;
        centroid[col] = total > 0.0 ? weighted / total : 0.0;
    }

    // Requiring the peak lag within n_cols/3 enforces >= 3 observed periods.
    const auto [occ_lag, occ_height] = dominant_autocorr_peak(occupancy, n_cols / 3);
    const auto [cen_lag, cen_height] = dominant_autocorr_peak(centroid, n_cols / 3);

    double lag = occ_lag, height = occ_height;
    if (cen_height >= opts.min_peak_correlation && cen_lag > 0.0) {
        lag = cen_lag;
        height = cen_height;
    }
    if (lag <= 0.0 || height < opts.min_peak_correlation)
        throw InsufficientDataError("flash_rate: no periodic blade flash found in spectrogram");

    const double column_interval =
        (n_cols > 1) ? (spec.time_axis_s[1] - spec.time_axis_s[0]) : 0.0;
    if (column_interval <= 0.0) throw InsufficientDataError("flash_rate: degenerate time axis");
    return 1.0 / (lag * column_interval);
}

double trace_period(const Spectrogram& spec, double min_peak_correlation) {
    const std::size_t n_cols = spec.n_cols();
    if (n_cols < 16) throw InsufficientDataError("trace_period: spectrogram too short");

    std::vector<double> trace(n_cols, 0.0);
    for (std::size_t col = 0; col < n_cols; ++col) {
        std::size_t best = 0;
        for (std::size_t b = 1; b < spec.n_bins(); ++b)
            if (spec.at(col, b) > spec.at(col, best)) best = b;
        trace[col] = spec.doppler_axis_hz[best];
    }

    const auto [lag, height] = dominant_autocorr_peak(trace, n_cols / 3);
    if (lag <= 0.0 || height < min_peak_correlation)
        throw InsufficientDataError("trace_period: no periodic micro-Doppler trace found");

    const double column_interval = spec.time_axis_s[1] - spec.time_axis_s[0];
    return lag * column_interval;
}

}  // namespace isac
