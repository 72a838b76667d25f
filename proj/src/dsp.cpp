#include "isac/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <tuple>

#include "isac/fft.hpp"

namespace isac {

void DspConfig::validate() const {
    if (cpi_len < 8) throw ConfigError("cpi_len must be >= 8");
    if (beta_bg < 0.0 || beta_bg >= 1.0) throw ConfigError("beta_bg must be in [0, 1)");
    if (notch_halfwidth_bins < 0) throw ConfigError("notch_halfwidth_bins must be >= 0");
    if (!(cfar.pfa > 0.0 && cfar.pfa < 0.5)) throw ConfigError("cfar pfa must be in (0, 0.5)");
    if (cfar.guard_delay < 0 || cfar.guard_doppler < 0)
        throw ConfigError("cfar guard cells must be >= 0");
    if (cfar.train_delay < 1 || cfar.train_doppler < 1)
        throw ConfigError("cfar training cells must be >= 1");
}

ChannelEstimate estimate_channel(const std::vector<Complex>& rx_spectrum,
                                 const std::vector<Complex>& tx_spectrum) {
    if (rx_spectrum.size() != tx_spectrum.size())
        throw SizeError("channel estimate: rx and tx spectra differ in length");
    double max_tx = 0.0;
    for (const auto& v : tx_spectrum) max_tx = std::max(max_tx, std::abs(v));
    if (max_tx <= 0.0) throw ConfigError("channel estimate: pilot spectrum is all zero");

    const double floor = 1e-6 * max_tx;
    ChannelEstimate est;
    est.h.resize(rx_spectrum.size());
    est.valid.resize(rx_spectrum.size());
    for (std::size_t k = 0; k < rx_spectrum.size(); ++k) {
        if (std::abs(tx_spectrum[k]) >= floor) {
            est.h[k] = rx_spectrum[k] / tx_spectrum[k];
            est.valid[k] = true;
        } else {
            est.h[k] = Complex{0.0, 0.0};
            est.valid[k] = false;
        }
    }
    return est;
}

namespace {

std::vector<double> hann_window(std::size_t n) {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / n);
    return w;
}

}  // namespace

DelayDopplerMap form_map(const std::vector<std::vector<Complex>>& snapshots, double bandwidth_hz,
                         double snapshot_rate_hz, int link, double cpi_start_s) {
    const std::size_t m = snapshots.size();
    if (m == 0) throw SizeError("form_map: empty CPI");
    const std::size_t k = snapshots.front().size();
    for (const auto& s : snapshots)
        if (s.size() != k) throw SizeError("form_map: ragged snapshot lengths");
    if (k == 0) throw SizeError("form_map: empty snapshots");

    const std::vector<double> wk = hann_window(k);
    const std::vector<double> wm = hann_window(m);
    double wk_sum = 0.0, wm_sum = 0.0;
    for (double v : wk) wk_sum += v;
    for (double v : wm) wm_sum += v;

    DelayDopplerMap map;
    map.link = link;
    map.cpi_start_s = cpi_start_s;
    map.delay_bin_s = 1.0 / bandwidth_hz;
    map.doppler_bin_hz = snapshot_rate_hz / static_cast<double>(m);
    map.n_delay = k;
    map.n_doppler = m;
    map.cells.assign(k * m, Complex{0.0, 0.0});

    // Subcarrier axis: windowed inverse DFT. With subcarriers centered on the
    // carrier (f_k = (k - K/2) B / K) the half-grid shift becomes a (-1)^d
    // factor, keeping delay bin 0 at tau = 0.
    std::vector<std::vector<Complex>> profiles(m, std::vector<Complex>(k));
    std::vector<Complex> buf(k);
    for (std::size_t s = 0; s < m; ++s) {
        for (std::size_t i = 0; i < k; ++i) buf[i] = snapshots[s][i] * wk[i];
        fft_inverse(buf.data(), profiles[s].data(), k);
        for (std::size_t d = 0; d < k; ++d) {
            profiles[s][d] /= wk_sum;
            if (d % 2 == 1) profiles[s][d] = -profiles[s][d];
        }
    }

    // Slow-time axis: windowed DFT per delay row, zero-centered.
    const std::size_t half = m / 2;
    std::vector<Complex> row(m), spec(m);
    for (std::size_t d = 0; d < k; ++d) {
        for (std::size_t s = 0; s < m; ++s) row[s] = profiles[s][d] * wm[s];
        fft_forward(row.data(), spec.data(), m);
        for (std::size_t v = 0; v < m; ++v) {
            const std::size_t q = (v + m - half) % m;
            map.at(d, v) = spec[q] / wm_sum;
        }
    }
    return map;
}

DelayDopplerMap BackgroundSubtractor::step(const DelayDopplerMap& z) {
    if (!initialized()) {
        state_ = z;
        DelayDopplerMap residual = z;
        std::fill(residual.cells.begin(), residual.cells.end(), Complex{0.0, 0.0});
        return residual;
    }
    if (state_.n_delay != z.n_delay || state_.n_doppler != z.n_doppler)
        throw SizeError("background step: map dimensions changed mid-stream");

    DelayDopplerMap residual = z;
    for (std::size_t i = 0; i < z.cells.size(); ++i) {
        residual.cells[i] = z.cells[i] - state_.cells[i];
        state_.cells[i] = beta_ * state_.cells[i] + (1.0 - beta_) * z.cells[i];
    }
    state_.cpi_start_s = z.cpi_start_s;
    return residual;
}

DelayDopplerMap notch_zero_doppler(DelayDopplerMap map, int halfwidth_bins) {
    const std::size_t zero = map.zero_doppler_bin();
    for (std::size_t v = 0; v < map.n_doppler; ++v) {
        const auto dist = std::llabs(static_cast<long long>(v) - static_cast<long long>(zero));
        if (dist <= halfwidth_bins)
            for (std::size_t d = 0; d < map.n_delay; ++d) map.at(d, v) = Complex{0.0, 0.0};
    }
    return map;
}

double cfar_alpha(int n_train, double pfa) {
    return n_train * (std::pow(pfa, -1.0 / n_train) - 1.0);
}

std::vector<CfarHit> cfar_detect(const DelayDopplerMap& map, const CfarConfig& cfg) {
    const std::size_t nd = map.n_delay;
    const std::size_t nv = map.n_doppler;
    const int gd = cfg.guard_delay, gv = cfg.guard_doppler;
    const int td = cfg.train_delay, tv = cfg.train_doppler;
    const int od = gd + td, ov = gv + tv;  // outer window half extents

    // Summed-area table over cell powers for O(1) box sums.
    std::vector<double> power(nd * nv);
    for (std::size_t i = 0; i < power.size(); ++i) power[i] = std::norm(map.cells[i]);
    std::vector<double> sat((nd + 1) * (nv + 1), 0.0);
    const auto sat_at = [&](std::size_t d, std::size_t v) -> double& {
        return sat[d * (nv + 1) + v];
    };
    for (std::size_t d = 0; d < nd; ++d)
        for (std::size_t v = 0; v < nv; ++v)
            sat_at(d + 1, v + 1) =
                power[d * nv + v] + sat_at(d, v + 1) + sat_at(d + 1, v) - sat_at(d, v);

    const auto box = [&](long long d0, long long v0, long long d1, long long v1) {
        // Clipped inclusive box sum plus its cell count.
        d0 = std::max(d0, 0LL);
        v0 = std::max(v0, 0LL);
        d1 = std::min<long long>(d1, static_cast<long long>(nd) - 1);
        v1 = std::min<long long>(v1, static_cast<long long>(nv) - 1);
        if (d0 > d1 || v0 > v1) return std::pair<double, long long>{0.0, 0};
        const double sum = sat_at(d1 + 1, v1 + 1) - sat_at(d0, v1 + 1) - sat_at(d1 + 1, v0) +
                           sat_at(d0, v0);
        return std::pair<double, long long>{sum, (d1 - d0 + 1) * (v1 - v0 + 1)};
    };

    std::vector<CfarHit> hits;
    for (std::size_t d = 0; d < nd; ++d) {
        for (std::size_t v = 0; v < nv; ++v) {
            const long long di = static_cast<long long>(d), vi = static_cast<long long>(v);
            const auto [outer_sum, outer_n] = box(di - od, vi - ov, di + od, vi + ov);
            const auto [guard_sum, guard_n] = box(di - gd, vi - gv, di + gd, vi + gv);
            const long long n_train = outer_n - guard_n;
            if (n_train < 1) continue;
            const double mean = (outer_sum - guard_sum) / static_cast<double>(n_train);
            const double alpha = cfar_alpha(static_cast<int>(n_train), cfg.pfa);
            const double threshold = alpha * mean;
            const double p = power[d * nv + v];
            if (p > threshold && p > 0.0) hits.push_back({d, v, p, threshold, mean});
        }
    }
    return hits;
}

std::vector<CfarHit> cluster_hits(const std::vector<CfarHit>& hits) {
    if (hits.empty()) return {};
    // Union-find over hit indices; 8-connectivity on (delay, doppler) cells.
    std::vector<std::size_t> parent(hits.size());
    for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = i;
    const std::function<std::size_t(std::size_t)> find = [&](std::size_t i) {
        while (parent[i] != i) {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        return i;
    };

    std::map<std::pair<std::size_t, std::size_t>, std::size_t> by_cell;
    for (std::size_t i = 0; i < hits.size(); ++i) by_cell[{hits[i].delay_idx, hits[i].doppler_idx}] = i;
    for (std::size_t i = 0; i < hits.size(); ++i) {
        for (long long dd = -1; dd <= 1; ++dd) {
            for (long long dv = -1; dv <= 1; ++dv) {
                if (dd == 0 && dv == 0) continue;
                const long long nd = static_cast<long long>(hits[i].delay_idx) + dd;
                const long long nv = static_cast<long long>(hits[i].doppler_idx) + dv;
                if (nd < 0 || nv < 0) continue;
                const auto it = by_cell.find({static_cast<std::size_t>(nd), static_cast<std::size_t>(nv)});
                if (it != by_cell.end()) parent[find(i)] = find(it->second);
            }
        }
    }

    std::map<std::size_t, std::size_t> best;  // component root -> strongest hit index
    for (std::size_t i = 0; i < hits.size(); ++i) {
        const std::size_t root = find(i);
        const auto it = best.find(root);
        if (it == best.end() || hits[i].power > hits[it->second].power) best[root] = i;
    }
    std::vector<CfarHit> peaks;
    peaks.reserve(best.size());
    for (const auto& [root, idx] : best) peaks.push_back(hits[idx]);
    std::sort(peaks.begin(), peaks.end(), [](const CfarHit& a, const CfarHit& b) {
        return std::tie(a.delay_idx, a.doppler_idx) < std::tie(b.delay_idx, b.doppler_idx);
    });
    return peaks;
}

double parabolic_vertex_offset(double y_minus, double y_center, double y_plus) {
    const double denom = y_minus - 2.0 * y_center + y_plus;
    if (denom == 0.0) return 0.0;
    return std::clamp((y_minus - y_plus) / (2.0 * denom), -0.5, 0.5);
}

namespace {

double log_power(const DelayDopplerMap& map, std::size_t d, std::size_t v) {
    return std::log10(std::max(std::norm(map.at(d, v)), 1e-300));
}

}  // namespace

Detection refine_peak(const DelayDopplerMap& map, const CfarHit& peak) {
    Detection det;
    det.link = map.link;
    det.cpi_start_s = map.cpi_start_s;

    const std::size_t d = peak.delay_idx;
    const std::size_t v = peak.doppler_idx;
    double delta_d = 0.0, delta_v = 0.0;
    double log_peak = log_power(map, d, v);
    det.refined = true;

    if (d > 0 && d + 1 < map.n_delay) {
        const double ym = log_power(map, d - 1, v);
        const double y0 = log_power(map, d, v);
        const double yp = log_power(map, d + 1, v);
        delta_d = parabolic_vertex_offset(ym, y0, yp);
        const double curvature = ym - 2.0 * y0 + yp;
        log_peak += -delta_d * delta_d * curvature / 2.0;
    } else {
        det.refined = false;
    }
    if (v > 0 && v + 1 < map.n_doppler) {
        const double ym = log_power(map, d, v - 1);
        const double y0 = log_power(map, d, v);
        const double yp = log_power(map, d, v + 1);
        delta_v = parabolic_vertex_offset(ym, y0, yp);
        const double curvature = ym - 2.0 * y0 + yp;
        log_peak += -delta_v * delta_v * curvature / 2.0;
    } else {
        det.refined = false;
    }

    det.delay_s = (static_cast<double>(d) + delta_d) * map.delay_bin_s;
    det.doppler_hz = (static_cast<double>(v) + delta_v -
                      static_cast<double>(map.zero_doppler_bin())) *
                     map.doppler_bin_hz;
    const double noise = std::max(peak.noise_mean, 1e-300);
    det.snr_db = 10.0 * (log_peak - std::log10(noise));
    return det;
}

void export_map_csv(const DelayDopplerMap& map, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    for (std::size_t d = 0; d < map.n_delay; ++d) {
        for (std::size_t v = 0; v < map.n_doppler; ++v) {
            const double mag_db = 20.0 * std::log10(std::max(std::abs(map.at(d, v)), 1e-15));
            out << (v ? "," : "") << mag_db;
        }
        out << "\n";
    }
}

void export_map_pgm(const DelayDopplerMap& map, const std::filesystem::path& path) {
    std::vector<double> db(map.cells.size());
    double lo = 1e300, hi = -1e300;
    for (std::size_t i = 0; i < map.cells.size(); ++i) {
        db[i] = 20.0 * std::log10(std::max(std::abs(map.cells[i]), 1e-15));
        lo = std::min(lo, db[i]);
        hi = std::max(hi, db[i]);
    }
    const double span = (hi > lo) ? hi - lo : 1.0;

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << "P5\n" << map.n_doppler << " " << map.n_delay << "\n255\n";
    for (std::size_t d = 0; d < map.n_delay; ++d) {
        for (std::size_t v = 0; v < map.n_doppler; ++v) {
            const double norm = (db[d * map.n_doppler + v] - lo) / span;
            const unsigned char px = static_cast<unsigned char>(std::lround(norm * 255.0));
            out.write(reinterpret_cast<const char*>(&px), 1);
        }
    }
}

}  // namespace isac
