#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "isac/errors.hpp"
#include "isac/geometry.hpp"

namespace isac {

/// Complex delay-Doppler map of one CPI on one link. Delay rows 0..K-1 at
/// delay_bin_s = 1/B starting from tau = 0; Doppler columns zero-centered
/// (column M/2 is zero Doppler) at doppler_bin_hz = snapshot_rate / M.
struct DelayDopplerMap {
    int link = 0;
    double cpi_start_s = 0.0;
    double delay_bin_s = 0.0;
    double doppler_bin_hz = 0.0;
    std::size_t n_delay = 0;
    std::size_t n_doppler = 0;
    std::vector<Complex> cells;  // row-major [delay][doppler]

    Complex& at(std::size_t d, std::size_t v) { return cells[d * n_doppler + v]; }
    const Complex& at(std::size_t d, std::size_t v) const { return cells[d * n_doppler + v]; }
    std::size_t zero_doppler_bin() const { return n_doppler / 2; }
    double doppler_of_bin(double v) const {
        return (v - static_cast<double>(zero_doppler_bin())) * doppler_bin_hz;
    }
};

/// Off-grid detection on one link at one CPI.
struct Detection {
    int link = 0;
    double cpi_start_s = 0.0;
    double delay_s = 0.0;
    double doppler_hz = 0.0;
    double snr_db = 0.0;
    bool refined = true;  // false when the peak sat on a map edge
};

struct CfarConfig {
    int guard_delay = 1;
    int guard_doppler = 1;
    int train_delay = 4;
    int train_doppler = 4;
    double pfa = 1e-3;
};

struct DspConfig {
    int cpi_len = 128;              // M; window fixed to Hann on both axes
    double beta_bg = 0.9;           // exponential background factor
    int notch_halfwidth_bins = 1;   // zero-Doppler notch half width
    CfarConfig cfar;

    void validate() const;
};

/// Pilot-division channel estimate: rx/tx where |tx| >= eps * max|tx|
/// (eps = 1e-6); masked entries are zeroed and reported in the bitmap.
struct ChannelEstimate {
    std::vector<Complex> h;
    std::vector<bool> valid;
};
ChannelEstimate estimate_channel(const std::vector<Complex>& rx_spectrum,
                                 const std::vector<Complex>& tx_spectrum);

/// CPI block of M snapshots (each K subcarriers) -> delay-Doppler map.
/// Hann window + IDFT across subcarriers, Hann window + DFT (zero-centered)
/// across slow time, scaled so a unit-amplitude on-bin static path peaks at
/// magnitude 1.
DelayDopplerMap form_map(const std::vector<std::vector<Complex>>& snapshots, double bandwidth_hz,
                         double snapshot_rate_hz, int link = 0, double cpi_start_s = 0.0);

/// Exponential background over complex maps. The residual uses the previous
/// state so a newly appearing mover is not self-subtracted in its first CPI.
class BackgroundSubtractor {
public:
    explicit BackgroundSubtractor(double beta) : beta_(beta) {
        if (beta < 0.0 || beta >= 1.0) throw ConfigError("background beta must be in [0, 1)");
    }

    /// residual = z - state_prev; state = beta * state_prev + (1-beta) * z.
    /// The first call initializes the state to z (residual is zero).
    DelayDopplerMap step(const DelayDopplerMap& z);

    bool initialized() const { return !state_.cells.empty(); }
    const DelayDopplerMap& state() const { return state_; }

private:
    double beta_;
    DelayDopplerMap state_;
};

/// Zeroes Doppler columns within halfwidth bins of the zero-Doppler column.
DelayDopplerMap notch_zero_doppler(DelayDopplerMap map, int halfwidth_bins);

struct CfarHit {
    std::size_t delay_idx = 0;
    std::size_t doppler_idx = 0;
    double power = 0.0;       // squared magnitude of the cell under test
    double threshold = 0.0;   // alpha * local noise mean
    double noise_mean = 0.0;  // training-ring mean power
};

/// CA-CFAR threshold multiplier for N training cells: N (pfa^(-1/N) - 1).
double cfar_alpha(int n_train, double pfa);

/// 2-D cell-averaging CFAR on squared magnitudes. Edge cells clip the training
/// window and renormalize the cell count.
std::vector<CfarHit> cfar_detect(const DelayDopplerMap& map, const CfarConfig& cfg);

/// 8-connected components over hit cells; each component keeps its
/// maximum-power cell.
std::vector<CfarHit> cluster_hits(const std::vector<CfarHit>& hits);

/// Three-point parabola vertex offset, clamped to [-0.5, 0.5]; exact zero
/// curvature yields 0.
double parabolic_vertex_offset(double y_minus, double y_center, double y_plus);

/// Off-grid refinement of one peak cell via per-axis parabolic interpolation
/// on log power. Peaks on a map edge come back unrefined on that axis with
/// the refined flag cleared.
Detection refine_peak(const DelayDopplerMap& map, const CfarHit& peak);

/// Map exports for figure reproduction: CSV (one row per delay bin, dB) and
/// binary 8-bit PGM (min-max scaled dB).
void export_map_csv(const DelayDopplerMap& map, const std::filesystem::path& path);
void export_map_pgm(const DelayDopplerMap& map, const std::filesystem::path& path);

}  // namespace isac
