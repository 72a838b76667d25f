#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <vector>

#include "isac/errors.hpp"
#include "isac/geometry.hpp"

namespace isac {

/// Complex bistatic reflectivity sampled on a (frequency, bistatic angle) grid.
/// Linear amplitude gain; enters the radar equation in place of sqrt(RCS).
class ReflectivityTable {
public:
    ReflectivityTable() = default;
    ReflectivityTable(std::vector<double> freq_grid_hz, std::vector<double> angle_grid_deg,
                      std::vector<Complex> gains, std::string polarization_tag);

    // The once-per-run clamp flag is per-instance state; copies start fresh.
    ReflectivityTable(const ReflectivityTable& o)
        : freq_grid_hz_(o.freq_grid_hz_),
          angle_grid_deg_(o.angle_grid_deg_),
          gains_(o.gains_),
          polarization_tag_(o.polarization_tag_) {}
    ReflectivityTable(ReflectivityTable&& o) noexcept
        : freq_grid_hz_(std::move(o.freq_grid_hz_)),
          angle_grid_deg_(std::move(o.angle_grid_deg_)),
          gains_(std::move(o.gains_)),
          polarization_tag_(std::move(o.polarization_tag_)) {}
    ReflectivityTable& operator=(ReflectivityTable o) noexcept {
        freq_grid_hz_ = std::move(o.freq_grid_hz_);
        angle_grid_deg_ = std::move(o.angle_grid_deg_);
        gains_ = std::move(o.gains_);
        polarization_tag_ = std::move(o.polarization_tag_);
        clamp_warned_.store(false);
        return *this;
    }

    /// Bilinear interpolation of re/im independently over the (freq, angle) cell.
    /// Queries outside the grid span clamp to the nearest edge; the first clamp
    /// per table emits a warning on stderr.
    Complex lookup(double f_hz, double beta_deg) const;

    const std::vector<double>& freq_grid_hz() const { return freq_grid_hz_; }
    const std::vector<double>& angle_grid_deg() const { return angle_grid_deg_; }
    const std::vector<Complex>& gains() const { return gains_; }
    const std::string& polarization_tag() const { return polarization_tag_; }
    std::size_t n_freq() const { return freq_grid_hz_.size(); }
    std::size_t n_angle() const { return angle_grid_deg_.size(); }

    Complex at(std::size_t fi, std::size_t ai) const { return gains_[fi * n_angle() + ai]; }

private:
    std::vector<double> freq_grid_hz_;
    std::vector<double> angle_grid_deg_;
    std::vector<Complex> gains_;  // row-major, freq-major / angle-minor
    std::string polarization_tag_;
    mutable std::atomic<bool> clamp_warned_{false};
};

/// File container: JSON header (grids, polarization, data file name) plus an
/// adjacent raw binary of little-endian float32 (re, im) pairs, freq-major.
void write_reflectivity_table(const ReflectivityTable& table, const std::filesystem::path& json_path);
ReflectivityTable read_reflectivity_table(const std::filesystem::path& json_path);

/// Rotating-blade point-scatterer model: one tip scatterer per blade.
struct RotorSpec {
    int n_blades = 1;
    double blade_radius_m = 0.1;
    double rotation_hz = 0.0;
    Vec3 plane_normal{0.0, 0.0, 1.0};
    Complex tip_amplitude{1.0, 0.0};
    double phase0_rad = 0.0;

    void validate() const;
};

struct RotorScatterer {
    Vec3 position;
    Complex gain;
};

/// Tip scatterer positions at time t: hub + R(n, 2*pi*f*t + phase0 + 2*pi*j/n_blades) * (r * e)
/// with e a fixed unit vector in the rotation plane.
std::vector<RotorScatterer> rotor_scatterers(const RotorSpec& rotor, const Vec3& hub_pos, double t_s);

/// Short-time Fourier magnitude-squared of a slow-time series, Doppler axis
/// zero-centered. Power stored linearly; display scaling is the caller's concern.
struct Spectrogram {
    std::vector<double> time_axis_s;     // column centers
    std::vector<double> doppler_axis_hz; // zero-centered, ascending
    std::vector<double> power;           // row-major [time][doppler]
    std::size_t n_cols() const { return time_axis_s.size(); }
    std::size_t n_bins() const { return doppler_axis_hz.size(); }
    double at(std::size_t col, std::size_t bin) const { return power[col * n_bins() + bin]; }
};

/// Hann-windowed STFT. The DFT is normalized by 1/sqrt(window_len) (unitary),
/// so one column's total power never exceeds the energy of its input segment.
Spectrogram spectrogram(const std::vector<Complex>& series, double rate_hz, std::size_t window_len,
                        std::size_t hop);

struct FlashRateOptions {
    double occupancy_threshold_db = 10.0;  // above per-column median
    double min_peak_correlation = 0.25;    // normalized autocorrelation height
};

/// Blade-flash repetition rate from the autocorrelation (over time) of the
/// per-column spectral occupancy. Requires the spectrogram to span at least
/// three flash periods.
double flash_rate(const Spectrogram& spec, const FlashRateOptions& opts = {});

/// Period of the dominant micro-Doppler trace, from the autocorrelation of the
/// signed strongest-bin Doppler trace. Meaningful for a single resolvable trace.
double trace_period(const Spectrogram& spec, double min_peak_correlation = 0.25);

}  // namespace isac
