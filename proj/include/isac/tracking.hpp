#pragma once

#include <array>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "isac/dsp.hpp"
#include "isac/errors.hpp"
#include "isac/geometry.hpp"

namespace isac {

/// Symmetric 2x2 covariance, row-major.
using Mat2 = std::array<double, 4>;
using Vec2 = std::array<double, 2>;

enum class TrackStatus { tentative, confirmed, coasting, deleted };
std::string to_string(TrackStatus s);

/// Per-link track over (delay, delay-rate). Doppler observes the delay rate
/// through nu = -f_c * tau_dot.
struct TrackState {
    int id = 0;
    Vec2 x{0.0, 0.0};  // (tau s, tau_dot s/s)
    Mat2 p{0.0, 0.0, 0.0, 0.0};
    TrackStatus status = TrackStatus::tentative;
    std::deque<bool> history;  // hit/miss outcomes, newest last, length <= N
    int consecutive_misses = 0;
    double last_update_s = 0.0;
    bool was_confirmed = false;

    // Exposed by the last update for filter diagnostics.
    Vec2 last_innovation{0.0, 0.0};
    Mat2 last_innovation_cov{0.0, 0.0, 0.0, 0.0};

    double delay_s() const { return x[0]; }
    double delay_rate() const { return x[1]; }
};

struct TrackerConfig {
    double carrier_hz = 3e9;
    double q_process = 1e-18;  // white-noise acceleration density on tau, s^2/s^3
    Mat2 r_meas{1e-17, 0.0, 0.0, 1.0};  // measurement covariance of (tau s, nu Hz)
    double gate_threshold = chi2_gate();  // Mahalanobis^2, 99% for 2 dof
    int confirm_m = 3;
    int confirm_n = 5;
    int delete_after_misses = 5;

    /// 99% quantile of chi-square with 2 dof from the closed-form inverse CDF
    /// (-2 ln(1 - p)).
    static double chi2_gate(double p = 0.99);

    void validate() const;
};

/// Constant-velocity predict in (tau, tau_dot); white-noise-acceleration Q.
void kalman_predict(TrackState& track, double dt, double q_process);

/// Linear update with z = (tau, nu), H = [[1, 0], [0, -f_c]]; Joseph-form
/// covariance with explicit symmetrization.
void kalman_update(TrackState& track, double delay_s, double doppler_hz, const Mat2& r_meas,
                   double carrier_hz);

/// Squared Mahalanobis distance of a (tau, nu) measurement from the track's
/// predicted measurement.
double mahalanobis2(const TrackState& track, double delay_s, double doppler_hz,
                    const Mat2& r_meas, double carrier_hz);

struct Assignment {
    // pairs of (track index, detection index); detections absent here are
    // unassigned and spawn tentative tracks.
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::vector<std::size_t> unassigned_detections;
    double total_cost = 0.0;
};

/// Global nearest neighbor: gated Mahalanobis^2 costs, total-cost-minimal
/// one-to-one assignment (rectangular Hungarian).
Assignment associate(const std::vector<TrackState>& tracks,
                     const std::vector<Detection>& detections, const TrackerConfig& cfg);

/// Minimum-cost one-to-one assignment on a rectangular matrix; entries >=
/// forbidden are never assigned. Returns per-row column index or -1.
std::vector<int> solve_assignment(const std::vector<std::vector<double>>& cost,
                                  double forbidden = 1e17);

/// Sequential per-link multi-target tracker: predict, gate/associate, update,
/// M-of-N confirmation, coast on miss, delete after too many misses.
class Tracker {
public:
    explicit Tracker(const TrackerConfig& cfg);

    /// One CPI step; t must be non-decreasing across calls. Returns snapshots
    /// of the confirmed tracks after the step.
    std::vector<TrackState> step(const std::vector<Detection>& detections, double t_s);

    const std::vector<TrackState>& tracks() const { return tracks_; }

private:
    TrackerConfig cfg_;
    std::vector<TrackState> tracks_;
    int next_id_ = 1;
    std::optional<double> last_t_;
    bool first_step_ = true;
};

struct BistaticObservation {
    Vec3 tx_pos;
    Vec3 rx_pos;
    double range_m = 0.0;  // bistatic range c * tau
};

struct PositionFix {
    double t_s = 0.0;
    Vec3 position;
    double residual_m = 0.0;  // RMS range residual at the solution
    int n_links = 0;
};

struct LocalizeOptions {
    std::optional<Vec3> initial_guess;
    // Grid search box used when no initial guess is supplied.
    std::optional<std::pair<Vec3, Vec3>> search_box;
    int grid_points = 12;       // per axis
    int max_iterations = 50;
    double step_tolerance_m = 1e-6;
};

/// Gauss-Newton on bistatic range residuals with backtracking line search.
/// Needs >= 3 links; throws DegeneracyError on singular geometry.
PositionFix localize(const std::vector<BistaticObservation>& observations, double t_s,
                     const LocalizeOptions& opts = {});

}  // namespace isac
