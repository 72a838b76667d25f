#include "isac/tracking.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>

namespace isac {

std::string to_string(TrackStatus s) {
    switch (s) {
        case TrackStatus::tentative: return "tentative";
        case TrackStatus::confirmed: return "confirmed";
        case TrackStatus::coasting: return "coasting";
        default: return "deleted";
    }
}

double TrackerConfig::chi2_gate(double p) { return -2.0 * std::log(1.0 - p); }

void TrackerConfig::validate() const {
    if (!(carrier_hz > 0.0)) throw ConfigError("tracker carrier_hz must be > 0");
    if (!(gate_threshold > 0.0)) throw ConfigError("tracker gate_threshold must be > 0");
    if (confirm_m < 1 || confirm_n < confirm_m)
        throw ConfigError("tracker confirmation needs 1 <= M <= N");
    if (delete_after_misses < 1) throw ConfigError("delete_after_misses must be >= 1");
    if (q_process < 0.0) throw ConfigError("q_process must be >= 0");
    if (!(r_meas[0] > 0.0) || !(r_meas[3] > 0.0))
        throw ConfigError("r_meas diagonal must be positive");
}

namespace {

Mat2 mat2_mul(const Mat2& a, const Mat2& b) {
    return {a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3],
            a[2] * b[0] + a[3] * b[2], a[2] * b[1] + a[3] * b[3]};
}

Mat2 mat2_add(const Mat2& a, const Mat2& b) {
    return {a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]};
}

Mat2 mat2_transpose(const Mat2& a) { return {a[0], a[2], a[1], a[3]}; }

double mat2_det(const Mat2& a) { return a[0] * a[3] - a[1] * a[2]; }

Mat2 mat2_inverse(const Mat2& a) {
    const double det = mat2_det(a);
    if (det <= 0.0)
        throw NumericError("2x2 covariance inverse: non-positive determinant (check r_meas)");
    return {a[3] / det, -a[1] / det, -a[2] / det, a[0] / det};
}

void symmetrize(Mat2& a) {
    const double off = 0.5 * (a[1] + a[2]);
    a[1] = off;
    a[2] = off;
}

}  // namespace

void kalman_predict(TrackState& track, double dt, double q_process) {
    if (dt < 0.0) throw OrderingError("kalman predict: negative dt");
    const Mat2 f{1.0, dt, 0.0, 1.0};
    track.x = {track.x[0] + dt * track.x[1], track.x[1]};
    Mat2 p = mat2_mul(mat2_mul(f, track.p), mat2_transpose(f));
    const double dt2 = dt * dt;
    const Mat2 q{q_process * dt * dt2 / 3.0, q_process * dt2 / 2.0,
                 q_process * dt2 / 2.0, q_process * dt};
    track.p = mat2_add(p, q);
    symmetrize(track.p);
}

namespace {

// Measurement model: z = (tau, nu) with nu = -f_c * tau_dot.
Vec2 predicted_measurement(const TrackState& t, double carrier_hz) {
    return {t.x[0], -carrier_hz * t.x[1]};
}

Mat2 innovation_covariance(const TrackState& t, const Mat2& r, double carrier_hz) {
    // S = H P H' + R with H = [[1, 0], [0, -f_c]].
    const double fc = carrier_hz;
    return {t.p[0] + r[0], -fc * t.p[1] + r[1], -fc * t.p[2] + r[2], fc * fc * t.p[3] + r[3]};
}

}  // namespace

double mahalanobis2(const TrackState& track, double delay_s, double doppler_hz, const Mat2& r_meas,
                    double carrier_hz) {
    const Vec2 zhat = predicted_measurement(track, carrier_hz);
    const Vec2 y{delay_s - zhat[0], doppler_hz - zhat[1]};
    const Mat2 s = innovation_covariance(track, r_meas, carrier_hz);
    const Mat2 si = mat2_inverse(s);
    return y[0] * (si[0] * y[0] + si[1] * y[1]) + y[1] * (si[2] * y[0] + si[3] * y[1]);
}

void kalman_update(TrackState& track, double delay_s, double doppler_hz, const Mat2& r_meas,
                   double carrier_hz) {
    const double fc = carrier_hz;
    const Vec2 zhat = predicted_measurement(track, fc);
    const Vec2 y{delay_s - zhat[0], doppler_hz - zhat[1]};
    const Mat2 s = innovation_covariance(track, r_meas, fc);
    if (mat2_det(s) <= 0.0 || s[0] <= 0.0 || s[3] <= 0.0)
        throw NumericError("kalman update: innovation covariance not positive definite");
    const Mat2 si = mat2_inverse(s);

    // K = P H' S^-1, H = [[1, 0], [0, -fc]] => P H' = [[p00, -fc p01], [p10, -fc p11]].
    const Mat2 pht{track.p[0], -fc * track.p[1], track.p[2], -fc * track.p[3]};
    const Mat2 k = mat2_mul(pht, si);

    track.x = {track.x[0] + k[0] * y[0] + k[1] * y[1], track.x[1] + k[2] * y[0] + k[3] * y[1]};

    // Joseph form: P = (I - K H) P (I - K H)' + K R K'.
    const Mat2 kh{k[0], -fc * k[1], k[2], -fc * k[3]};
    const Mat2 ikh{1.0 - kh[0], -kh[1], -kh[2], 1.0 - kh[3]};
    Mat2 p = mat2_mul(mat2_mul(ikh, track.p), mat2_transpose(ikh));
    p = mat2_add(p, mat2_mul(mat2_mul(k, r_meas), mat2_transpose(k)));
    symmetrize(p);
    track.p = p;

    track.last_innovation = y;
    track.last_innovation_cov = s;
}

std::vector<int> solve_assignment(const std::vector<std::vector<double>>& cost, double forbidden) {
    // Hungarian algorithm with potentials (shortest augmenting paths).
    const std::size_t rows = cost.size();
    if (rows == 0) return {};
    const std::size_t cols = cost.front().size();
    for (const auto& r : cost)
        if (r.size() != cols) throw SizeError("assignment: ragged cost matrix");

    // Pad to rows <= cols by transposing if needed.
    const bool transposed = rows > cols;
    const std::size_t n = transposed ? cols : rows;
    const std::size_t m = transposed ? rows : cols;
    const auto c = [&](std::size_t i, std::size_t j) {
        return transposed ? cost[j][i] : cost[i][j];
    };

    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<std::size_t> match(m + 1, n);  // column -> row (n = free)

    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> dist(m + 1, inf);
        std::vector<std::size_t> from(m + 1, m);
        std::vector<bool> done(m + 1, false);
        std::size_t j0 = m;  // virtual start column owned by row i
        match[m] = i;
        do {
            done[j0] = true;
            const std::size_t i0 = match[j0];
            double best = inf;
            std::size_t j_best = m;
            for (std::size_t j = 0; j < m; ++j) {
                if (done[j]) continue;
                const double cur = c(i0, j) - u[i0] - v[j];
                if (cur < dist[j]) {
                    dist[j] = cur;
                    from[j] = j0;
                }
                if (dist[j] < best) {
                    best = dist[j];
                    j_best = j;
                }
            }
            if (j_best == m) break;  // all remaining columns unreachable
            for (std::size_t j = 0; j <= m; ++j) {
                if (done[j]) {
                    u[match[j]] += best;
                    v[j] -= best;
                } else {
                    dist[j] -= best;
                }
            }
            j0 = j_best;
        } while (match[j0] != n);

        // Augment along the path.
        while (j0 != m) {
            const std::size_t j1 = from[j0];
            match[j0] = match[j1];
            j0 = j1;
        }
    }

    std::vector<int> row_to_col(rows, -1);
    for (std::size_t j = 0; j < m; ++j) {
        if (match[j] == n) continue;
        const std::size_t i = match[j];
        const std::size_t row = transposed ? j : i;
        const std::size_t col = transposed ? i : j;
        if (cost[row][col] < forbidden) row_to_col[row] = static_cast<int>(col);
    }
    return row_to_col;
}

Assignment associate(const std::vector<TrackState>& tracks,
                     const std::vector<Detection>& detections, const TrackerConfig& cfg) {
    Assignment result;
    if (tracks.empty()) {
        for (std::size_t j = 0; j < detections.size(); ++j)
            result.unassigned_detections.push_back(j);
        return result;
    }

    const double forbidden = 1e17;
    std::vector<std::vector<double>> cost(tracks.size(),
                                          std::vector<double>(detections.size(), forbidden));
    bool any_feasible = false;
    for (std::size_t i = 0; i < tracks.size(); ++i) {
        for (std::size_t j = 0; j < detections.size(); ++j) {
            const double d2 = mahalanobis2(tracks[i], detections[j].delay_s,
                                           detections[j].doppler_hz, cfg.r_meas, cfg.carrier_hz);
            if (d2 <= cfg.gate_threshold) {
                cost[i][j] = d2;
                any_feasible = true;
            }
        }
    }

    std::vector<bool> detection_used(detections.size(), false);
    if (any_feasible && !detections.empty()) {
        const std::vector<int> row_to_col = solve_assignment(cost, forbidden);
        for (std::size_t i = 0; i < tracks.size(); ++i) {
            if (row_to_col[i] >= 0) {
                const std::size_t j = static_cast<std::size_t>(row_to_col[i]);
                result.pairs.emplace_back(i, j);
                result.total_cost += cost[i][j];
                detection_used[j] = true;
            }
        }
    }
    for (std::size_t j = 0; j < detections.size(); ++j)
        if (!detection_used[j]) result.unassigned_detections.push_back(j);
    return result;
}

Tracker::Tracker(const TrackerConfig& cfg) : cfg_(cfg) { cfg_.validate(); }

std::vector<TrackState> Tracker::step(const std::vector<Detection>& detections, double t_s) {
    if (last_t_ && t_s < *last_t_)
        throw OrderingError("tracker step: time regressed from " + std::to_string(*last_t_) +
                            " to " + std::to_string(t_s));
    const double dt = last_t_ ? t_s - *last_t_ : 0.0;
    last_t_ = t_s;

    for (auto& t : tracks_) kalman_predict(t, dt, cfg_.q_process);

    const Assignment assignment = associate(tracks_, detections, cfg_);

    std::vector<bool> track_hit(tracks_.size(), false);
    for (const auto& [ti, dj] : assignment.pairs) {
        kalman_update(tracks_[ti], detections[dj].delay_s, detections[dj].doppler_hz, cfg_.r_meas,
                      cfg_.carrier_hz);
        tracks_[ti].last_update_s = t_s;
        track_hit[ti] = true;
    }

    for (std::size_t i = 0; i < tracks_.size(); ++i) {
        TrackState& t = tracks_[i];
        t.history.push_back(track_hit[i]);
        while (static_cast<int>(t.history.size()) > cfg_.confirm_n) t.history.pop_front();

        if (track_hit[i]) {
            t.consecutive_misses = 0;
            if (t.status == TrackStatus::coasting) {
                t.status = TrackStatus::confirmed;
            } else if (t.status == TrackStatus::tentative) {
                int hits = 0;
                for (bool h : t.history) hits += h ? 1 : 0;
                if (hits >= cfg_.confirm_m) {
                    t.status = TrackStatus::confirmed;
                    t.was_confirmed = true;
                }
            }
        } else {
            t.consecutive_misses += 1;
            if (t.status == TrackStatus::confirmed) t.status = TrackStatus::coasting;
            if (t.consecutive_misses >= cfg_.delete_after_misses) t.status = TrackStatus::deleted;
        }
    }

    // Unassigned detections spawn tentative tracks.
    for (std::size_t j : assignment.unassigned_detections) {
        const Detection& d = detections[j];
        TrackState t;
        t.id = next_id_++;
        t.x = {d.delay_s, -d.doppler_hz / cfg_.carrier_hz};
        // Initial uncertainty: measurement covariance mapped into the state,
        // with generous delay-rate variance until a second hit arrives.
        t.p = {cfg_.r_meas[0] * 4.0, 0.0, 0.0,
               cfg_.r_meas[3] / (cfg_.carrier_hz * cfg_.carrier_hz) * 100.0};
        t.status = TrackStatus::tentative;
        t.history.push_back(true);
        t.last_update_s = t_s;
        tracks_.push_back(std::move(t));
    }

    tracks_.erase(std::remove_if(tracks_.begin(), tracks_.end(),
                                 [](const TrackState& t) {
                                     return t.status == TrackStatus::deleted;
                                 }),
                  tracks_.end());

    std::vector<TrackState> confirmed;
    for (const auto& t : tracks_)
        if (t.status == TrackStatus::confirmed) confirmed.push_back(t);
    return confirmed;
}

namespace {

struct NormalEquations {
    // Symmetric 3x3 J'J and right-hand side J'r.
    double a[3][3] = {};
    double b[3] = {};
};

double cost_at(const std::vector<BistaticObservation>& obs, const Vec3& p) {
    double c = 0.0;
    for (const auto& o : obs) {
        const double r = o.range_m - ((p - o.tx_pos).norm() + (p - o.rx_pos).norm());
        c += r * r;
    }
    return c;
}

// Solve a x = b for symmetric 3x3 via Gaussian elimination with partial
// pivoting; returns false when effectively singular.
bool solve3(const NormalEquations& ne, double x[3]) {
    double m[3][4];
    double scale = 0.0;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            m[i][j] = ne.a[i][j];
            scale = std::max(scale, std::abs(ne.a[i][j]));
        }
        m[i][3] = ne.b[i];
    }
    if (scale <= 0.0) return false;
    for (int col = 0; col < 3; ++col) {
        int piv = col;
        for (int r = col + 1; r < 3; ++r)
            if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
        if (std::abs(m[piv][col]) < 1e-12 * scale) return false;
        std::swap(m[piv], m[col]);
        for (int r = 0; r < 3; ++r) {
            if (r == col) continue;
            const double f = m[r][col] / m[col][col];
            for (int c = col; c < 4; ++c) m[r][c] -= f * m[col][c];
        }
    }
    for (int i = 0; i < 3; ++i) x[i] = m[i][3] / m[i][i];
    return true;
}

}  // namespace

PositionFix localize(const std::vector<BistaticObservation>& observations, double t_s,
                     const LocalizeOptions& opts) {
    if (observations.size() < 3)
        throw DegeneracyError("localize needs >= 3 links, got " +
                              std::to_string(observations.size()));

    Vec3 p;
    if (opts.initial_guess) {
        p = *opts.initial_guess;
    } else {
        // Coarse grid over the search box; default box spans the node cloud
        // inflated by the largest bistatic range (|p - tx| <= R bounds the
        // target to that ball).
        Vec3 lo, hi;
        if (opts.search_box) {
            lo = opts.search_box->first;
            hi = opts.search_box->second;
        } else {
            double r_max = 0.0;
            Vec3 centroid{};
            for (const auto& o : observations) {
                r_max = std::max(r_max, o.range_m);
                centroid += (o.tx_pos + o.rx_pos) * (0.5 / observations.size());
            }
            const Vec3 half{r_max, r_max, r_max};
            lo = centroid - half;
            hi = centroid + half;
        }
        const int g = std::max(2, opts.grid_points);
        double best = std::numeric_limits<double>::infinity();
        for (int ix = 0; ix < g; ++ix) {
            for (int iy = 0; iy < g; ++iy) {
                for (int iz = 0; iz < g; ++iz) {
                    const Vec3 cand{lo.x + (hi.x - lo.x) * ix / (g - 1),
                                    lo.y + (hi.y - lo.y) * iy / (g - 1),
                                    lo.z + (hi.z - lo.z) * iz / (g - 1)};
                    const double c = cost_at(observations, cand);
                    if (c < best) {
                        best = c;
                        p = cand;
                    }
                }
            }
        }
    }

    double cost = cost_at(observations, p);
    bool converged = false;
    bool stalled = false;
    for (int iter = 0; iter < opts.max_iterations; ++iter) {
        NormalEquations ne;
        for (const auto& o : observations) {
            const Vec3 dt = p - o.tx_pos;
            const Vec3 dr = p - o.rx_pos;
            const double nt = dt.norm();
            const double nr = dr.norm();
            if (nt < 1e-9 || nr < 1e-9)
                throw DegeneracyError("localize: solution collapsed onto a node position");
            const Vec3 grad = dt / nt + dr / nr;  // d(bistatic range)/dp
            const double resid = o.range_m - (nt + nr);
            const double j[3] = {grad.x, grad.y, grad.z};
            for (int a = 0; a < 3; ++a) {
                for (int b = 0; b < 3; ++b) ne.a[a][b] += j[a] * j[b];
                // residual is r = R - f(p), d r/d p = -grad; normal equations
                // for min sum r^2 give J'J delta = J'r with J = -grad rows.
                ne.b[a] += -j[a] * resid;
            }
        }

        double delta[3];
        if (!solve3(ne, delta))
            throw DegeneracyError("localize: singular normal equations (on-baseline or collinear geometry)");

        // Newton step is -delta of the gradient system above.
        Vec3 step{-delta[0], -delta[1], -delta[2]};
        double step_norm = step.norm();

        // Backtracking keeps the residual non-increasing.
        double scale = 1.0;
        Vec3 p_next = p + step;
        double cost_next = cost_at(observations, p_next);
        int halvings = 0;
        while (cost_next > cost && halvings < 25) {
            scale *= 0.5;
            p_next = p + step * scale;
            cost_next = cost_at(observations, p_next);
            ++halvings;
        }
        if (cost_next > cost) {
            stalled = true;  // no descent direction left
            break;
        }
        p = p_next;
        cost = cost_next;
        if (step_norm * scale < opts.step_tolerance_m) {
            converged = true;
            break;
        }
    }
    if (!converged && stalled) {
        std::cerr << "localize: Gauss-Newton stalled before the step tolerance; final RMS residual "
                  << std::sqrt(cost / observations.size()) << " m\n";
    }

    PositionFix fix;
    fix.t_s = t_s;
    fix.position = p;
    fix.residual_m = std::sqrt(cost / observations.size());
    fix.n_links = static_cast<int>(observations.size());
    return fix;
}

}  // namespace isac
