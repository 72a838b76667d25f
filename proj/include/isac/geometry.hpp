#pragma once

#include <cmath>
#include <complex>
#include <cstdint>

namespace isac {

/// Propagation speed used everywhere, m/s (exact by definition).
inline constexpr double kSpeedOfLight = 299'792'458.0;

inline constexpr double kPi = 3.14159265358979323846;

using Complex = std::complex<double>;
using Complex32 = std::complex<float>;

/// 3-D position/velocity vector, meters / meters-per-second.
struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    constexpr Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    constexpr Vec3& operator+=(const Vec3& o) {
        x += o.x;
        y += o.y;
        z += o.z;
        return *this;
    }

    constexpr double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    constexpr Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const { return *this / norm(); }
};

inline constexpr Vec3 operator*(double s, const Vec3& v) { return v * s; }

inline double db_to_linear_power(double db) { return std::pow(10.0, db / 10.0); }
inline double db_to_linear_amplitude(double db) { return std::pow(10.0, db / 20.0); }
inline double linear_power_to_db(double p) { return 10.0 * std::log10(p); }
inline double dbm_to_power(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

}  // namespace isac
