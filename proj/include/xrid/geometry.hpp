#pragma once

#include <cmath>

namespace xrid {

// Coordinate convention used throughout: right-handed, +Y up, -Z forward.
// Quaternion components are ordered (x, y, z, w).

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
};

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator*(const Vec3& a, double s) { return {a.x * s, a.y * s, a.z * s}; }
inline Vec3 operator*(double s, const Vec3& a) { return a * s; }

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

struct Quat {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    double w = 1.0;
};

inline double dot(const Quat& a, const Quat& b) { return a.x * b.x + a.y * b.y + a.z * b.z + a.w * b.w; }
inline double norm(const Quat& q) { return std::sqrt(dot(q, q)); }
inline Quat negate(const Quat& q) { return {-q.x, -q.y, -q.z, -q.w}; }

// Throws Errc::degenerate_quaternion when the norm is below 1e-8.
Quat normalize(const Quat& q);

// Hamilton product a*b (apply b first, then a).
Quat multiply(const Quat& a, const Quat& b);

// Inverse for a general quaternion (conjugate over squared norm).
Quat inverse(const Quat& q);

Vec3 rotate_vec(const Quat& q, const Vec3& v);

// Shortest-arc spherical interpolation, t in [0, 1]. Sign-aligns the second
// operand when dot(a, b) < 0.
Quat slerp(const Quat& a, const Quat& b, double t);

Quat quat_from_axis_angle(const Vec3& axis, double radians);
Quat quat_from_yaw(double radians);
Quat quat_from_pitch(double radians);

// Heading (rotation about +Y) of the rotated forward vector, radians.
double yaw_of(const Quat& q);

// Rotation angle about the X axis of the rotated forward vector, radians.
// Positive values mean looking up.
double pitch_of(const Quat& q);

inline bool quat_finite(const Quat& q) {
    return std::isfinite(q.x) && std::isfinite(q.y) && std::isfinite(q.z) && std::isfinite(q.w);
}

inline bool vec_finite(const Vec3& v) { return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z); }

} // namespace xrid
