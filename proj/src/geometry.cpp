#include "xrid/geometry.hpp"

#include "xrid/error.hpp"

#include <algorithm>

namespace xrid {

Quat normalize(const Quat& q) {
    const double n = norm(q);
    require(n >= 1e-8, Errc::degenerate_quaternion, "quaternion norm below 1e-8");
    return {q.x / n, q.y / n, q.z / n, q.w / n};
}

Quat multiply(const Quat& a, const Quat& b) {
    return {
        a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
        a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
        a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
    };
}

Quat inverse(const Quat& q) {
    const double n2 = dot(q, q);
    require(n2 >= 1e-16, Errc::degenerate_quaternion, "cannot invert near-zero quaternion");
    return {-q.x / n2, -q.y / n2, -q.z / n2, q.w / n2};
}

Vec3 rotate_vec(const Quat& q, const Vec3& v) {
    // v' = v + 2*u x (u x v + w*v), u = (x, y, z)
    const Vec3 u{q.x, q.y, q.z};
    const Vec3 uv{u.y * v.z - u.z * v.y, u.z * v.x - u.x * v.z, u.x * v.y - u.y * v.x};
    const Vec3 t{uv.x + q.w * v.x, uv.y + q.w * v.y, uv.z + q.w * v.z};
    const Vec3 ut{u.y * t.z - u.z * t.y, u.z * t.x - u.x * t.z, u.x * t.y - u.y * t.x};
    return {v.x + 2.0 * ut.x, v.y + 2.0 * ut.y, v.z + 2.0 * ut.z};
}

Quat slerp(const Quat& a, const Quat& b, double t) {
    Quat qa = normalize(a);
    Quat qb = normalize(b);
    double cos_omega = dot(qa, qb);
    if (cos_omega < 0.0) {
        qb = negate(qb);
        cos_omega = -cos_omega;
    }
    if (cos_omega > 1.0 - 1e-10) {
        // nearly parallel: nlerp is exact enough and avoids 0/0
        Quat out{
            qa.x + t * (qb.x - qa.x),
            qa.y + t * (qb.y - qa.y),
            qa.z + t * (qb.z - qa.z),
            qa.w + t * (qb.w - qa.w),
        };
        return normalize(out);
    }
    const double omega = std::acos(std::clamp(cos_omega, -1.0, 1.0));
    const double sin_omega = std::sin(omega);
    const double ka = std::sin((1.0 - t) * omega) / sin_omega;
    const double kb = std::sin(t * omega) / sin_omega;
    return {
        ka * qa.x + kb * qb.x,
        ka * qa.y + kb * qb.y,
        ka * qa.z + kb * qb.z,
        ka * qa.w + kb * qb.w,
    };
}

Quat quat_from_axis_angle(const Vec3& axis, double radians) {
    const double n = norm(axis);
    require(n >= 1e-12, Errc::invalid_argument, "axis must be non-zero");
    const double s = std::sin(radians * 0.5) / n;
    return {axis.x * s, axis.y * s, axis.z * s, std::cos(radians * 0.5)};
}

Quat quat_from_yaw(double radians) { return quat_from_axis_angle({0.0, 1.0, 0.0}, radians); }

Quat quat_from_pitch(double radians) { return quat_from_axis_angle({1.0, 0.0, 0.0}, radians); }

double yaw_of(const Quat& q) {
    const Vec3 fwd = rotate_vec(q, {0.0, 0.0, -1.0});
    // forward = (-sin(yaw)*cos(pitch), sin(pitch), -cos(yaw)*cos(pitch))
    if (std::abs(fwd.x) < 1e-15 && std::abs(fwd.z) < 1e-15) {
        return 0.0; // straight up/down: heading undefined, see kinematics gimbal handling
    }
    return std::atan2(-fwd.x, -fwd.z);
}

double pitch_of(const Quat& q) {
    const Vec3 fwd = rotate_vec(q, {0.0, 0.0, -1.0});
    return std::asin(std::clamp(fwd.y, -1.0, 1.0));
}

} // namespace xrid
