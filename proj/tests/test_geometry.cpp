#include "xrid/geometry.hpp"

#include "xrid/error.hpp"
#include "xrid/rng.hpp"

#include <doctest.h>

#include <array>
#include <cmath>

using namespace xrid;

namespace {

constexpr double kPi = 3.14159265358979323846;

Quat random_unit_quat(SeededRng& rng) {
    Quat q{rng.gaussian(), rng.gaussian(), rng.gaussian(), rng.gaussian()};
    return normalize(q);
}

// independent oracle: 3x3 rotation matrix about X, converted to a quaternion
// by the standard trace formula
using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 rot_x(double a) {
    return {{{1, 0, 0}, {0, std::cos(a), -std::sin(a)}, {0, std::sin(a), std::cos(a)}}};
}

Mat3 rot_y(double a) {
    return {{{std::cos(a), 0, std::sin(a)}, {0, 1, 0}, {-std::sin(a), 0, std::cos(a)}}};
}

Mat3 mat_mul(const Mat3& a, const Mat3& b) {
    Mat3 c{};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            double acc = 0;
            for (int k = 0; k < 3; ++k) {
                acc += a[i][k] * b[k][j];
            }
            c[i][j] = acc;
        }
    }
    return c;
}

Quat quat_from_matrix(const Mat3& m) {
    const double tr = m[0][0] + m[1][1] + m[2][2];
    Quat q;
    if (tr > 0) {
        const double s = std::sqrt(tr + 1.0) * 2;
        q.w = 0.25 * s;
        q.x = (m[2][1] - m[1][2]) / s;
        q.y = (m[0][2] - m[2][0]) / s;
        q.z = (m[1][0] - m[0][1]) / s;
    } else if (m[0][0] > m[1][1] && m[0][0] > m[2][2]) {
        const double s = std::sqrt(1.0 + m[0][0] - m[1][1] - m[2][2]) * 2;
        q.w = (m[2][1] - m[1][2]) / s;
        q.x = 0.25 * s;
        q.y = (m[0][1] + m[1][0]) / s;
        q.z = (m[0][2] + m[2][0]) / s;
    } else if (m[1][1] > m[2][2]) {
        const double s = std::sqrt(1.0 + m[1][1] - m[0][0] - m[2][2]) * 2;
        q.w = (m[0][2] - m[2][0]) / s;
        q.x = (m[0][1] + m[1][0]) / s;
        q.y = 0.25 * s;
        q.z = (m[1][2] + m[2][1]) / s;
    } else {
        const double s = std::sqrt(1.0 + m[2][2] - m[0][0] - m[1][1]) * 2;
        q.w = (m[1][0] - m[0][1]) / s;
        q.x = (m[0][2] + m[2][0]) / s;
        q.y = (m[1][2] + m[2][1]) / s;
        q.z = 0.25 * s;
    }
    return q;
}

Vec3 mat_apply(const Mat3& m, const Vec3& v) {
    return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
}

} // namespace

TEST_CASE("identity rotation leaves vectors unchanged") {
    const Vec3 v = rotate_vec(Quat{}, {1, 2, 3});
    CHECK(v.x == doctest::Approx(1).epsilon(1e-12));
    CHECK(v.y == doctest::Approx(2).epsilon(1e-12));
    CHECK(v.z == doctest::Approx(3).epsilon(1e-12));
}

TEST_CASE("slerp with coincident endpoints returns the endpoint") {
    SeededRng rng(11);
    for (int i = 0; i < 20; ++i) {
        const Quat q = random_unit_quat(rng);
        const Quat s = slerp(q, q, 0.5);
        CHECK(std::abs(s.x - q.x) < 1e-12);
        CHECK(std::abs(s.y - q.y) < 1e-12);
        CHECK(std::abs(s.z - q.z) < 1e-12);
        CHECK(std::abs(s.w - q.w) < 1e-12);
    }
}

TEST_CASE("slerp endpoints are exact and antipodal signs are handled") {
    SeededRng rng(12);
    for (int i = 0; i < 50; ++i) {
        const Quat a = random_unit_quat(rng);
        Quat b = random_unit_quat(rng);
        const Quat s0 = slerp(a, b, 0.0);
        CHECK(std::abs(dot(s0, a)) == doctest::Approx(1.0).epsilon(1e-9));
        const Quat s1 = slerp(a, b, 1.0);
        CHECK(std::abs(dot(s1, b)) == doctest::Approx(1.0).epsilon(1e-9));
        // negating one operand must not change the rotation path
        const Quat mid = slerp(a, b, 0.37);
        const Quat mid_neg = slerp(a, negate(b), 0.37);
        CHECK(std::abs(dot(mid, mid_neg)) == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("multiply and inverse satisfy the group identities on random quaternions") {
    SeededRng rng(13);
    for (int i = 0; i < 1000; ++i) {
        const Quat q = random_unit_quat(rng);
        const Quat id = multiply(q, inverse(q));
        CHECK(std::abs(id.x) < 1e-6);
        CHECK(std::abs(id.y) < 1e-6);
        CHECK(std::abs(id.z) < 1e-6);
        CHECK(std::abs(std::abs(id.w) - 1.0) < 1e-6);

        const Quat a = random_unit_quat(rng);
        const Quat b = random_unit_quat(rng);
        const Quat left = multiply(multiply(a, b), q);
        const Quat right = multiply(a, multiply(b, q));
        CHECK(std::abs(left.x - right.x) < 1e-6);
        CHECK(std::abs(left.y - right.y) < 1e-6);
        CHECK(std::abs(left.z - right.z) < 1e-6);
        CHECK(std::abs(left.w - right.w) < 1e-6);
    }
}

TEST_CASE("normalize rejects near-zero quaternions") {
    CHECK_THROWS_AS(normalize(Quat{1e-9, 0, 0, 0}), Error);
    try {
        normalize(Quat{0, 0, 0, 0});
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::degenerate_quaternion);
    }
}

TEST_CASE("pitch extraction matches the rotation-matrix oracle") {
    const double angle = 30.0 * kPi / 180.0;
    const Quat q = quat_from_matrix(rot_x(angle));
    CHECK(pitch_of(q) == doctest::Approx(angle).epsilon(1e-9));
    CHECK(pitch_of(q) * 180.0 / kPi == doctest::Approx(30.0).epsilon(1e-6));

    // looking up is positive by convention
    CHECK(pitch_of(quat_from_pitch(0.2)) > 0.0);
    const Vec3 fwd = rotate_vec(quat_from_pitch(0.2), {0, 0, -1});
    CHECK(fwd.y > 0.0);
}

TEST_CASE("yaw/pitch composition recovers both angles under the matrix oracle") {
    SeededRng rng(14);
    for (int i = 0; i < 200; ++i) {
        const double yaw = rng.uniform(-kPi + 0.01, kPi - 0.01);
        const double pitch = rng.uniform(-1.2, 1.2);
        const Mat3 m = mat_mul(rot_y(yaw), rot_x(pitch));
        const Quat q = quat_from_matrix(m);
        CHECK(yaw_of(q) == doctest::Approx(yaw).epsilon(1e-8));
        CHECK(pitch_of(q) == doctest::Approx(pitch).epsilon(1e-8));

        // rotate_vec agrees with direct matrix application
        const Vec3 v{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
        const Vec3 qv = rotate_vec(q, v);
        const Vec3 mv = mat_apply(m, v);
        CHECK(std::abs(qv.x - mv.x) < 1e-9);
        CHECK(std::abs(qv.y - mv.y) < 1e-9);
        CHECK(std::abs(qv.z - mv.z) < 1e-9);
    }
}

TEST_CASE("quat_from_yaw rotates forward as expected") {
    const Quat q = quat_from_yaw(kPi / 2);
    const Vec3 fwd = rotate_vec(q, {0, 0, -1});
    CHECK(fwd.x == doctest::Approx(-1.0).epsilon(1e-9));
    CHECK(std::abs(fwd.y) < 1e-12);
    CHECK(std::abs(fwd.z) < 1e-9);
}
