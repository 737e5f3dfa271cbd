#include "xrid/kinematics.hpp"

#include "xrid/error.hpp"
#include "xrid/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace xrid;
using namespace xrid::kinematics;

namespace {

constexpr double kPi = 3.14159265358979323846;

io::Frame frame_at(double t, const Vec3& hmd_pos, const Quat& hmd_rot, const Vec3& left, const Vec3& right) {
    io::Frame f;
    f.t = t;
    f.hmd = {hmd_pos, hmd_rot};
    f.left = {left, {0, 0, 0, 1}};
    f.right = {right, {0, 0, 0, 1}};
    return f;
}

io::Recording linear_motion_recording(double rate_hz, double seconds) {
    io::Recording rec;
    rec.user = "u";
    rec.app = "a";
    rec.session = "s";
    const int n = static_cast<int>(seconds * rate_hz) + 1;
    for (int i = 0; i < n; ++i) {
        const double t = i / rate_hz;
        rec.frames.push_back(frame_at(t, {t, 1.6, 0.0}, {0, 0, 0, 1}, {t - 0.2, 1.2, -0.3}, {t + 0.2, 1.2, -0.3}));
    }
    return rec;
}

io::Recording random_recording(SeededRng& rng, int frames, double rate_hz) {
    io::Recording rec;
    rec.user = "u";
    rec.app = "a";
    rec.session = "s";
    for (int i = 0; i < frames; ++i) {
        const double t = i / rate_hz;
        const Quat hmd_rot = normalize(Quat{0.2 * rng.gaussian(), 0.2 * rng.gaussian(), 0.2 * rng.gaussian(),
                                            1.0 + 0.2 * rng.gaussian()});
        const Quat ctl_rot = normalize(Quat{0.2 * rng.gaussian(), 0.2 * rng.gaussian(), 0.2 * rng.gaussian(),
                                            1.0 + 0.2 * rng.gaussian()});
        io::Frame f;
        f.t = t;
        f.hmd = {{rng.uniform(-1, 1), 1.5 + rng.uniform(-0.2, 0.2), rng.uniform(-1, 1)}, hmd_rot};
        f.left = {{rng.uniform(-1, 1), 1.2, rng.uniform(-1, 1)}, ctl_rot};
        f.right = {{rng.uniform(-1, 1), 1.2, rng.uniform(-1, 1)}, multiply(ctl_rot, quat_from_yaw(0.3))};
        rec.frames.push_back(f);
    }
    return rec;
}

} // namespace

TEST_CASE("resampling a linear 60 Hz signal reproduces it exactly at 30 FPS") {
    const io::Recording rec = linear_motion_recording(60.0, 2.0);
    const io::Recording out = resample_to_30fps(rec);
    CHECK(out.frames.size() == 61); // floor(2*30)+1
    for (size_t k = 0; k < out.frames.size(); ++k) {
        const double t = static_cast<double>(k) / 30.0;
        CHECK(out.frames[k].t == doctest::Approx(t).epsilon(1e-12));
        CHECK(out.frames[k].hmd.pos.x == doctest::Approx(t).epsilon(1e-9));
        CHECK(out.frames[k].hmd.pos.y == doctest::Approx(1.6).epsilon(1e-12));
    }
}

TEST_CASE("resampling a constant pose keeps it constant") {
    io::Recording rec;
    for (int i = 0; i < 10; ++i) {
        rec.frames.push_back(frame_at(i * 0.045, {1, 1.7, -2}, quat_from_yaw(0.8), {0.9, 1.2, -2.2}, {1.1, 1.2, -2.2}));
    }
    const io::Recording out = resample_to_30fps(rec);
    for (const io::Frame& f : out.frames) {
        CHECK(f.hmd.pos.x == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(std::abs(dot(f.hmd.rot, quat_from_yaw(0.8))) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("a 600 s recording resamples to 18001 frames") {
    const io::Recording rec = linear_motion_recording(10.0, 600.0); // low-rate input keeps this cheap
    CHECK(rec.frames.back().t == doctest::Approx(600.0));
    const io::Recording out = resample_to_30fps(rec);
    CHECK(out.frames.size() == 18001);
}

TEST_CASE("resampling needs at least two frames") {
    io::Recording rec;
    rec.frames.push_back(frame_at(0, {0, 1.6, 0}, {0, 0, 0, 1}, {0, 1, 0}, {0, 1, 0}));
    try {
        resample_to_30fps(rec);
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::too_short);
    }
}

TEST_CASE("body-relative controller position under +90 degree yaw") {
    // facing +yaw 90 degrees with the controller 1 m ahead of the face: the
    // heading frame sees it straight ahead, (0, 0, -1)
    const Quat heading = quat_from_yaw(kPi / 2);
    const Vec3 hmd_pos{2.0, 1.6, -1.0};
    const Vec3 fwd = rotate_vec(heading, {0, 0, -1});
    const Vec3 ctl = hmd_pos + fwd;

    io::Recording rec;
    rec.frames.push_back(frame_at(0.0, hmd_pos, heading, ctl, ctl));
    rec.frames.push_back(frame_at(1.0 / 30.0, hmd_pos, heading, ctl, ctl));
    const auto br = encode_body_relative(rec);
    CHECK(br[0].left_pos.x == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(br[0].left_pos.y == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(br[0].left_pos.z == doctest::Approx(-1.0).epsilon(1e-9));
}

TEST_CASE("pure yaw leaves an identity hmd residual") {
    SeededRng rng(5);
    for (int i = 0; i < 20; ++i) {
        const Quat heading = quat_from_yaw(rng.uniform(-kPi, kPi));
        io::Recording rec;
        rec.frames.push_back(frame_at(0.0, {0, 1.6, 0}, heading, {0, 1, 0}, {0, 1, 0}));
        const auto br = encode_body_relative(rec);
        CHECK(std::abs(br[0].hmd_residual.x) < 1e-9);
        CHECK(std::abs(br[0].hmd_residual.y) < 1e-9);
        CHECK(std::abs(br[0].hmd_residual.z) < 1e-9);
        CHECK(std::abs(std::abs(br[0].hmd_residual.w) - 1.0) < 1e-9);
    }
}

TEST_CASE("global translation leaves the body-relative tuple unchanged") {
    SeededRng rng(6);
    io::Recording rec = random_recording(rng, 30, 30.0);
    io::Recording moved = rec;
    const Vec3 shift{5.0, 0.0, -3.0};
    for (io::Frame& f : moved.frames) {
        f.hmd.pos = f.hmd.pos + shift;
        f.left.pos = f.left.pos + shift;
        f.right.pos = f.right.pos + shift;
    }
    const auto a = encode_body_relative(rec);
    const auto b = encode_body_relative(moved);
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(std::abs(a[i].left_pos.x - b[i].left_pos.x) < 1e-6);
        CHECK(std::abs(a[i].left_pos.y - b[i].left_pos.y) < 1e-6);
        CHECK(std::abs(a[i].left_pos.z - b[i].left_pos.z) < 1e-6);
        CHECK(std::abs(a[i].right_pos.z - b[i].right_pos.z) < 1e-6);
        CHECK(std::abs(a[i].hmd_residual.w - b[i].hmd_residual.w) < 1e-6);
    }
}

TEST_CASE("brv of a stationary user is all zeros") {
    io::Recording rec;
    for (int i = 0; i < 10; ++i) {
        rec.frames.push_back(frame_at(i / 30.0, {0, 1.6, 0}, quat_from_yaw(0.4), {0.2, 1.2, -0.4}, {-0.2, 1.2, -0.4}));
    }
    const auto brv = encode_brv(encode_body_relative(rec));
    CHECK(brv.size() == 9);
    for (const FeatureFrame& f : brv) {
        for (float v : f) {
            CHECK(std::abs(v) < 1e-7);
        }
    }
}

TEST_CASE("brv of linear controller motion is a constant velocity") {
    io::Recording rec;
    for (int i = 0; i < 20; ++i) {
        rec.frames.push_back(
            frame_at(i / 30.0, {0, 1.6, 0}, {0, 0, 0, 1}, {0.01 * i, 1.2, -0.4}, {-0.2, 1.2, -0.4}));
    }
    const auto brv = encode_brv(encode_body_relative(rec));
    for (const FeatureFrame& f : brv) {
        CHECK(f[4] == doctest::Approx(0.01).epsilon(1e-5)); // left pos x delta
        CHECK(std::abs(f[5]) < 1e-7);
        CHECK(std::abs(f[6]) < 1e-7);
    }
}

TEST_CASE("brv matches an independent diff oracle on random body-relative input") {
    SeededRng rng(17);
    std::vector<BodyRelativeFrame> br;
    for (int i = 0; i < 10; ++i) {
        BodyRelativeFrame f;
        f.hmd_residual = normalize(Quat{rng.gaussian(), rng.gaussian(), rng.gaussian(), rng.gaussian()});
        f.left_pos = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        f.left_rot = normalize(Quat{rng.gaussian(), rng.gaussian(), rng.gaussian(), rng.gaussian()});
        f.right_pos = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        f.right_rot = normalize(Quat{rng.gaussian(), rng.gaussian(), rng.gaussian(), rng.gaussian()});
        br.push_back(f);
    }
    const auto brv = encode_brv(br);

    // oracle: sign-align sequentially, canonicalize each channel's anchor
    // sign, then componentwise diff
    auto aligned = br;
    for (size_t i = 1; i < aligned.size(); ++i) {
        auto fix = [](const Quat& prev, Quat q) { return dot(prev, q) < 0 ? negate(q) : q; };
        aligned[i].hmd_residual = fix(aligned[i - 1].hmd_residual, aligned[i].hmd_residual);
        aligned[i].left_rot = fix(aligned[i - 1].left_rot, aligned[i].left_rot);
        aligned[i].right_rot = fix(aligned[i - 1].right_rot, aligned[i].right_rot);
    }
    auto canonicalize = [&](Quat BodyRelativeFrame::*member) {
        const Quat& q0 = aligned.front().*member;
        bool flip = false;
        for (const double v : {q0.w, q0.x, q0.y, q0.z}) {
            if (std::abs(v) > 1e-12) {
                flip = v < 0;
                break;
            }
        }
        if (flip) {
            for (auto& f : aligned) {
                f.*member = negate(f.*member);
            }
        }
    };
    canonicalize(&BodyRelativeFrame::hmd_residual);
    canonicalize(&BodyRelativeFrame::left_rot);
    canonicalize(&BodyRelativeFrame::right_rot);
    for (size_t i = 0; i + 1 < aligned.size(); ++i) {
        const double expected[18] = {
            aligned[i + 1].hmd_residual.x - aligned[i].hmd_residual.x,
            aligned[i + 1].hmd_residual.y - aligned[i].hmd_residual.y,
            aligned[i + 1].hmd_residual.z - aligned[i].hmd_residual.z,
            aligned[i + 1].hmd_residual.w - aligned[i].hmd_residual.w,
            aligned[i + 1].left_pos.x - aligned[i].left_pos.x,
            aligned[i + 1].left_pos.y - aligned[i].left_pos.y,
            aligned[i + 1].left_pos.z - aligned[i].left_pos.z,
            aligned[i + 1].left_rot.x - aligned[i].left_rot.x,
            aligned[i + 1].left_rot.y - aligned[i].left_rot.y,
            aligned[i + 1].left_rot.z - aligned[i].left_rot.z,
            aligned[i + 1].left_rot.w - aligned[i].left_rot.w,
            aligned[i + 1].right_pos.x - aligned[i].right_pos.x,
            aligned[i + 1].right_pos.y - aligned[i].right_pos.y,
            aligned[i + 1].right_pos.z - aligned[i].right_pos.z,
            aligned[i + 1].right_rot.x - aligned[i].right_rot.x,
            aligned[i + 1].right_rot.y - aligned[i].right_rot.y,
            aligned[i + 1].right_rot.z - aligned[i].right_rot.z,
            aligned[i + 1].right_rot.w - aligned[i].right_rot.w,
        };
        for (int c = 0; c < 18; ++c) {
            // features are stored as float32; quantize the oracle the same way
            CHECK(std::abs(brv[i][static_cast<size_t>(c)] - static_cast<float>(expected[c])) < 1e-9);
        }
    }
}

TEST_CASE("rigid invariance: global translation plus yaw leaves brv features unchanged") {
    SeededRng rng(23);
    for (int trial = 0; trial < 10; ++trial) {
        io::Recording rec = random_recording(rng, 40, 30.0);
        const double yaw = rng.uniform(-kPi, kPi);
        const Vec3 shift{rng.uniform(-10, 10), 0.0, rng.uniform(-10, 10)};
        const Quat rot = quat_from_yaw(yaw);

        io::Recording moved = rec;
        for (io::Frame& f : moved.frames) {
            for (io::DevicePose* p : {&f.hmd, &f.left, &f.right}) {
                p->pos = rotate_vec(rot, p->pos) + shift;
                p->rot = multiply(rot, p->rot);
            }
        }
        const auto brv_a = encode_brv(encode_body_relative(rec));
        const auto brv_b = encode_brv(encode_body_relative(moved));
        REQUIRE(brv_a.size() == brv_b.size());
        for (size_t i = 0; i < brv_a.size(); ++i) {
            for (int c = 0; c < kFeatureCount; ++c) {
                CHECK(std::abs(brv_a[i][static_cast<size_t>(c)] - brv_b[i][static_cast<size_t>(c)]) < 1e-6);
            }
        }
    }
}

TEST_CASE("windowing counts follow floor((L - W) / S) + 1") {
    auto make_features = [](int n) {
        std::vector<FeatureFrame> f(static_cast<size_t>(n));
        for (auto& frame : f) {
            frame.fill(0.5f);
        }
        return f;
    };
    EncodingConfig cfg;
    cfg.window_size = 450;
    cfg.frame_step = 50;

    // the formula is normative: 18000 BRV frames (a full 600 s stream) give
    // 352 windows, 17999 give 351
    CHECK(make_windows(make_features(18000), cfg, "u", "a", "s").size() == 352);
    CHECK(make_windows(make_features(17999), cfg, "u", "a", "s").size() == 351);

    cfg.window_size = 4;
    cfg.frame_step = 3;
    CHECK(make_windows(make_features(4), cfg, "u", "a", "s").size() == 1);
    try {
        make_windows(make_features(3), cfg, "u", "a", "s");
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::too_short);
    }
}

TEST_CASE("windowing matches a brute-force enumerator on random shapes") {
    SeededRng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        const int w = 1 + static_cast<int>(rng.uniform_int(40));
        const int s = 1 + static_cast<int>(rng.uniform_int(25));
        const int l = w + static_cast<int>(rng.uniform_int(300));
        std::vector<FeatureFrame> features(static_cast<size_t>(l));
        for (auto& f : features) {
            f.fill(0.0f);
        }
        EncodingConfig cfg;
        cfg.window_size = w;
        cfg.frame_step = s;
        const auto windows = make_windows(features, cfg, "u", "a", "s");

        // brute force: enumerate starts until the window no longer fits
        int expected = 0;
        for (int start = 0; start + w <= l; start += s) {
            ++expected;
        }
        CHECK(static_cast<int>(windows.size()) == expected);
        CHECK(static_cast<int>(windows.size()) == window_count(l, w, s));
        for (size_t i = 0; i < windows.size(); ++i) {
            CHECK(windows[i].start_frame == static_cast<int>(i) * s);
            CHECK(windows[i].frames.rows() == w);
            CHECK(windows[i].frames.cols() == kFeatureCount);
        }
    }
}

TEST_CASE("preprocess pipeline emits 18-feature windows with identity metadata") {
    SeededRng rng(37);
    io::Recording rec = random_recording(rng, 200, 30.0);
    rec.user = "u07";
    rec.app = io::kSuperhotVr;
    rec.session = "s01";
    EncodingConfig cfg;
    cfg.window_size = 30;
    cfg.frame_step = 10;
    const auto windows = preprocess_recording(rec, cfg);
    CHECK(!windows.empty());
    for (const FeatureWindow& w : windows) {
        CHECK(w.frames.rows() == 30);
        CHECK(w.frames.cols() == 18);
        CHECK(w.user == "u07");
        CHECK(w.app == io::kSuperhotVr);
        CHECK(w.frames.all_finite());
    }
}

TEST_CASE("window debug dump writes one row per (window, frame)") {
    SeededRng rng(41);
    io::Recording rec = random_recording(rng, 100, 30.0);
    EncodingConfig cfg;
    cfg.window_size = 20;
    cfg.frame_step = 20;
    const auto windows = preprocess_recording(rec, cfg);
    const auto path = std::filesystem::temp_directory_path() / "xrid_windows_dump.csv";
    dump_windows_csv(windows, path);

    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line.rfind("window,frame,f0,", 0) == 0);
    size_t rows = 0;
    while (std::getline(in, line)) {
        ++rows;
    }
    CHECK(rows == windows.size() * 20);
}
