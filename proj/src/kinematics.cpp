#include "xrid/kinematics.hpp"

#include "xrid/error.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace xrid::kinematics {

io::Recording resample_to_30fps(const io::Recording& rec) {
    require(rec.frames.size() >= 2, Errc::too_short, "resampling needs at least 2 frames");

    const double t0 = rec.frames.front().t;
    const double duration = rec.frames.back().t - t0;
    const int64_t n_out = static_cast<int64_t>(std::floor(duration * kTargetFps)) + 1;

    io::Recording out;
    out.user = rec.user;
    out.app = rec.app;
    out.session = rec.session;
    out.nominal_rate_hz = kTargetFps;
    out.frames.reserve(static_cast<size_t>(n_out));

    size_t hi = 1; // rec.frames[hi-1].t <= t_src <= rec.frames[hi].t after advance
    for (int64_t k = 0; k < n_out; ++k) {
        const double t_rel = static_cast<double>(k) / kTargetFps;
        const double t_src = t0 + t_rel;
        while (hi + 1 < rec.frames.size() && rec.frames[hi].t < t_src) {
            ++hi;
        }
        const io::Frame& a = rec.frames[hi - 1];
        const io::Frame& b = rec.frames[hi];
        const double span = b.t - a.t;
        const double u = span > 0.0 ? std::clamp((t_src - a.t) / span, 0.0, 1.0) : 0.0;

        io::Frame f;
        f.t = t_rel;
        const io::DevicePose* src_a[3] = {&a.hmd, &a.left, &a.right};
        const io::DevicePose* src_b[3] = {&b.hmd, &b.left, &b.right};
        io::DevicePose* dst[3] = {&f.hmd, &f.left, &f.right};
        for (int d = 0; d < 3; ++d) {
            dst[d]->pos = src_a[d]->pos + (src_b[d]->pos - src_a[d]->pos) * u;
            dst[d]->rot = slerp(src_a[d]->rot, src_b[d]->rot, u);
        }
        out.frames.push_back(f);
    }
    return out;
}

std::vector<BodyRelativeFrame> encode_body_relative(const io::Recording& resampled) {
    std::vector<BodyRelativeFrame> out;
    out.reserve(resampled.frames.size());

    const double gimbal_limit = kGimbalPitchLimitDeg * 3.14159265358979323846 / 180.0;
    double held_yaw = 0.0;
    bool have_yaw = false;

    for (const io::Frame& f : resampled.frames) {
        double yaw = held_yaw;
        if (std::abs(pitch_of(f.hmd.rot)) <= gimbal_limit) {
            yaw = yaw_of(f.hmd.rot);
            held_yaw = yaw;
            have_yaw = true;
        } else if (!have_yaw) {
            yaw = 0.0; // degenerate from the first frame: fall back to world heading
        }
        const Quat heading_inv = inverse(quat_from_yaw(yaw));

        BodyRelativeFrame br;
        br.hmd_residual = multiply(heading_inv, f.hmd.rot);
        br.left_pos = rotate_vec(heading_inv, f.left.pos - f.hmd.pos);
        br.left_rot = multiply(heading_inv, f.left.rot);
        br.right_pos = rotate_vec(heading_inv, f.right.pos - f.hmd.pos);
        br.right_rot = multiply(heading_inv, f.right.rot);
        out.push_back(br);
    }
    return out;
}

namespace {

Quat align_sign(const Quat& prev, const Quat& q) { return dot(prev, q) < 0.0 ? negate(q) : q; }

// Canonical anchor sign: first component of (w, x, y, z) with magnitude above
// 1e-12 must be positive. Keeps the whole aligned channel independent of the
// arbitrary quaternion sign the encoding started from, so a wrapped global
// yaw cannot flip the feature stream.
bool anchor_needs_flip(const Quat& q) {
    for (const double v : {q.w, q.x, q.y, q.z}) {
        if (std::abs(v) > 1e-12) {
            return v < 0.0;
        }
    }
    return false;
}

void push_quat_delta(FeatureFrame& f, int base, const Quat& a, const Quat& b) {
    f[base + 0] = static_cast<float>(b.x - a.x);
    f[base + 1] = static_cast<float>(b.y - a.y);
    f[base + 2] = static_cast<float>(b.z - a.z);
    f[base + 3] = static_cast<float>(b.w - a.w);
}

void push_vec_delta(FeatureFrame& f, int base, const Vec3& a, const Vec3& b) {
    f[base + 0] = static_cast<float>(b.x - a.x);
    f[base + 1] = static_cast<float>(b.y - a.y);
    f[base + 2] = static_cast<float>(b.z - a.z);
}

} // namespace

std::vector<FeatureFrame> encode_brv(const std::vector<BodyRelativeFrame>& br) {
    require(br.size() >= 2, Errc::too_short, "BRV needs at least 2 body-relative frames");

    // sign-align each rotation channel to its predecessor before differencing
    std::vector<BodyRelativeFrame> aligned = br;
    for (size_t i = 1; i < aligned.size(); ++i) {
        aligned[i].hmd_residual = align_sign(aligned[i - 1].hmd_residual, aligned[i].hmd_residual);
        aligned[i].left_rot = align_sign(aligned[i - 1].left_rot, aligned[i].left_rot);
        aligned[i].right_rot = align_sign(aligned[i - 1].right_rot, aligned[i].right_rot);
    }
    const auto channel = [&](Quat BodyRelativeFrame::*member) {
        if (anchor_needs_flip(aligned.front().*member)) {
            for (BodyRelativeFrame& f : aligned) {
                f.*member = negate(f.*member);
            }
        }
    };
    channel(&BodyRelativeFrame::hmd_residual);
    channel(&BodyRelativeFrame::left_rot);
    channel(&BodyRelativeFrame::right_rot);

    std::vector<FeatureFrame> out(aligned.size() - 1);
    for (size_t i = 0; i + 1 < aligned.size(); ++i) {
        const BodyRelativeFrame& a = aligned[i];
        const BodyRelativeFrame& b = aligned[i + 1];
        FeatureFrame& f = out[i];
        push_quat_delta(f, 0, a.hmd_residual, b.hmd_residual);
        push_vec_delta(f, 4, a.left_pos, b.left_pos);
        push_quat_delta(f, 7, a.left_rot, b.left_rot);
        push_vec_delta(f, 11, a.right_pos, b.right_pos);
        push_quat_delta(f, 14, a.right_rot, b.right_rot);
    }
    return out;
}

std::vector<FeatureWindow> make_windows(const std::vector<FeatureFrame>& features, const EncodingConfig& config,
                                        const io::UserId& user, const io::AppLabel& app, const std::string& session) {
    require(config.window_size > 0 && config.frame_step > 0, Errc::invalid_argument,
            "window_size and frame_step must be positive");
    const int64_t length = static_cast<int64_t>(features.size());
    require(length >= config.window_size, Errc::too_short,
            "feature sequence of length " + std::to_string(length) + " cannot fill a window of " +
                std::to_string(config.window_size));

    const int count = window_count(length, config.window_size, config.frame_step);
    std::vector<FeatureWindow> out;
    out.reserve(static_cast<size_t>(count));
    for (int w = 0; w < count; ++w) {
        const int start = w * config.frame_step;
        FeatureWindow win;
        win.frames = Tensor::zeros({config.window_size, kFeatureCount});
        for (int r = 0; r < config.window_size; ++r) {
            const FeatureFrame& src = features[static_cast<size_t>(start + r)];
            for (int c = 0; c < kFeatureCount; ++c) {
                win.frames.at(r, c) = src[static_cast<size_t>(c)];
            }
        }
        win.user = user;
        win.app = app;
        win.session = session;
        win.start_frame = start;
        out.push_back(std::move(win));
    }
    return out;
}

std::vector<FeatureWindow> preprocess_recording(const io::Recording& rec, const EncodingConfig& config) {
    const io::Recording at30 = resample_to_30fps(rec);
    const std::vector<BodyRelativeFrame> br = encode_body_relative(at30);
    const std::vector<FeatureFrame> brv = encode_brv(br);
    return make_windows(brv, config, rec.user, rec.app, rec.session);
}

void dump_windows_csv(const std::vector<FeatureWindow>& windows, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.is_open(), Errc::io_failure, "cannot write " + path.string());
    out << "window,frame";
    for (int c = 0; c < kFeatureCount; ++c) {
        out << ",f" << c;
    }
    out << '\n';
    for (size_t w = 0; w < windows.size(); ++w) {
        const Tensor& m = windows[w].frames;
        for (int r = 0; r < m.rows(); ++r) {
            out << w << ',' << r;
            char buf[48];
            for (int c = 0; c < kFeatureCount; ++c) {
                std::snprintf(buf, sizeof(buf), ",%.9g", static_cast<double>(m.at(r, c)));
                out << buf;
            }
            out << '\n';
        }
    }
    require(out.good(), Errc::io_failure, "write failed for " + path.string());
}

} // namespace xrid::kinematics
