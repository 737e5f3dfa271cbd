#pragma once

#include "xrid/motion_io.hpp"
#include "xrid/tensor.hpp"

#include <array>
#include <filesystem>
#include <vector>

namespace xrid::kinematics {

// Preprocessing pipeline: 30 FPS resampling, body-relative (BR) re-encoding
// against the HMD position and yaw-only heading, per-frame differencing (BRV)
// and sliding-window extraction.

constexpr int kFeatureCount = 18;
constexpr double kTargetFps = 30.0;

// Feature layout of one BRV frame, in order:
//   [0..3]   HMD residual rotation delta (x, y, z, w)
//   [4..6]   left controller position delta (x, y, z)
//   [7..10]  left controller rotation delta (x, y, z, w)
//   [11..13] right controller position delta (x, y, z)
//   [14..17] right controller rotation delta (x, y, z, w)
using FeatureFrame = std::array<float, kFeatureCount>;

struct EncodingConfig {
    double target_fps = kTargetFps;
    int window_size = 450;
    int frame_step = 50;
};

struct FeatureWindow {
    Tensor frames; // window_size x 18
    io::UserId user;
    io::AppLabel app;
    std::string session;
    int start_frame = 0; // index into the BRV stream
};

// Resamples onto the fixed 30 FPS grid covering [0, duration]; output frame k
// carries t = k/30 sampled at t_first + k/30. Positions interpolate linearly,
// rotations slerp. Output frame count = floor(duration * 30) + 1. Throws
// Errc::too_short for fewer than 2 input frames.
io::Recording resample_to_30fps(const io::Recording& rec);

// One frame of the body-relative encoding: controller poses re-expressed in
// the HMD's position + yaw-heading frame, HMD reduced to its heading-residual
// rotation (pitch/roll; the yaw component is identically removed).
struct BodyRelativeFrame {
    Quat hmd_residual;
    Vec3 left_pos;
    Quat left_rot;
    Vec3 right_pos;
    Quat right_rot;
};

// When |HMD pitch| exceeds this, the heading yaw is held from the last
// non-degenerate frame.
constexpr double kGimbalPitchLimitDeg = 89.0;

std::vector<BodyRelativeFrame> encode_body_relative(const io::Recording& resampled);

// First differences of the BR stream: positions componentwise, rotations
// componentwise after sign-aligning consecutive quaternions (dot >= 0).
// Output length = input length - 1. Throws Errc::too_short below 2 frames.
std::vector<FeatureFrame> encode_brv(const std::vector<BodyRelativeFrame>& br);

// Windows start at 0, step, 2*step, ...; count = floor((L - W) / S) + 1, the
// trailing partial window is dropped. Throws Errc::too_short when L < W.
std::vector<FeatureWindow> make_windows(const std::vector<FeatureFrame>& features, const EncodingConfig& config,
                                        const io::UserId& user, const io::AppLabel& app, const std::string& session);

inline int window_count(int64_t length, int window_size, int frame_step) {
    if (length < window_size) {
        return 0;
    }
    return static_cast<int>((length - window_size) / frame_step) + 1;
}

// Full per-recording pipeline: resample -> BR -> BRV -> windows.
std::vector<FeatureWindow> preprocess_recording(const io::Recording& rec, const EncodingConfig& config);

// Debug dump: one row per (window, frame) with the 18 feature columns, for
// diffing against other implementations.
void dump_windows_csv(const std::vector<FeatureWindow>& windows, const std::filesystem::path& path);

} // namespace xrid::kinematics
