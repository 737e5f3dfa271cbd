#pragma once

#include "xrid/geometry.hpp"
#include "xrid/rng.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace xrid::io {

using UserId = std::string;

// Application labels are open-ended strings; the five canonical apps are
// listed in play order, which is also the fixed row/column order of every
// exported heatmap.
using AppLabel = std::string;

inline constexpr const char* kSynthRiders = "synth_riders";
inline constexpr const char* kSuperhotVr = "superhot_vr";
inline constexpr const char* kBeatSaber = "beat_saber";
inline constexpr const char* kHalfLifeAlyx = "half_life_alyx";
inline constexpr const char* kSocialVr = "social_vr";

const std::array<AppLabel, 5>& known_apps();

// Sort key: canonical apps first in play order, custom labels after,
// alphabetically.
std::pair<int, AppLabel> app_sort_key(const AppLabel& app);

// ---------------------------------------------------------------------------
// Tracking data model
// ---------------------------------------------------------------------------

struct DevicePose {
    Vec3 pos;  // meters
    Quat rot;  // unit quaternion, (x, y, z, w)
};

struct Frame {
    double t = 0.0; // seconds since recording start
    DevicePose hmd;
    DevicePose left;
    DevicePose right;
};

struct Recording {
    UserId user;
    AppLabel app;
    std::string session;
    double nominal_rate_hz = 0.0;
    std::vector<Frame> frames;

    double duration() const { return frames.empty() ? 0.0 : frames.back().t - frames.front().t; }
};

// Normalizes quaternions, sorts frames by time (stable), collapses duplicate
// timestamps to the first occurrence and checks finiteness. Throws
// Errc::non_monotonic_time when more than 1% of rows regress and
// Errc::empty_recording when nothing is left. Idempotent.
Recording validate_recording(Recording rec);

// Wide-CSV schema, one row per frame:
//   t,hmd_px,...,hmd_rw,l_px,...,l_rw,r_px,...,r_rw   (22 columns)
extern const char* const kRecordingCsvHeader;

// Reads and validates a recording. When the filename follows
// "<user>__<app>__<session>.csv" the identity fields are filled from it.
Recording parse_recording(const std::filesystem::path& path);

// Writes the wide-CSV representation. parse(write(r)) == r within 1e-6 per
// field. Throws Errc::empty_recording for frame-less input.
void write_recording(const Recording& rec, const std::filesystem::path& path);

std::string recording_filename(const UserId& user, const AppLabel& app, const std::string& session);

// ---------------------------------------------------------------------------
// Dataset manifests
// ---------------------------------------------------------------------------

struct ManifestEntry {
    UserId user;
    AppLabel app;
    std::string session;
    std::string path; // relative to the manifest file
    double duration_s = 0.0;
};

struct DatasetManifest {
    int schema_version = 1;
    std::vector<ManifestEntry> entries;
};

// Load validates: no duplicate (user, app, session) triples and every
// referenced file exists next to the manifest.
DatasetManifest load_manifest(const std::filesystem::path& manifest_path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& manifest_path);

Recording load_entry(const ManifestEntry& entry, const std::filesystem::path& manifest_dir);

std::vector<UserId> manifest_users(const DatasetManifest& manifest);
std::vector<AppLabel> manifest_apps(const DatasetManifest& manifest);

// Scans a directory for "<user>__<app>__<session>.csv" files, validates each
// and builds a manifest.
DatasetManifest ingest_directory(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Synthetic dataset generator
// ---------------------------------------------------------------------------

// Per-user motion signature. variation_seed feeds the secondary shape
// parameters (axis weights, secondary phases) so that one profile fully
// determines a user's noise-free trajectory.
struct SynthProfile {
    double arm_length_m = 0.65;
    double rest_height_m = 1.6;
    double osc_freq_hz = 1.0;
    double phase_rad = 0.0;
    double head_bob_amp_m = 0.02;
    double jitter_sigma_m = 0.003;
    uint64_t variation_seed = 0;
};

// Per-app modulation of a user signature. amplitude_scale additionally shifts
// the oscillation frequency (f_eff = osc_freq * sqrt(amplitude_scale)) so
// that strongly modulated apps displace the dominant identification cue.
struct AppModulation {
    double amplitude_scale = 1.0;   // > 0
    double head_travel_scale = 1.0; // >= 0
    double pitch_bias_deg = 0.0;
};

// Archetype table: rhythm apps get large controller amplitude, shooter apps
// large head travel, the social app low amplitude. level interpolates
// exponentially between "no app differences" (0) and increasingly extreme
// modulation; level 1 is the default archetype strength.
AppModulation modulation_for(const AppLabel& app, double level);

SynthProfile sample_profile(SeededRng& rng, int user_index, int n_users);

// Analytic description of one world-space controller coordinate under zero
// jitter and zero head motion: value(t) = offset + amplitude * sin(omega * t + phase).
struct SinusoidSpec {
    double offset = 0.0;
    double amplitude = 0.0;
    double omega = 0.0;
    double phase = 0.0;

    double eval(double t) const { return offset + amplitude * std::sin(omega * t + phase); }
};

// Per-axis analytic controller motion (x, y, z world axes; heading fixed at
// identity). The generator evaluates exactly these curves.
std::array<SinusoidSpec, 3> controller_motion_spec(const SynthProfile& profile, const AppModulation& mod,
                                                   bool left_hand);

Recording synthesize_recording(const SynthProfile& profile, const AppModulation& mod, const UserId& user,
                               const AppLabel& app, const std::string& session, double seconds, double fps,
                               uint64_t noise_seed);

struct SynthParams {
    int n_users = 5;
    std::vector<AppLabel> apps; // empty = the five canonical apps
    double minutes_per_app = 2.0;
    uint64_t seed = 0;
    double app_modulation_level = 1.0;
    double fps = 30.0;
};

// Writes one CSV per (user, app) plus manifest.json into out_dir. Output is a
// pure function of the parameter set: rerunning produces byte-identical files.
DatasetManifest generate_synthetic_dataset(const SynthParams& params, const std::filesystem::path& out_dir);

} // namespace xrid::io
