#include "xrid/motion_io.hpp"

#include "xrid/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace xrid::io {

namespace fs = std::filesystem;
using nlohmann::json;

const std::array<AppLabel, 5>& known_apps() {
    static const std::array<AppLabel, 5> apps = {kSynthRiders, kSuperhotVr, kBeatSaber, kHalfLifeAlyx, kSocialVr};
    return apps;
}

std::pair<int, AppLabel> app_sort_key(const AppLabel& app) {
    const auto& apps = known_apps();
    for (int i = 0; i < static_cast<int>(apps.size()); ++i) {
        if (apps[i] == app) {
            return {i, AppLabel{}};
        }
    }
    return {static_cast<int>(apps.size()), app};
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace {

// Bitwise idempotent: quaternions already unit to 1e-12 are left untouched.
Quat normalize_lazy(const Quat& q) {
    const double n2 = dot(q, q);
    require(n2 >= 1e-16, Errc::degenerate_quaternion, "near-zero rotation quaternion");
    if (std::abs(n2 - 1.0) <= 1e-12) {
        return q;
    }
    return normalize(q);
}

void check_pose_finite(const DevicePose& p, Errc code, const std::string& where) {
    require(vec_finite(p.pos) && quat_finite(p.rot), code, where + ": non-finite pose component");
}

} // namespace

Recording validate_recording(Recording rec) {
    require(!rec.frames.empty(), Errc::empty_recording, "recording has no frames");

    size_t regressions = 0;
    for (size_t i = 1; i < rec.frames.size(); ++i) {
        if (rec.frames[i].t < rec.frames[i - 1].t) {
            ++regressions;
        }
    }
    if (static_cast<double>(regressions) > 0.01 * static_cast<double>(rec.frames.size())) {
        fail(Errc::non_monotonic_time,
             std::to_string(regressions) + " of " + std::to_string(rec.frames.size()) + " rows regress in time");
    }

    std::stable_sort(rec.frames.begin(), rec.frames.end(),
                     [](const Frame& a, const Frame& b) { return a.t < b.t; });

    std::vector<Frame> kept;
    kept.reserve(rec.frames.size());
    for (Frame& f : rec.frames) {
        require(std::isfinite(f.t) && f.t >= 0.0, Errc::invalid_argument, "negative or non-finite timestamp");
        if (!kept.empty() && f.t == kept.back().t) {
            continue; // duplicate timestamp: keep first occurrence
        }
        check_pose_finite(f.hmd, Errc::non_finite_value, "hmd");
        check_pose_finite(f.left, Errc::non_finite_value, "left");
        check_pose_finite(f.right, Errc::non_finite_value, "right");
        f.hmd.rot = normalize_lazy(f.hmd.rot);
        f.left.rot = normalize_lazy(f.left.rot);
        f.right.rot = normalize_lazy(f.right.rot);
        kept.push_back(f);
    }
    rec.frames = std::move(kept);
    if (rec.nominal_rate_hz <= 0.0 && rec.frames.size() > 1 && rec.duration() > 0.0) {
        rec.nominal_rate_hz = static_cast<double>(rec.frames.size() - 1) / rec.duration();
    }
    return rec;
}

// ---------------------------------------------------------------------------
// Wide-CSV codec
// ---------------------------------------------------------------------------

const char* const kRecordingCsvHeader =
    "t,hmd_px,hmd_py,hmd_pz,hmd_rx,hmd_ry,hmd_rz,hmd_rw,"
    "l_px,l_py,l_pz,l_rx,l_ry,l_rz,l_rw,"
    "r_px,r_py,r_pz,r_rx,r_ry,r_rz,r_rw";

namespace {

constexpr int kColumns = 22;

double parse_field(std::string_view field, size_t row, int col) {
    double value = 0.0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last) {
        fail(Errc::malformed_row,
             "row " + std::to_string(row) + ", column " + std::to_string(col + 1) + ": bad float '" +
                 std::string(field) + "'");
    }
    return value;
}

std::string_view trim_cr(std::string_view line) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) {
        line.remove_suffix(1);
    }
    return line;
}

bool split_identity(const std::string& stem, std::string& user, std::string& app, std::string& session) {
    const size_t a = stem.find("__");
    if (a == std::string::npos) {
        return false;
    }
    const size_t b = stem.find("__", a + 2);
    if (b == std::string::npos) {
        return false;
    }
    user = stem.substr(0, a);
    app = stem.substr(a + 2, b - a - 2);
    session = stem.substr(b + 2);
    return !user.empty() && !app.empty() && !session.empty();
}

} // namespace

std::string recording_filename(const UserId& user, const AppLabel& app, const std::string& session) {
    return user + "__" + app + "__" + session + ".csv";
}

Recording parse_recording(const fs::path& path) {
    std::ifstream in(path);
    require(in.is_open(), Errc::io_failure, "cannot open " + path.string());

    std::string line;
    require(static_cast<bool>(std::getline(in, line)), Errc::empty_recording, path.string() + " is empty");
    require(trim_cr(line) == kRecordingCsvHeader, Errc::malformed_row,
            path.string() + ": header does not match recording schema");

    Recording rec;
    split_identity(path.stem().string(), rec.user, rec.app, rec.session);

    size_t row = 0;
    while (std::getline(in, line)) {
        std::string_view rest = trim_cr(line);
        if (rest.empty()) {
            continue;
        }
        ++row;
        double values[kColumns];
        for (int col = 0; col < kColumns; ++col) {
            const size_t comma = rest.find(',');
            const bool last_col = (col == kColumns - 1);
            if (last_col != (comma == std::string_view::npos)) {
                fail(Errc::malformed_row, "row " + std::to_string(row) + ": expected 22 columns");
            }
            values[col] = parse_field(last_col ? rest : rest.substr(0, comma), row, col);
            if (!last_col) {
                rest.remove_prefix(comma + 1);
            }
        }
        Frame f;
        f.t = values[0];
        f.hmd = {{values[1], values[2], values[3]}, {values[4], values[5], values[6], values[7]}};
        f.left = {{values[8], values[9], values[10]}, {values[11], values[12], values[13], values[14]}};
        f.right = {{values[15], values[16], values[17]}, {values[18], values[19], values[20], values[21]}};
        for (const DevicePose* p : {&f.hmd, &f.left, &f.right}) {
            if (!vec_finite(p->pos) || !quat_finite(p->rot) || dot(p->rot, p->rot) < 1e-16) {
                fail(Errc::malformed_row, "row " + std::to_string(row) + ": non-finite or degenerate pose");
            }
        }
        rec.frames.push_back(f);
    }
    require(!rec.frames.empty(), Errc::empty_recording, path.string() + " contains a header but no rows");
    return validate_recording(std::move(rec));
}

namespace {

void append_double(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    out += buf;
}

} // namespace

void write_recording(const Recording& rec, const fs::path& path) {
    require(!rec.frames.empty(), Errc::empty_recording, "refusing to write a recording with no frames");
    std::string out;
    out.reserve(rec.frames.size() * 280 + 256);
    out += kRecordingCsvHeader;
    out += '\n';
    for (const Frame& f : rec.frames) {
        const double values[kColumns] = {
            f.t,
            f.hmd.pos.x,   f.hmd.pos.y,   f.hmd.pos.z,   f.hmd.rot.x,   f.hmd.rot.y,   f.hmd.rot.z,   f.hmd.rot.w,
            f.left.pos.x,  f.left.pos.y,  f.left.pos.z,  f.left.rot.x,  f.left.rot.y,  f.left.rot.z,  f.left.rot.w,
            f.right.pos.x, f.right.pos.y, f.right.pos.z, f.right.rot.x, f.right.rot.y, f.right.rot.z, f.right.rot.w,
        };
        for (int col = 0; col < kColumns; ++col) {
            if (col > 0) {
                out += ',';
            }
            append_double(out, values[col]);
        }
        out += '\n';
    }
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    require(file.is_open(), Errc::io_failure, "cannot write " + path.string());
    file << out;
    require(file.good(), Errc::io_failure, "write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------------

DatasetManifest load_manifest(const fs::path& manifest_path) {
    std::ifstream in(manifest_path);
    require(in.is_open(), Errc::io_failure, "cannot open " + manifest_path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        fail(Errc::malformed_row, manifest_path.string() + ": " + e.what());
    }

    DatasetManifest m;
    m.schema_version = doc.at("schema_version").get<int>();
    std::set<std::array<std::string, 3>> seen;
    const fs::path dir = manifest_path.parent_path();
    for (const json& e : doc.at("entries")) {
        ManifestEntry entry;
        entry.user = e.at("user").get<std::string>();
        entry.app = e.at("app").get<std::string>();
        entry.session = e.at("session").get<std::string>();
        entry.path = e.at("path").get<std::string>();
        entry.duration_s = e.at("duration_s").get<double>();
        const std::array<std::string, 3> key{entry.user, entry.app, entry.session};
        require(seen.insert(key).second, Errc::invalid_argument,
                "duplicate manifest entry " + entry.user + "/" + entry.app + "/" + entry.session);
        require(fs::exists(dir / entry.path), Errc::io_failure, "missing recording file " + entry.path);
        m.entries.push_back(std::move(entry));
    }
    return m;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& manifest_path) {
    json doc;
    doc["schema_version"] = manifest.schema_version;
    doc["entries"] = json::array();
    for (const ManifestEntry& e : manifest.entries) {
        doc["entries"].push_back({
            {"user", e.user},
            {"app", e.app},
            {"session", e.session},
            {"path", e.path},
            {"duration_s", e.duration_s},
        });
    }
    std::ofstream out(manifest_path, std::ios::binary | std::ios::trunc);
    require(out.is_open(), Errc::io_failure, "cannot write " + manifest_path.string());
    out << doc.dump(2) << '\n';
    require(out.good(), Errc::io_failure, "write failed for " + manifest_path.string());
}

Recording load_entry(const ManifestEntry& entry, const fs::path& manifest_dir) {
    Recording rec = parse_recording(manifest_dir / entry.path);
    rec.user = entry.user;
    rec.app = entry.app;
    rec.session = entry.session;
    return rec;
}

std::vector<UserId> manifest_users(const DatasetManifest& manifest) {
    std::set<UserId> users;
    for (const auto& e : manifest.entries) {
        users.insert(e.user);
    }
    return {users.begin(), users.end()};
}

std::vector<AppLabel> manifest_apps(const DatasetManifest& manifest) {
    std::set<AppLabel> apps;
    for (const auto& e : manifest.entries) {
        apps.insert(e.app);
    }
    std::vector<AppLabel> out(apps.begin(), apps.end());
    std::sort(out.begin(), out.end(),
              [](const AppLabel& a, const AppLabel& b) { return app_sort_key(a) < app_sort_key(b); });
    return out;
}

DatasetManifest ingest_directory(const fs::path& dir) {
    require(fs::is_directory(dir), Errc::io_failure, dir.string() + " is not a directory");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".csv") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());

    DatasetManifest manifest;
    for (const fs::path& file : files) {
        std::string user;
        std::string app;
        std::string session;
        if (!split_identity(file.stem().string(), user, app, session)) {
            continue; // not a recording file
        }
        Recording rec = parse_recording(file);
        manifest.entries.push_back({user, app, session, file.filename().string(), rec.duration()});
    }
    require(!manifest.entries.empty(), Errc::empty_recording, "no recording CSVs found in " + dir.string());
    return manifest;
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

namespace {

// Secondary shape parameter in [lo, hi], slot-indexed off the variation seed.
double shape_param(uint64_t variation_seed, uint64_t slot, double lo, double hi) {
    return lo + (hi - lo) * hash_to_unit(mix64(variation_seed, slot));
}

constexpr double kTwoPi = 6.283185307179586476925;

struct HeadMotion {
    double yaw_amp, yaw_freq, yaw_phase;
    double pitch_amp, pitch_freq, pitch_phase, pitch_bias;
    double bob_freq, bob_phase;
    double wander_amp, wx_freq, wx_phase, wz_freq, wz_phase;
};

HeadMotion head_motion_of(const SynthProfile& p, const AppModulation& mod) {
    HeadMotion h;
    h.yaw_amp = shape_param(p.variation_seed, 11, 0.25, 0.60) * mod.head_travel_scale;
    h.yaw_freq = shape_param(p.variation_seed, 12, 0.05, 0.12);
    h.yaw_phase = shape_param(p.variation_seed, 13, 0.0, kTwoPi);
    h.pitch_amp = shape_param(p.variation_seed, 14, 0.04, 0.10);
    h.pitch_freq = shape_param(p.variation_seed, 15, 0.10, 0.25);
    h.pitch_phase = shape_param(p.variation_seed, 16, 0.0, kTwoPi);
    h.pitch_bias = mod.pitch_bias_deg * (kTwoPi / 360.0);
    h.bob_freq = p.osc_freq_hz * shape_param(p.variation_seed, 17, 0.8, 1.4);
    h.bob_phase = shape_param(p.variation_seed, 18, 0.0, kTwoPi);
    h.wander_amp = shape_param(p.variation_seed, 19, 0.15, 0.40) * mod.head_travel_scale;
    h.wx_freq = shape_param(p.variation_seed, 20, 0.03, 0.08);
    h.wx_phase = shape_param(p.variation_seed, 21, 0.0, kTwoPi);
    h.wz_freq = shape_param(p.variation_seed, 22, 0.03, 0.08);
    h.wz_phase = shape_param(p.variation_seed, 23, 0.0, kTwoPi);
    return h;
}

struct HandMotion {
    Vec3 rest;                      // body-frame rest offset from the HMD position
    std::array<double, 3> amp;      // per-axis oscillation amplitude
    std::array<double, 3> phase;    // per-axis phase
    double omega;
    double wobble_amp, wobble_phase;
};

HandMotion hand_motion_of(const SynthProfile& p, const AppModulation& mod, bool left_hand) {
    const double f_eff = p.osc_freq_hz * std::sqrt(mod.amplitude_scale);
    const double amp = 0.35 * p.arm_length_m * mod.amplitude_scale;
    const double ax = shape_param(p.variation_seed, 1, 0.55, 1.0);
    const double ay = shape_param(p.variation_seed, 2, 0.55, 1.0);
    const double az = shape_param(p.variation_seed, 3, 0.55, 1.0);
    const double psi_y = shape_param(p.variation_seed, 4, 0.6, 2.8);
    const double psi_z = shape_param(p.variation_seed, 5, 0.6, 2.8);
    const double hand_delta = left_hand ? 0.0 : shape_param(p.variation_seed, 6, 2.4, 3.9);
    const double shoulder = shape_param(p.variation_seed, 8, 0.16, 0.22);
    const double drop = shape_param(p.variation_seed, 9, 0.22, 0.32);
    const double reach = shape_param(p.variation_seed, 10, 0.45, 0.60) * p.arm_length_m;

    HandMotion h;
    h.rest = {left_hand ? -shoulder : shoulder, -drop, -reach};
    h.omega = kTwoPi * f_eff;
    h.amp = {amp * ax, amp * ay, amp * az};
    h.phase = {p.phase_rad + hand_delta, p.phase_rad + hand_delta + psi_y, p.phase_rad + hand_delta + psi_z};
    h.wobble_amp = shape_param(p.variation_seed, 7, 0.10, 0.35);
    h.wobble_phase = p.phase_rad + hand_delta + shape_param(p.variation_seed, 24, 0.0, kTwoPi);
    return h;
}

} // namespace

AppModulation modulation_for(const AppLabel& app, double level) {
    // level-1 archetype strengths; raised to `level` so level 0 erases all
    // between-app contrast and larger levels exaggerate it
    double amp = 1.0;
    double head = 1.0;
    double pitch = 0.0;
    if (app == kSynthRiders) {
        amp = 1.55;
        head = 0.80;
        pitch = -1.0;
    } else if (app == kBeatSaber) {
        amp = 1.85;
        head = 0.70;
        pitch = 2.0;
    } else if (app == kSuperhotVr) {
        amp = 1.00;
        head = 2.20;
        pitch = 6.0;
    } else if (app == kHalfLifeAlyx) {
        amp = 0.82;
        head = 1.60;
        pitch = 10.0;
    } else if (app == kSocialVr) {
        amp = 0.45;
        head = 0.50;
        pitch = 0.0;
    }
    AppModulation mod;
    mod.amplitude_scale = std::pow(amp, level);
    mod.head_travel_scale = std::pow(head, level);
    mod.pitch_bias_deg = pitch * level;
    return mod;
}

SynthProfile sample_profile(SeededRng& rng, int user_index, int n_users) {
    require(n_users >= 1 && user_index >= 0 && user_index < n_users, Errc::invalid_argument, "bad user index");
    SynthProfile p;
    // oscillation frequency is stratified across the roster so no two users
    // land on the same rhythm; everything else is a plain seeded draw
    const double slot = (static_cast<double>(user_index) + 0.25 + 0.5 * rng.uniform()) / n_users;
    p.osc_freq_hz = 0.6 + (1.7 - 0.6) * slot;
    p.arm_length_m = rng.uniform(0.55, 0.80);
    p.rest_height_m = rng.uniform(1.35, 1.90);
    p.phase_rad = rng.uniform(0.0, kTwoPi);
    p.head_bob_amp_m = rng.uniform(0.010, 0.045);
    p.jitter_sigma_m = rng.uniform(0.0020, 0.0055);
    p.variation_seed = rng.next_u64();
    return p;
}

std::array<SinusoidSpec, 3> controller_motion_spec(const SynthProfile& profile, const AppModulation& mod,
                                                   bool left_hand) {
    const HandMotion h = hand_motion_of(profile, mod, left_hand);
    std::array<SinusoidSpec, 3> spec;
    const double base[3] = {h.rest.x, profile.rest_height_m + h.rest.y, h.rest.z};
    for (int axis = 0; axis < 3; ++axis) {
        spec[axis] = {base[axis], h.amp[axis], h.omega, h.phase[axis]};
    }
    return spec;
}

Recording synthesize_recording(const SynthProfile& profile, const AppModulation& mod, const UserId& user,
                               const AppLabel& app, const std::string& session, double seconds, double fps,
                               uint64_t noise_seed) {
    require(seconds > 0.0 && fps > 0.0, Errc::invalid_argument, "seconds and fps must be positive");
    require(mod.amplitude_scale > 0.0 && mod.head_travel_scale >= 0.0 && profile.jitter_sigma_m >= 0.0,
            Errc::invalid_argument, "modulation scales must be positive");

    const HeadMotion head = head_motion_of(profile, mod);
    const HandMotion left = hand_motion_of(profile, mod, true);
    const HandMotion right = hand_motion_of(profile, mod, false);

    SeededRng noise(noise_seed);
    const size_t n_frames = static_cast<size_t>(std::llround(seconds * fps));

    Recording rec;
    rec.user = user;
    rec.app = app;
    rec.session = session;
    rec.nominal_rate_hz = fps;
    rec.frames.reserve(n_frames);

    for (size_t k = 0; k < n_frames; ++k) {
        const double t = static_cast<double>(k) / fps;
        const double yaw = head.yaw_amp * std::sin(kTwoPi * head.yaw_freq * t + head.yaw_phase);
        const double pitch = head.pitch_bias + head.pitch_amp * std::sin(kTwoPi * head.pitch_freq * t + head.pitch_phase);

        Frame f;
        f.t = t;
        f.hmd.pos = {
            head.wander_amp * std::sin(kTwoPi * head.wx_freq * t + head.wx_phase),
            profile.rest_height_m + profile.head_bob_amp_m * std::sin(kTwoPi * head.bob_freq * t + head.bob_phase),
            head.wander_amp * std::sin(kTwoPi * head.wz_freq * t + head.wz_phase),
        };
        const Quat heading = quat_from_yaw(yaw);
        f.hmd.rot = multiply(heading, quat_from_pitch(pitch));

        for (const HandMotion* hand : {&left, &right}) {
            const Vec3 body{
                hand->rest.x + hand->amp[0] * std::sin(hand->omega * t + hand->phase[0]),
                hand->rest.y + hand->amp[1] * std::sin(hand->omega * t + hand->phase[1]),
                hand->rest.z + hand->amp[2] * std::sin(hand->omega * t + hand->phase[2]),
            };
            DevicePose pose;
            pose.pos = f.hmd.pos + rotate_vec(heading, body);
            const double wobble = hand->wobble_amp * std::sin(hand->omega * t + hand->wobble_phase);
            pose.rot = multiply(heading, multiply(quat_from_pitch(wobble),
                                                  quat_from_axis_angle({0, 0, 1}, 0.5 * wobble)));
            if (hand == &left) {
                f.left = pose;
            } else {
                f.right = pose;
            }
        }

        // fixed draw order per frame keeps the stream reproducible
        const double sigma = profile.jitter_sigma_m;
        f.hmd.pos = f.hmd.pos + Vec3{noise.gaussian(0, 0.3 * sigma), noise.gaussian(0, 0.3 * sigma),
                                     noise.gaussian(0, 0.3 * sigma)};
        f.left.pos = f.left.pos + Vec3{noise.gaussian(0, sigma), noise.gaussian(0, sigma), noise.gaussian(0, sigma)};
        f.right.pos = f.right.pos + Vec3{noise.gaussian(0, sigma), noise.gaussian(0, sigma), noise.gaussian(0, sigma)};

        rec.frames.push_back(f);
    }
    return rec;
}

DatasetManifest generate_synthetic_dataset(const SynthParams& params, const fs::path& out_dir) {
    require(params.n_users >= 2, Errc::invalid_argument, "need at least 2 users");
    require(params.minutes_per_app > 0.0, Errc::invalid_argument, "minutes_per_app must be positive");

    const std::vector<AppLabel> apps =
        params.apps.empty() ? std::vector<AppLabel>(known_apps().begin(), known_apps().end()) : params.apps;

    fs::create_directories(out_dir);

    SeededRng rng(mix64(params.seed, 0x5a17d5e7ull));
    std::vector<SynthProfile> profiles;
    profiles.reserve(params.n_users);
    for (int i = 0; i < params.n_users; ++i) {
        profiles.push_back(sample_profile(rng, i, params.n_users));
    }

    int width = 2;
    for (int n = params.n_users - 1; n >= 100 && width < 9; n /= 10) {
        ++width;
    }

    DatasetManifest manifest;
    for (int i = 0; i < params.n_users; ++i) {
        char buf[24];
        std::snprintf(buf, sizeof(buf), "u%0*d", width, i);
        const UserId user = buf;
        for (size_t j = 0; j < apps.size(); ++j) {
            const AppLabel& app = apps[j];
            const uint64_t noise_seed = mix64(params.seed, static_cast<uint64_t>(i) + 1, j + 1);
            Recording rec =
                synthesize_recording(profiles[static_cast<size_t>(i)], modulation_for(app, params.app_modulation_level),
                                     user, app, "s00", params.minutes_per_app * 60.0, params.fps, noise_seed);
            const std::string filename = recording_filename(user, app, "s00");
            write_recording(rec, out_dir / filename);
            manifest.entries.push_back({user, app, "s00", filename, rec.duration()});
        }
    }
    save_manifest(manifest, out_dir / "manifest.json");
    return manifest;
}

} // namespace xrid::io
