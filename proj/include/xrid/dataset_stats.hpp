#pragma once

#include "xrid/motion_io.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace xrid::stats {

enum class Device { hmd, left, right };

// Per-minute travel distances of one device over a 30 FPS recording: each
// one-minute bin sums the Euclidean inter-frame position deltas; the partial
// trailing minute is dropped. Throws Errc::too_short below one full minute.
std::vector<double> travel_distance(const io::Recording& rec30, Device device);

struct PitchStats {
    double mean_deg = 0.0;
    double std_deg = 0.0; // population
};

// HMD pitch per frame in degrees, positive looking up.
PitchStats pitch_stats(const io::Recording& rec30);

// ---------------------------------------------------------------------------
// Repeated-measures statistics
// ---------------------------------------------------------------------------

struct AnovaResult {
    double f = 0.0;
    int df_between = 0;
    int df_within = 0;
    double p = 1.0;
};

// One-way repeated-measures ANOVA over a complete users x apps matrix:
// F = MS_treatment / MS_error with df (a-1, (a-1)(n-1)).
AnovaResult rm_anova(const std::vector<std::vector<double>>& values);

struct PosthocEntry {
    int app_a = 0;
    int app_b = 0;
    double t = 0.0;
    double p_raw = 1.0;
    double p_adjusted = 1.0;
    bool significant = false;
};

// All C(apps, 2) paired t-tests with Bonferroni adjustment
// (p_adj = min(1, p * C)).
std::vector<PosthocEntry> posthoc_bonferroni(const std::vector<std::vector<double>>& values, double alpha = 0.05);

// Regularized incomplete beta I_x(a, b) by continued fraction; the basis for
// the F and Student-t tail probabilities.
double regularized_incomplete_beta(double a, double b, double x);

// Upper tail P(F > f) for d1, d2 degrees of freedom.
double f_survival(double f, double d1, double d2);

// Two-sided Student-t p-value.
double t_two_sided_p(double t, double df);

// ---------------------------------------------------------------------------
// Dataset report
// ---------------------------------------------------------------------------

struct AppRow {
    io::AppLabel app;
    double hmd_dist = 0.0;   // mean per-minute travel distance across users, meters
    double left_dist = 0.0;
    double right_dist = 0.0;
    double pitch_mean = 0.0; // mean across users of per-user pitch means, degrees
    double pitch_std = 0.0;  // mean across users of per-user pitch stds
};

struct MetricBlock {
    std::string metric; // hmd_dist | left_dist | right_dist | pitch_mean
    AnovaResult anova;
    std::vector<PosthocEntry> posthoc;
};

struct StatsReport {
    std::vector<AppRow> rows;     // app play order
    std::vector<MetricBlock> tests;
    std::vector<io::UserId> users;
};

StatsReport compute_stats(const io::DatasetManifest& manifest, const std::filesystem::path& dir, int threads = 1);

// Table-style CSV (app rows, distance and pitch columns) plus companion ANOVA
// and post-hoc CSVs next to it.
void export_stats_csv(const StatsReport& report, const std::filesystem::path& path);

} // namespace xrid::stats
