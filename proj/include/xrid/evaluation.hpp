#pragma once

#include "xrid/identification.hpp"
#include "xrid/kinematics.hpp"
#include "xrid/model.hpp"
#include "xrid/motion_io.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace xrid::eval {

// ---------------------------------------------------------------------------
// Dataset splits
// ---------------------------------------------------------------------------

// User-disjoint split in 23/9/17 proportions, scaled to the roster size with
// floors for train/val and the remainder going to test; users are assigned in
// sorted-id order. Throws Errc::roster_too_small below 3 users.
struct UserSplit {
    io::DatasetManifest train;
    io::DatasetManifest val;
    io::DatasetManifest test;
};

UserSplit split_users(const io::DatasetManifest& manifest);

// Chronological 45%/20%/35% boundaries on a frame count: cut indices at
// floor(0.45 n) and floor(0.65 n).
std::pair<int, int> temporal_boundaries(int n_frames);

// Per-recording temporal split: the BRV stream is cut at the boundaries of
// the resampled frame count and windows are built inside each segment, so no
// window spans two segments. start_frame stays absolute. Throws
// Errc::recording_too_short when a segment cannot fill one window.
struct TemporalWindows {
    std::vector<kinematics::FeatureWindow> train;
    std::vector<kinematics::FeatureWindow> val;
    std::vector<kinematics::FeatureWindow> test;
};

TemporalWindows temporal_split(const io::Recording& rec, const kinematics::EncodingConfig& config);

TemporalWindows temporal_split_manifest(const io::DatasetManifest& manifest, const std::filesystem::path& dir,
                                        const kinematics::EncodingConfig& config, int threads = 1);

// ---------------------------------------------------------------------------
// Embeddings
// ---------------------------------------------------------------------------

struct EmbeddedWindow {
    std::vector<float> embedding;
    io::UserId user;
    io::AppLabel app;
    std::string session;
    int window_start = 0;
};

// Embeds every window of the manifest's recordings for the selected apps
// (empty = all). Deterministic for any thread count.
std::vector<EmbeddedWindow> embed_manifest(const model::SequenceModel& slm, const io::DatasetManifest& manifest,
                                           const std::filesystem::path& dir, const std::vector<io::AppLabel>& apps,
                                           int threads = 1);

ident::ReferenceStore store_from_embedded(const std::vector<EmbeddedWindow>& rows);

// Embeds every test window of the selected apps into a reference store.
// Throws Errc::no_windows when the app list selects nothing.
ident::ReferenceStore build_reference_store(const model::SequenceModel& slm, const io::DatasetManifest& manifest,
                                            const std::filesystem::path& dir, const std::vector<io::AppLabel>& apps,
                                            int threads = 1);

// ---------------------------------------------------------------------------
// Cross-application grid
// ---------------------------------------------------------------------------

enum class CrossAppMetric { nn_accuracy, sequence_accuracy, top3_sequence_accuracy };

const char* metric_name(CrossAppMetric metric);
CrossAppMetric metric_from_name(const std::string& name);

struct CellStat {
    double mean = 0.0;
    double stddev = 0.0;
};

// (reference app x query app) accuracy grid. Diagonal cells exclude the
// query's own window from the reference rows. Cells are per-user macro
// averages; stddev is across users.
struct CrossAppMatrix {
    std::vector<io::AppLabel> apps; // row = reference app, column = query app
    std::string metric;
    std::vector<CellStat> cells;

    CellStat& at(int ref, int query) { return cells[static_cast<size_t>(ref) * apps.size() + query]; }
    const CellStat& at(int ref, int query) const { return cells[static_cast<size_t>(ref) * apps.size() + query]; }
};

CrossAppMatrix eval_cross_app(const model::SequenceModel& slm, const io::DatasetManifest& test_manifest,
                              const std::filesystem::path& dir, CrossAppMetric metric, double span_seconds = 600.0,
                              std::vector<io::AppLabel> apps = {}, int threads = 1);

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct MetricsReport {
    double overall_accuracy = 0.0;
    std::vector<std::pair<io::AppLabel, double>> per_app;
    std::vector<std::pair<io::UserId, double>> per_user;
    double sequence_accuracy = -1.0; // < 0: not computed / no full spans
    std::vector<std::pair<io::AppLabel, double>> per_app_sequence;
    double chance_level = 0.0;
    int64_t n_queries = 0;
    int skipped_short_segments = 0;
};

// All-apps reference store with self-window exclusion; overall and per-app
// accuracies are per-query (micro) averages so the weighted per-app mean
// reproduces the overall number exactly.
MetricsReport eval_overall(const model::SequenceModel& slm, const io::DatasetManifest& test_manifest,
                           const std::filesystem::path& dir, int threads = 1);

// Per-window argmax accuracy plus plurality accuracy over contiguous
// span_seconds segments; segments too short for one full span are counted in
// skipped_short_segments.
MetricsReport eval_classifier(const model::SequenceModel& clm, const std::vector<kinematics::FeatureWindow>& test_windows,
                              double span_seconds = 150.0);

// Display CSV ("mean±std" cells) at `path` plus a machine-readable CSV of raw
// means at `path` with "_raw" appended to the stem. Fixed app order.
void export_heatmap(const CrossAppMatrix& matrix, const std::filesystem::path& path);

// Re-parses the raw means CSV (round-trip check and external tooling).
CrossAppMatrix parse_heatmap_raw(const std::filesystem::path& raw_path);

void export_metrics_json(const MetricsReport& report, const std::filesystem::path& path);
void export_per_user_csv(const MetricsReport& report, const std::filesystem::path& path);

} // namespace xrid::eval
