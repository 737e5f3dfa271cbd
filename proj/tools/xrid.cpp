// xrid: batch pipeline driver for motion-based user identification on XR
// tracking logs. Subcommands cover the full chain: synth/ingest -> preprocess
// -> train -> evaluate -> stats; `all` runs everything end to end.

#include "xrid/dataset_stats.hpp"
#include "xrid/error.hpp"
#include "xrid/evaluation.hpp"
#include "xrid/identification.hpp"
#include "xrid/kinematics.hpp"
#include "xrid/model.hpp"
#include "xrid/motion_io.hpp"
#include "xrid/parallel.hpp"
#include "xrid/rng.hpp"
#include "xrid/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace xrid;

namespace {

// ---------------------------------------------------------------------------
// Shared options, resolved from config file then flags (flags win)
// ---------------------------------------------------------------------------

struct Options {
    std::string config_path;
    fs::path out = "out";
    fs::path data;
    fs::path in_dir;
    fs::path checkpoint;
    uint64_t seed = 7;
    int threads = 1;

    // synth
    int users = 5;
    double minutes = 2.0;
    double level = 1.0;
    std::vector<std::string> apps;

    // model / training
    std::string model_kind = "slm";
    std::string profile = "desk";
    int epochs = 10;
    int patience = 10;
    int batch_size = 32;
    int p_users = 4;
    int k_windows = 4;
    double margin = 0.3;
    double lr = -1.0;
    int window = 0; // 0 = profile default
    int step = 0;

    // evaluate
    std::string mode = "overall";
    double span = 600.0;
    double clm_span = 150.0;
};

json options_to_json(const Options& o) {
    return json{{"out", o.out.string()},
                {"data", o.data.string()},
                {"seed", o.seed},
                {"threads", o.threads},
                {"users", o.users},
                {"minutes", o.minutes},
                {"level", o.level},
                {"apps", o.apps},
                {"model", o.model_kind},
                {"profile", o.profile},
                {"epochs", o.epochs},
                {"patience", o.patience},
                {"batch_size", o.batch_size},
                {"p_users", o.p_users},
                {"k_windows", o.k_windows},
                {"margin", o.margin},
                {"lr", o.lr},
                {"window", o.window},
                {"step", o.step},
                {"mode", o.mode},
                {"span", o.span},
                {"clm_span", o.clm_span}};
}

// Flat JSON config: keys named like the long flags. Applied before parsing,
// so explicit flags override the file.
void apply_config_file(Options& o, const std::string& path) {
    std::ifstream in(path);
    require(in.is_open(), Errc::io_failure, "cannot open config " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        fail(Errc::malformed_row, std::string("bad config file: ") + e.what());
    }
    auto get = [&](const char* key, auto& slot) {
        if (doc.contains(key)) {
            slot = doc.at(key).get<std::decay_t<decltype(slot)>>();
        }
    };
    std::string out_str;
    std::string data_str;
    get("out", out_str);
    get("data", data_str);
    if (!out_str.empty()) {
        o.out = out_str;
    }
    if (!data_str.empty()) {
        o.data = data_str;
    }
    get("seed", o.seed);
    get("threads", o.threads);
    get("users", o.users);
    get("minutes", o.minutes);
    get("level", o.level);
    get("apps", o.apps);
    get("model", o.model_kind);
    get("profile", o.profile);
    get("epochs", o.epochs);
    get("patience", o.patience);
    get("batch_size", o.batch_size);
    get("p_users", o.p_users);
    get("k_windows", o.k_windows);
    get("margin", o.margin);
    get("lr", o.lr);
    get("window", o.window);
    get("step", o.step);
    get("mode", o.mode);
    get("span", o.span);
    get("clm_span", o.clm_span);
}

void write_run_config(const Options& o, const fs::path& dir) {
    fs::create_directories(dir);
    std::ofstream out(dir / "run_config.json", std::ios::trunc);
    require(out.is_open(), Errc::io_failure, "cannot write run_config.json");
    out << options_to_json(o).dump(2) << '\n';
}

model::ModelConfig make_model_config(const Options& o, model::ModelKind kind, int n_users) {
    model::ModelConfig cfg;
    if (o.profile == "full") {
        cfg = kind == model::ModelKind::slm ? model::ModelConfig::slm_defaults()
                                            : model::ModelConfig::clm_defaults(n_users);
    } else if (o.profile == "desk") {
        cfg = kind == model::ModelKind::slm ? model::ModelConfig::slm_desk() : model::ModelConfig::clm_desk(n_users);
    } else {
        fail(Errc::invalid_argument, "unknown profile '" + o.profile + "' (desk|full)");
    }
    if (o.window > 0) {
        cfg.window_size = o.window;
    }
    if (o.step > 0) {
        cfg.frame_step = o.step;
    }
    if (o.lr >= 0.0) {
        cfg.learning_rate = o.lr;
    }
    cfg.validate();
    return cfg;
}

training::TrainConfig make_train_config(const Options& o, const fs::path& checkpoint, const fs::path& log) {
    training::TrainConfig tc;
    tc.epochs = o.epochs;
    tc.patience = o.patience;
    tc.batch_size = o.batch_size;
    tc.p_users = o.p_users;
    tc.k_windows = o.k_windows;
    tc.margin = o.margin;
    tc.seed = o.seed;
    tc.checkpoint_path = checkpoint;
    tc.log_path = log;
    return tc;
}

// ---------------------------------------------------------------------------
// Preprocessing cache: one file per (recording bytes, window, step)
// ---------------------------------------------------------------------------

uint64_t fnv1a_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.is_open(), Errc::io_failure, "cannot open " + path.string());
    uint64_t h = 1469598103934665603ull;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const std::streamsize n = in.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
        if (!in.good()) {
            break;
        }
    }
    return h;
}

fs::path cache_dir_for(const fs::path& out) {
    if (const char* env = std::getenv("XRID_CACHE_DIR"); env != nullptr && *env != '\0') {
        return fs::path(env);
    }
    return out / "cache";
}

fs::path cache_key_path(const fs::path& cache_dir, const fs::path& recording, const kinematics::EncodingConfig& enc) {
    const uint64_t h = mix64(fnv1a_file(recording), static_cast<uint64_t>(enc.window_size),
                             static_cast<uint64_t>(enc.frame_step));
    char name[32];
    std::snprintf(name, sizeof(name), "%016llx.win", static_cast<unsigned long long>(h));
    return cache_dir / name;
}

void write_window_file(const std::vector<kinematics::FeatureWindow>& windows, const fs::path& path) {
    json header;
    header["count"] = windows.size();
    header["window_size"] = windows.empty() ? 0 : windows.front().frames.rows();
    header["features"] = kinematics::kFeatureCount;
    json rows = json::array();
    for (const auto& w : windows) {
        rows.push_back({{"user", w.user}, {"app", w.app}, {"session", w.session}, {"start", w.start_frame}});
    }
    header["rows"] = std::move(rows);
    const std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.is_open(), Errc::io_failure, "cannot write " + path.string());
    const uint64_t len = hs.size();
    out.write(reinterpret_cast<const char*>(&len), 8);
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& w : windows) {
        out.write(reinterpret_cast<const char*>(w.frames.data.data()),
                  static_cast<std::streamsize>(w.frames.data.size() * sizeof(float)));
    }
    require(out.good(), Errc::io_failure, "write failed for " + path.string());
}

std::vector<kinematics::FeatureWindow> read_window_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.is_open(), Errc::io_failure, "cannot open " + path.string());
    uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 8);
    require(in.good() && len < (1ull << 30), Errc::malformed_row, "bad window cache header");
    std::string hs(len, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(len));
    const json header = json::parse(hs);
    const int wsize = header.at("window_size").get<int>();
    std::vector<kinematics::FeatureWindow> windows;
    for (const json& r : header.at("rows")) {
        kinematics::FeatureWindow w;
        w.user = r.at("user").get<std::string>();
        w.app = r.at("app").get<std::string>();
        w.session = r.at("session").get<std::string>();
        w.start_frame = r.at("start").get<int>();
        w.frames = Tensor::zeros({wsize, kinematics::kFeatureCount});
        in.read(reinterpret_cast<char*>(w.frames.data.data()),
                static_cast<std::streamsize>(w.frames.data.size() * sizeof(float)));
        require(in.good(), Errc::malformed_row, "truncated window cache");
        windows.push_back(std::move(w));
    }
    return windows;
}

// Loads windows for one manifest entry through the cache; returns whether the
// cache already had them.
std::pair<std::vector<kinematics::FeatureWindow>, bool> cached_windows(const io::ManifestEntry& entry,
                                                                       const fs::path& manifest_dir,
                                                                       const kinematics::EncodingConfig& enc,
                                                                       const fs::path& cache_dir) {
    fs::create_directories(cache_dir);
    const fs::path key = cache_key_path(cache_dir, manifest_dir / entry.path, enc);
    if (fs::exists(key)) {
        return {read_window_file(key), true};
    }
    const io::Recording rec = io::load_entry(entry, manifest_dir);
    std::vector<kinematics::FeatureWindow> windows = kinematics::preprocess_recording(rec, enc);
    write_window_file(windows, key);
    return {std::move(windows), false};
}

std::vector<kinematics::FeatureWindow> manifest_windows(const io::DatasetManifest& manifest,
                                                        const fs::path& manifest_dir,
                                                        const kinematics::EncodingConfig& enc,
                                                        const fs::path& cache_dir, int threads, int* hits = nullptr) {
    std::vector<std::vector<kinematics::FeatureWindow>> per_entry(manifest.entries.size());
    std::vector<char> hit(manifest.entries.size(), 0);
    parallel_for(static_cast<int64_t>(manifest.entries.size()), threads, [&](int64_t i) {
        auto [windows, was_hit] = cached_windows(manifest.entries[static_cast<size_t>(i)], manifest_dir, enc, cache_dir);
        per_entry[static_cast<size_t>(i)] = std::move(windows);
        hit[static_cast<size_t>(i)] = was_hit ? 1 : 0;
    });
    std::vector<kinematics::FeatureWindow> flat;
    int hit_count = 0;
    for (size_t i = 0; i < per_entry.size(); ++i) {
        hit_count += hit[i];
        std::move(per_entry[i].begin(), per_entry[i].end(), std::back_inserter(flat));
    }
    if (hits != nullptr) {
        *hits = hit_count;
    }
    return flat;
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

fs::path manifest_path_of(const fs::path& data_dir) { return data_dir / "manifest.json"; }

int cmd_synth(const Options& o) {
    io::SynthParams params;
    params.n_users = o.users;
    params.minutes_per_app = o.minutes;
    params.seed = o.seed;
    params.app_modulation_level = o.level;
    params.apps.assign(o.apps.begin(), o.apps.end());
    const fs::path dir = o.data.empty() ? o.out / "data" : o.data;
    const io::DatasetManifest manifest = io::generate_synthetic_dataset(params, dir);
    write_run_config(o, dir);
    std::cerr << "synth: wrote " << manifest.entries.size() << " recordings to " << dir << "\n";
    return 0;
}

int cmd_ingest(const Options& o) {
    require(!o.in_dir.empty(), Errc::invalid_argument, "ingest needs --in");
    const io::DatasetManifest manifest = io::ingest_directory(o.in_dir);
    io::save_manifest(manifest, manifest_path_of(o.in_dir));
    write_run_config(o, o.in_dir);
    std::cerr << "ingest: validated " << manifest.entries.size() << " recordings\n";
    return 0;
}

int cmd_preprocess(const Options& o) {
    require(!o.data.empty(), Errc::invalid_argument, "preprocess needs --data");
    const io::DatasetManifest manifest = io::load_manifest(manifest_path_of(o.data));
    kinematics::EncodingConfig enc;
    enc.window_size = o.window > 0 ? o.window : 450;
    enc.frame_step = o.step > 0 ? o.step : 50;
    int hits = 0;
    const auto windows = manifest_windows(manifest, o.data, enc, cache_dir_for(o.out), o.threads, &hits);
    write_run_config(o, o.out);
    if (hits == static_cast<int>(manifest.entries.size())) {
        std::cerr << "preprocess: cache hit, stage skipped\n";
    } else {
        std::cerr << "preprocess: " << windows.size() << " windows (" << hits << " cached entries)\n";
    }
    return 0;
}

int cmd_train(const Options& o) {
    require(!o.data.empty(), Errc::invalid_argument, "train needs --data");
    const io::DatasetManifest manifest = io::load_manifest(manifest_path_of(o.data));
    fs::create_directories(o.out);
    const model::ModelKind kind = model::model_kind_from_name(o.model_kind);

    if (kind == model::ModelKind::slm) {
        const eval::UserSplit split = eval::split_users(manifest);
        const model::ModelConfig cfg = make_model_config(o, kind, 0);
        kinematics::EncodingConfig enc{30.0, cfg.window_size, cfg.frame_step};
        const fs::path cache = cache_dir_for(o.out);
        const auto train_windows = manifest_windows(split.train, o.data, enc, cache, o.threads);
        const auto val_windows = manifest_windows(split.val, o.data, enc, cache, o.threads);

        model::SequenceModel slm(cfg, o.seed);
        const training::TrainConfig tc = make_train_config(o, o.out / "slm.ckpt", o.out / "slm_train_log.jsonl");
        const training::TrainResult result = training::train(slm, train_windows, val_windows, tc);
        write_run_config(o, o.out);
        std::cerr << "train slm: best val accuracy " << result.best_val_accuracy << " at epoch "
                  << result.best_epoch << " (" << result.epochs_run << " epochs)\n";
    } else {
        const model::ModelConfig cfg = make_model_config(o, kind, static_cast<int>(manifest_users(manifest).size()));
        kinematics::EncodingConfig enc{30.0, cfg.window_size, cfg.frame_step};
        const eval::TemporalWindows tw = eval::temporal_split_manifest(manifest, o.data, enc, o.threads);

        model::SequenceModel clm(cfg, o.seed);
        const training::TrainConfig tc = make_train_config(o, o.out / "clm.ckpt", o.out / "clm_train_log.jsonl");
        const training::TrainResult result = training::train(clm, tw.train, tw.val, tc);
        write_run_config(o, o.out);
        std::cerr << "train clm: best val accuracy " << result.best_val_accuracy << " at epoch "
                  << result.best_epoch << " (" << result.epochs_run << " epochs)\n";
    }
    return 0;
}

int cmd_evaluate(const Options& o) {
    require(!o.data.empty(), Errc::invalid_argument, "evaluate needs --data");
    require(!o.checkpoint.empty(), Errc::invalid_argument, "evaluate needs --checkpoint");
    const io::DatasetManifest manifest = io::load_manifest(manifest_path_of(o.data));
    const model::SequenceModel m = model::SequenceModel::load_checkpoint(o.checkpoint);
    fs::create_directories(o.out);

    if (o.mode == "classifier") {
        require(m.config().kind == model::ModelKind::clm, Errc::invalid_argument,
                "classifier evaluation needs a clm checkpoint");
        kinematics::EncodingConfig enc{30.0, m.config().window_size, m.config().frame_step};
        const eval::TemporalWindows tw = eval::temporal_split_manifest(manifest, o.data, enc, o.threads);
        const eval::MetricsReport report = eval::eval_classifier(m, tw.test, o.clm_span);
        eval::export_metrics_json(report, o.out / "classifier.json");
        eval::export_per_user_csv(report, o.out / "classifier_per_user.csv");
        write_run_config(o, o.out);
        std::cerr << "evaluate classifier: accuracy " << report.overall_accuracy << "\n";
        return 0;
    }

    require(m.config().kind == model::ModelKind::slm, Errc::invalid_argument,
            "similarity evaluation needs an slm checkpoint");
    const eval::UserSplit split = eval::split_users(manifest);

    if (o.mode == "overall") {
        const eval::MetricsReport report = eval::eval_overall(m, split.test, o.data, o.threads);
        eval::export_metrics_json(report, o.out / "overall.json");
        eval::export_per_user_csv(report, o.out / "overall_per_user.csv");
        std::cerr << "evaluate overall: nn accuracy " << report.overall_accuracy << "\n";
    } else if (o.mode == "cross-app" || o.mode == "sequence" || o.mode == "top3") {
        const eval::CrossAppMetric metric = o.mode == "cross-app" ? eval::CrossAppMetric::nn_accuracy
                                            : o.mode == "sequence" ? eval::CrossAppMetric::sequence_accuracy
                                                                   : eval::CrossAppMetric::top3_sequence_accuracy;
        const eval::CrossAppMatrix matrix =
            eval::eval_cross_app(m, split.test, o.data, metric, o.span, {}, o.threads);
        const std::string name = std::string("cross_app_") +
                                 (metric == eval::CrossAppMetric::nn_accuracy          ? "nn"
                                  : metric == eval::CrossAppMetric::sequence_accuracy ? "sequence"
                                                                                      : "top3");
        eval::export_heatmap(matrix, o.out / (name + ".csv"));
        std::cerr << "evaluate " << o.mode << ": wrote " << name << ".csv\n";
    } else {
        fail(Errc::invalid_argument, "unknown mode '" + o.mode + "'");
    }
    write_run_config(o, o.out);
    return 0;
}

int cmd_stats(const Options& o) {
    require(!o.data.empty(), Errc::invalid_argument, "stats needs --data");
    const io::DatasetManifest manifest = io::load_manifest(manifest_path_of(o.data));
    const stats::StatsReport report = stats::compute_stats(manifest, o.data, o.threads);
    fs::create_directories(o.out);
    stats::export_stats_csv(report, o.out / "stats.csv");
    write_run_config(o, o.out);
    std::cerr << "stats: wrote stats.csv for " << report.rows.size() << " apps\n";
    return 0;
}

int cmd_all(Options o) {
    const auto t0 = std::chrono::steady_clock::now();
    auto stage = [&](const char* name, auto&& fn) {
        try {
            fn();
        } catch (const Error& e) {
            std::cerr << "pipeline failed at stage '" << name << "': " << e.what() << "\n";
            throw;
        }
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cerr << "stage " << name << " done (" << s << " s)\n";
    };

    const fs::path data_dir = o.data.empty() ? o.out / "data" : o.data;
    o.data = data_dir;

    stage("synth", [&] {
        if (fs::exists(manifest_path_of(data_dir))) {
            std::cerr << "synth: dataset already present, skipping\n";
            return;
        }
        Options so = o;
        so.data = data_dir;
        cmd_synth(so);
    });

    const io::DatasetManifest manifest = io::load_manifest(manifest_path_of(data_dir));
    const eval::UserSplit split = eval::split_users(manifest);

    const model::ModelConfig slm_cfg = make_model_config(o, model::ModelKind::slm, 0);
    const model::ModelConfig clm_cfg =
        make_model_config(o, model::ModelKind::clm, static_cast<int>(manifest_users(manifest).size()));

    stage("preprocess", [&] {
        kinematics::EncodingConfig enc{30.0, slm_cfg.window_size, slm_cfg.frame_step};
        int hits = 0;
        manifest_windows(manifest, data_dir, enc, cache_dir_for(o.out), o.threads, &hits);
        if (hits == static_cast<int>(manifest.entries.size())) {
            std::cerr << "preprocess: cache hit, stage skipped\n";
        }
    });

    stage("train-slm", [&] {
        kinematics::EncodingConfig enc{30.0, slm_cfg.window_size, slm_cfg.frame_step};
        const fs::path cache = cache_dir_for(o.out);
        const auto train_windows = manifest_windows(split.train, data_dir, enc, cache, o.threads);
        const auto val_windows = manifest_windows(split.val, data_dir, enc, cache, o.threads);
        model::SequenceModel slm(slm_cfg, o.seed);
        training::TrainConfig tc = make_train_config(o, o.out / "slm.ckpt", o.out / "slm_train_log.jsonl");
        tc.p_users = std::min(tc.p_users, static_cast<int>(manifest_users(split.train).size()));
        training::train(slm, train_windows, val_windows, tc);
    });

    stage("train-clm", [&] {
        kinematics::EncodingConfig enc{30.0, clm_cfg.window_size, clm_cfg.frame_step};
        const eval::TemporalWindows tw = eval::temporal_split_manifest(manifest, data_dir, enc, o.threads);
        model::SequenceModel clm(clm_cfg, o.seed);
        const training::TrainConfig tc = make_train_config(o, o.out / "clm.ckpt", o.out / "clm_train_log.jsonl");
        training::train(clm, tw.train, tw.val, tc);
    });

    stage("evaluate", [&] {
        const model::SequenceModel slm = model::SequenceModel::load_checkpoint(o.out / "slm.ckpt");
        const eval::MetricsReport overall = eval::eval_overall(slm, split.test, data_dir, o.threads);
        eval::export_metrics_json(overall, o.out / "overall.json");
        eval::export_per_user_csv(overall, o.out / "overall_per_user.csv");

        const struct {
            eval::CrossAppMetric metric;
            const char* file;
        } grids[3] = {
            {eval::CrossAppMetric::nn_accuracy, "cross_app_nn.csv"},
            {eval::CrossAppMetric::sequence_accuracy, "cross_app_sequence.csv"},
            {eval::CrossAppMetric::top3_sequence_accuracy, "cross_app_top3.csv"},
        };
        for (const auto& g : grids) {
            const eval::CrossAppMatrix matrix =
                eval::eval_cross_app(slm, split.test, data_dir, g.metric, o.span, {}, o.threads);
            eval::export_heatmap(matrix, o.out / g.file);
        }

        const model::SequenceModel clm = model::SequenceModel::load_checkpoint(o.out / "clm.ckpt");
        kinematics::EncodingConfig enc{30.0, clm.config().window_size, clm.config().frame_step};
        const eval::TemporalWindows tw = eval::temporal_split_manifest(manifest, data_dir, enc, o.threads);
        const eval::MetricsReport clf = eval::eval_classifier(clm, tw.test, o.clm_span);
        eval::export_metrics_json(clf, o.out / "classifier.json");
    });

    stage("stats", [&] {
        const stats::StatsReport report = stats::compute_stats(manifest, data_dir, o.threads);
        stats::export_stats_csv(report, o.out / "stats.csv");
    });

    write_run_config(o, o.out);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    Options o;

    // --config is applied before regular parsing so flags override the file
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--config") {
            o.config_path = argv[i + 1];
        }
    }
    try {
        if (!o.config_path.empty()) {
            apply_config_file(o, o.config_path);
        }
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }

    CLI::App app{"motion-based user identification pipeline for XR tracking logs"};
    app.require_subcommand(1);
    app.fallthrough(); // global flags may follow the subcommand
    app.add_option("--config", o.config_path, "flat JSON config; flags override its values");
    app.add_option("--seed", o.seed, "global RNG seed");
    app.add_option("--out", o.out, "output directory");
    app.add_option("--threads", o.threads, "worker cap; 1 = fully serial");

    CLI::App* synth = app.add_subcommand("synth", "generate a seeded synthetic dataset");
    synth->add_option("--users", o.users);
    synth->add_option("--minutes", o.minutes, "minutes per (user, app) recording");
    synth->add_option("--level", o.level, "app modulation level (0 = identical apps)");
    synth->add_option("--apps", o.apps, "app labels (default: the five canonical apps)");
    synth->add_option("--data", o.data, "dataset directory (default <out>/data)");

    CLI::App* ingest = app.add_subcommand("ingest", "validate a directory of recording CSVs into a manifest");
    ingest->add_option("--in", o.in_dir)->required();

    CLI::App* preprocess = app.add_subcommand("preprocess", "warm the BRV window cache");
    preprocess->add_option("--data", o.data)->required();
    preprocess->add_option("--window", o.window);
    preprocess->add_option("--step", o.step);

    CLI::App* train_cmd = app.add_subcommand("train", "train a model on a dataset");
    train_cmd->add_option("--model", o.model_kind, "slm|clm")->required();
    train_cmd->add_option("--data", o.data)->required();
    train_cmd->add_option("--profile", o.profile, "desk|full");
    train_cmd->add_option("--epochs", o.epochs);
    train_cmd->add_option("--patience", o.patience);
    train_cmd->add_option("--batch-size", o.batch_size);
    train_cmd->add_option("--p-users", o.p_users);
    train_cmd->add_option("--k-windows", o.k_windows);
    train_cmd->add_option("--margin", o.margin);
    train_cmd->add_option("--lr", o.lr);
    train_cmd->add_option("--window", o.window);
    train_cmd->add_option("--step", o.step);

    CLI::App* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint");
    evaluate->add_option("--mode", o.mode, "overall|cross-app|sequence|top3|classifier")->required();
    evaluate->add_option("--data", o.data)->required();
    evaluate->add_option("--checkpoint", o.checkpoint)->required();
    evaluate->add_option("--span", o.span, "similarity sequence span, seconds");
    evaluate->add_option("--clm-span", o.clm_span, "classifier sequence span, seconds");

    CLI::App* stats_cmd = app.add_subcommand("stats", "dataset movement/pitch statistics and tests");
    stats_cmd->add_option("--data", o.data)->required();

    CLI::App* all = app.add_subcommand("all", "synth -> preprocess -> train -> evaluate -> stats");
    all->add_option("--users", o.users);
    all->add_option("--minutes", o.minutes);
    all->add_option("--level", o.level);
    all->add_option("--data", o.data);
    all->add_option("--profile", o.profile);
    all->add_option("--epochs", o.epochs);
    all->add_option("--patience", o.patience);
    all->add_option("--p-users", o.p_users);
    all->add_option("--k-windows", o.k_windows);
    all->add_option("--span", o.span);
    all->add_option("--clm-span", o.clm_span);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (synth->parsed()) {
            return cmd_synth(o);
        }
        if (ingest->parsed()) {
            return cmd_ingest(o);
        }
        if (preprocess->parsed()) {
            return cmd_preprocess(o);
        }
        if (train_cmd->parsed()) {
            return cmd_train(o);
        }
        if (evaluate->parsed()) {
            return cmd_evaluate(o);
        }
        if (stats_cmd->parsed()) {
            return cmd_stats(o);
        }
        if (all->parsed()) {
            return cmd_all(o);
        }
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
