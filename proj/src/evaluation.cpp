#include "xrid/evaluation.hpp"

#include "xrid/autodiff.hpp"
#include "xrid/error.hpp"
#include "xrid/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace xrid::eval {

namespace fs = std::filesystem;
using kinematics::EncodingConfig;
using kinematics::FeatureWindow;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

UserSplit split_users(const io::DatasetManifest& manifest) {
    std::vector<io::UserId> roster = manifest_users(manifest);
    std::sort(roster.begin(), roster.end());
    const int n = static_cast<int>(roster.size());
    require(n >= 3, Errc::roster_too_small, "user-disjoint split needs at least 3 users, got " + std::to_string(n));

    const int n_train = n * 23 / 49;
    const int n_val = n * 9 / 49;

    auto bucket_of = [&](const io::UserId& user) {
        const int idx = static_cast<int>(std::lower_bound(roster.begin(), roster.end(), user) - roster.begin());
        if (idx < n_train) {
            return 0;
        }
        if (idx < n_train + n_val) {
            return 1;
        }
        return 2;
    };

    UserSplit split;
    split.train.schema_version = manifest.schema_version;
    split.val.schema_version = manifest.schema_version;
    split.test.schema_version = manifest.schema_version;
    for (const io::ManifestEntry& e : manifest.entries) {
        switch (bucket_of(e.user)) {
        case 0: split.train.entries.push_back(e); break;
        case 1: split.val.entries.push_back(e); break;
        default: split.test.entries.push_back(e); break;
        }
    }
    return split;
}

std::pair<int, int> temporal_boundaries(int n_frames) {
    return {static_cast<int>(std::floor(0.45 * n_frames)), static_cast<int>(std::floor(0.65 * n_frames))};
}

TemporalWindows temporal_split(const io::Recording& rec, const EncodingConfig& config) {
    const io::Recording at30 = kinematics::resample_to_30fps(rec);
    const auto br = kinematics::encode_body_relative(at30);
    const auto brv = kinematics::encode_brv(br);

    const auto [b1, b2] = temporal_boundaries(static_cast<int>(at30.frames.size()));
    const int total = static_cast<int>(brv.size());

    struct Segment {
        int begin;
        int end;
        std::vector<FeatureWindow>* out;
    };
    TemporalWindows out;
    const Segment segments[3] = {
        {0, std::min(b1, total), &out.train},
        {std::min(b1, total), std::min(b2, total), &out.val},
        {std::min(b2, total), total, &out.test},
    };
    for (const Segment& seg : segments) {
        const int len = seg.end - seg.begin;
        require(len >= config.window_size, Errc::recording_too_short,
                rec.user + "/" + rec.app + ": temporal segment of " + std::to_string(len) +
                    " frames cannot fill a window of " + std::to_string(config.window_size));
        const std::vector<kinematics::FeatureFrame> slice(brv.begin() + seg.begin, brv.begin() + seg.end);
        std::vector<FeatureWindow> windows = kinematics::make_windows(slice, config, rec.user, rec.app, rec.session);
        for (FeatureWindow& w : windows) {
            w.start_frame += seg.begin;
            seg.out->push_back(std::move(w));
        }
    }
    return out;
}

TemporalWindows temporal_split_manifest(const io::DatasetManifest& manifest, const fs::path& dir,
                                        const EncodingConfig& config, int threads) {
    std::vector<TemporalWindows> per_entry(manifest.entries.size());
    parallel_for(static_cast<int64_t>(manifest.entries.size()), threads, [&](int64_t i) {
        const io::Recording rec = io::load_entry(manifest.entries[static_cast<size_t>(i)], dir);
        per_entry[static_cast<size_t>(i)] = temporal_split(rec, config);
    });
    TemporalWindows out;
    for (TemporalWindows& tw : per_entry) {
        std::move(tw.train.begin(), tw.train.end(), std::back_inserter(out.train));
        std::move(tw.val.begin(), tw.val.end(), std::back_inserter(out.val));
        std::move(tw.test.begin(), tw.test.end(), std::back_inserter(out.test));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Embeddings
// ---------------------------------------------------------------------------

std::vector<EmbeddedWindow> embed_manifest(const model::SequenceModel& slm, const io::DatasetManifest& manifest,
                                           const fs::path& dir, const std::vector<io::AppLabel>& apps, int threads) {
    EncodingConfig config;
    config.window_size = slm.config().window_size;
    config.frame_step = slm.config().frame_step;

    std::vector<const io::ManifestEntry*> selected;
    for (const io::ManifestEntry& e : manifest.entries) {
        if (apps.empty() || std::find(apps.begin(), apps.end(), e.app) != apps.end()) {
            selected.push_back(&e);
        }
    }

    std::vector<std::vector<EmbeddedWindow>> per_entry(selected.size());
    parallel_for(static_cast<int64_t>(selected.size()), threads, [&](int64_t i) {
        const io::Recording rec = io::load_entry(*selected[static_cast<size_t>(i)], dir);
        const std::vector<FeatureWindow> windows = kinematics::preprocess_recording(rec, config);
        std::vector<EmbeddedWindow>& out = per_entry[static_cast<size_t>(i)];
        out.reserve(windows.size());
        for (const FeatureWindow& w : windows) {
            out.push_back({slm.embed(w.frames), w.user, w.app, w.session, w.start_frame});
        }
    });

    std::vector<EmbeddedWindow> flat;
    for (std::vector<EmbeddedWindow>& v : per_entry) {
        std::move(v.begin(), v.end(), std::back_inserter(flat));
    }
    return flat;
}

ident::ReferenceStore store_from_embedded(const std::vector<EmbeddedWindow>& rows) {
    ident::ReferenceStore store;
    for (const EmbeddedWindow& e : rows) {
        store.add({e.embedding, e.user, e.app, e.session, e.window_start});
    }
    return store;
}

ident::ReferenceStore build_reference_store(const model::SequenceModel& slm, const io::DatasetManifest& manifest,
                                            const fs::path& dir, const std::vector<io::AppLabel>& apps, int threads) {
    require(!apps.empty(), Errc::no_windows, "reference store needs at least one app");
    const std::vector<EmbeddedWindow> embedded = embed_manifest(slm, manifest, dir, apps, threads);
    require(!embedded.empty(), Errc::no_windows, "no windows matched the requested apps");
    return store_from_embedded(embedded);
}

// ---------------------------------------------------------------------------
// Cross-application grid
// ---------------------------------------------------------------------------

const char* metric_name(CrossAppMetric metric) {
    switch (metric) {
    case CrossAppMetric::nn_accuracy: return "nn_accuracy";
    case CrossAppMetric::sequence_accuracy: return "sequence_accuracy";
    case CrossAppMetric::top3_sequence_accuracy: return "top3_sequence_accuracy";
    }
    return "unknown";
}

CrossAppMetric metric_from_name(const std::string& name) {
    if (name == "nn_accuracy") {
        return CrossAppMetric::nn_accuracy;
    }
    if (name == "sequence_accuracy") {
        return CrossAppMetric::sequence_accuracy;
    }
    if (name == "top3_sequence_accuracy") {
        return CrossAppMetric::top3_sequence_accuracy;
    }
    fail(Errc::invalid_argument, "unknown metric '" + name + "'");
}

namespace {

bool same_window(const EmbeddedWindow& a, const EmbeddedWindow& b) {
    return a.user == b.user && a.app == b.app && a.session == b.session && a.window_start == b.window_start;
}

// Nearest reference by cosine, skipping the query's own window; ties keep the
// first (lowest-index) row.
int nearest_excluding(const std::vector<EmbeddedWindow>& all, const std::vector<int>& refs,
                      const EmbeddedWindow& query) {
    int best = -1;
    double best_sim = -2.0;
    for (int idx : refs) {
        const EmbeddedWindow& r = all[static_cast<size_t>(idx)];
        if (same_window(r, query)) {
            continue;
        }
        const double sim = ad::cosine_of(r.embedding, query.embedding);
        if (sim > best_sim) {
            best_sim = sim;
            best = idx;
        }
    }
    require(best >= 0, Errc::empty_store, "reference set empty after self-exclusion");
    return best;
}

struct SpanVote {
    io::UserId winner;
    std::vector<io::UserId> top3;
};

SpanVote vote_over(const std::vector<EmbeddedWindow>& all, const std::vector<int>& refs,
                   const std::vector<const EmbeddedWindow*>& queries) {
    struct Tally {
        int votes = 0;
        double cum_sim = 0.0;
    };
    std::map<io::UserId, Tally> tally;
    for (const EmbeddedWindow* q : queries) {
        const int idx = nearest_excluding(all, refs, *q);
        const EmbeddedWindow& r = all[static_cast<size_t>(idx)];
        Tally& t = tally[r.user];
        t.votes += 1;
        t.cum_sim += ad::cosine_of(r.embedding, q->embedding);
    }
    std::vector<std::pair<io::UserId, Tally>> ranked(tally.begin(), tally.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second.votes != b.second.votes) {
            return a.second.votes > b.second.votes;
        }
        if (a.second.cum_sim != b.second.cum_sim) {
            return a.second.cum_sim > b.second.cum_sim;
        }
        return a.first < b.first;
    });
    SpanVote out;
    out.winner = ranked.front().first;
    for (size_t i = 0; i < std::min<size_t>(3, ranked.size()); ++i) {
        out.top3.push_back(ranked[i].first);
    }
    return out;
}

// Disjoint full spans of span_frames BRV frames, assigned by window start. A
// stream shorter than one span forms a single span covering everything.
std::vector<std::vector<const EmbeddedWindow*>> split_spans(std::vector<const EmbeddedWindow*> windows,
                                                            int window_rows, int span_frames) {
    std::sort(windows.begin(), windows.end(), [](const EmbeddedWindow* a, const EmbeddedWindow* b) {
        if (a->session != b->session) {
            return a->session < b->session;
        }
        return a->window_start < b->window_start;
    });
    std::vector<std::vector<const EmbeddedWindow*>> spans;
    if (windows.empty()) {
        return spans;
    }
    int max_cover = 0;
    int min_start = windows.front()->window_start;
    for (const EmbeddedWindow* w : windows) {
        max_cover = std::max(max_cover, w->window_start + window_rows);
        min_start = std::min(min_start, w->window_start);
    }
    if (max_cover - min_start < span_frames) {
        spans.push_back(std::move(windows));
        return spans;
    }
    const int n_full = (max_cover - min_start) / span_frames;
    spans.resize(static_cast<size_t>(n_full));
    for (const EmbeddedWindow* w : windows) {
        const int rel = w->window_start - min_start;
        const int s = rel / span_frames;
        if (s < n_full) {
            spans[static_cast<size_t>(s)].push_back(w);
        }
    }
    spans.erase(std::remove_if(spans.begin(), spans.end(), [](const auto& s) { return s.empty(); }), spans.end());
    return spans;
}

double population_std(const std::vector<double>& xs, double mean) {
    if (xs.size() < 2) {
        return 0.0;
    }
    double acc = 0.0;
    for (double x : xs) {
        acc += (x - mean) * (x - mean);
    }
    return std::sqrt(acc / static_cast<double>(xs.size()));
}

} // namespace

CrossAppMatrix eval_cross_app(const model::SequenceModel& slm, const io::DatasetManifest& test_manifest,
                              const fs::path& dir, CrossAppMetric metric, double span_seconds,
                              std::vector<io::AppLabel> apps, int threads) {
    if (apps.empty()) {
        apps.assign(io::known_apps().begin(), io::known_apps().end());
    }
    const std::vector<io::AppLabel> present = manifest_apps(test_manifest);
    for (const io::AppLabel& app : apps) {
        require(std::find(present.begin(), present.end(), app) != present.end(), Errc::missing_app,
                "test split has no recordings for app '" + app + "'");
    }

    const std::vector<EmbeddedWindow> embedded = embed_manifest(slm, test_manifest, dir, apps, threads);
    require(!embedded.empty(), Errc::no_windows, "no windows to evaluate");
    const int window_rows = slm.config().window_size;
    const int span_frames = static_cast<int>(std::floor(span_seconds * kinematics::kTargetFps));

    std::map<io::AppLabel, std::vector<int>> rows_by_app;
    std::set<io::UserId> user_set;
    for (size_t i = 0; i < embedded.size(); ++i) {
        rows_by_app[embedded[i].app].push_back(static_cast<int>(i));
        user_set.insert(embedded[i].user);
    }
    const std::vector<io::UserId> users(user_set.begin(), user_set.end());

    CrossAppMatrix matrix;
    matrix.apps = apps;
    matrix.metric = metric_name(metric);
    matrix.cells.assign(apps.size() * apps.size(), CellStat{});

    const int n_cells = static_cast<int>(apps.size() * apps.size());
    parallel_for(n_cells, threads, [&](int64_t cell) {
        const int r = static_cast<int>(cell) / static_cast<int>(apps.size());
        const int q = static_cast<int>(cell) % static_cast<int>(apps.size());
        const std::vector<int>& refs = rows_by_app.at(apps[static_cast<size_t>(r)]);
        const std::vector<int>& queries = rows_by_app.at(apps[static_cast<size_t>(q)]);

        std::vector<double> user_accs;
        for (const io::UserId& user : users) {
            std::vector<const EmbeddedWindow*> user_queries;
            for (int idx : queries) {
                if (embedded[static_cast<size_t>(idx)].user == user) {
                    user_queries.push_back(&embedded[static_cast<size_t>(idx)]);
                }
            }
            if (user_queries.empty()) {
                continue;
            }
            int correct = 0;
            int total = 0;
            if (metric == CrossAppMetric::nn_accuracy) {
                for (const EmbeddedWindow* w : user_queries) {
                    const int best = nearest_excluding(embedded, refs, *w);
                    correct += embedded[static_cast<size_t>(best)].user == user ? 1 : 0;
                    ++total;
                }
            } else {
                const auto spans = split_spans(user_queries, window_rows, span_frames);
                for (const auto& span : spans) {
                    const SpanVote vote = vote_over(embedded, refs, span);
                    if (metric == CrossAppMetric::sequence_accuracy) {
                        correct += vote.winner == user ? 1 : 0;
                    } else {
                        correct += std::find(vote.top3.begin(), vote.top3.end(), user) != vote.top3.end() ? 1 : 0;
                    }
                    ++total;
                }
            }
            if (total > 0) {
                user_accs.push_back(static_cast<double>(correct) / total);
            }
        }
        double mean = 0.0;
        for (double a : user_accs) {
            mean += a;
        }
        mean = user_accs.empty() ? 0.0 : mean / static_cast<double>(user_accs.size());
        matrix.cells[static_cast<size_t>(cell)] = {mean, population_std(user_accs, mean)};
    });
    return matrix;
}

// ---------------------------------------------------------------------------
// Overall / classifier reports
// ---------------------------------------------------------------------------

MetricsReport eval_overall(const model::SequenceModel& slm, const io::DatasetManifest& test_manifest,
                           const fs::path& dir, int threads) {
    const std::vector<EmbeddedWindow> embedded = embed_manifest(slm, test_manifest, dir, {}, threads);
    require(!embedded.empty(), Errc::no_windows, "no windows to evaluate");

    std::vector<int> all_rows(embedded.size());
    for (size_t i = 0; i < embedded.size(); ++i) {
        all_rows[i] = static_cast<int>(i);
    }

    std::map<io::AppLabel, std::pair<int64_t, int64_t>> app_counts; // correct, total
    std::map<io::UserId, std::pair<int64_t, int64_t>> user_counts;
    std::vector<char> correct_flags(embedded.size(), 0);

    parallel_for(static_cast<int64_t>(embedded.size()), threads, [&](int64_t i) {
        const EmbeddedWindow& q = embedded[static_cast<size_t>(i)];
        const int best = nearest_excluding(embedded, all_rows, q);
        correct_flags[static_cast<size_t>(i)] = embedded[static_cast<size_t>(best)].user == q.user ? 1 : 0;
    });

    int64_t correct = 0;
    for (size_t i = 0; i < embedded.size(); ++i) {
        const EmbeddedWindow& q = embedded[i];
        auto& ac = app_counts[q.app];
        auto& uc = user_counts[q.user];
        ac.second += 1;
        uc.second += 1;
        if (correct_flags[i]) {
            ac.first += 1;
            uc.first += 1;
            ++correct;
        }
    }

    MetricsReport report;
    report.n_queries = static_cast<int64_t>(embedded.size());
    report.overall_accuracy = static_cast<double>(correct) / static_cast<double>(embedded.size());
    std::vector<io::AppLabel> apps;
    for (const auto& [app, counts] : app_counts) {
        (void)counts;
        apps.push_back(app);
    }
    std::sort(apps.begin(), apps.end(),
              [](const io::AppLabel& a, const io::AppLabel& b) { return io::app_sort_key(a) < io::app_sort_key(b); });
    for (const io::AppLabel& app : apps) {
        const auto& [c, t] = app_counts.at(app);
        report.per_app.emplace_back(app, static_cast<double>(c) / static_cast<double>(t));
    }
    for (const auto& [user, counts] : user_counts) {
        report.per_user.emplace_back(user, static_cast<double>(counts.first) / static_cast<double>(counts.second));
    }
    report.chance_level = 1.0 / static_cast<double>(user_counts.size());
    return report;
}

MetricsReport eval_classifier(const model::SequenceModel& clm, const std::vector<FeatureWindow>& test_windows,
                              double span_seconds) {
    require(clm.config().kind == model::ModelKind::clm, Errc::invalid_argument, "not a classification model");
    require(!test_windows.empty(), Errc::no_windows, "no test windows");
    const int span_frames = static_cast<int>(std::floor(span_seconds * kinematics::kTargetFps));
    const int n_classes = clm.config().n_classes;

    std::map<std::string, int> class_of;
    for (size_t i = 0; i < clm.class_labels.size(); ++i) {
        class_of[clm.class_labels[i]] = static_cast<int>(i);
    }

    struct Pred {
        int pred;
        std::vector<double> probs;
    };
    std::vector<Pred> preds(test_windows.size());
    for (size_t i = 0; i < test_windows.size(); ++i) {
        const Tensor logits = clm.forward_eval(test_windows[i].frames);
        preds[i].pred = static_cast<int>(std::max_element(logits.data.begin(), logits.data.end()) -
                                         logits.data.begin());
        preds[i].probs = ident::softmax_probs(logits);
    }

    MetricsReport report;
    report.n_queries = static_cast<int64_t>(test_windows.size());

    std::map<io::AppLabel, std::pair<int64_t, int64_t>> app_counts;
    std::map<io::UserId, std::pair<int64_t, int64_t>> user_counts;
    int64_t correct = 0;
    for (size_t i = 0; i < test_windows.size(); ++i) {
        const FeatureWindow& w = test_windows[i];
        auto it = class_of.find(w.user);
        const bool ok = it != class_of.end() && it->second == preds[i].pred;
        app_counts[w.app].second += 1;
        user_counts[w.user].second += 1;
        if (ok) {
            app_counts[w.app].first += 1;
            user_counts[w.user].first += 1;
            ++correct;
        }
    }
    report.overall_accuracy = static_cast<double>(correct) / static_cast<double>(test_windows.size());

    // plurality decisions over contiguous spans, per recording
    std::map<std::string, std::vector<size_t>> groups; // user|app|session -> window idx
    for (size_t i = 0; i < test_windows.size(); ++i) {
        const FeatureWindow& w = test_windows[i];
        groups[w.user + "\x1f" + w.app + "\x1f" + w.session].push_back(i);
    }
    std::map<io::AppLabel, std::pair<int64_t, int64_t>> app_seq_counts;
    int64_t seq_correct = 0;
    int64_t seq_total = 0;
    for (auto& [key, idxs] : groups) {
        (void)key;
        std::sort(idxs.begin(), idxs.end(), [&](size_t a, size_t b) {
            return test_windows[a].start_frame < test_windows[b].start_frame;
        });
        const FeatureWindow& first = test_windows[idxs.front()];
        const int min_start = first.start_frame;
        int max_cover = 0;
        for (size_t i : idxs) {
            max_cover = std::max(max_cover, test_windows[i].start_frame + test_windows[i].frames.rows());
        }
        const int n_full = (max_cover - min_start) / span_frames;
        if (n_full == 0) {
            report.skipped_short_segments += 1;
            continue;
        }
        std::vector<std::vector<size_t>> spans(static_cast<size_t>(n_full));
        for (size_t i : idxs) {
            const int s = (test_windows[i].start_frame - min_start) / span_frames;
            if (s < n_full) {
                spans[static_cast<size_t>(s)].push_back(i);
            }
        }
        for (const auto& span : spans) {
            if (span.empty()) {
                continue;
            }
            std::vector<int> votes(static_cast<size_t>(n_classes), 0);
            std::vector<double> prob_sums(static_cast<size_t>(n_classes), 0.0);
            for (size_t i : span) {
                votes[static_cast<size_t>(preds[i].pred)] += 1;
                for (int c = 0; c < n_classes; ++c) {
                    prob_sums[static_cast<size_t>(c)] += preds[i].probs[static_cast<size_t>(c)];
                }
            }
            int best = 0;
            for (int c = 1; c < n_classes; ++c) {
                const size_t ci = static_cast<size_t>(c);
                const size_t bi = static_cast<size_t>(best);
                if (votes[ci] > votes[bi] || (votes[ci] == votes[bi] && prob_sums[ci] > prob_sums[bi])) {
                    best = c;
                }
            }
            auto it = class_of.find(first.user);
            const bool ok = it != class_of.end() && it->second == best;
            app_seq_counts[first.app].second += 1;
            seq_total += 1;
            if (ok) {
                app_seq_counts[first.app].first += 1;
                seq_correct += 1;
            }
        }
    }
    if (seq_total > 0) {
        report.sequence_accuracy = static_cast<double>(seq_correct) / static_cast<double>(seq_total);
        for (const auto& [app, counts] : app_seq_counts) {
            report.per_app_sequence.emplace_back(app,
                                                 static_cast<double>(counts.first) /
                                                     static_cast<double>(counts.second));
        }
    }

    std::vector<io::AppLabel> apps;
    for (const auto& [app, counts] : app_counts) {
        (void)counts;
        apps.push_back(app);
    }
    std::sort(apps.begin(), apps.end(),
              [](const io::AppLabel& a, const io::AppLabel& b) { return io::app_sort_key(a) < io::app_sort_key(b); });
    for (const io::AppLabel& app : apps) {
        const auto& [c, t] = app_counts.at(app);
        report.per_app.emplace_back(app, static_cast<double>(c) / static_cast<double>(t));
    }
    for (const auto& [user, counts] : user_counts) {
        report.per_user.emplace_back(user, static_cast<double>(counts.first) / static_cast<double>(counts.second));
    }
    report.chance_level = 1.0 / static_cast<double>(user_counts.size());
    return report;
}

// ---------------------------------------------------------------------------
// Exports
// ---------------------------------------------------------------------------

namespace {

fs::path raw_path_of(const fs::path& path) {
    fs::path raw = path;
    raw.replace_filename(path.stem().string() + "_raw" + path.extension().string());
    return raw;
}

} // namespace

void export_heatmap(const CrossAppMatrix& matrix, const fs::path& path) {
    const size_t n = matrix.apps.size();
    require(matrix.cells.size() == n * n, Errc::invalid_argument, "incomplete matrix");

    std::ofstream display(path, std::ios::binary | std::ios::trunc);
    require(display.is_open(), Errc::io_failure, "cannot write " + path.string());
    std::ofstream raw(raw_path_of(path), std::ios::binary | std::ios::trunc);
    require(raw.is_open(), Errc::io_failure, "cannot write " + raw_path_of(path).string());

    display << "ref_app";
    raw << "ref_app";
    for (const io::AppLabel& app : matrix.apps) {
        display << ',' << app;
        raw << ',' << app;
    }
    display << '\n';
    raw << '\n';

    char buf[64];
    for (size_t r = 0; r < n; ++r) {
        display << matrix.apps[r];
        raw << matrix.apps[r];
        for (size_t q = 0; q < n; ++q) {
            const CellStat& cell = matrix.cells[r * n + q];
            std::snprintf(buf, sizeof(buf), ",%.3f±%.3f", cell.mean, cell.stddev);
            display << buf;
            std::snprintf(buf, sizeof(buf), ",%.9g", cell.mean);
            raw << buf;
        }
        display << '\n';
        raw << '\n';
    }
    require(display.good() && raw.good(), Errc::io_failure, "heatmap write failed");
}

CrossAppMatrix parse_heatmap_raw(const fs::path& raw_path) {
    std::ifstream in(raw_path);
    require(in.is_open(), Errc::io_failure, "cannot open " + raw_path.string());
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), Errc::malformed_row, "empty heatmap file");

    CrossAppMatrix matrix;
    {
        std::stringstream header(line);
        std::string cell;
        std::getline(header, cell, ','); // "ref_app"
        while (std::getline(header, cell, ',')) {
            matrix.apps.push_back(cell);
        }
    }
    const size_t n = matrix.apps.size();
    matrix.cells.assign(n * n, CellStat{});
    for (size_t r = 0; r < n; ++r) {
        require(static_cast<bool>(std::getline(in, line)), Errc::malformed_row, "truncated heatmap");
        std::stringstream row(line);
        std::string cell;
        std::getline(row, cell, ','); // ref app label
        for (size_t q = 0; q < n; ++q) {
            require(static_cast<bool>(std::getline(row, cell, ',')), Errc::malformed_row, "short heatmap row");
            matrix.cells[r * n + q].mean = std::stod(cell);
        }
    }
    return matrix;
}

void export_metrics_json(const MetricsReport& report, const fs::path& path) {
    json j;
    j["overall_accuracy"] = report.overall_accuracy;
    j["chance_level"] = report.chance_level;
    j["n_queries"] = report.n_queries;
    j["per_app"] = json::object();
    for (const auto& [app, acc] : report.per_app) {
        j["per_app"][app] = acc;
    }
    j["per_user"] = json::object();
    for (const auto& [user, acc] : report.per_user) {
        j["per_user"][user] = acc;
    }
    if (report.sequence_accuracy >= 0.0) {
        j["sequence_accuracy"] = report.sequence_accuracy;
        j["per_app_sequence"] = json::object();
        for (const auto& [app, acc] : report.per_app_sequence) {
            j["per_app_sequence"][app] = acc;
        }
    }
    j["skipped_short_segments"] = report.skipped_short_segments;

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.is_open(), Errc::io_failure, "cannot write " + path.string());
    out << j.dump(2) << '\n';
    require(out.good(), Errc::io_failure, "write failed for " + path.string());
}

void export_per_user_csv(const MetricsReport& report, const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.is_open(), Errc::io_failure, "cannot write " + path.string());
    out << "user,accuracy\n";
    char buf[48];
    for (const auto& [user, acc] : report.per_user) {
        std::snprintf(buf, sizeof(buf), "%.9g", acc);
        out << user << ',' << buf << '\n';
    }
    require(out.good(), Errc::io_failure, "write failed for " + path.string());
}

} // namespace xrid::eval
