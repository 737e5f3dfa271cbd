#include "xrid/dataset_stats.hpp"

#include "xrid/error.hpp"
#include "xrid/geometry.hpp"
#include "xrid/kinematics.hpp"
#include "xrid/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>

namespace xrid::stats {

namespace {

constexpr double kRadToDeg = 57.29577951308232087680;

const Vec3& device_pos(const io::Frame& f, Device device) {
    switch (device) {
    case Device::hmd: return f.hmd.pos;
    case Device::left: return f.left.pos;
    default: return f.right.pos;
    }
}

void check_resampled(const io::Recording& rec) {
    require(std::abs(rec.nominal_rate_hz - kinematics::kTargetFps) < 1e-6, Errc::invalid_argument,
            "expected a 30 FPS resampled recording");
}

} // namespace

std::vector<double> travel_distance(const io::Recording& rec30, Device device) {
    check_resampled(rec30);
    const int frames_per_minute = static_cast<int>(60.0 * kinematics::kTargetFps);
    const int64_t n_deltas = static_cast<int64_t>(rec30.frames.size()) - 1;
    const int64_t n_bins = n_deltas / frames_per_minute;
    require(n_bins >= 1, Errc::too_short, "travel distance needs at least one full minute");

    std::vector<double> out(static_cast<size_t>(n_bins), 0.0);
    for (int64_t bin = 0; bin < n_bins; ++bin) {
        double acc = 0.0;
        const int64_t begin = bin * frames_per_minute;
        for (int64_t j = begin; j < begin + frames_per_minute; ++j) {
            const Vec3 d = device_pos(rec30.frames[static_cast<size_t>(j + 1)], device) -
                           device_pos(rec30.frames[static_cast<size_t>(j)], device);
            acc += norm(d);
        }
        out[static_cast<size_t>(bin)] = acc;
    }
    return out;
}

PitchStats pitch_stats(const io::Recording& rec30) {
    check_resampled(rec30);
    require(!rec30.frames.empty(), Errc::empty_recording, "no frames");
    double sum = 0.0;
    std::vector<double> pitches;
    pitches.reserve(rec30.frames.size());
    for (const io::Frame& f : rec30.frames) {
        const double deg = pitch_of(f.hmd.rot) * kRadToDeg;
        pitches.push_back(deg);
        sum += deg;
    }
    const double mean = sum / static_cast<double>(pitches.size());
    double var = 0.0;
    for (double p : pitches) {
        var += (p - mean) * (p - mean);
    }
    var /= static_cast<double>(pitches.size());
    return {mean, std::sqrt(var)};
}

// ---------------------------------------------------------------------------
// Special functions
// ---------------------------------------------------------------------------

namespace {

// continued fraction for the incomplete beta (Lentz's method)
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-14;
    constexpr double kTiny = 1e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) {
        d = kTiny;
    }
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) {
            d = kTiny;
        }
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) {
            c = kTiny;
        }
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) {
            d = kTiny;
        }
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) {
            c = kTiny;
        }
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) {
            break;
        }
    }
    return h;
}

} // namespace

double regularized_incomplete_beta(double a, double b, double x) {
    require(a > 0.0 && b > 0.0, Errc::invalid_argument, "beta parameters must be positive");
    if (x <= 0.0) {
        return 0.0;
    }
    if (x >= 1.0) {
        return 1.0;
    }
    const double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                         b * std::log(1.0 - x);
    const double bt = std::exp(ln_bt);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return bt * betacf(a, b, x) / a;
    }
    return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

double f_survival(double f, double d1, double d2) {
    if (f <= 0.0) {
        return 1.0;
    }
    if (std::isinf(f)) {
        return 0.0;
    }
    return regularized_incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f));
}

double t_two_sided_p(double t, double df) {
    if (std::isinf(t)) {
        return 0.0;
    }
    return regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

// ---------------------------------------------------------------------------
// ANOVA / post-hoc
// ---------------------------------------------------------------------------

namespace {

void check_matrix(const std::vector<std::vector<double>>& values) {
    require(values.size() >= 2, Errc::incomplete_matrix, "need at least 2 subjects");
    const size_t a = values.front().size();
    require(a >= 2, Errc::incomplete_matrix, "need at least 2 conditions");
    for (const auto& row : values) {
        require(row.size() == a, Errc::incomplete_matrix, "ragged condition matrix");
        for (double v : row) {
            require(std::isfinite(v), Errc::incomplete_matrix, "non-finite cell");
        }
    }
}

} // namespace

AnovaResult rm_anova(const std::vector<std::vector<double>>& values) {
    check_matrix(values);
    const int n = static_cast<int>(values.size());        // subjects
    const int a = static_cast<int>(values.front().size()); // conditions

    double grand = 0.0;
    for (const auto& row : values) {
        for (double v : row) {
            grand += v;
        }
    }
    grand /= static_cast<double>(n) * a;

    double ss_treat = 0.0;
    for (int j = 0; j < a; ++j) {
        double mean_j = 0.0;
        for (int i = 0; i < n; ++i) {
            mean_j += values[static_cast<size_t>(i)][static_cast<size_t>(j)];
        }
        mean_j /= n;
        ss_treat += (mean_j - grand) * (mean_j - grand);
    }
    ss_treat *= n;

    double ss_subj = 0.0;
    for (int i = 0; i < n; ++i) {
        double mean_i = 0.0;
        for (int j = 0; j < a; ++j) {
            mean_i += values[static_cast<size_t>(i)][static_cast<size_t>(j)];
        }
        mean_i /= a;
        ss_subj += (mean_i - grand) * (mean_i - grand);
    }
    ss_subj *= a;

    double ss_total = 0.0;
    for (const auto& row : values) {
        for (double v : row) {
            ss_total += (v - grand) * (v - grand);
        }
    }
    const double ss_err = ss_total - ss_treat - ss_subj;

    AnovaResult res;
    res.df_between = a - 1;
    res.df_within = (a - 1) * (n - 1);
    const double ms_treat = ss_treat / res.df_between;
    const double ms_err = ss_err / res.df_within;
    if (ms_treat <= 0.0) {
        res.f = 0.0;
        res.p = 1.0;
    } else if (ms_err <= 0.0) {
        res.f = std::numeric_limits<double>::infinity();
        res.p = 0.0;
    } else {
        res.f = ms_treat / ms_err;
        res.p = f_survival(res.f, res.df_between, res.df_within);
    }
    return res;
}

std::vector<PosthocEntry> posthoc_bonferroni(const std::vector<std::vector<double>>& values, double alpha) {
    check_matrix(values);
    const int n = static_cast<int>(values.size());
    const int a = static_cast<int>(values.front().size());
    const int comparisons = a * (a - 1) / 2;

    std::vector<PosthocEntry> out;
    for (int j = 0; j < a; ++j) {
        for (int k = j + 1; k < a; ++k) {
            double mean_d = 0.0;
            for (int i = 0; i < n; ++i) {
                mean_d += values[static_cast<size_t>(i)][static_cast<size_t>(j)] -
                          values[static_cast<size_t>(i)][static_cast<size_t>(k)];
            }
            mean_d /= n;
            double var_d = 0.0;
            for (int i = 0; i < n; ++i) {
                const double d = values[static_cast<size_t>(i)][static_cast<size_t>(j)] -
                                 values[static_cast<size_t>(i)][static_cast<size_t>(k)] - mean_d;
                var_d += d * d;
            }
            var_d /= n - 1; // sample variance of the paired differences

            PosthocEntry e;
            e.app_a = j;
            e.app_b = k;
            if (var_d <= 0.0) {
                // zero-variance differences: identical columns are a perfect
                // null, a constant offset is a perfect effect
                e.t = mean_d == 0.0 ? 0.0
                                    : std::copysign(std::numeric_limits<double>::infinity(), mean_d);
                e.p_raw = mean_d == 0.0 ? 1.0 : 0.0;
            } else {
                e.t = mean_d / std::sqrt(var_d / n);
                e.p_raw = t_two_sided_p(e.t, static_cast<double>(n - 1));
            }
            e.p_adjusted = std::min(1.0, e.p_raw * comparisons);
            e.significant = e.p_adjusted < alpha;
            out.push_back(e);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dataset report
// ---------------------------------------------------------------------------

StatsReport compute_stats(const io::DatasetManifest& manifest, const std::filesystem::path& dir, int threads) {
    const std::vector<io::AppLabel> apps = manifest_apps(manifest);
    std::vector<io::UserId> users = manifest_users(manifest);
    std::sort(users.begin(), users.end());

    struct Entry {
        double hmd = 0.0, left = 0.0, right = 0.0, pitch_mean = 0.0, pitch_std = 0.0;
        bool present = false;
    };
    std::map<io::UserId, std::map<io::AppLabel, Entry>> cells;
    for (const io::UserId& u : users) {
        for (const io::AppLabel& app : apps) {
            cells[u][app] = Entry{};
        }
    }

    std::vector<Entry> results(manifest.entries.size());
    parallel_for(static_cast<int64_t>(manifest.entries.size()), threads, [&](int64_t i) {
        const io::ManifestEntry& me = manifest.entries[static_cast<size_t>(i)];
        const io::Recording rec30 = kinematics::resample_to_30fps(io::load_entry(me, dir));
        Entry e;
        auto mean_of = [](const std::vector<double>& xs) {
            double acc = 0.0;
            for (double x : xs) {
                acc += x;
            }
            return xs.empty() ? 0.0 : acc / static_cast<double>(xs.size());
        };
        e.hmd = mean_of(travel_distance(rec30, Device::hmd));
        e.left = mean_of(travel_distance(rec30, Device::left));
        e.right = mean_of(travel_distance(rec30, Device::right));
        const PitchStats ps = pitch_stats(rec30);
        e.pitch_mean = ps.mean_deg;
        e.pitch_std = ps.std_deg;
        e.present = true;
        results[static_cast<size_t>(i)] = e;
    });
    for (size_t i = 0; i < manifest.entries.size(); ++i) {
        const io::ManifestEntry& me = manifest.entries[i];
        cells[me.user][me.app] = results[i];
    }

    StatsReport report;
    report.users = users;
    for (const io::AppLabel& app : apps) {
        AppRow row;
        row.app = app;
        int count = 0;
        for (const io::UserId& u : users) {
            const Entry& e = cells[u][app];
            if (!e.present) {
                continue;
            }
            row.hmd_dist += e.hmd;
            row.left_dist += e.left;
            row.right_dist += e.right;
            row.pitch_mean += e.pitch_mean;
            row.pitch_std += e.pitch_std;
            ++count;
        }
        require(count > 0, Errc::incomplete_matrix, "no recordings for app " + app);
        row.hmd_dist /= count;
        row.left_dist /= count;
        row.right_dist /= count;
        row.pitch_mean /= count;
        row.pitch_std /= count;
        report.rows.push_back(row);
    }

    // per-metric users x apps matrices; ANOVA requires a complete design
    bool complete = true;
    for (const io::UserId& u : users) {
        for (const io::AppLabel& app : apps) {
            complete = complete && cells[u][app].present;
        }
    }
    if (complete && users.size() >= 2 && apps.size() >= 2) {
        auto matrix_of = [&](auto field) {
            std::vector<std::vector<double>> m;
            for (const io::UserId& u : users) {
                std::vector<double> row;
                for (const io::AppLabel& app : apps) {
                    row.push_back(field(cells[u][app]));
                }
                m.push_back(std::move(row));
            }
            return m;
        };
        const std::pair<std::string, std::vector<std::vector<double>>> metrics[4] = {
            {"hmd_dist", matrix_of([](const Entry& e) { return e.hmd; })},
            {"left_dist", matrix_of([](const Entry& e) { return e.left; })},
            {"right_dist", matrix_of([](const Entry& e) { return e.right; })},
            {"pitch_mean", matrix_of([](const Entry& e) { return e.pitch_mean; })},
        };
        for (const auto& [name, matrix] : metrics) {
            MetricBlock block;
            block.metric = name;
            block.anova = rm_anova(matrix);
            block.posthoc = posthoc_bonferroni(matrix);
            report.tests.push_back(std::move(block));
        }
    }
    return report;
}

void export_stats_csv(const StatsReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.is_open(), Errc::io_failure, "cannot write " + path.string());
    out << "app,hmd_dist_m_per_min,con1_dist_m_per_min,con2_dist_m_per_min,pitch_mean_deg,pitch_std_deg\n";
    char buf[160];
    for (const AppRow& row : report.rows) {
        std::snprintf(buf, sizeof(buf), "%s,%.9g,%.9g,%.9g,%.9g,%.9g", row.app.c_str(), row.hmd_dist, row.left_dist,
                      row.right_dist, row.pitch_mean, row.pitch_std);
        out << buf << '\n';
    }
    require(out.good(), Errc::io_failure, "write failed for " + path.string());

    if (report.tests.empty()) {
        return;
    }
    std::filesystem::path anova_path = path;
    anova_path.replace_filename(path.stem().string() + "_anova" + path.extension().string());
    std::ofstream anova(anova_path, std::ios::binary | std::ios::trunc);
    require(anova.is_open(), Errc::io_failure, "cannot write " + anova_path.string());
    anova << "# df convention: between = a-1, within = (a-1)(n-1) for a conditions and n subjects\n";
    anova << "metric,F,df_between,df_within,p\n";
    for (const MetricBlock& block : report.tests) {
        std::snprintf(buf, sizeof(buf), "%s,%.9g,%d,%d,%.9g", block.metric.c_str(), block.anova.f,
                      block.anova.df_between, block.anova.df_within, block.anova.p);
        anova << buf << '\n';
    }

    std::filesystem::path post_path = path;
    post_path.replace_filename(path.stem().string() + "_posthoc" + path.extension().string());
    std::ofstream post(post_path, std::ios::binary | std::ios::trunc);
    require(post.is_open(), Errc::io_failure, "cannot write " + post_path.string());
    post << "metric,app_a,app_b,t,p_raw,p_adjusted,significant\n";
    for (const MetricBlock& block : report.tests) {
        for (const PosthocEntry& e : block.posthoc) {
            std::snprintf(buf, sizeof(buf), "%s,%d,%d,%.9g,%.9g,%.9g,%d", block.metric.c_str(), e.app_a, e.app_b,
                          e.t, e.p_raw, e.p_adjusted, e.significant ? 1 : 0);
            post << buf << '\n';
        }
    }
}

} // namespace xrid::stats
