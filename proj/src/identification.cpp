#include "xrid/identification.hpp"

#include "xrid/autodiff.hpp"
#include "xrid/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

namespace xrid::ident {

using nlohmann::json;

void ReferenceStore::add(ReferenceRow row) {
    require(!row.embedding.empty(), Errc::invalid_argument, "empty embedding");
    double n2 = 0.0;
    for (float v : row.embedding) {
        n2 += static_cast<double>(v) * v;
    }
    require(std::abs(std::sqrt(n2) - 1.0) <= 1e-4, Errc::invalid_argument,
            "reference embeddings must be unit length");
    rows_.push_back(std::move(row));
}

std::vector<io::UserId> ReferenceStore::users() const {
    std::set<io::UserId> users;
    for (const ReferenceRow& r : rows_) {
        users.insert(r.user);
    }
    return {users.begin(), users.end()};
}

void ReferenceStore::save(const std::filesystem::path& path) const {
    json header;
    header["schema_version"] = 1;
    header["dim"] = rows_.empty() ? 0 : static_cast<int>(rows_.front().embedding.size());
    header["count"] = rows_.size();
    header["users"] = users();
    json rows = json::array();
    for (const ReferenceRow& r : rows_) {
        rows.push_back({{"user", r.user}, {"app", r.app}, {"session", r.session}, {"window_start", r.window_start}});
    }
    header["rows"] = std::move(rows);
    const std::string header_str = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.is_open(), Errc::io_failure, "cannot write " + path.string());
    const uint64_t len = header_str.size();
    unsigned char len_le[8];
    for (int i = 0; i < 8; ++i) {
        len_le[i] = static_cast<unsigned char>((len >> (8 * i)) & 0xff);
    }
    out.write(reinterpret_cast<const char*>(len_le), 8);
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (const ReferenceRow& r : rows_) {
        out.write(reinterpret_cast<const char*>(r.embedding.data()),
                  static_cast<std::streamsize>(r.embedding.size() * sizeof(float)));
    }
    require(out.good(), Errc::io_failure, "write failed for " + path.string());
}

ReferenceStore ReferenceStore::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.is_open(), Errc::io_failure, "cannot open " + path.string());
    unsigned char len_le[8];
    in.read(reinterpret_cast<char*>(len_le), 8);
    require(in.good(), Errc::malformed_row, "truncated reference store");
    uint64_t len = 0;
    for (int i = 0; i < 8; ++i) {
        len |= static_cast<uint64_t>(len_le[i]) << (8 * i);
    }
    require(len < (1ull << 30), Errc::malformed_row, "implausible store header size");
    std::string header_str(len, '\0');
    in.read(header_str.data(), static_cast<std::streamsize>(len));
    require(in.good(), Errc::malformed_row, "truncated store header");

    json header;
    try {
        header = json::parse(header_str);
    } catch (const json::exception& e) {
        fail(Errc::malformed_row, std::string("bad store header: ") + e.what());
    }
    const int dim = header.at("dim").get<int>();

    ReferenceStore store;
    for (const json& r : header.at("rows")) {
        ReferenceRow row;
        row.user = r.at("user").get<std::string>();
        row.app = r.at("app").get<std::string>();
        row.session = r.at("session").get<std::string>();
        row.window_start = r.at("window_start").get<int>();
        row.embedding.resize(static_cast<size_t>(dim));
        in.read(reinterpret_cast<char*>(row.embedding.data()),
                static_cast<std::streamsize>(row.embedding.size() * sizeof(float)));
        require(in.good(), Errc::malformed_row, "truncated store payload");
        store.add(std::move(row));
    }
    return store;
}

// ---------------------------------------------------------------------------
// Lookups
// ---------------------------------------------------------------------------

std::vector<int> store_view(const ReferenceStore& store, const AppFilter& filter) {
    std::vector<int> rows;
    rows.reserve(store.size());
    for (size_t i = 0; i < store.size(); ++i) {
        if (filter) {
            const io::AppLabel& app = store.row(i).app;
            if (std::find(filter->begin(), filter->end(), app) == filter->end()) {
                continue;
            }
        }
        rows.push_back(static_cast<int>(i));
    }
    return rows;
}

NearestResult nearest_in(const ReferenceStore& store, std::span<const int> rows, std::span<const float> query) {
    require(!rows.empty(), Errc::empty_store, "no reference rows to search");
    NearestResult best;
    for (int idx : rows) {
        const ReferenceRow& r = store.row(static_cast<size_t>(idx));
        const double sim = ad::cosine_of(r.embedding, query);
        if (sim > best.similarity) {
            best.similarity = sim;
            best.row_index = idx;
            best.user = r.user;
        }
    }
    return best;
}

NearestResult nearest_reference(const ReferenceStore& store, std::span<const float> query, const AppFilter& filter) {
    const std::vector<int> rows = store_view(store, filter);
    return nearest_in(store, rows, query);
}

namespace {

void sort_candidates(std::vector<Candidate>& cands) {
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        if (a.votes != b.votes) {
            return a.votes > b.votes;
        }
        if (a.cumulative_similarity != b.cumulative_similarity) {
            return a.cumulative_similarity > b.cumulative_similarity;
        }
        return a.user < b.user;
    });
}

} // namespace

RankedCandidates vote_among(const ReferenceStore& store, std::span<const int> rows,
                            const std::vector<std::vector<float>>& queries, int k) {
    require(k >= 1, Errc::invalid_argument, "k must be at least 1");
    require(!rows.empty(), Errc::empty_store, "no reference rows to vote over");

    std::map<io::UserId, Candidate> tally;
    std::vector<std::pair<double, int>> scored;
    for (const std::vector<float>& q : queries) {
        scored.clear();
        scored.reserve(rows.size());
        for (int idx : rows) {
            scored.emplace_back(ad::cosine_of(store.row(static_cast<size_t>(idx)).embedding, q), idx);
        }
        const size_t take = std::min<size_t>(static_cast<size_t>(k), scored.size());
        std::partial_sort(scored.begin(), scored.begin() + static_cast<long>(take), scored.end(),
                          [](const auto& a, const auto& b) {
                              if (a.first != b.first) {
                                  return a.first > b.first;
                              }
                              return a.second < b.second;
                          });
        for (size_t i = 0; i < take; ++i) {
            const ReferenceRow& r = store.row(static_cast<size_t>(scored[i].second));
            Candidate& c = tally[r.user];
            c.user = r.user;
            c.votes += 1;
            c.cumulative_similarity += scored[i].first;
        }
    }

    RankedCandidates out;
    out.n_queries = static_cast<int>(queries.size());
    out.k = k;
    for (auto& [user, cand] : tally) {
        out.ranked.push_back(cand);
    }
    sort_candidates(out.ranked);
    return out;
}

RankedCandidates vote_identify(const ReferenceStore& store, const std::vector<std::vector<float>>& queries, int k,
                               const AppFilter& filter) {
    const std::vector<int> rows = store_view(store, filter);
    return vote_among(store, rows, queries, k);
}

std::vector<io::UserId> topk_users(const RankedCandidates& ranked, int k) {
    require(k >= 1, Errc::invalid_argument, "k must be at least 1");
    std::vector<io::UserId> out;
    const size_t take = std::min<size_t>(static_cast<size_t>(k), ranked.ranked.size());
    out.reserve(take);
    for (size_t i = 0; i < take; ++i) {
        out.push_back(ranked.ranked[i].user);
    }
    return out;
}

SequenceDecision sequence_identify(const ReferenceStore& store, const model::SequenceModel& slm,
                                   const std::vector<kinematics::FeatureWindow>& stream, double span_seconds,
                                   const AppFilter& filter) {
    require(span_seconds > 0.0, Errc::invalid_argument, "span must be positive");
    const int span_frames = static_cast<int>(std::floor(span_seconds * kinematics::kTargetFps));

    int covered = 0;
    for (const kinematics::FeatureWindow& w : stream) {
        covered = std::max(covered, w.start_frame + w.frames.rows());
    }
    require(covered >= span_frames, Errc::insufficient_span,
            "stream covers " + std::to_string(covered) + " frames, span needs " + std::to_string(span_frames));

    const std::vector<int> rows = store_view(store, filter);
    require(!rows.empty(), Errc::empty_store, "no reference rows");

    SequenceDecision decision;
    decision.span_seconds = span_seconds;
    std::map<io::UserId, Candidate> tally;
    for (const kinematics::FeatureWindow& w : stream) {
        if (w.start_frame + w.frames.rows() > span_frames) {
            continue;
        }
        const std::vector<float> emb = slm.embed(w.frames);
        const NearestResult nearest = nearest_in(store, rows, emb);
        decision.window_votes.push_back(nearest.user);
        Candidate& c = tally[nearest.user];
        c.user = nearest.user;
        c.votes += 1;
        c.cumulative_similarity += nearest.similarity;
    }
    require(!decision.window_votes.empty(), Errc::insufficient_span, "no windows inside the span");

    decision.tally.n_queries = static_cast<int>(decision.window_votes.size());
    decision.tally.k = 1;
    for (auto& [user, cand] : tally) {
        decision.tally.ranked.push_back(cand);
    }
    sort_candidates(decision.tally.ranked);
    decision.final_user = decision.tally.ranked.front().user;
    return decision;
}

// ---------------------------------------------------------------------------
// Classifier-side decisions
// ---------------------------------------------------------------------------

std::vector<double> softmax_probs(const Tensor& logits) {
    double mx = logits.data[0];
    for (float v : logits.data) {
        mx = std::max(mx, static_cast<double>(v));
    }
    double denom = 0.0;
    std::vector<double> probs(logits.data.size());
    for (size_t i = 0; i < logits.data.size(); ++i) {
        probs[i] = std::exp(static_cast<double>(logits.data[i]) - mx);
        denom += probs[i];
    }
    for (double& p : probs) {
        p /= denom;
    }
    return probs;
}

int classifier_index(const model::SequenceModel& clm, const Tensor& window) {
    require(clm.config().kind == model::ModelKind::clm, Errc::invalid_argument, "not a classification model");
    const Tensor logits = clm.forward_eval(window);
    return static_cast<int>(std::max_element(logits.data.begin(), logits.data.end()) - logits.data.begin());
}

namespace {

io::UserId class_user(const model::SequenceModel& clm, int index) {
    if (index >= 0 && index < static_cast<int>(clm.class_labels.size())) {
        return clm.class_labels[static_cast<size_t>(index)];
    }
    return "class" + std::to_string(index);
}

} // namespace

io::UserId classifier_identify(const model::SequenceModel& clm, const Tensor& window) {
    return class_user(clm, classifier_index(clm, window));
}

io::UserId classifier_sequence_identify(const model::SequenceModel& clm,
                                        const std::vector<kinematics::FeatureWindow>& stream, double span_seconds) {
    require(span_seconds > 0.0, Errc::invalid_argument, "span must be positive");
    const int span_frames = static_cast<int>(std::floor(span_seconds * kinematics::kTargetFps));
    const int n_classes = clm.config().n_classes;

    std::vector<int> votes(static_cast<size_t>(n_classes), 0);
    std::vector<double> prob_sums(static_cast<size_t>(n_classes), 0.0);
    int used = 0;
    int covered = 0;
    for (const kinematics::FeatureWindow& w : stream) {
        covered = std::max(covered, w.start_frame + w.frames.rows());
        if (w.start_frame + w.frames.rows() > span_frames) {
            continue;
        }
        const Tensor logits = clm.forward_eval(w.frames);
        const int pred = static_cast<int>(std::max_element(logits.data.begin(), logits.data.end()) -
                                          logits.data.begin());
        const std::vector<double> probs = softmax_probs(logits);
        votes[static_cast<size_t>(pred)] += 1;
        for (int c = 0; c < n_classes; ++c) {
            prob_sums[static_cast<size_t>(c)] += probs[static_cast<size_t>(c)];
        }
        ++used;
    }
    require(covered >= span_frames, Errc::insufficient_span, "stream shorter than the requested span");
    require(used > 0, Errc::insufficient_span, "no windows inside the span");

    int best = 0;
    for (int c = 1; c < n_classes; ++c) {
        const size_t ci = static_cast<size_t>(c);
        const size_t bi = static_cast<size_t>(best);
        if (votes[ci] > votes[bi] ||
            (votes[ci] == votes[bi] && prob_sums[ci] > prob_sums[bi]) ||
            (votes[ci] == votes[bi] && prob_sums[ci] == prob_sums[bi] &&
             class_user(clm, c) < class_user(clm, best))) {
            best = c;
        }
    }
    return class_user(clm, best);
}

void export_ranked_csv(const RankedCandidates& ranked, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.is_open(), Errc::io_failure, "cannot write " + path.string());
    out << "rank,user,votes,cum_similarity\n";
    char buf[64];
    for (size_t i = 0; i < ranked.ranked.size(); ++i) {
        const Candidate& c = ranked.ranked[i];
        std::snprintf(buf, sizeof(buf), "%.9g", c.cumulative_similarity);
        out << (i + 1) << ',' << c.user << ',' << c.votes << ',' << buf << '\n';
    }
    require(out.good(), Errc::io_failure, "write failed for " + path.string());
}

} // namespace xrid::ident
