#pragma once

#include "xrid/kinematics.hpp"
#include "xrid/model.hpp"
#include "xrid/motion_io.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace xrid::ident {

// Labeled embedding database for nearest-reference identification. Rows are
// immutable after insertion; every lookup is an exact exhaustive scan.
struct ReferenceRow {
    std::vector<float> embedding; // unit length
    io::UserId user;
    io::AppLabel app;
    std::string session;
    int window_start = 0;
};

class ReferenceStore {
public:
    // Validates unit norm within 1e-4.
    void add(ReferenceRow row);

    size_t size() const { return rows_.size(); }
    bool empty() const { return rows_.empty(); }
    const ReferenceRow& row(size_t i) const { return rows_[i]; }
    std::vector<io::UserId> users() const;

    void save(const std::filesystem::path& path) const;
    static ReferenceStore load(const std::filesystem::path& path);

private:
    std::vector<ReferenceRow> rows_;
};

// Row subset selected by app labels (empty filter = all rows).
using AppFilter = std::optional<std::vector<io::AppLabel>>;

std::vector<int> store_view(const ReferenceStore& store, const AppFilter& filter);

struct NearestResult {
    io::UserId user;
    double similarity = -2.0;
    int row_index = -1;
};

// Exhaustive argmax of cosine similarity over the row subset; ties keep the
// lowest row index. Throws Errc::empty_store on an empty subset.
NearestResult nearest_in(const ReferenceStore& store, std::span<const int> rows, std::span<const float> query);

NearestResult nearest_reference(const ReferenceStore& store, std::span<const float> query,
                                const AppFilter& filter = std::nullopt);

struct Candidate {
    io::UserId user;
    int votes = 0;
    double cumulative_similarity = 0.0;
};

// Candidates ordered by votes desc, cumulative similarity desc, then user id;
// the chain is a total order, so rankings are always deterministic.
struct RankedCandidates {
    std::vector<Candidate> ranked;
    int n_queries = 0;
    int k = 1;
};

RankedCandidates vote_among(const ReferenceStore& store, std::span<const int> rows,
                            const std::vector<std::vector<float>>& queries, int k);

// Each query's k nearest references cast one vote apiece for their user;
// votes pool across all queries.
RankedCandidates vote_identify(const ReferenceStore& store, const std::vector<std::vector<float>>& queries, int k,
                               const AppFilter& filter = std::nullopt);

// First min(k, #candidates) users in ranked order.
std::vector<io::UserId> topk_users(const RankedCandidates& ranked, int k);

struct SequenceDecision {
    std::vector<io::UserId> window_votes;
    io::UserId final_user;
    double span_seconds = 0.0;
    RankedCandidates tally;
};

// Embeds every window whose frames fall inside the observation span, lets
// each window's nearest reference (k = 1) vote, and returns the plurality
// decision. Throws Errc::insufficient_span when the stream is shorter than
// the requested span.
SequenceDecision sequence_identify(const ReferenceStore& store, const model::SequenceModel& slm,
                                   const std::vector<kinematics::FeatureWindow>& stream, double span_seconds,
                                   const AppFilter& filter = std::nullopt);

// Classifier-side equivalents: per-window argmax of the logits and the
// plurality over a window stream. Ties break by summed softmax probability,
// then by user id.
int classifier_index(const model::SequenceModel& clm, const Tensor& window);
io::UserId classifier_identify(const model::SequenceModel& clm, const Tensor& window);
io::UserId classifier_sequence_identify(const model::SequenceModel& clm,
                                        const std::vector<kinematics::FeatureWindow>& stream, double span_seconds);

// Softmax of raw logits (plain helper shared with evaluation).
std::vector<double> softmax_probs(const Tensor& logits);

void export_ranked_csv(const RankedCandidates& ranked, const std::filesystem::path& path);

} // namespace xrid::ident
