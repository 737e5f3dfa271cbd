#pragma once

#include "xrid/autodiff.hpp"
#include "xrid/kinematics.hpp"
#include "xrid/model.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace xrid::training {

struct TrainConfig {
    int epochs = 100;
    int batch_size = 32; // CLM
    int p_users = 8;     // SLM batches draw P users x K windows
    int k_windows = 4;
    uint64_t seed = 0;
    double margin = 0.3;
    int patience = 10;
    double learning_rate = -1.0; // < 0: use the model config's rate
    std::filesystem::path checkpoint_path; // empty: best weights kept in memory only
    std::filesystem::path log_path;        // JSON-lines LossRecord stream
};

struct LossRecord {
    int epoch = 0;
    std::string split; // "train" | "val"
    double loss = 0.0;
    double accuracy = 0.0;
};

// Softmax cross-entropy against one true class. Logits: 1 x N or N.
ad::Var classification_loss(ad::Tape& tape, ad::Var logits, int true_index);

// Batch-all triplet loss over cosine distance d = 1 - cos: the mean over all
// valid (anchor, positive, negative) triplets of max(0, d(a,p) - d(a,n) + margin).
// Embeddings must be unit rows (B x E). Throws Errc::degenerate_batch when
// fewer than two labels are present.
ad::Var similarity_loss(ad::Tape& tape, ad::Var embeddings, const std::vector<int>& labels, double margin = 0.3);

struct TrainResult {
    std::vector<LossRecord> history;
    double best_val_accuracy = 0.0;
    int best_epoch = -1;
    int epochs_run = 0;
};

// Trains in place: per epoch seeded shuffle -> batches -> forward(train) ->
// loss -> backward -> Adam; evaluates on the validation windows, keeps the
// best-validation weights (restored into the model on return) and stops early
// after `patience` epochs without improvement. Single-threaded and fully
// deterministic under a fixed seed. When the validation set is empty the
// epoch's training accuracy stands in for the validation metric.
TrainResult train(model::SequenceModel& model, const std::vector<kinematics::FeatureWindow>& train_windows,
                  const std::vector<kinematics::FeatureWindow>& val_windows, const TrainConfig& config);

// Eval-mode classification accuracy over a window set.
double classifier_accuracy(const model::SequenceModel& model, const std::vector<kinematics::FeatureWindow>& windows);

// Leave-one-out nearest-neighbour accuracy within one embedded set, used as
// the SLM validation metric.
double loo_nn_accuracy(const std::vector<std::vector<float>>& embeddings, const std::vector<int>& labels);

} // namespace xrid::training
