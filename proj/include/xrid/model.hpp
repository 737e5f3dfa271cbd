#pragma once

#include "xrid/autodiff.hpp"
#include "xrid/params.hpp"
#include "xrid/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace xrid::model {

enum class ModelKind { slm, clm };

const char* model_kind_name(ModelKind kind);
ModelKind model_kind_from_name(const std::string& name);

// Full hyperparameter set of the sequence models. Defaults mirror the final
// tuned configurations; the desk variants are small enough to train in
// seconds and exist for tests and the synthetic end-to-end pipeline.
struct ModelConfig {
    ModelKind kind = ModelKind::slm;
    int d_model = 320;
    int n_transformer_layers = 1;
    int ff_dim = 960;
    int n_heads = 16;
    int gru_hidden = 480;
    int gru_layers = 2;
    double gru_dropout = 0.1;
    double dropout_frames = 0.3;
    double dropout_global = 0.2;
    int embedding_size = 480; // SLM only; must equal gru_hidden
    int n_classes = 0;        // CLM only
    int window_size = 450;
    int frame_step = 50;
    double learning_rate = 0.00098;
    int max_position = 600;

    static ModelConfig slm_defaults();
    static ModelConfig clm_defaults(int n_users);
    static ModelConfig slm_desk();
    static ModelConfig clm_desk(int n_users);

    void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& cfg);
void from_json(const nlohmann::json& j, ModelConfig& cfg);

// Fixed sinusoidal position table (standard sin/cos interleave), rows x d_model.
Tensor sinusoid_table(int rows, int d_model);

// Adds the position table to each row. Throws Errc::window_too_long when the
// input has more rows than max_position.
Tensor positional_encode(const Tensor& x, int max_position = 600);

enum class Mode { train, eval };

class SequenceModel;

// Parameters bound as leaves on one tape; reused across the windows of one
// batch so a single backward pass accumulates all gradients.
class BoundModel {
public:
    BoundModel(ad::Tape& tape, const SequenceModel& model, Mode mode, uint64_t dropout_salt);

    // Binds against caller-provided parameter leaves instead of the model's
    // own values (gradient checking drives the forward through this).
    BoundModel(ad::Tape& tape, const SequenceModel& model, Mode mode, uint64_t dropout_salt,
               std::map<std::string, ad::Var> bound_params);

    // window: window_size x 18. Returns the embedding (SLM, 1 x embedding_size,
    // unit length) or logits (CLM, 1 x n_classes).
    ad::Var forward(const Tensor& window);

    // Gradients for every parameter after tape.backward().
    std::map<std::string, Tensor> param_grads() const;

    // Stage-level entry points (tests and the reimplementation oracle drive
    // individual stages through these).
    ad::Var input(Tensor t) { return tape_.leaf(std::move(t)); }
    ad::Var transformer_layer(int layer, ad::Var x);
    ad::Var gru_layer(int layer, ad::Var seq, ad::Var* last_hidden);

private:
    uint64_t next_key() { return mix_site_(site_counter_++); }

    ad::Tape& tape_;
    const SequenceModel& model_;
    Mode mode_;
    uint64_t salt_;
    uint64_t site_counter_ = 0;
    std::function<uint64_t(uint64_t)> mix_site_;
    std::map<std::string, ad::Var> vars_;
};

class SequenceModel {
public:
    SequenceModel(ModelConfig config, uint64_t init_seed);

    const ModelConfig& config() const { return config_; }
    ad::ParamSet& params() { return params_; }
    const ad::ParamSet& params() const { return params_; }

    // CLM class index -> user id mapping, set by training.
    std::vector<std::string> class_labels;

    // Eval-mode forward on a fresh tape; deterministic.
    Tensor forward_eval(const Tensor& window) const;

    // Unit-length embedding as a flat vector (SLM only).
    std::vector<float> embed(const Tensor& window) const;

    void save_checkpoint(const std::filesystem::path& path) const;
    static SequenceModel load_checkpoint(const std::filesystem::path& path);

    // name -> shape of every parameter, derived from the config alone.
    static std::vector<std::pair<std::string, std::vector<int>>> parameter_specs(const ModelConfig& config);

private:
    friend class BoundModel;
    SequenceModel(ModelConfig config); // params filled by caller

    ModelConfig config_;
    ad::ParamSet params_;
    Tensor posenc_; // max_position x d_model
};

} // namespace xrid::model
