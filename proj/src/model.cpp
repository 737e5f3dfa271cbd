#include "xrid/model.hpp"

#include "xrid/error.hpp"
#include "xrid/kinematics.hpp"
#include "xrid/rng.hpp"

#include <json.hpp>

#include <cmath>

namespace xrid::model {

using ad::Tape;
using ad::Var;
using nlohmann::json;

const char* model_kind_name(ModelKind kind) { return kind == ModelKind::slm ? "slm" : "clm"; }

ModelKind model_kind_from_name(const std::string& name) {
    if (name == "slm") {
        return ModelKind::slm;
    }
    if (name == "clm") {
        return ModelKind::clm;
    }
    fail(Errc::invalid_argument, "unknown model kind '" + name + "'");
}

ModelConfig ModelConfig::slm_defaults() { return ModelConfig{}; }

ModelConfig ModelConfig::clm_defaults(int n_users) {
    ModelConfig cfg;
    cfg.kind = ModelKind::clm;
    cfg.d_model = 704;
    cfg.n_transformer_layers = 2;
    cfg.ff_dim = 640;
    cfg.n_heads = 8;
    cfg.gru_hidden = 512;
    cfg.gru_layers = 1;
    cfg.gru_dropout = 0.1;
    cfg.dropout_frames = 0.3;
    cfg.dropout_global = 0.2;
    cfg.embedding_size = 0;
    cfg.n_classes = n_users;
    cfg.window_size = 600;
    cfg.frame_step = 100;
    cfg.learning_rate = 0.0004;
    return cfg;
}

ModelConfig ModelConfig::slm_desk() {
    ModelConfig cfg;
    cfg.d_model = 24;
    cfg.n_transformer_layers = 1;
    cfg.ff_dim = 48;
    cfg.n_heads = 4;
    cfg.gru_hidden = 32;
    cfg.gru_layers = 1;
    cfg.embedding_size = 32;
    cfg.window_size = 90;
    cfg.frame_step = 45;
    cfg.learning_rate = 0.01;
    return cfg;
}

ModelConfig ModelConfig::clm_desk(int n_users) {
    ModelConfig cfg = clm_defaults(n_users);
    cfg.d_model = 24;
    cfg.n_transformer_layers = 1;
    cfg.ff_dim = 48;
    cfg.n_heads = 4;
    cfg.gru_hidden = 32;
    cfg.window_size = 120;
    cfg.frame_step = 60;
    cfg.learning_rate = 0.01;
    return cfg;
}

void ModelConfig::validate() const {
    require(d_model > 0 && n_heads > 0 && d_model % n_heads == 0, Errc::invalid_argument,
            "d_model must be a positive multiple of n_heads");
    require(n_transformer_layers >= 0 && ff_dim > 0 && gru_hidden > 0 && gru_layers >= 1, Errc::invalid_argument,
            "bad architecture sizes");
    require(window_size > 0 && frame_step > 0 && window_size <= max_position, Errc::invalid_argument,
            "window_size must be in (0, max_position]");
    require(gru_dropout >= 0 && gru_dropout < 1 && dropout_frames >= 0 && dropout_frames < 1 &&
                dropout_global >= 0 && dropout_global < 1,
            Errc::invalid_argument, "dropout rates must be in [0, 1)");
    if (kind == ModelKind::slm) {
        require(embedding_size == gru_hidden, Errc::invalid_argument,
                "the embedding is the GRU's last hidden state, so embedding_size must equal gru_hidden");
    } else {
        require(n_classes >= 2, Errc::invalid_argument, "classification needs at least 2 classes");
    }
}

void to_json(json& j, const ModelConfig& cfg) {
    j = json{{"kind", model_kind_name(cfg.kind)},
             {"d_model", cfg.d_model},
             {"n_transformer_layers", cfg.n_transformer_layers},
             {"ff_dim", cfg.ff_dim},
             {"n_heads", cfg.n_heads},
             {"gru_hidden", cfg.gru_hidden},
             {"gru_layers", cfg.gru_layers},
             {"gru_dropout", cfg.gru_dropout},
             {"dropout_frames", cfg.dropout_frames},
             {"dropout_global", cfg.dropout_global},
             {"embedding_size", cfg.embedding_size},
             {"n_classes", cfg.n_classes},
             {"window_size", cfg.window_size},
             {"frame_step", cfg.frame_step},
             {"learning_rate", cfg.learning_rate},
             {"max_position", cfg.max_position}};
}

void from_json(const json& j, ModelConfig& cfg) {
    cfg.kind = model_kind_from_name(j.at("kind").get<std::string>());
    cfg.d_model = j.at("d_model").get<int>();
    cfg.n_transformer_layers = j.at("n_transformer_layers").get<int>();
    cfg.ff_dim = j.at("ff_dim").get<int>();
    cfg.n_heads = j.at("n_heads").get<int>();
    cfg.gru_hidden = j.at("gru_hidden").get<int>();
    cfg.gru_layers = j.at("gru_layers").get<int>();
    cfg.gru_dropout = j.at("gru_dropout").get<double>();
    cfg.dropout_frames = j.at("dropout_frames").get<double>();
    cfg.dropout_global = j.at("dropout_global").get<double>();
    cfg.embedding_size = j.at("embedding_size").get<int>();
    cfg.n_classes = j.at("n_classes").get<int>();
    cfg.window_size = j.at("window_size").get<int>();
    cfg.frame_step = j.at("frame_step").get<int>();
    cfg.learning_rate = j.at("learning_rate").get<double>();
    cfg.max_position = j.value("max_position", 600);
}

Tensor sinusoid_table(int rows, int d_model) {
    Tensor table = Tensor::zeros({rows, d_model});
    for (int pos = 0; pos < rows; ++pos) {
        for (int i = 0; i < d_model; i += 2) {
            const double angle = pos / std::pow(10000.0, static_cast<double>(i) / d_model);
            table.at(pos, i) = static_cast<float>(std::sin(angle));
            if (i + 1 < d_model) {
                table.at(pos, i + 1) = static_cast<float>(std::cos(angle));
            }
        }
    }
    return table;
}

Tensor positional_encode(const Tensor& x, int max_position) {
    require(x.rank() == 2, Errc::shape_mismatch, "positional_encode expects a matrix");
    require(x.shape[0] <= max_position, Errc::window_too_long,
            "window of " + std::to_string(x.shape[0]) + " rows exceeds the maximum position " +
                std::to_string(max_position));
    const Tensor table = sinusoid_table(x.shape[0], x.shape[1]);
    Tensor out = x;
    for (size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] += table.data[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Parameter layout
// ---------------------------------------------------------------------------

std::vector<std::pair<std::string, std::vector<int>>> SequenceModel::parameter_specs(const ModelConfig& cfg) {
    std::vector<std::pair<std::string, std::vector<int>>> specs;
    const int d = cfg.d_model;
    specs.push_back({"in_proj.w", {kinematics::kFeatureCount, d}});
    specs.push_back({"in_proj.b", {d}});
    for (int l = 0; l < cfg.n_transformer_layers; ++l) {
        const std::string p = "enc" + std::to_string(l) + ".";
        for (const char* name : {"wq", "wk", "wv", "wo"}) {
            specs.push_back({p + "attn." + name, {d, d}});
            specs.push_back({p + "attn." + name + "_b", {d}});
        }
        specs.push_back({p + "ln1.gamma", {d}});
        specs.push_back({p + "ln1.beta", {d}});
        specs.push_back({p + "ff.w1", {d, cfg.ff_dim}});
        specs.push_back({p + "ff.b1", {cfg.ff_dim}});
        specs.push_back({p + "ff.w2", {cfg.ff_dim, d}});
        specs.push_back({p + "ff.b2", {d}});
        specs.push_back({p + "ln2.gamma", {d}});
        specs.push_back({p + "ln2.beta", {d}});
    }
    for (int l = 0; l < cfg.gru_layers; ++l) {
        const std::string p = "gru" + std::to_string(l) + ".";
        const int in = l == 0 ? d : cfg.gru_hidden;
        const int h = cfg.gru_hidden;
        for (const char* gate : {"z", "r", "c"}) {
            specs.push_back({p + "w" + gate, {in, h}});
            specs.push_back({p + "u" + gate, {h, h}});
            specs.push_back({p + "b" + gate, {h}});
        }
    }
    if (cfg.kind == ModelKind::clm) {
        specs.push_back({"head.w", {cfg.gru_hidden, cfg.n_classes}});
        specs.push_back({"head.b", {cfg.n_classes}});
    }
    return specs;
}

SequenceModel::SequenceModel(ModelConfig config) : config_(std::move(config)) {
    config_.validate();
    posenc_ = sinusoid_table(config_.max_position, config_.d_model);
}

SequenceModel::SequenceModel(ModelConfig config, uint64_t init_seed) : SequenceModel(std::move(config)) {
    // scaled uniform init, +-1/sqrt(fan_in); layer-norm affine starts at identity
    SeededRng rng(mix64(init_seed, 0xb0d37ull));
    for (const auto& [name, shape] : parameter_specs(config_)) {
        Tensor t = Tensor::zeros(shape);
        if (name.find("ln") != std::string::npos) {
            const bool is_gamma = name.find("gamma") != std::string::npos;
            for (float& v : t.data) {
                v = is_gamma ? 1.0f : 0.0f;
            }
        } else {
            const int fan_in = shape.size() == 2 ? shape[0] : config_.d_model;
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            for (float& v : t.data) {
                v = static_cast<float>(rng.uniform(-bound, bound));
            }
        }
        params_.add(name, std::move(t));
    }
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

BoundModel::BoundModel(Tape& tape, const SequenceModel& model, Mode mode, uint64_t dropout_salt)
    : tape_(tape), model_(model), mode_(mode), salt_(dropout_salt) {
    mix_site_ = [salt = salt_](uint64_t site) { return mix64(salt, site); };
    for (const std::string& name : model.params_.names()) {
        vars_.emplace(name, tape_.leaf(model.params_.value(name)));
    }
}

BoundModel::BoundModel(Tape& tape, const SequenceModel& model, Mode mode, uint64_t dropout_salt,
                       std::map<std::string, ad::Var> bound_params)
    : tape_(tape), model_(model), mode_(mode), salt_(dropout_salt), vars_(std::move(bound_params)) {
    mix_site_ = [salt = salt_](uint64_t site) { return mix64(salt, site); };
    for (const std::string& name : model.params_.names()) {
        require(vars_.count(name) == 1, Errc::invalid_argument, "missing bound parameter " + name);
    }
}

std::map<std::string, Tensor> BoundModel::param_grads() const {
    std::map<std::string, Tensor> grads;
    for (const auto& [name, var] : vars_) {
        grads.emplace(name, tape_.grad(var));
    }
    return grads;
}

Var BoundModel::transformer_layer(int layer, Var x) {
    const ModelConfig& cfg = model_.config_;
    const std::string p = "enc" + std::to_string(layer) + ".";
    const int head_dim = cfg.d_model / cfg.n_heads;
    const bool train = mode_ == Mode::train;

    auto proj = [&](const char* name) {
        return tape_.add_bias(tape_.matmul(x, vars_.at(p + "attn." + name)), vars_.at(p + "attn." + std::string(name) + "_b"));
    };
    const Var q = proj("wq");
    const Var k = proj("wk");
    const Var v = proj("wv");

    std::vector<Var> heads;
    heads.reserve(static_cast<size_t>(cfg.n_heads));
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
    for (int h = 0; h < cfg.n_heads; ++h) {
        const int off = h * head_dim;
        const Var qh = tape_.slice_cols(q, off, head_dim);
        const Var kh = tape_.slice_cols(k, off, head_dim);
        const Var vh = tape_.slice_cols(v, off, head_dim);
        const Var scores = tape_.affine(tape_.matmul(qh, kh, false, true), scale, 0.0);
        const Var attn = tape_.softmax(scores, -1);
        heads.push_back(tape_.matmul(attn, vh));
    }
    Var att = tape_.concat_cols(heads);
    att = tape_.add_bias(tape_.matmul(att, vars_.at(p + "attn.wo")), vars_.at(p + "attn.wo_b"));
    att = tape_.dropout(att, cfg.dropout_global, train, next_key());
    Var h1 = tape_.layer_norm(tape_.add(x, att), vars_.at(p + "ln1.gamma"), vars_.at(p + "ln1.beta"));

    Var ff = tape_.add_bias(tape_.matmul(h1, vars_.at(p + "ff.w1")), vars_.at(p + "ff.b1"));
    ff = tape_.relu(ff);
    ff = tape_.add_bias(tape_.matmul(ff, vars_.at(p + "ff.w2")), vars_.at(p + "ff.b2"));
    ff = tape_.dropout(ff, cfg.dropout_global, train, next_key());
    return tape_.layer_norm(tape_.add(h1, ff), vars_.at(p + "ln2.gamma"), vars_.at(p + "ln2.beta"));
}

Var BoundModel::gru_layer(int layer, Var seq, Var* last_hidden) {
    const ModelConfig& cfg = model_.config_;
    const std::string p = "gru" + std::to_string(layer) + ".";
    const int steps = tape_.value(seq).shape[0];

    Var h = tape_.leaf(Tensor::zeros({1, cfg.gru_hidden}));
    std::vector<Var> outputs;
    outputs.reserve(static_cast<size_t>(steps));
    for (int t = 0; t < steps; ++t) {
        const Var x_t = tape_.slice_rows(seq, t, 1);
        const Var z = tape_.sigmoid(tape_.add_bias(
            tape_.add(tape_.matmul(x_t, vars_.at(p + "wz")), tape_.matmul(h, vars_.at(p + "uz"))), vars_.at(p + "bz")));
        const Var r = tape_.sigmoid(tape_.add_bias(
            tape_.add(tape_.matmul(x_t, vars_.at(p + "wr")), tape_.matmul(h, vars_.at(p + "ur"))), vars_.at(p + "br")));
        const Var cand = tape_.tanh(tape_.add_bias(
            tape_.add(tape_.matmul(x_t, vars_.at(p + "wc")), tape_.mul(r, tape_.matmul(h, vars_.at(p + "uc")))),
            vars_.at(p + "bc")));
        // update gate interpolates: h' = z*h + (1-z)*candidate
        h = tape_.add(tape_.mul(z, h), tape_.mul(tape_.affine(z, -1.0, 1.0), cand));
        outputs.push_back(h);
    }
    *last_hidden = h;
    return tape_.concat_rows(outputs);
}

Var BoundModel::forward(const Tensor& window) {
    const ModelConfig& cfg = model_.config_;
    require(window.rank() == 2 && window.shape[0] == cfg.window_size && window.shape[1] == kinematics::kFeatureCount,
            Errc::shape_mismatch,
            "window must be " + std::to_string(cfg.window_size) + "x" + std::to_string(kinematics::kFeatureCount));
    require(cfg.window_size <= cfg.max_position, Errc::window_too_long, "window exceeds positional table");
    const bool train = mode_ == Mode::train;

    Var x = tape_.leaf(window);
    x = tape_.dropout_rows(x, cfg.dropout_frames, train, next_key());
    Var h = tape_.add_bias(tape_.matmul(x, vars_.at("in_proj.w")), vars_.at("in_proj.b"));

    Tensor pos_rows = Tensor::zeros({cfg.window_size, cfg.d_model});
    std::copy(model_.posenc_.data.begin(),
              model_.posenc_.data.begin() + static_cast<long>(pos_rows.data.size()), pos_rows.data.begin());
    h = tape_.add(h, tape_.leaf(std::move(pos_rows)));
    h = tape_.dropout(h, cfg.dropout_global, train, next_key());

    for (int l = 0; l < cfg.n_transformer_layers; ++l) {
        h = transformer_layer(l, h);
    }
    h = tape_.dropout(h, cfg.dropout_global, train, next_key());

    Var last{};
    for (int l = 0; l < cfg.gru_layers; ++l) {
        h = gru_layer(l, h, &last);
        if (l + 1 < cfg.gru_layers) {
            h = tape_.dropout(h, cfg.gru_dropout, train, next_key());
        }
    }

    if (cfg.kind == ModelKind::slm) {
        return tape_.l2_normalize(last);
    }
    return tape_.add_bias(tape_.matmul(last, vars_.at("head.w")), vars_.at("head.b"));
}

Tensor SequenceModel::forward_eval(const Tensor& window) const {
    ad::Tape tape;
    BoundModel bound(tape, *this, Mode::eval, 0);
    const Var out = bound.forward(window);
    return tape.value(out);
}

std::vector<float> SequenceModel::embed(const Tensor& window) const {
    require(config_.kind == ModelKind::slm, Errc::invalid_argument, "embed() is a similarity-model operation");
    return forward_eval(window).data;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

void SequenceModel::save_checkpoint(const std::filesystem::path& path) const {
    json extra;
    extra["model_config"] = config_;
    extra["class_labels"] = class_labels;
    ad::save_checkpoint(params_, extra, path);
}

SequenceModel SequenceModel::load_checkpoint(const std::filesystem::path& path) {
    ad::LoadedCheckpoint loaded = ad::load_checkpoint(path);
    const ModelConfig cfg = loaded.extra.at("model_config").get<ModelConfig>();

    SequenceModel model(cfg);
    for (const auto& [name, shape] : parameter_specs(cfg)) {
        require(loaded.params.has(name), Errc::shape_mismatch, "checkpoint is missing parameter " + name);
        Tensor& t = loaded.params.value(name);
        require(t.shape == shape, Errc::shape_mismatch,
                "checkpoint shape " + shape_str(t.shape) + " does not match config " + shape_str(shape) + " for " +
                    name);
        model.params_.add(name, std::move(t));
    }
    if (loaded.extra.contains("class_labels")) {
        model.class_labels = loaded.extra.at("class_labels").get<std::vector<std::string>>();
    }
    return model;
}

} // namespace xrid::model
