#include "xrid/model.hpp"

#include "xrid/error.hpp"
#include "xrid/kinematics.hpp"
#include "xrid/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

using namespace xrid;
using namespace xrid::model;

namespace {

ModelConfig tiny_slm() {
    ModelConfig cfg;
    cfg.kind = ModelKind::slm;
    cfg.d_model = 8;
    cfg.n_transformer_layers = 1;
    cfg.ff_dim = 16;
    cfg.n_heads = 2;
    cfg.gru_hidden = 8;
    cfg.gru_layers = 1;
    cfg.embedding_size = 8;
    cfg.window_size = 6;
    cfg.frame_step = 3;
    cfg.gru_dropout = 0.0;
    cfg.dropout_frames = 0.0;
    cfg.dropout_global = 0.0;
    return cfg;
}

ModelConfig tiny_clm(int n_classes) {
    ModelConfig cfg = tiny_slm();
    cfg.kind = ModelKind::clm;
    cfg.embedding_size = 0;
    cfg.n_classes = n_classes;
    return cfg;
}

Tensor random_window(SeededRng& rng, int rows, double scale = 0.5) {
    Tensor t = Tensor::zeros({rows, kinematics::kFeatureCount});
    for (float& v : t.data) {
        v = static_cast<float>(rng.uniform(-scale, scale));
    }
    return t;
}

// straight-line double-precision reimplementation of the same equations,
// reading the very same parameter set
std::vector<double> oracle_forward(const SequenceModel& model, const Tensor& window) {
    const ModelConfig& cfg = model.config();
    const auto& P = model.params();
    const int W = cfg.window_size;
    const int D = cfg.d_model;

    auto get = [&](const std::string& name) -> const Tensor& { return P.value(name); };
    auto matvec = [](const std::vector<double>& x, const Tensor& w, const Tensor& b, int in, int out) {
        std::vector<double> y(static_cast<size_t>(out), 0.0);
        for (int o = 0; o < out; ++o) {
            double acc = b.data.empty() ? 0.0 : b.data[static_cast<size_t>(o)];
            for (int i = 0; i < in; ++i) {
                acc += x[static_cast<size_t>(i)] * w.data[static_cast<size_t>(i) * out + o];
            }
            y[static_cast<size_t>(o)] = acc;
        }
        return y;
    };

    std::vector<std::vector<double>> h(static_cast<size_t>(W));
    const Tensor pos = sinusoid_table(W, D);
    for (int t = 0; t < W; ++t) {
        std::vector<double> x(18);
        for (int c = 0; c < 18; ++c) {
            x[static_cast<size_t>(c)] = window.at(t, c);
        }
        h[static_cast<size_t>(t)] = matvec(x, get("in_proj.w"), get("in_proj.b"), 18, D);
        for (int c = 0; c < D; ++c) {
            h[static_cast<size_t>(t)][static_cast<size_t>(c)] += pos.at(t, c);
        }
    }

    auto layer_norm = [&](std::vector<std::vector<double>>& rows, const Tensor& gamma, const Tensor& beta) {
        for (auto& row : rows) {
            double mean = 0;
            for (double v : row) {
                mean += v;
            }
            mean /= static_cast<double>(row.size());
            double var = 0;
            for (double v : row) {
                var += (v - mean) * (v - mean);
            }
            var /= static_cast<double>(row.size());
            const double inv = 1.0 / std::sqrt(var + 1e-5);
            for (size_t c = 0; c < row.size(); ++c) {
                row[c] = (row[c] - mean) * inv * gamma.data[c] + beta.data[c];
            }
        }
    };

    for (int l = 0; l < cfg.n_transformer_layers; ++l) {
        const std::string p = "enc" + std::to_string(l) + ".";
        const int hd = D / cfg.n_heads;
        std::vector<std::vector<double>> q(static_cast<size_t>(W));
        std::vector<std::vector<double>> k(static_cast<size_t>(W));
        std::vector<std::vector<double>> v(static_cast<size_t>(W));
        for (int t = 0; t < W; ++t) {
            q[static_cast<size_t>(t)] = matvec(h[static_cast<size_t>(t)], get(p + "attn.wq"), get(p + "attn.wq_b"), D, D);
            k[static_cast<size_t>(t)] = matvec(h[static_cast<size_t>(t)], get(p + "attn.wk"), get(p + "attn.wk_b"), D, D);
            v[static_cast<size_t>(t)] = matvec(h[static_cast<size_t>(t)], get(p + "attn.wv"), get(p + "attn.wv_b"), D, D);
        }
        std::vector<std::vector<double>> att(static_cast<size_t>(W), std::vector<double>(static_cast<size_t>(D), 0.0));
        for (int head = 0; head < cfg.n_heads; ++head) {
            const int off = head * hd;
            for (int t = 0; t < W; ++t) {
                std::vector<double> scores(static_cast<size_t>(W), 0.0);
                for (int s = 0; s < W; ++s) {
                    double acc = 0;
                    for (int c = 0; c < hd; ++c) {
                        acc += q[static_cast<size_t>(t)][static_cast<size_t>(off + c)] *
                               k[static_cast<size_t>(s)][static_cast<size_t>(off + c)];
                    }
                    scores[static_cast<size_t>(s)] = acc / std::sqrt(static_cast<double>(hd));
                }
                double mx = scores[0];
                for (double sc : scores) {
                    mx = std::max(mx, sc);
                }
                double denom = 0;
                for (double& sc : scores) {
                    sc = std::exp(sc - mx);
                    denom += sc;
                }
                for (int s = 0; s < W; ++s) {
                    for (int c = 0; c < hd; ++c) {
                        att[static_cast<size_t>(t)][static_cast<size_t>(off + c)] +=
                            scores[static_cast<size_t>(s)] / denom *
                            v[static_cast<size_t>(s)][static_cast<size_t>(off + c)];
                    }
                }
            }
        }
        for (int t = 0; t < W; ++t) {
            att[static_cast<size_t>(t)] =
                matvec(att[static_cast<size_t>(t)], get(p + "attn.wo"), get(p + "attn.wo_b"), D, D);
            for (int c = 0; c < D; ++c) {
                att[static_cast<size_t>(t)][static_cast<size_t>(c)] += h[static_cast<size_t>(t)][static_cast<size_t>(c)];
            }
        }
        layer_norm(att, get(p + "ln1.gamma"), get(p + "ln1.beta"));
        std::vector<std::vector<double>> ff(static_cast<size_t>(W));
        for (int t = 0; t < W; ++t) {
            std::vector<double> mid =
                matvec(att[static_cast<size_t>(t)], get(p + "ff.w1"), get(p + "ff.b1"), D, cfg.ff_dim);
            for (double& x : mid) {
                x = x > 0 ? x : 0;
            }
            ff[static_cast<size_t>(t)] = matvec(mid, get(p + "ff.w2"), get(p + "ff.b2"), cfg.ff_dim, D);
            for (int c = 0; c < D; ++c) {
                ff[static_cast<size_t>(t)][static_cast<size_t>(c)] += att[static_cast<size_t>(t)][static_cast<size_t>(c)];
            }
        }
        layer_norm(ff, get(p + "ln2.gamma"), get(p + "ln2.beta"));
        h = ff;
    }

    // GRU stack; update gate interpolates h' = z*h + (1-z)*candidate
    std::vector<double> hidden;
    for (int l = 0; l < cfg.gru_layers; ++l) {
        const std::string p = "gru" + std::to_string(l) + ".";
        const int in = l == 0 ? D : cfg.gru_hidden;
        const int H = cfg.gru_hidden;
        hidden.assign(static_cast<size_t>(H), 0.0);
        std::vector<std::vector<double>> outputs(static_cast<size_t>(W));
        for (int t = 0; t < W; ++t) {
            const std::vector<double>& x = h[static_cast<size_t>(t)];
            std::vector<double> z = matvec(x, get(p + "wz"), get(p + "bz"), in, H);
            std::vector<double> r = matvec(x, get(p + "wr"), get(p + "br"), in, H);
            const std::vector<double> hz = matvec(hidden, get(p + "uz"), Tensor{}, H, H);
            const std::vector<double> hr = matvec(hidden, get(p + "ur"), Tensor{}, H, H);
            for (int c = 0; c < H; ++c) {
                z[static_cast<size_t>(c)] =
                    1.0 / (1.0 + std::exp(-(z[static_cast<size_t>(c)] + hz[static_cast<size_t>(c)])));
                r[static_cast<size_t>(c)] =
                    1.0 / (1.0 + std::exp(-(r[static_cast<size_t>(c)] + hr[static_cast<size_t>(c)])));
            }
            std::vector<double> cand = matvec(x, get(p + "wc"), get(p + "bc"), in, H);
            const std::vector<double> hc = matvec(hidden, get(p + "uc"), Tensor{}, H, H);
            for (int c = 0; c < H; ++c) {
                cand[static_cast<size_t>(c)] = std::tanh(cand[static_cast<size_t>(c)] +
                                                         r[static_cast<size_t>(c)] * hc[static_cast<size_t>(c)]);
                hidden[static_cast<size_t>(c)] = z[static_cast<size_t>(c)] * hidden[static_cast<size_t>(c)] +
                                                 (1.0 - z[static_cast<size_t>(c)]) * cand[static_cast<size_t>(c)];
            }
            outputs[static_cast<size_t>(t)] = hidden;
        }
        h = outputs;
    }

    if (cfg.kind == ModelKind::slm) {
        double n2 = 0;
        for (double v : hidden) {
            n2 += v * v;
        }
        const double inv = 1.0 / std::sqrt(n2);
        for (double& v : hidden) {
            v *= inv;
        }
        return hidden;
    }
    std::vector<double> logits(static_cast<size_t>(cfg.n_classes), 0.0);
    const Tensor& wh = P.value("head.w");
    const Tensor& bh = P.value("head.b");
    for (int c = 0; c < cfg.n_classes; ++c) {
        double acc = bh.data[static_cast<size_t>(c)];
        for (int i = 0; i < cfg.gru_hidden; ++i) {
            acc += hidden[static_cast<size_t>(i)] * wh.data[static_cast<size_t>(i) * cfg.n_classes + c];
        }
        logits[static_cast<size_t>(c)] = acc;
    }
    return logits;
}

} // namespace

TEST_CASE("positional encoding matches the closed form at position zero") {
    const Tensor table = sinusoid_table(4, 8);
    CHECK(table.at(0, 0) == doctest::Approx(0.0)); // sin(0)
    CHECK(table.at(0, 1) == doctest::Approx(1.0)); // cos(0)
    CHECK(table.at(0, 6) == doctest::Approx(0.0));
    CHECK(table.at(0, 7) == doctest::Approx(1.0));
    CHECK(table.at(1, 0) == doctest::Approx(std::sin(1.0)).epsilon(1e-6));

    const Tensor enc = positional_encode(Tensor::zeros({4, 8}));
    for (size_t i = 0; i < enc.data.size(); ++i) {
        CHECK(enc.data[i] == doctest::Approx(table.data[i]));
    }
}

TEST_CASE("positional encoding is an additive fixed offset") {
    SeededRng rng(2);
    Tensor x = Tensor::zeros({5, 6});
    Tensor y = Tensor::zeros({5, 6});
    for (size_t i = 0; i < x.data.size(); ++i) {
        x.data[i] = static_cast<float>(rng.uniform(-1, 1));
        y.data[i] = static_cast<float>(rng.uniform(-1, 1));
    }
    Tensor xy = x;
    for (size_t i = 0; i < xy.data.size(); ++i) {
        xy.data[i] += y.data[i];
    }
    const Tensor ex = positional_encode(x);
    const Tensor exy = positional_encode(xy);
    for (size_t i = 0; i < x.data.size(); ++i) {
        CHECK(exy.data[i] - ex.data[i] == doctest::Approx(y.data[i]).epsilon(1e-5));
    }
}

TEST_CASE("windows beyond the positional maximum are rejected") {
    try {
        positional_encode(Tensor::zeros({601, 4}), 600);
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::window_too_long);
    }
}

TEST_CASE("config validation enforces head divisibility and slm embedding identity") {
    ModelConfig bad = tiny_slm();
    bad.d_model = 10;
    bad.n_heads = 4;
    CHECK_THROWS_AS(bad.validate(), Error);

    ModelConfig slm = tiny_slm();
    slm.embedding_size = 16; // != gru_hidden
    CHECK_THROWS_AS(slm.validate(), Error);

    ModelConfig clm = tiny_clm(1);
    CHECK_THROWS_AS(clm.validate(), Error);

    CHECK_NOTHROW(ModelConfig::slm_defaults().validate());
    CHECK_NOTHROW(ModelConfig::clm_defaults(49).validate());
}

TEST_CASE("single-head attention is permutation-equivariant without positions") {
    ModelConfig cfg = tiny_slm();
    cfg.n_heads = 1;
    cfg.window_size = 4;
    const SequenceModel m(cfg, 5);

    SeededRng rng(6);
    Tensor x = Tensor::zeros({4, cfg.d_model});
    for (float& v : x.data) {
        v = static_cast<float>(rng.uniform(-1, 1));
    }

    ad::Tape tape;
    BoundModel bound(tape, m, Mode::eval, 0);
    const Tensor out = tape.value(bound.transformer_layer(0, bound.input(x)));

    const int perm[4] = {2, 3, 0, 1};
    Tensor xp = Tensor::zeros({4, cfg.d_model});
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < cfg.d_model; ++c) {
            xp.at(r, c) = x.at(perm[r], c);
        }
    }
    ad::Tape tape2;
    BoundModel bound2(tape2, m, Mode::eval, 0);
    const Tensor outp = tape2.value(bound2.transformer_layer(0, bound2.input(xp)));
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < cfg.d_model; ++c) {
            CHECK(outp.at(r, c) == doctest::Approx(out.at(perm[r], c)).epsilon(1e-5));
        }
    }
}

TEST_CASE("zeroed attention and ffn pass standardized input through the residual path") {
    ModelConfig cfg = tiny_slm();
    cfg.window_size = 4;
    SequenceModel m(cfg, 7);
    for (const char* name : {"attn.wq", "attn.wk", "attn.wv", "attn.wo", "ff.w1", "ff.w2", "attn.wq_b", "attn.wk_b",
                             "attn.wv_b", "attn.wo_b", "ff.b1", "ff.b2"}) {
        Tensor& t = m.params().value("enc0." + std::string(name));
        std::fill(t.data.begin(), t.data.end(), 0.0f);
    }

    // rows standardized to mean 0 / var 1 are fixed points of layer_norm
    Tensor x = Tensor::zeros({4, cfg.d_model});
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < cfg.d_model; ++c) {
            x.at(r, c) = (c % 2 == 0 ? 1.0f : -1.0f);
        }
    }
    ad::Tape tape;
    BoundModel bound(tape, m, Mode::eval, 0);
    const Tensor out = tape.value(bound.transformer_layer(0, bound.input(x)));
    for (size_t i = 0; i < x.data.size(); ++i) {
        CHECK(out.data[i] == doctest::Approx(x.data[i]).epsilon(1e-4));
    }
}

TEST_CASE("eval-mode forward is deterministic and slm embeddings are unit length") {
    const SequenceModel m(tiny_slm(), 11);
    SeededRng rng(12);
    const Tensor window = random_window(rng, 6);
    const Tensor a = m.forward_eval(window);
    const Tensor b = m.forward_eval(window);
    CHECK(a.data == b.data);

    double n2 = 0;
    for (float v : a.data) {
        n2 += static_cast<double>(v) * v;
    }
    CHECK(std::sqrt(n2) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("forward matches an independent straight-line reimplementation") {
    SeededRng rng(13);
    {
        const SequenceModel slm(tiny_slm(), 17);
        const Tensor window = random_window(rng, 6);
        const Tensor got = slm.forward_eval(window);
        const std::vector<double> want = oracle_forward(slm, window);
        REQUIRE(got.data.size() == want.size());
        for (size_t i = 0; i < want.size(); ++i) {
            CHECK(std::abs(got.data[i] - want[i]) < 1e-5);
        }
    }
    {
        ModelConfig cfg = tiny_clm(5);
        cfg.n_transformer_layers = 2;
        cfg.gru_layers = 2;
        const SequenceModel clm(cfg, 19);
        const Tensor window = random_window(rng, 6);
        const Tensor got = clm.forward_eval(window);
        const std::vector<double> want = oracle_forward(clm, window);
        REQUIRE(got.data.size() == want.size());
        for (size_t i = 0; i < want.size(); ++i) {
            CHECK(std::abs(got.data[i] - want[i]) < 1e-5);
        }
    }
}

TEST_CASE("full-size tuned configurations satisfy the shape contract") {
    {
        const ModelConfig cfg = ModelConfig::slm_defaults();
        const SequenceModel m(cfg, 31);
        Tensor window = Tensor::zeros({cfg.window_size, kinematics::kFeatureCount});
        window.data[0] = 0.25f;
        const Tensor out = m.forward_eval(window);
        CHECK(static_cast<int>(out.numel()) == cfg.embedding_size);
    }
    {
        const ModelConfig cfg = ModelConfig::clm_defaults(17);
        const SequenceModel m(cfg, 37);
        Tensor window = Tensor::zeros({cfg.window_size, kinematics::kFeatureCount});
        window.data[1] = -0.5f;
        const Tensor out = m.forward_eval(window);
        CHECK(static_cast<int>(out.numel()) == 17);
    }
}

TEST_CASE("wrong window shapes are rejected") {
    const SequenceModel m(tiny_slm(), 41);
    ad::Tape tape;
    BoundModel bound(tape, m, Mode::eval, 0);
    CHECK_THROWS_AS(bound.forward(Tensor::zeros({5, 18})), Error);
    ad::Tape tape2;
    BoundModel bound2(tape2, m, Mode::eval, 0);
    CHECK_THROWS_AS(bound2.forward(Tensor::zeros({6, 17})), Error);
}

TEST_CASE("checkpoint round-trip reproduces outputs bit-exactly") {
    const auto path = std::filesystem::temp_directory_path() / "xrid_model_ckpt.bin";
    SequenceModel m(tiny_clm(4), 43);
    m.class_labels = {"a", "b", "c", "d"};
    SeededRng rng(44);
    const Tensor window = random_window(rng, 6);
    const Tensor before = m.forward_eval(window);

    m.save_checkpoint(path);
    const SequenceModel loaded = SequenceModel::load_checkpoint(path);
    CHECK(loaded.class_labels == m.class_labels);
    const Tensor after = loaded.forward_eval(window);
    CHECK(before.data == after.data);
}

TEST_CASE("checkpoint shape mismatches against the config are an error") {
    const auto path = std::filesystem::temp_directory_path() / "xrid_model_ckpt2.bin";
    const SequenceModel m(tiny_slm(), 47);
    m.save_checkpoint(path);

    ad::LoadedCheckpoint loaded = ad::load_checkpoint(path);
    loaded.extra["model_config"]["gru_hidden"] = 16;
    loaded.extra["model_config"]["embedding_size"] = 16;
    const auto path2 = std::filesystem::temp_directory_path() / "xrid_model_ckpt3.bin";
    ad::save_checkpoint(loaded.params, loaded.extra, path2);
    try {
        SequenceModel::load_checkpoint(path2);
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::shape_mismatch);
    }
}

TEST_CASE("frame dropout is trained-only and the salt changes masks") {
    ModelConfig cfg = tiny_slm();
    cfg.dropout_frames = 0.4;
    cfg.dropout_global = 0.2;
    const SequenceModel m(cfg, 53);
    SeededRng rng(54);
    const Tensor window = random_window(rng, 6);

    const Tensor eval_a = m.forward_eval(window);
    const Tensor eval_b = m.forward_eval(window);
    CHECK(eval_a.data == eval_b.data);

    ad::Tape t1;
    BoundModel b1(t1, m, Mode::train, 1001);
    ad::Tape t2;
    BoundModel b2(t2, m, Mode::train, 1002);
    const Tensor train_a = t1.value(b1.forward(window));
    const Tensor train_b = t2.value(b2.forward(window));
    CHECK(train_a.data != train_b.data);

    ad::Tape t3;
    BoundModel b3(t3, m, Mode::train, 1001);
    const Tensor train_c = t3.value(b3.forward(window));
    CHECK(train_a.data == train_c.data);
}

TEST_CASE("tiny-config end-to-end gradients pass the finite-difference check") {
    for (const bool classifier : {false, true}) {
        ModelConfig cfg = classifier ? tiny_clm(3) : tiny_slm();
        cfg.window_size = 4;
        cfg.frame_step = 2;
        const SequenceModel m(cfg, 59);
        SeededRng rng(60);
        const Tensor window = random_window(rng, 4);
        Tensor weights = Tensor::zeros({1, classifier ? cfg.n_classes : cfg.embedding_size});
        for (size_t i = 0; i < weights.data.size(); ++i) {
            weights.data[i] = 0.2f * static_cast<float>(i + 1);
        }

        std::map<std::string, Tensor> params;
        for (const std::string& name : m.params().names()) {
            params[name] = m.params().value(name);
        }
        const ad::GradCheckReport report = ad::grad_check(
            params,
            [&](ad::Tape& tape, const std::map<std::string, ad::Var>& vars) {
                BoundModel bound(tape, m, Mode::eval, 0, vars);
                const ad::Var out = bound.forward(window);
                return tape.sum(tape.mul(out, tape.leaf(weights)));
            },
            2e-4); // small step keeps relu units on one side of their kinks
        INFO("kind=" << (classifier ? "clm" : "slm") << " max rel err " << report.max_rel_err);
        CHECK(report.max_rel_err < 1e-3);
    }
}
