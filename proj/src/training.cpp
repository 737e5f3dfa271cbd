#include "xrid/training.hpp"

#include "xrid/error.hpp"
#include "xrid/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

namespace xrid::training {

using ad::Tape;
using ad::Var;
using kinematics::FeatureWindow;
using model::BoundModel;
using model::Mode;
using model::SequenceModel;

Var classification_loss(Tape& tape, Var logits, int true_index) {
    const std::vector<double> lv = tape.dvec(logits);
    const int n = static_cast<int>(lv.size());
    require(true_index >= 0 && true_index < n, Errc::index_out_of_range,
            "class index " + std::to_string(true_index) + " out of " + std::to_string(n));

    double mx = lv[0];
    for (double v : lv) {
        mx = std::max(mx, v);
    }
    double denom = 0.0;
    for (double v : lv) {
        denom += std::exp(v - mx);
    }
    const double loss = std::log(denom) + mx - lv[static_cast<size_t>(true_index)];

    return tape.custom64({logits}, {1}, {loss}, [true_index](Tape& t, int id) {
        const float g = t.grad(Var{id}).data[0];
        const Tensor& lv2 = t.value(Var{t.parents(Var{id})[0]});
        Tensor& gl = t.grad_mut(Var{t.parents(Var{id})[0]});
        double mx2 = lv2.data[0];
        for (float v : lv2.data) {
            mx2 = std::max(mx2, static_cast<double>(v));
        }
        double denom2 = 0.0;
        for (float v : lv2.data) {
            denom2 += std::exp(static_cast<double>(v) - mx2);
        }
        for (size_t i = 0; i < lv2.data.size(); ++i) {
            const double softmax_i = std::exp(static_cast<double>(lv2.data[i]) - mx2) / denom2;
            const double one_hot = static_cast<int>(i) == true_index ? 1.0 : 0.0;
            gl.data[i] += static_cast<float>(g * (softmax_i - one_hot));
        }
    });
}

Var similarity_loss(Tape& tape, Var embeddings, const std::vector<int>& labels, double margin) {
    const Tensor& ev = tape.value(embeddings);
    require(ev.rank() == 2, Errc::shape_mismatch, "embeddings must be B x E");
    const int b = ev.shape[0];
    require(static_cast<int>(labels.size()) == b, Errc::shape_mismatch, "one label per embedding row");
    require(std::set<int>(labels.begin(), labels.end()).size() >= 2, Errc::degenerate_batch,
            "triplet loss needs at least two distinct labels");

    // pairwise cosine similarities; rows are unit so this is the cosine matrix
    const Var sims = tape.matmul(embeddings, embeddings, false, true);
    const std::vector<double> sv = tape.dvec(sims);

    // d(a,x) = 1 - sims(a,x); hinge = d(a,p) - d(a,n) + margin = sims(a,n) - sims(a,p) + margin
    int64_t n_valid = 0;
    double total = 0.0;
    for (int a = 0; a < b; ++a) {
        for (int p = 0; p < b; ++p) {
            if (p == a || labels[static_cast<size_t>(p)] != labels[static_cast<size_t>(a)]) {
                continue;
            }
            for (int n = 0; n < b; ++n) {
                if (labels[static_cast<size_t>(n)] == labels[static_cast<size_t>(a)]) {
                    continue;
                }
                ++n_valid;
                const double hinge = sv[static_cast<size_t>(a) * b + n] - sv[static_cast<size_t>(a) * b + p] + margin;
                if (hinge > 0.0) {
                    total += hinge;
                }
            }
        }
    }
    require(n_valid > 0, Errc::degenerate_batch, "no valid triplets in batch");
    const double loss = total / static_cast<double>(n_valid);

    const Var fused =
        tape.custom64({sims}, {1}, {loss},
                    [labels, margin, b, n_valid](Tape& t, int id) {
                        const float g = t.grad(Var{id}).data[0];
                        const Tensor& sv2 = t.value(Var{t.parents(Var{id})[0]});
                        Tensor& gs = t.grad_mut(Var{t.parents(Var{id})[0]});
                        const float share = static_cast<float>(g / static_cast<double>(n_valid));
                        for (int a = 0; a < b; ++a) {
                            for (int p = 0; p < b; ++p) {
                                if (p == a || labels[static_cast<size_t>(p)] != labels[static_cast<size_t>(a)]) {
                                    continue;
                                }
                                for (int n = 0; n < b; ++n) {
                                    if (labels[static_cast<size_t>(n)] == labels[static_cast<size_t>(a)]) {
                                        continue;
                                    }
                                    const double hinge = static_cast<double>(sv2.at(a, n)) -
                                                         static_cast<double>(sv2.at(a, p)) + margin;
                                    if (hinge > 0.0) {
                                        gs.at(a, n) += share;
                                        gs.at(a, p) -= share;
                                    }
                                }
                            }
                        }
                    });
    return fused;
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

double loo_nn_accuracy(const std::vector<std::vector<float>>& embeddings, const std::vector<int>& labels) {
    require(embeddings.size() == labels.size(), Errc::shape_mismatch, "one label per embedding");
    if (embeddings.size() < 2) {
        return 0.0;
    }
    size_t correct = 0;
    for (size_t q = 0; q < embeddings.size(); ++q) {
        double best = -2.0;
        size_t best_i = q;
        for (size_t r = 0; r < embeddings.size(); ++r) {
            if (r == q) {
                continue;
            }
            const double sim = ad::cosine_of(embeddings[q], embeddings[r]);
            if (sim > best) {
                best = sim;
                best_i = r;
            }
        }
        if (labels[best_i] == labels[q]) {
            ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(embeddings.size());
}

double classifier_accuracy(const SequenceModel& model, const std::vector<FeatureWindow>& windows) {
    if (windows.empty()) {
        return 0.0;
    }
    std::map<std::string, int> class_of;
    for (size_t i = 0; i < model.class_labels.size(); ++i) {
        class_of[model.class_labels[i]] = static_cast<int>(i);
    }
    size_t correct = 0;
    for (const FeatureWindow& w : windows) {
        const Tensor logits = model.forward_eval(w.frames);
        const int pred = static_cast<int>(std::max_element(logits.data.begin(), logits.data.end()) -
                                          logits.data.begin());
        auto it = class_of.find(w.user);
        if (it != class_of.end() && it->second == pred) {
            ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(windows.size());
}

namespace {

struct BatchStat {
    double loss = 0.0;
    double accuracy = 0.0;
};

std::map<std::string, int> label_indexing(const std::vector<FeatureWindow>& windows) {
    std::set<std::string> users;
    for (const FeatureWindow& w : windows) {
        users.insert(w.user);
    }
    std::map<std::string, int> index;
    int next = 0;
    for (const std::string& u : users) {
        index[u] = next++;
    }
    return index;
}

void append_log(const std::filesystem::path& path, const LossRecord& rec) {
    if (path.empty()) {
        return;
    }
    std::ofstream out(path, std::ios::app);
    require(out.is_open(), Errc::io_failure, "cannot append to " + path.string());
    nlohmann::json j{{"epoch", rec.epoch}, {"split", rec.split}, {"loss", rec.loss}, {"accuracy", rec.accuracy}};
    out << j.dump() << '\n';
}

// Snapshot / restore of parameter values for best-epoch tracking.
std::map<std::string, Tensor> snapshot(const ad::ParamSet& params) {
    std::map<std::string, Tensor> copy;
    for (const std::string& name : params.names()) {
        copy.emplace(name, params.value(name));
    }
    return copy;
}

void restore(ad::ParamSet& params, const std::map<std::string, Tensor>& snap) {
    for (const auto& [name, tensor] : snap) {
        params.value(name) = tensor;
    }
}

} // namespace

TrainResult train(SequenceModel& model, const std::vector<FeatureWindow>& train_windows,
                  const std::vector<FeatureWindow>& val_windows, const TrainConfig& config) {
    require(!train_windows.empty(), Errc::empty_training_set, "no training windows");
    require(config.patience >= 1 && config.epochs >= 1, Errc::invalid_argument, "patience and epochs must be >= 1");

    const bool is_slm = model.config().kind == model::ModelKind::slm;
    const double lr = config.learning_rate >= 0.0 ? config.learning_rate : model.config().learning_rate;

    const std::map<std::string, int> user_index = label_indexing(train_windows);
    if (!is_slm) {
        if (model.class_labels.empty()) {
            for (const auto& [user, idx] : user_index) {
                (void)idx;
                model.class_labels.push_back(user);
            }
        }
        require(static_cast<int>(model.class_labels.size()) == model.config().n_classes, Errc::shape_mismatch,
                "model has " + std::to_string(model.config().n_classes) + " classes but the training set has " +
                    std::to_string(model.class_labels.size()) + " users");
    }
    std::map<std::string, int> class_of;
    if (!is_slm) {
        for (size_t i = 0; i < model.class_labels.size(); ++i) {
            class_of[model.class_labels[i]] = static_cast<int>(i);
        }
    }

    // per-user window index lists for P x K sampling
    std::map<int, std::vector<int>> by_user;
    for (size_t i = 0; i < train_windows.size(); ++i) {
        by_user[user_index.at(train_windows[i].user)].push_back(static_cast<int>(i));
    }
    if (is_slm) {
        require(by_user.size() >= 2, Errc::degenerate_batch, "similarity training needs at least 2 users");
        require(config.p_users >= 2 && config.k_windows >= 2, Errc::invalid_argument,
                "P and K must both be at least 2");
    }

    // validation embedding labels, fixed across epochs
    std::vector<int> val_labels;
    if (is_slm) {
        std::map<std::string, int> val_index = label_indexing(val_windows);
        for (const FeatureWindow& w : val_windows) {
            val_labels.push_back(val_index.at(w.user));
        }
    }

    auto validate = [&](double fallback_accuracy) -> double {
        if (val_windows.empty()) {
            return fallback_accuracy;
        }
        if (is_slm) {
            std::vector<std::vector<float>> embs;
            embs.reserve(val_windows.size());
            for (const FeatureWindow& w : val_windows) {
                embs.push_back(model.embed(w.frames));
            }
            return loo_nn_accuracy(embs, val_labels);
        }
        return classifier_accuracy(model, val_windows);
    };

    TrainResult result;
    std::map<std::string, Tensor> best_params = snapshot(model.params());
    double best_val = -1.0;
    int bad_epochs = 0;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        SeededRng rng(mix64(config.seed, static_cast<uint64_t>(epoch), 0x7261ull));
        double epoch_loss = 0.0;
        double epoch_acc = 0.0;
        int n_batches = 0;
        uint64_t step_salt_base = mix64(config.seed, static_cast<uint64_t>(epoch));

        auto run_batch = [&](const std::vector<int>& batch, const std::vector<int>& labels) {
            Tape tape;
            BoundModel bound(tape, model, Mode::train, mix64(step_salt_base, static_cast<uint64_t>(n_batches)));
            std::vector<Var> outputs;
            outputs.reserve(batch.size());
            for (int idx : batch) {
                outputs.push_back(bound.forward(train_windows[static_cast<size_t>(idx)].frames));
            }

            BatchStat stat;
            Var loss{};
            if (is_slm) {
                const Var embs = tape.concat_rows(outputs);
                loss = similarity_loss(tape, embs, labels, config.margin);
                // batch accuracy: nearest other row shares the label
                std::vector<std::vector<float>> rows;
                const Tensor& ev = tape.value(embs);
                for (int r = 0; r < ev.shape[0]; ++r) {
                    rows.emplace_back(ev.data.begin() + static_cast<long>(r) * ev.shape[1],
                                      ev.data.begin() + static_cast<long>(r + 1) * ev.shape[1]);
                }
                stat.accuracy = loo_nn_accuracy(rows, labels);
            } else {
                std::vector<Var> losses;
                int correct = 0;
                for (size_t i = 0; i < outputs.size(); ++i) {
                    losses.push_back(classification_loss(tape, outputs[i], labels[i]));
                    const Tensor& lv = tape.value(outputs[i]);
                    const int pred = static_cast<int>(std::max_element(lv.data.begin(), lv.data.end()) -
                                                      lv.data.begin());
                    correct += pred == labels[i] ? 1 : 0;
                }
                std::vector<Var> stacked;
                for (Var l : losses) {
                    stacked.push_back(l);
                }
                loss = tape.mean(tape.concat_rows(stacked));
                stat.accuracy = static_cast<double>(correct) / static_cast<double>(outputs.size());
            }
            stat.loss = static_cast<double>(tape.value(loss).data[0]);
            tape.backward(loss);
            model.params().adam_step(bound.param_grads(), lr);
            epoch_loss += stat.loss;
            epoch_acc += stat.accuracy;
            ++n_batches;
        };

        if (is_slm) {
            // P x K sampler: per-epoch shuffled user order and per-user window
            // cycles; every user appears once per round
            std::vector<int> users;
            for (const auto& [u, wins] : by_user) {
                (void)wins;
                users.push_back(u);
            }
            rng.shuffle(std::span<int>(users));
            std::map<int, std::vector<int>> cycles;
            std::map<int, size_t> cursor;
            for (const auto& [u, wins] : by_user) {
                cycles[u] = wins;
                rng.shuffle(std::span<int>(cycles[u]));
                cursor[u] = 0;
            }
            const int p_eff = std::min<int>(config.p_users, static_cast<int>(users.size()));
            const int batches_per_epoch = std::max<int>(
                1, static_cast<int>(train_windows.size()) / std::max(1, p_eff * config.k_windows));
            size_t user_cursor = 0;
            for (int bi = 0; bi < batches_per_epoch; ++bi) {
                std::vector<int> batch;
                std::vector<int> labels;
                for (int pi = 0; pi < p_eff; ++pi) {
                    const int u = users[user_cursor % users.size()];
                    ++user_cursor;
                    std::vector<int>& cyc = cycles[u];
                    for (int ki = 0; ki < config.k_windows; ++ki) {
                        if (cursor[u] >= cyc.size()) {
                            rng.shuffle(std::span<int>(cyc));
                            cursor[u] = 0;
                        }
                        batch.push_back(cyc[cursor[u]++]);
                        labels.push_back(u);
                    }
                }
                run_batch(batch, labels);
            }
        } else {
            std::vector<int> order(train_windows.size());
            std::iota(order.begin(), order.end(), 0);
            rng.shuffle(std::span<int>(order));
            for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.batch_size)) {
                const size_t end = std::min(order.size(), start + static_cast<size_t>(config.batch_size));
                std::vector<int> batch(order.begin() + static_cast<long>(start),
                                       order.begin() + static_cast<long>(end));
                std::vector<int> labels;
                for (int idx : batch) {
                    labels.push_back(class_of.at(train_windows[static_cast<size_t>(idx)].user));
                }
                run_batch(batch, labels);
            }
        }

        const double train_loss = epoch_loss / std::max(1, n_batches);
        const double train_acc = epoch_acc / std::max(1, n_batches);
        require(std::isfinite(train_loss), Errc::non_finite_value, "training loss diverged");

        LossRecord train_rec{epoch, "train", train_loss, train_acc};
        result.history.push_back(train_rec);
        append_log(config.log_path, train_rec);

        const double val_acc = validate(train_acc);
        LossRecord val_rec{epoch, "val", 0.0, val_acc};
        result.history.push_back(val_rec);
        append_log(config.log_path, val_rec);
        result.epochs_run = epoch;

        if (val_acc > best_val) {
            best_val = val_acc;
            result.best_epoch = epoch;
            best_params = snapshot(model.params());
            bad_epochs = 0;
        } else {
            ++bad_epochs;
            if (bad_epochs >= config.patience) {
                break;
            }
        }
    }

    restore(model.params(), best_params);
    result.best_val_accuracy = best_val;
    if (!config.checkpoint_path.empty()) {
        model.save_checkpoint(config.checkpoint_path);
    }
    return result;
}

} // namespace xrid::training
