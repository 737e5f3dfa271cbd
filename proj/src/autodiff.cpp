#include "xrid/autodiff.hpp"

#include "xrid/error.hpp"
#include "xrid/rng.hpp"

#include <algorithm>
#include <cmath>

namespace xrid::ad {

namespace {

void check_finite(const Tensor& t, const char* op) {
    require(t.all_finite(), Errc::non_finite_value, std::string(op) + " produced a non-finite value");
}

} // namespace

// ---------------------------------------------------------------------------
// Tape core
//
// Kernels compute on doubles end to end. Stored node values are float32 (the
// production dtype); a tape opened in high-precision mode additionally keeps
// the unrounded doubles and feeds them to downstream kernels, which is what
// makes finite-difference checks meaningful at tight tolerances.
// ---------------------------------------------------------------------------

const Tape::Node& Tape::node(int id) const {
    require(id >= 0 && id < static_cast<int>(nodes_.size()), Errc::index_out_of_range, "bad tape node id");
    return nodes_[static_cast<size_t>(id)];
}

Tape::Node& Tape::node_mut(int id) {
    require(id >= 0 && id < static_cast<int>(nodes_.size()), Errc::index_out_of_range, "bad tape node id");
    return nodes_[static_cast<size_t>(id)];
}

Var Tape::push_from64(std::vector<int> shape, std::vector<double> values, std::vector<int> parents,
                      BackwardFn backward, const char* op) {
    Node n;
    n.value.shape = std::move(shape);
    n.value.data.resize(values.size());
    for (size_t i = 0; i < values.size(); ++i) {
        n.value.data[i] = static_cast<float>(values[i]);
    }
    check_finite(n.value, op);
    if (high_precision_) {
        n.value64 = std::move(values);
    }
    n.parents = std::move(parents);
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

std::vector<double> Tape::dvec(Var v) const {
    const Node& n = node(v.id);
    if (!n.value64.empty()) {
        return n.value64;
    }
    std::vector<double> out(n.value.data.size());
    for (size_t i = 0; i < out.size(); ++i) {
        out[i] = n.value.data[i];
    }
    return out;
}

void Tape::clear() { nodes_.clear(); }

Var Tape::leaf(Tensor value) {
    check_finite(value, "leaf");
    Node n;
    if (high_precision_) {
        n.value64.resize(value.data.size());
        for (size_t i = 0; i < value.data.size(); ++i) {
            n.value64[i] = value.data[i];
        }
    }
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::custom64(std::vector<Var> inputs, std::vector<int> shape, std::vector<double> values,
                   BackwardFn backward) {
    std::vector<int> parents;
    parents.reserve(inputs.size());
    for (Var v : inputs) {
        parents.push_back(v.id);
    }
    return push_from64(std::move(shape), std::move(values), std::move(parents), std::move(backward), "custom64");
}

Var Tape::custom(std::vector<Var> inputs, Tensor value, BackwardFn backward) {
    check_finite(value, "custom");
    std::vector<int> parents;
    parents.reserve(inputs.size());
    for (Var v : inputs) {
        parents.push_back(v.id);
    }
    Node n;
    if (high_precision_) {
        n.value64.resize(value.data.size());
        for (size_t i = 0; i < value.data.size(); ++i) {
            n.value64[i] = value.data[i];
        }
    }
    n.value = std::move(value);
    n.parents = std::move(parents);
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::backward(Var loss) {
    require(loss.valid() && loss.id < static_cast<int>(nodes_.size()), Errc::index_out_of_range, "bad loss node");
    require(node(loss.id).value.numel() == 1, Errc::non_scalar_loss, "loss must be a scalar");

    for (size_t i = 0; i <= static_cast<size_t>(loss.id); ++i) {
        nodes_[i].grad = Tensor::zeros(nodes_[i].value.shape);
    }
    nodes_[static_cast<size_t>(loss.id)].grad.data[0] = 1.0f;

    for (int id = loss.id; id >= 0; --id) {
        if (nodes_[static_cast<size_t>(id)].backward) {
            nodes_[static_cast<size_t>(id)].backward(*this, id);
        }
    }
}

// ---------------------------------------------------------------------------
// Value-only matmul (shared with inference paths)
// ---------------------------------------------------------------------------

namespace {

struct MatView {
    const double* data;
    int rows;
    int cols;
};

void matmul_into(const MatView& a, const MatView& b, std::vector<double>& out) {
    out.assign(static_cast<size_t>(a.rows) * b.cols, 0.0);
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.data + static_cast<size_t>(i) * a.cols;
        double* crow = out.data() + static_cast<size_t>(i) * b.cols;
        for (int k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) {
                continue;
            }
            const double* brow = b.data + static_cast<size_t>(k) * b.cols;
            for (int j = 0; j < b.cols; ++j) {
                crow[j] += aik * brow[j];
            }
        }
    }
}

std::vector<double> transpose64(const std::vector<double>& m, int rows, int cols) {
    std::vector<double> out(m.size());
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            out[static_cast<size_t>(c) * rows + r] = m[static_cast<size_t>(r) * cols + c];
        }
    }
    return out;
}

struct MatOperand {
    std::vector<double> storage;
    int rows = 0;
    int cols = 0;
    MatView view() const { return {storage.data(), rows, cols}; }
};

MatOperand matrix_operand(const std::vector<double>& data, const std::vector<int>& shape, bool transpose,
                          const char* op) {
    require(shape.size() == 1 || shape.size() == 2, Errc::shape_mismatch, std::string(op) + ": rank must be 1 or 2");
    const int rows = shape.size() == 2 ? shape[0] : 1;
    const int cols = shape.size() == 2 ? shape[1] : shape[0];
    MatOperand out;
    if (transpose) {
        out.storage = transpose64(data, rows, cols);
        out.rows = cols;
        out.cols = rows;
    } else {
        out.storage = data;
        out.rows = rows;
        out.cols = cols;
    }
    return out;
}

std::vector<double> to64(const Tensor& t) {
    std::vector<double> out(t.data.size());
    for (size_t i = 0; i < out.size(); ++i) {
        out[i] = t.data[i];
    }
    return out;
}

} // namespace

Tensor matmul_values(const Tensor& a_in, bool trans_a, const Tensor& b_in, bool trans_b) {
    const MatOperand a = matrix_operand(to64(a_in), a_in.shape, trans_a, "matmul");
    const MatOperand b = matrix_operand(to64(b_in), b_in.shape, trans_b, "matmul");
    require(a.cols == b.rows, Errc::shape_mismatch,
            "matmul " + std::to_string(a.rows) + "x" + std::to_string(a.cols) + " * " + std::to_string(b.rows) +
                "x" + std::to_string(b.cols));
    std::vector<double> out64;
    matmul_into(a.view(), b.view(), out64);
    Tensor out = Tensor::zeros({a.rows, b.cols});
    for (size_t i = 0; i < out64.size(); ++i) {
        out.data[i] = static_cast<float>(out64[i]);
    }
    return out;
}

double cosine_of(std::span<const float> a, std::span<const float> b) {
    require(a.size() == b.size() && !a.empty(), Errc::shape_mismatch, "cosine needs equal-length vectors");
    double ab = 0.0;
    double aa = 0.0;
    double bb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        ab += static_cast<double>(a[i]) * b[i];
        aa += static_cast<double>(a[i]) * a[i];
        bb += static_cast<double>(b[i]) * b[i];
    }
    require(aa > 1e-24 && bb > 1e-24, Errc::invalid_argument, "cosine of near-zero vector");
    return ab / (std::sqrt(aa) * std::sqrt(bb));
}

// ---------------------------------------------------------------------------
// Ops
// ---------------------------------------------------------------------------

Var Tape::matmul(Var a, Var b, bool trans_a, bool trans_b) {
    const MatOperand ma = matrix_operand(dvec(a), value(a).shape, trans_a, "matmul");
    const MatOperand mb = matrix_operand(dvec(b), value(b).shape, trans_b, "matmul");
    require(ma.cols == mb.rows, Errc::shape_mismatch,
            "matmul " + shape_str(value(a).shape) + (trans_a ? "^T" : "") + " * " + shape_str(value(b).shape) +
                (trans_b ? "^T" : ""));
    std::vector<double> out64;
    matmul_into(ma.view(), mb.view(), out64);

    return push_from64({ma.rows, mb.cols}, std::move(out64), {a.id, b.id},
                       [trans_a, trans_b](Tape& t, int id) {
                           const Node& n = t.nodes_[static_cast<size_t>(id)];
                           const int pa = n.parents[0];
                           const int pb = n.parents[1];
                           const Tensor& g = n.grad;
                           const Tensor& av = t.nodes_[static_cast<size_t>(pa)].value;
                           const Tensor& bv = t.nodes_[static_cast<size_t>(pb)].value;

                           const Tensor da = trans_a ? matmul_values(bv, trans_b, g, true)
                                                     : matmul_values(g, false, bv, !trans_b);
                           const Tensor db = trans_b ? matmul_values(g, true, av, trans_a)
                                                     : matmul_values(av, !trans_a, g, false);
                           Tensor& ga = t.nodes_[static_cast<size_t>(pa)].grad;
                           Tensor& gb = t.nodes_[static_cast<size_t>(pb)].grad;
                           for (size_t i = 0; i < ga.data.size(); ++i) {
                               ga.data[i] += da.data[i];
                           }
                           for (size_t i = 0; i < gb.data.size(); ++i) {
                               gb.data[i] += db.data[i];
                           }
                       },
                       "matmul");
}

namespace {

template <typename Fwd, typename BwdPair>
Var binary_elementwise(Tape& t, Var a, Var b, const char* name, Fwd fwd, BwdPair bwd_pair) {
    check_same_shape(t.value(a), t.value(b), name);
    const std::vector<double> av = t.dvec(a);
    const std::vector<double> bv = t.dvec(b);
    std::vector<double> out(av.size());
    for (size_t i = 0; i < out.size(); ++i) {
        out[i] = fwd(av[i], bv[i]);
    }
    return t.custom64({a, b}, std::vector<int>(t.value(a).shape), std::move(out),
                         [bwd_pair](Tape& tt, int id) {
                             const Tensor& g = tt.grad(Var{id});
                             const auto& ps = tt.parents(Var{id});
                             const Tensor& av2 = tt.value(Var{ps[0]});
                             const Tensor& bv2 = tt.value(Var{ps[1]});
                             Tensor& ga = tt.grad_mut(Var{ps[0]});
                             Tensor& gb = tt.grad_mut(Var{ps[1]});
                             for (size_t i = 0; i < g.data.size(); ++i) {
                                 const auto [da, db] = bwd_pair(static_cast<double>(av2.data[i]),
                                                                static_cast<double>(bv2.data[i]));
                                 ga.data[i] += static_cast<float>(da * g.data[i]);
                                 gb.data[i] += static_cast<float>(db * g.data[i]);
                             }
                         });
}

template <typename Fwd, typename Deriv>
Var unary_elementwise(Tape& t, Var x, [[maybe_unused]] const char* name, Fwd fwd, Deriv deriv) {
    const std::vector<double> xv = t.dvec(x);
    std::vector<double> out(xv.size());
    for (size_t i = 0; i < out.size(); ++i) {
        out[i] = fwd(xv[i]);
    }
    return t.custom64({x}, std::vector<int>(t.value(x).shape), std::move(out),
                         [deriv](Tape& tt, int id) {
                             const Tensor& g = tt.grad(Var{id});
                             const Tensor& y = tt.value(Var{id});
                             const auto& ps = tt.parents(Var{id});
                             const Tensor& xin = tt.value(Var{ps[0]});
                             Tensor& gx = tt.grad_mut(Var{ps[0]});
                             for (size_t i = 0; i < g.data.size(); ++i) {
                                 gx.data[i] += static_cast<float>(deriv(static_cast<double>(xin.data[i]),
                                                                        static_cast<double>(y.data[i])) *
                                                                  g.data[i]);
                             }
                         });
}

} // namespace

Var Tape::add(Var a, Var b) {
    return binary_elementwise(*this, a, b, "add", [](double x, double y) { return x + y; },
                              [](double, double) { return std::pair<double, double>{1.0, 1.0}; });
}

Var Tape::sub(Var a, Var b) {
    return binary_elementwise(*this, a, b, "sub", [](double x, double y) { return x - y; },
                              [](double, double) { return std::pair<double, double>{1.0, -1.0}; });
}

Var Tape::mul(Var a, Var b) {
    return binary_elementwise(*this, a, b, "mul", [](double x, double y) { return x * y; },
                              [](double x, double y) { return std::pair<double, double>{y, x}; });
}

Var Tape::add_bias(Var x, Var bias) {
    const Tensor& xv = value(x);
    const Tensor& bv = value(bias);
    require(xv.rank() == 2 && (bv.rank() == 1 || (bv.rank() == 2 && bv.shape[0] == 1)), Errc::shape_mismatch,
            "add_bias expects (N x D) + (D)");
    require(xv.shape[1] == bv.cols(), Errc::shape_mismatch, "bias width mismatch");
    const std::vector<double> x64 = dvec(x);
    const std::vector<double> b64 = dvec(bias);
    const int n = xv.shape[0];
    const int d = xv.shape[1];
    std::vector<double> out(x64.size());
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < d; ++c) {
            out[static_cast<size_t>(r) * d + c] = x64[static_cast<size_t>(r) * d + c] + b64[static_cast<size_t>(c)];
        }
    }
    return push_from64({n, d}, std::move(out), {x.id, bias.id},
                       [n, d](Tape& t, int id) {
                           const Tensor& g = t.grad(Var{id});
                           const auto& ps = t.parents(Var{id});
                           Tensor& gx = t.grad_mut(Var{ps[0]});
                           Tensor& gb = t.grad_mut(Var{ps[1]});
                           for (size_t i = 0; i < g.data.size(); ++i) {
                               gx.data[i] += g.data[i];
                           }
                           for (int r = 0; r < n; ++r) {
                               for (int c = 0; c < d; ++c) {
                                   gb.data[static_cast<size_t>(c)] += g.data[static_cast<size_t>(r) * d + c];
                               }
                           }
                       },
                       "add_bias");
}

Var Tape::affine(Var x, double scale, double shift) {
    return unary_elementwise(*this, x, "affine", [scale, shift](double v) { return scale * v + shift; },
                             [scale](double, double) { return scale; });
}

Var Tape::tanh(Var x) {
    return unary_elementwise(*this, x, "tanh", [](double v) { return std::tanh(v); },
                             [](double, double y) { return 1.0 - y * y; });
}

Var Tape::sigmoid(Var x) {
    return unary_elementwise(*this, x, "sigmoid", [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
                             [](double, double y) { return y * (1.0 - y); });
}

Var Tape::relu(Var x) {
    return unary_elementwise(*this, x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
                             [](double xin, double) { return xin > 0.0 ? 1.0 : 0.0; });
}

namespace {

void check_last_axis(const Tensor& t, int axis, const char* op) {
    const bool ok = axis == -1 || axis == t.rank() - 1;
    require(ok, Errc::invalid_argument, std::string(op) + " supports the last axis only");
}

} // namespace

Var Tape::softmax(Var x, int axis) {
    const Tensor& xv = value(x);
    check_last_axis(xv, axis, "softmax");
    const int d = xv.cols();
    const int n = static_cast<int>(xv.numel()) / d;
    const std::vector<double> x64 = dvec(x);
    std::vector<double> out(x64.size());
    for (int r = 0; r < n; ++r) {
        const size_t off = static_cast<size_t>(r) * d;
        double mx = x64[off];
        for (int c = 1; c < d; ++c) {
            mx = std::max(mx, x64[off + c]);
        }
        double denom = 0.0;
        for (int c = 0; c < d; ++c) {
            out[off + c] = std::exp(x64[off + c] - mx);
            denom += out[off + c];
        }
        for (int c = 0; c < d; ++c) {
            out[off + c] /= denom;
        }
    }
    return push_from64(std::vector<int>(xv.shape), std::move(out), {x.id},
                       [n, d](Tape& t, int id) {
                           const Tensor& g = t.grad(Var{id});
                           const Tensor& y = t.value(Var{id});
                           Tensor& gx = t.grad_mut(Var{t.parents(Var{id})[0]});
                           for (int r = 0; r < n; ++r) {
                               const size_t off = static_cast<size_t>(r) * d;
                               double gy = 0.0;
                               for (int c = 0; c < d; ++c) {
                                   gy += static_cast<double>(g.data[off + c]) * y.data[off + c];
                               }
                               for (int c = 0; c < d; ++c) {
                                   gx.data[off + c] +=
                                       static_cast<float>(y.data[off + c] * (g.data[off + c] - gy));
                               }
                           }
                       },
                       "softmax");
}

Var Tape::layer_norm(Var x, Var gamma, Var beta, int axis, double eps) {
    const Tensor& xv = value(x);
    check_last_axis(xv, axis, "layer_norm");
    const int d = xv.cols();
    const int n = static_cast<int>(xv.numel()) / d;
    require(value(gamma).numel() == d && value(beta).numel() == d, Errc::shape_mismatch,
            "layer_norm affine parameters must match the normalized axis");

    const std::vector<double> x64 = dvec(x);
    const std::vector<double> g64 = dvec(gamma);
    const std::vector<double> b64 = dvec(beta);
    std::vector<double> out(x64.size());
    for (int r = 0; r < n; ++r) {
        const size_t off = static_cast<size_t>(r) * d;
        double mean = 0.0;
        for (int c = 0; c < d; ++c) {
            mean += x64[off + c];
        }
        mean /= d;
        double var = 0.0;
        for (int c = 0; c < d; ++c) {
            var += (x64[off + c] - mean) * (x64[off + c] - mean);
        }
        var /= d;
        const double inv_std = 1.0 / std::sqrt(var + eps);
        for (int c = 0; c < d; ++c) {
            out[off + c] = (x64[off + c] - mean) * inv_std * g64[static_cast<size_t>(c)] + b64[static_cast<size_t>(c)];
        }
    }
    return push_from64(std::vector<int>(xv.shape), std::move(out), {x.id, gamma.id, beta.id},
                       [n, d, eps](Tape& t, int id) {
                           const Tensor& g = t.grad(Var{id});
                           const auto& ps = t.parents(Var{id});
                           const Tensor& xin = t.value(Var{ps[0]});
                           const Tensor& gv = t.value(Var{ps[1]});
                           Tensor& gx = t.grad_mut(Var{ps[0]});
                           Tensor& ggamma = t.grad_mut(Var{ps[1]});
                           Tensor& gbeta = t.grad_mut(Var{ps[2]});
                           for (int r = 0; r < n; ++r) {
                               const size_t off = static_cast<size_t>(r) * d;
                               double mean = 0.0;
                               for (int c = 0; c < d; ++c) {
                                   mean += xin.data[off + c];
                               }
                               mean /= d;
                               double var = 0.0;
                               for (int c = 0; c < d; ++c) {
                                   const double dv = xin.data[off + c] - mean;
                                   var += dv * dv;
                               }
                               var /= d;
                               const double inv_std = 1.0 / std::sqrt(var + eps);

                               double sum_dxhat = 0.0;
                               double sum_dxhat_xhat = 0.0;
                               for (int c = 0; c < d; ++c) {
                                   const double xhat = (xin.data[off + c] - mean) * inv_std;
                                   const double dy = g.data[off + c];
                                   const double dxhat = dy * gv.data[static_cast<size_t>(c)];
                                   sum_dxhat += dxhat;
                                   sum_dxhat_xhat += dxhat * xhat;
                                   ggamma.data[static_cast<size_t>(c)] += static_cast<float>(dy * xhat);
                                   gbeta.data[static_cast<size_t>(c)] += static_cast<float>(dy);
                               }
                               for (int c = 0; c < d; ++c) {
                                   const double xhat = (xin.data[off + c] - mean) * inv_std;
                                   const double dxhat =
                                       static_cast<double>(g.data[off + c]) * gv.data[static_cast<size_t>(c)];
                                   gx.data[off + c] += static_cast<float>(
                                       inv_std * (dxhat - sum_dxhat / d - xhat * sum_dxhat_xhat / d));
                               }
                           }
                       },
                       "layer_norm");
}

Var Tape::concat_rows(std::span<const Var> xs) {
    require(!xs.empty(), Errc::invalid_argument, "concat of nothing");
    const int cols = value(xs[0]).cols();
    int rows = 0;
    std::vector<int> parents;
    for (Var v : xs) {
        require(value(v).cols() == cols, Errc::shape_mismatch, "concat_rows column mismatch");
        rows += value(v).rows();
        parents.push_back(v.id);
    }
    std::vector<double> out;
    out.reserve(static_cast<size_t>(rows) * cols);
    for (Var v : xs) {
        const std::vector<double> part = dvec(v);
        out.insert(out.end(), part.begin(), part.end());
    }
    return push_from64({rows, cols}, std::move(out), std::move(parents),
                       [](Tape& t, int id) {
                           const Tensor& g = t.nodes_[static_cast<size_t>(id)].grad;
                           size_t off = 0;
                           for (int pid : t.nodes_[static_cast<size_t>(id)].parents) {
                               Tensor& gp = t.nodes_[static_cast<size_t>(pid)].grad;
                               for (size_t i = 0; i < gp.data.size(); ++i) {
                                   gp.data[i] += g.data[off + i];
                               }
                               off += gp.data.size();
                           }
                       },
                       "concat_rows");
}

Var Tape::concat_cols(std::span<const Var> xs) {
    require(!xs.empty(), Errc::invalid_argument, "concat of nothing");
    const int rows = value(xs[0]).rows();
    int cols = 0;
    std::vector<int> parents;
    std::vector<int> widths;
    for (Var v : xs) {
        require(value(v).rows() == rows, Errc::shape_mismatch, "concat_cols row mismatch");
        widths.push_back(value(v).cols());
        cols += widths.back();
        parents.push_back(v.id);
    }
    std::vector<double> out(static_cast<size_t>(rows) * cols, 0.0);
    int coff = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
        const std::vector<double> part = dvec(xs[i]);
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < widths[i]; ++c) {
                out[static_cast<size_t>(r) * cols + coff + c] = part[static_cast<size_t>(r) * widths[i] + c];
            }
        }
        coff += widths[i];
    }
    return push_from64({rows, cols}, std::move(out), std::move(parents),
                       [rows, widths](Tape& t, int id) {
                           const Tensor& g = t.nodes_[static_cast<size_t>(id)].grad;
                           const int total = g.cols();
                           int coff2 = 0;
                           const auto& ps = t.nodes_[static_cast<size_t>(id)].parents;
                           for (size_t i = 0; i < ps.size(); ++i) {
                               Tensor& gp = t.nodes_[static_cast<size_t>(ps[i])].grad;
                               for (int r = 0; r < rows; ++r) {
                                   for (int c = 0; c < widths[i]; ++c) {
                                       gp.at(r, c) += g.data[static_cast<size_t>(r) * total + coff2 + c];
                                   }
                               }
                               coff2 += widths[i];
                           }
                       },
                       "concat_cols");
}

Var Tape::slice_rows(Var x, int start, int len) {
    const Tensor& xv = value(x);
    require(xv.rank() == 2, Errc::shape_mismatch, "slice_rows needs a matrix");
    require(start >= 0 && len > 0 && start + len <= xv.shape[0], Errc::index_out_of_range, "row slice out of range");
    const int cols = xv.shape[1];
    const std::vector<double> x64 = dvec(x);
    std::vector<double> out(x64.begin() + static_cast<long>(start) * cols,
                            x64.begin() + static_cast<long>(start + len) * cols);
    return push_from64({len, cols}, std::move(out), {x.id},
                       [start, cols](Tape& t, int id) {
                           const Tensor& g = t.grad(Var{id});
                           Tensor& gx = t.grad_mut(Var{t.parents(Var{id})[0]});
                           for (size_t i = 0; i < g.data.size(); ++i) {
                               gx.data[static_cast<size_t>(start) * cols + i] += g.data[i];
                           }
                       },
                       "slice_rows");
}

Var Tape::slice_cols(Var x, int start, int len) {
    const Tensor& xv = value(x);
    require(xv.rank() == 2, Errc::shape_mismatch, "slice_cols needs a matrix");
    require(start >= 0 && len > 0 && start + len <= xv.shape[1], Errc::index_out_of_range, "col slice out of range");
    const int rows = xv.shape[0];
    const int cols = xv.shape[1];
    const std::vector<double> x64 = dvec(x);
    std::vector<double> out(static_cast<size_t>(rows) * len);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < len; ++c) {
            out[static_cast<size_t>(r) * len + c] = x64[static_cast<size_t>(r) * cols + start + c];
        }
    }
    return push_from64({rows, len}, std::move(out), {x.id},
                       [start, rows, cols, len](Tape& t, int id) {
                           const Tensor& g = t.grad(Var{id});
                           Tensor& gx = t.grad_mut(Var{t.parents(Var{id})[0]});
                           for (int r = 0; r < rows; ++r) {
                               for (int c = 0; c < len; ++c) {
                                   gx.data[static_cast<size_t>(r) * cols + start + c] +=
                                       g.data[static_cast<size_t>(r) * len + c];
                               }
                           }
                       },
                       "slice_cols");
}

namespace {

Var apply_mask(Tape& t, Var x, std::vector<float> mask, [[maybe_unused]] const char* name) {
    const std::vector<double> xv = t.dvec(x);
    std::vector<double> out(xv.size());
    for (size_t i = 0; i < out.size(); ++i) {
        out[i] = xv[i] * mask[i];
    }
    return t.custom64({x}, std::vector<int>(t.value(x).shape), std::move(out),
                         [mask = std::move(mask)](Tape& tt, int id) {
                             const Tensor& g = tt.grad(Var{id});
                             Tensor& gx = tt.grad_mut(Var{tt.parents(Var{id})[0]});
                             for (size_t i = 0; i < g.data.size(); ++i) {
                                 gx.data[i] += g.data[i] * mask[i];
                             }
                         });
}

} // namespace

Var Tape::dropout(Var x, double p, bool train, uint64_t key) {
    require(p >= 0.0 && p < 1.0, Errc::invalid_argument, "dropout rate must be in [0, 1)");
    if (!train || p == 0.0) {
        return x; // identity in eval mode
    }
    const float keep_scale = static_cast<float>(1.0 / (1.0 - p));
    std::vector<float> mask(value(x).data.size());
    for (size_t i = 0; i < mask.size(); ++i) {
        mask[i] = hash_to_unit(mix64(key, i)) >= p ? keep_scale : 0.0f;
    }
    return apply_mask(*this, x, std::move(mask), "dropout");
}

Var Tape::dropout_rows(Var x, double p, bool train, uint64_t key) {
    require(p >= 0.0 && p < 1.0, Errc::invalid_argument, "dropout rate must be in [0, 1)");
    if (!train || p == 0.0) {
        return x;
    }
    const Tensor& xv = value(x);
    require(xv.rank() == 2, Errc::shape_mismatch, "dropout_rows needs a matrix");
    const float keep_scale = static_cast<float>(1.0 / (1.0 - p));
    std::vector<float> mask(xv.data.size());
    const int cols = xv.shape[1];
    for (int r = 0; r < xv.shape[0]; ++r) {
        const float m = hash_to_unit(mix64(key, static_cast<uint64_t>(r))) >= p ? keep_scale : 0.0f;
        for (int c = 0; c < cols; ++c) {
            mask[static_cast<size_t>(r) * cols + c] = m;
        }
    }
    return apply_mask(*this, x, std::move(mask), "dropout_rows");
}

Var Tape::mean(Var x) {
    const std::vector<double> xv = dvec(x);
    require(!xv.empty(), Errc::invalid_argument, "mean of empty tensor");
    double acc = 0.0;
    for (double v : xv) {
        acc += v;
    }
    const double n = static_cast<double>(xv.size());
    return push_from64({1}, {acc / n}, {x.id},
                       [n](Tape& t, int id) {
                           const float g = t.grad(Var{id}).data[0];
                           Tensor& gx = t.grad_mut(Var{t.parents(Var{id})[0]});
                           const float share = static_cast<float>(g / n);
                           for (float& v : gx.data) {
                               v += share;
                           }
                       },
                       "mean");
}

Var Tape::sum(Var x) {
    const std::vector<double> xv = dvec(x);
    double acc = 0.0;
    for (double v : xv) {
        acc += v;
    }
    return push_from64({1}, {acc}, {x.id},
                       [](Tape& t, int id) {
                           const float g = t.grad(Var{id}).data[0];
                           Tensor& gx = t.grad_mut(Var{t.parents(Var{id})[0]});
                           for (float& v : gx.data) {
                               v += g;
                           }
                       },
                       "sum");
}

Var Tape::l2_normalize(Var x) {
    const std::vector<double> xv = dvec(x);
    double n2 = 0.0;
    for (double v : xv) {
        n2 += v * v;
    }
    require(n2 > 1e-24, Errc::invalid_argument, "cannot normalize a near-zero vector");
    const double inv = 1.0 / std::sqrt(n2);
    std::vector<double> out(xv.size());
    for (size_t i = 0; i < out.size(); ++i) {
        out[i] = xv[i] * inv;
    }
    return push_from64(std::vector<int>(value(x).shape), std::move(out), {x.id},
                       [inv](Tape& t, int id) {
                           const Tensor& g = t.grad(Var{id});
                           const Tensor& y = t.value(Var{id});
                           Tensor& gx = t.grad_mut(Var{t.parents(Var{id})[0]});
                           double gy = 0.0;
                           for (size_t i = 0; i < g.data.size(); ++i) {
                               gy += static_cast<double>(g.data[i]) * y.data[i];
                           }
                           for (size_t i = 0; i < g.data.size(); ++i) {
                               gx.data[i] += static_cast<float>((g.data[i] - gy * y.data[i]) * inv);
                           }
                       },
                       "l2_normalize");
}

Var Tape::cosine_similarity(Var a, Var b) {
    check_same_shape(value(a), value(b), "cosine_similarity");
    const std::vector<double> av = dvec(a);
    const std::vector<double> bv = dvec(b);
    double ab = 0.0;
    double aa = 0.0;
    double bb = 0.0;
    for (size_t i = 0; i < av.size(); ++i) {
        ab += av[i] * bv[i];
        aa += av[i] * av[i];
        bb += bv[i] * bv[i];
    }
    require(aa > 1e-24 && bb > 1e-24, Errc::invalid_argument, "cosine of near-zero vector");
    const double na = std::sqrt(aa);
    const double nb = std::sqrt(bb);
    const double c = ab / (na * nb);
    return push_from64({1}, {c}, {a.id, b.id},
                       [na, nb, c](Tape& t, int id) {
                           const float g = t.grad(Var{id}).data[0];
                           const auto& ps = t.parents(Var{id});
                           const Tensor& av2 = t.value(Var{ps[0]});
                           const Tensor& bv2 = t.value(Var{ps[1]});
                           Tensor& ga = t.grad_mut(Var{ps[0]});
                           Tensor& gb = t.grad_mut(Var{ps[1]});
                           for (size_t i = 0; i < av2.data.size(); ++i) {
                               const double ai = av2.data[i];
                               const double bi = bv2.data[i];
                               ga.data[i] += static_cast<float>(g * (bi / (na * nb) - c * ai / (na * na)));
                               gb.data[i] += static_cast<float>(g * (ai / (na * nb) - c * bi / (nb * nb)));
                           }
                       },
                       "cosine_similarity");
}

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

GradCheckReport grad_check(std::map<std::string, Tensor> params, const ScalarFn& f, double h) {
    // finite differences evaluate through a high-precision tape so the oracle
    // is not drowned by float32 storage rounding
    auto eval = [&](const std::map<std::string, Tensor>& p) -> double {
        Tape tape(true);
        std::map<std::string, Var> vars;
        for (const auto& [name, tensor] : p) {
            vars.emplace(name, tape.leaf(tensor));
        }
        const Var loss = f(tape, vars);
        require(tape.value(loss).numel() == 1, Errc::non_scalar_loss, "grad_check needs a scalar function");
        return tape.dvec(loss)[0];
    };

    std::map<std::string, Tensor> analytic;
    {
        Tape tape;
        std::map<std::string, Var> vars;
        for (const auto& [name, tensor] : params) {
            vars.emplace(name, tape.leaf(tensor));
        }
        const Var loss = f(tape, vars);
        tape.backward(loss);
        for (const auto& [name, var] : vars) {
            analytic.emplace(name, tape.grad(var));
        }
    }

    GradCheckReport report;
    for (auto& [name, tensor] : params) {
        GradCheckEntry entry;
        entry.name = name;
        const Tensor& a = analytic.at(name);
        for (size_t i = 0; i < tensor.data.size(); ++i) {
            const float saved = tensor.data[i];
            const float up_p = static_cast<float>(saved + h);
            const float down_p = static_cast<float>(saved - h);
            tensor.data[i] = up_p;
            const double up = eval(params);
            tensor.data[i] = down_p;
            const double down = eval(params);
            tensor.data[i] = saved;
            // divide by the realized float32 step, not the nominal 2h
            const double numeric = (up - down) / (static_cast<double>(up_p) - down_p);
            const double analytic_i = a.data[i];
            const double rel = std::abs(analytic_i - numeric) / (std::abs(analytic_i) + std::abs(numeric) + 1e-6);
            if (rel > entry.max_rel_err) {
                entry.max_rel_err = rel;
                entry.worst_index = static_cast<int64_t>(i);
            }
        }
        report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
        report.entries.push_back(std::move(entry));
    }
    return report;
}

} // namespace xrid::ad
