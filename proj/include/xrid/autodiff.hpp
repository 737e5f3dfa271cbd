#pragma once

#include "xrid/tensor.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace xrid::ad {

// Reverse-mode autodiff over dense float32 tensors. Every operation records a
// node on the tape; backward() replays the nodes in exact reverse order.
// Arithmetic runs in double internally and is rounded to float32 on store, so
// finite-difference checks stay meaningful. Rank 1 and 2 tensors only; the
// single broadcast is the bias add.

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

class Tape {
public:
    using BackwardFn = std::function<void(Tape&, int node_id)>;

    // A high-precision tape keeps the unrounded doubles next to the float32
    // node values and feeds them to downstream kernels; grad_check uses this
    // for its finite-difference evaluations.
    explicit Tape(bool high_precision = false) : high_precision_(high_precision) {}

    Var leaf(Tensor value);

    // C = op(A) * op(B) with optional transposes.
    Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b); // elementwise
    Var add_bias(Var x, Var bias);
    Var affine(Var x, double scale, double shift); // scale * x + shift, elementwise
    Var tanh(Var x);
    Var sigmoid(Var x);
    Var relu(Var x);
    Var softmax(Var x, int axis = -1);                            // last axis only
    Var layer_norm(Var x, Var gamma, Var beta, int axis = -1, double eps = 1e-5);
    Var concat_rows(std::span<const Var> xs);
    Var concat_cols(std::span<const Var> xs);
    Var slice_rows(Var x, int start, int len);
    Var slice_cols(Var x, int start, int len);
    // Zeroes elements (or whole rows) with probability p in training mode and
    // scales survivors by 1/(1-p); identity in eval mode. The mask is a pure
    // function of (key, element index).
    Var dropout(Var x, double p, bool train, uint64_t key);
    Var dropout_rows(Var x, double p, bool train, uint64_t key);
    Var mean(Var x);
    Var sum(Var x);
    Var l2_normalize(Var x); // 1-D
    Var cosine_similarity(Var a, Var b); // 1-D, 1-D -> scalar

    // Extension points for fused ops (losses live in the training module).
    // custom64 is the full-precision variant: values are rounded to float32
    // for storage but kept as doubles on a high-precision tape.
    Var custom(std::vector<Var> inputs, Tensor value, BackwardFn backward);
    Var custom64(std::vector<Var> inputs, std::vector<int> shape, std::vector<double> values, BackwardFn backward);

    const Tensor& value(Var v) const { return node(v.id).value; }
    const Tensor& grad(Var v) const { return node(v.id).grad; }
    Tensor& grad_mut(Var v) { return node_mut(v.id).grad; }
    const std::vector<int>& parents(Var v) const { return node(v.id).parents; }

    // Node values widened to double (exact doubles in high-precision mode).
    std::vector<double> dvec(Var v) const;

    // Populates gradients for every node up to the loss. Throws
    // Errc::non_scalar_loss unless the loss has exactly one element.
    void backward(Var loss);

    size_t size() const { return nodes_.size(); }
    void clear();

private:
    struct Node {
        Tensor value;
        std::vector<double> value64; // filled in high-precision mode only
        Tensor grad;
        std::vector<int> parents;
        BackwardFn backward;
    };

    const Node& node(int id) const;
    Node& node_mut(int id);
    Var push_from64(std::vector<int> shape, std::vector<double> values, std::vector<int> parents,
                    BackwardFn backward, const char* op);

    bool high_precision_ = false;
    std::vector<Node> nodes_;
};

// Plain (tape-free) helpers shared with inference paths.
Tensor matmul_values(const Tensor& a, bool trans_a, const Tensor& b, bool trans_b);
double cosine_of(std::span<const float> a, std::span<const float> b);

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    int64_t worst_index = -1;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_err = 0.0;
    bool within(double tol) const { return max_rel_err < tol; }
};

// Scalar function under test: binds the named parameters as leaves on the
// given tape and returns the loss node. Must be deterministic.
using ScalarFn = std::function<Var(Tape&, const std::map<std::string, Var>&)>;

// Compares backward() against central finite differences (f(p+h)-f(p-h))/2h,
// coordinate by coordinate. Relative error uses |a-n| / (|a|+|n|+1e-6).
GradCheckReport grad_check(std::map<std::string, Tensor> params, const ScalarFn& f, double h = 1e-3);

} // namespace xrid::ad
