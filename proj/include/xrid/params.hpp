#pragma once

#include "xrid/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace xrid::ad {

// Named parameter tensors plus per-parameter Adam state. Parameter order is
// insertion order; checkpoints serialize payloads in exactly that order.
class ParamSet {
public:
    Tensor& add(const std::string& name, Tensor init);

    bool has(const std::string& name) const { return states_.count(name) != 0; }
    Tensor& value(const std::string& name);
    const Tensor& value(const std::string& name) const;
    const std::vector<std::string>& names() const { return order_; }
    int64_t step() const { return step_; }

    int64_t total_parameters() const;

    // Standard Adam with bias correction; missing gradient entries are an
    // error, shapes must match.
    void adam_step(const std::map<std::string, Tensor>& grads, double lr, double beta1 = 0.9,
                   double beta2 = 0.999, double eps = 1e-8);

private:
    struct State {
        Tensor value;
        Tensor m;
        Tensor v;
    };

    std::vector<std::string> order_;
    std::map<std::string, State> states_;
    int64_t step_ = 0;
};

// Checkpoint container: 8-byte magic, little-endian u64 JSON header length,
// the JSON header (schema version, parameter names/shapes, caller extras),
// then float32 payloads in header order. Optimizer state is not persisted;
// checkpoints carry inference weights.
inline constexpr char kCheckpointMagic[8] = {'X', 'R', 'I', 'D', 'C', 'K', 'P', '1'};

void save_checkpoint(const ParamSet& params, const nlohmann::json& extra, const std::filesystem::path& path);

struct LoadedCheckpoint {
    ParamSet params;
    nlohmann::json extra;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

} // namespace xrid::ad
