#include "xrid/params.hpp"

#include "xrid/error.hpp"

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <fstream>

namespace xrid::ad {

using nlohmann::json;

Tensor& ParamSet::add(const std::string& name, Tensor init) {
    require(!has(name), Errc::invalid_argument, "duplicate parameter name " + name);
    State st;
    st.m = Tensor::zeros(init.shape);
    st.v = Tensor::zeros(init.shape);
    st.value = std::move(init);
    order_.push_back(name);
    return states_.emplace(name, std::move(st)).first->second.value;
}

Tensor& ParamSet::value(const std::string& name) {
    auto it = states_.find(name);
    require(it != states_.end(), Errc::invalid_argument, "unknown parameter " + name);
    return it->second.value;
}

const Tensor& ParamSet::value(const std::string& name) const {
    auto it = states_.find(name);
    require(it != states_.end(), Errc::invalid_argument, "unknown parameter " + name);
    return it->second.value;
}

int64_t ParamSet::total_parameters() const {
    int64_t n = 0;
    for (const auto& [name, st] : states_) {
        n += st.value.numel();
    }
    return n;
}

void ParamSet::adam_step(const std::map<std::string, Tensor>& grads, double lr, double beta1, double beta2,
                         double eps) {
    ++step_;
    const double bias1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
    const double bias2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
    for (const std::string& name : order_) {
        auto git = grads.find(name);
        require(git != grads.end(), Errc::shape_mismatch, "missing gradient for " + name);
        State& st = states_.at(name);
        check_same_shape(st.value, git->second, "adam_step");
        const Tensor& g = git->second;
        for (size_t i = 0; i < st.value.data.size(); ++i) {
            const double gi = g.data[i];
            const double m = beta1 * st.m.data[i] + (1.0 - beta1) * gi;
            const double v = beta2 * st.v.data[i] + (1.0 - beta2) * gi * gi;
            st.m.data[i] = static_cast<float>(m);
            st.v.data[i] = static_cast<float>(v);
            const double m_hat = m / bias1;
            const double v_hat = v / bias2;
            st.value.data[i] = static_cast<float>(st.value.data[i] - lr * m_hat / (std::sqrt(v_hat) + eps));
        }
    }
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

void save_checkpoint(const ParamSet& params, const json& extra, const std::filesystem::path& path) {
    json header;
    header["schema_version"] = 1;
    header["params"] = json::array();
    for (const std::string& name : params.names()) {
        header["params"].push_back({{"name", name}, {"shape", params.value(name).shape}});
    }
    header["extra"] = extra;
    const std::string header_str = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.is_open(), Errc::io_failure, "cannot write " + path.string());
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    uint64_t len = header_str.size();
    unsigned char len_le[8];
    for (int i = 0; i < 8; ++i) {
        len_le[i] = static_cast<unsigned char>((len >> (8 * i)) & 0xff);
    }
    out.write(reinterpret_cast<const char*>(len_le), 8);
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (const std::string& name : params.names()) {
        const Tensor& t = params.value(name);
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    }
    require(out.good(), Errc::io_failure, "write failed for " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.is_open(), Errc::io_failure, "cannot open " + path.string());

    char magic[8];
    in.read(magic, 8);
    require(in.good() && std::memcmp(magic, kCheckpointMagic, 8) == 0, Errc::malformed_row,
            path.string() + " is not a checkpoint file");

    unsigned char len_le[8];
    in.read(reinterpret_cast<char*>(len_le), 8);
    require(in.good(), Errc::malformed_row, "truncated checkpoint header length");
    uint64_t len = 0;
    for (int i = 0; i < 8; ++i) {
        len |= static_cast<uint64_t>(len_le[i]) << (8 * i);
    }
    require(len < (1ull << 30), Errc::malformed_row, "implausible checkpoint header size");

    std::string header_str(len, '\0');
    in.read(header_str.data(), static_cast<std::streamsize>(len));
    require(in.good(), Errc::malformed_row, "truncated checkpoint header");

    json header;
    try {
        header = json::parse(header_str);
    } catch (const json::exception& e) {
        fail(Errc::malformed_row, std::string("bad checkpoint header: ") + e.what());
    }
    require(header.at("schema_version").get<int>() == 1, Errc::malformed_row, "unsupported checkpoint schema");

    LoadedCheckpoint loaded;
    loaded.extra = header.value("extra", json::object());
    for (const json& p : header.at("params")) {
        const std::string name = p.at("name").get<std::string>();
        const std::vector<int> shape = p.at("shape").get<std::vector<int>>();
        Tensor t = Tensor::zeros(shape);
        in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(float)));
        require(in.good(), Errc::malformed_row, "truncated checkpoint payload for " + name);
        loaded.params.add(name, std::move(t));
    }
    return loaded;
}

} // namespace xrid::ad
