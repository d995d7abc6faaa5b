#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "fqf/error.hpp"
#include "fqf/value_net.hpp"

namespace fqf {

inline constexpr const char* kCheckpointFormat = "fqf-checkpoint";
inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json tensors_to_json(const TensorList& tensors) {
    auto arr = nlohmann::json::array();
    for (const auto& t : tensors) arr.push_back({{"name", t.name}, {"shape", t.shape}, {"data", t.data}});
    return arr;
}

inline TensorList tensors_from_json(const nlohmann::json& arr) {
    if (!arr.is_array()) throw InvalidArgument("checkpoint: 'params' must be an array");
    TensorList out;
    for (const auto& item : arr) {
        Tensor t(item.at("name").get<std::string>(), item.at("shape").get<std::vector<std::size_t>>());
        auto data = item.at("data").get<std::vector<double>>();
        if (data.size() != t.data.size())
            throw InvalidArgument("checkpoint: '" + t.name + "' has " + std::to_string(data.size()) +
                                  " values, shape implies " + std::to_string(t.data.size()));
        t.data = std::move(data);
        out.push_back(std::move(t));
    }
    return out;
}

inline nlohmann::json net_shape_to_json(const NetShape& s) {
    return {{"state_dim", s.state_dim}, {"hidden", s.hidden}, {"n_basis", s.n_basis}, {"actions", s.actions}};
}

inline NetShape net_shape_from_json(const nlohmann::json& j) {
    return NetShape{j.at("state_dim").get<std::size_t>(), j.at("hidden").get<std::size_t>(),
                    j.at("n_basis").get<std::size_t>(), j.at("actions").get<std::size_t>()};
}

/// {"format": "fqf-checkpoint", "version": 1, "shape": {...}, "params": [...], "extra": {...}}
inline nlohmann::json make_checkpoint(const QuantileValueNet& net, const TensorList& extra_params = {},
                                      const nlohmann::json& extra = nlohmann::json::object()) {
    auto params = tensors_to_json(net.parameters());
    for (auto& p : tensors_to_json(extra_params)) params.push_back(std::move(p));
    return {{"format", kCheckpointFormat},
            {"version", kCheckpointVersion},
            {"shape", net_shape_to_json(net.shape())},
            {"params", std::move(params)},
            {"extra", extra}};
}

inline void save_checkpoint(const std::string& path, const nlohmann::json& checkpoint) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open checkpoint file for writing: " + path);
    out << checkpoint.dump(1) << '\n';
    if (!out) throw Error("failed writing checkpoint file: " + path);
}

inline nlohmann::json read_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open checkpoint file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument("checkpoint " + path + ": " + e.what());
    }
    if (j.value("format", "") != kCheckpointFormat) throw InvalidArgument("checkpoint " + path + ": unknown format");
    if (j.value("version", 0) != kCheckpointVersion)
        throw InvalidArgument("checkpoint " + path + ": unsupported version " + std::to_string(j.value("version", 0)));
    return j;
}

inline QuantileValueNet net_from_checkpoint(const nlohmann::json& checkpoint) {
    return QuantileValueNet::from_tensors(net_shape_from_json(checkpoint.at("shape")),
                                          tensors_from_json(checkpoint.at("params")));
}

} // namespace fqf
