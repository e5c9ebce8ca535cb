#pragma once

#include "manigap/gnn.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace manigap {

inline constexpr int kCheckpointVersion = 1;

[[nodiscard]] inline std::string to_string(Activation a) {
    switch (a) {
        case Activation::Relu: return "relu";
        case Activation::Abs: return "abs";
        case Activation::Identity: return "identity";
    }
    return "?";
}

[[nodiscard]] inline Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::Relu;
    if (s == "abs") return Activation::Abs;
    if (s == "identity") return Activation::Identity;
    throw ConfigError("unknown nonlinearity '" + s + "' (expected relu, abs or identity)");
}

[[nodiscard]] inline std::string to_string(Task t) { return t == Task::Graph ? "graph" : "node"; }

[[nodiscard]] inline Task task_from_string(const std::string& s) {
    if (s == "node") return Task::Node;
    if (s == "graph") return Task::Graph;
    throw ConfigError("unknown task '" + s + "' (expected node or graph)");
}

namespace detail {

inline nlohmann::json matrix_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Index r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Matrix json_matrix(const nlohmann::json& j, const std::string& what) {
    if (!j.is_array() || j.empty() || !j.front().is_array()) throw ConfigError(what + " must be a nonempty matrix");
    Matrix m(static_cast<Index>(j.size()), static_cast<Index>(j.front().size()));
    for (Index r = 0; r < m.rows(); ++r) {
        const auto& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Index>(row.size()) != m.cols()) throw ConfigError(what + " has ragged rows");
        for (Index c = 0; c < m.cols(); ++c) {
            if (!row[static_cast<std::size_t>(c)].is_number()) throw ConfigError(what + " has a non-numeric entry");
            m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
        }
    }
    return m;
}

}  // namespace detail

/// Taps are stored per layer as [k][f_out][f_in]; doubles are written in shortest round-trip form.
[[nodiscard]] inline nlohmann::json checkpoint_json(const GnnModel& model, const ModelCertificate* cert = nullptr) {
    nlohmann::json j;
    j["format"] = "manigap-checkpoint";
    j["version"] = kCheckpointVersion;
    j["activation"] = to_string(model.activation);
    j["task"] = to_string(model.task);
    nlohmann::json widths = nlohmann::json::array();
    widths.push_back(model.input_width());
    for (const auto& l : model.layers) widths.push_back(l.f_out());
    j["widths"] = widths;
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : model.layers) {
        nlohmann::json taps = nlohmann::json::array();
        for (const auto& t : l.taps) taps.push_back(detail::matrix_json(t));
        layers.push_back({{"k", l.k()}, {"taps", taps}});
    }
    j["layers"] = layers;
    j["readout"] = {{"weight", detail::matrix_json(model.readout.weight)},
                    {"bias", std::vector<double>(model.readout.bias.data(), model.readout.bias.data() + model.readout.bias.size())}};
    if (model.budget) {
        const auto& b = *model.budget;
        j["lipschitz_budget"] = {{"c_l", b.c_l}, {"d", b.d}, {"weight", b.weight},
                                 {"lambda_min", b.grid.lo}, {"lambda_max", b.grid.hi}, {"steps", b.grid.steps}};
    }
    if (cert) {
        nlohmann::json filters = nlohmann::json::array();
        for (const auto& f : cert->filters) filters.push_back({{"c_h", f.c_h}, {"c_l", f.c_l}});
        j["certificate"] = {{"max_c_h", cert->max_c_h}, {"max_c_l", cert->max_c_l}, {"filters", filters}};
    }
    return j;
}

[[nodiscard]] inline GnnModel model_from_json(const nlohmann::json& j) {
    try {
        if (j.value("format", "") != "manigap-checkpoint") throw ConfigError("not a manigap checkpoint");
        const int version = j.at("version").get<int>();
        if (version != kCheckpointVersion)
            throw ConfigError("unsupported checkpoint version " + std::to_string(version));
        GnnModel m;
        m.activation = activation_from_string(j.at("activation").get<std::string>());
        m.task = task_from_string(j.at("task").get<std::string>());
        for (const auto& l : j.at("layers")) {
            GnnLayer layer;
            for (const auto& t : l.at("taps")) layer.taps.push_back(detail::json_matrix(t, "layer taps"));
            if (layer.k() != l.at("k").get<int>()) throw ConfigError("layer tap count does not match k");
            m.layers.push_back(std::move(layer));
        }
        m.readout.weight = detail::json_matrix(j.at("readout").at("weight"), "readout weight");
        const auto bias = j.at("readout").at("bias").get<std::vector<double>>();
        m.readout.bias = Eigen::Map<const Vector>(bias.data(), static_cast<Index>(bias.size()));
        if (j.contains("lipschitz_budget")) {
            const auto& b = j["lipschitz_budget"];
            LipschitzBudget budget;
            budget.c_l = b.at("c_l").get<double>();
            budget.d = b.at("d").get<int>();
            budget.weight = b.at("weight").get<double>();
            budget.grid = {b.at("lambda_min").get<double>(), b.at("lambda_max").get<double>(), b.at("steps").get<std::size_t>()};
            budget.grid.validate();
            m.budget = budget;
        }
        m.validate();
        if (j.contains("widths")) {
            const auto widths = j["widths"].get<std::vector<Index>>();
            if (widths.size() != m.layers.size() + 1 || widths.front() != m.input_width())
                throw ConfigError("checkpoint widths do not match the stored layers");
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("corrupt checkpoint: ") + e.what());
    }
}

inline void save_checkpoint(const std::filesystem::path& path, const GnnModel& model, const ModelCertificate* cert = nullptr) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint " + path.string());
    out << checkpoint_json(model, cert).dump(2) << '\n';
    if (!out) throw Error("write failed for " + path.string());
}

[[nodiscard]] inline GnnModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open checkpoint " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("corrupt checkpoint " + path.string() + ": " + e.what());
    }
    return model_from_json(j);
}

}  // namespace manigap
