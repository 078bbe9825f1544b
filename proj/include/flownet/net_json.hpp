#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "flownet/nettypes.hpp"

namespace flownet {

namespace detail {

inline double number_at(const nlohmann::json& j, const std::string& at) {
    if (!j.is_number()) fail("parse.schema", at + ": expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) fail("parse.schema", at + ": non-finite value");
    return v;
}

inline Vector vector_from_json(const nlohmann::json& j, const std::string& at) {
    if (!j.is_array()) fail("parse.schema", at + ": expected an array of numbers");
    Vector v(static_cast<Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i)
        v(static_cast<Index>(i)) = number_at(j[i], at + "[" + std::to_string(i) + "]");
    return v;
}

inline Matrix matrix_from_json(const nlohmann::json& j, const std::string& at) {
    if (!j.is_array() || j.empty()) fail("parse.schema", at + ": expected a non-empty array of rows");
    const std::size_t rows = j.size();
    std::size_t cols = 0;
    if (!j[0].is_array()) fail("parse.schema", at + "[0]: expected an array (matrix row)");
    cols = j[0].size();
    Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
    for (std::size_t i = 0; i < rows; ++i) {
        const std::string row_at = at + "[" + std::to_string(i) + "]";
        if (!j[i].is_array()) fail("parse.schema", row_at + ": expected an array (matrix row)");
        if (j[i].size() != cols)
            fail("parse.schema", row_at + ": has " + std::to_string(j[i].size()) +
                                     " entries, expected " + std::to_string(cols));
        for (std::size_t k = 0; k < cols; ++k)
            m(static_cast<Index>(i), static_cast<Index>(k)) =
                number_at(j[i][k], row_at + "[" + std::to_string(k) + "]");
    }
    return m;
}

inline nlohmann::json vector_to_json(const Vector& v) {
    nlohmann::json out = nlohmann::json::array();
    for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

inline nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json out = nlohmann::json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        out.push_back(row);
    }
    return out;
}

inline ActivationKind activation_from_json(const nlohmann::json& j, const std::string& at) {
    if (j.is_string()) {
        const std::string tag = j.get<std::string>();
        if (tag == "relu") return ActivationKind::relu();
        if (tag == "tanh") return ActivationKind::tanh();
        if (tag == "identity") return ActivationKind::identity();
        fail("parse.schema", at + ": unknown activation tag \"" + tag + "\"");
    }
    if (j.is_object() && j.contains("leaky_relu"))
        return ActivationKind::leaky_relu(number_at(j["leaky_relu"], at + ".leaky_relu"));
    fail("parse.schema", at + ": expected an activation tag string or {\"leaky_relu\": slope}");
}

inline nlohmann::json activation_to_json(const ActivationKind& a) {
    if (a.tag == ActivationTag::leaky_relu) return nlohmann::json{{"leaky_relu", a.slope}};
    return a.name();
}

inline const nlohmann::json& field(const nlohmann::json& j, const char* key,
                                   const std::string& at) {
    if (!j.contains(key)) fail("parse.schema", at + ": missing field \"" + key + "\"");
    return j[key];
}

}  // namespace detail

inline nlohmann::json network_to_json(const Network& net) {
    validate_network(net);
    nlohmann::json layers = nlohmann::json::array();
    for (const Layer& layer : net.layers) {
        layers.push_back(std::visit([](const auto& l) -> nlohmann::json {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, PlainLayer>) {
                return {{"kind", "plain"},
                        {"W", detail::matrix_to_json(l.W)},
                        {"b", detail::vector_to_json(l.b)},
                        {"activation", detail::activation_to_json(l.activation)}};
            } else if constexpr (std::is_same_v<T, ResBlock2>) {
                return {{"kind", "res2"},
                        {"W1", detail::matrix_to_json(l.W1)},
                        {"b1", detail::vector_to_json(l.b1)},
                        {"W2", detail::matrix_to_json(l.W2)},
                        {"b2", detail::vector_to_json(l.b2)},
                        {"activation", detail::activation_to_json(l.activation)}};
            } else if constexpr (std::is_same_v<T, ResBlock1>) {
                return {{"kind", "res1"},
                        {"W", detail::matrix_to_json(l.W)},
                        {"b", detail::vector_to_json(l.b)}};
            } else {
                return {{"kind", "linear"},
                        {"W", detail::matrix_to_json(l.M)},
                        {"b", detail::vector_to_json(l.c)}};
            }
        }, layer));
    }
    return {{"dimension", net.dimension}, {"layers", layers}};
}

inline Network network_from_json(const nlohmann::json& j) {
    if (!j.is_object()) fail("parse.schema", "top level: expected an object");
    const nlohmann::json& jd = detail::field(j, "dimension", "top level");
    if (!jd.is_number_integer() || jd.get<long long>() <= 0)
        fail("parse.schema", "dimension: expected a positive integer");
    Network net;
    net.dimension = jd.get<Index>();
    const nlohmann::json& jl = detail::field(j, "layers", "top level");
    if (!jl.is_array() || jl.empty()) fail("parse.schema", "layers: expected a non-empty array");
    for (std::size_t i = 0; i < jl.size(); ++i) {
        const std::string at = "layers[" + std::to_string(i) + "]";
        const nlohmann::json& lj = jl[i];
        if (!lj.is_object()) fail("parse.schema", at + ": expected an object");
        const nlohmann::json& kj = detail::field(lj, "kind", at);
        if (!kj.is_string()) fail("parse.schema", at + ".kind: expected a string");
        const std::string kind = kj.get<std::string>();
        if (kind == "plain") {
            net.layers.push_back(PlainLayer{
                detail::matrix_from_json(detail::field(lj, "W", at), at + ".W"),
                detail::vector_from_json(detail::field(lj, "b", at), at + ".b"),
                detail::activation_from_json(detail::field(lj, "activation", at),
                                             at + ".activation")});
        } else if (kind == "res2") {
            net.layers.push_back(ResBlock2{
                detail::matrix_from_json(detail::field(lj, "W1", at), at + ".W1"),
                detail::vector_from_json(detail::field(lj, "b1", at), at + ".b1"),
                detail::matrix_from_json(detail::field(lj, "W2", at), at + ".W2"),
                detail::vector_from_json(detail::field(lj, "b2", at), at + ".b2"),
                detail::activation_from_json(detail::field(lj, "activation", at),
                                             at + ".activation")});
        } else if (kind == "res1") {
            net.layers.push_back(ResBlock1{
                detail::matrix_from_json(detail::field(lj, "W", at), at + ".W"),
                detail::vector_from_json(detail::field(lj, "b", at), at + ".b")});
        } else if (kind == "linear") {
            net.layers.push_back(LinearBlock{
                detail::matrix_from_json(detail::field(lj, "W", at), at + ".W"),
                detail::vector_from_json(detail::field(lj, "b", at), at + ".b")});
        } else {
            fail("parse.schema", at + ".kind: unknown layer kind \"" + kind + "\"");
        }
    }
    try {
        validate_network(net);
    } catch (const Error& e) {
        fail("parse.schema", e.what());
    }
    return net;
}

inline nlohmann::json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("io.not_found", "cannot open \"" + path + "\"");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail("parse.json", path + ": " + e.what());
    }
}

inline void save_json_file(const nlohmann::json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) fail("io.write", "cannot open \"" + path + "\" for writing");
    out << j.dump(2) << '\n';
    if (!out) fail("io.write", "failed writing \"" + path + "\"");
}

inline Network load_network(const std::string& path) {
    try {
        return network_from_json(load_json_file(path));
    } catch (const Error& e) {
        if (e.category() == "parse.schema") fail("parse.schema", path + ": " + e.what());
        throw;
    }
}

inline void save_network(const Network& net, const std::string& path) {
    save_json_file(network_to_json(net), path);
}

}  // namespace flownet
