#include "causalflow/numerics/serialize.h"

#include "causalflow/error.h"

#include <fmt/format.h>

namespace causalflow::numerics {

nlohmann::json to_json(const DenseNet& net) {
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        const auto& s = net.shapes()[l];
        nlohmann::json layer = {
            {"inputs", s.inputs}, {"outputs", s.outputs}, {"activation", to_string(s.activation)}};
        if (const auto& m = net.mask(l)) {
            std::vector<int> bits(static_cast<std::size_t>(m->size()));
            for (Eigen::Index i = 0; i < m->size(); ++i) {
                bits[static_cast<std::size_t>(i)] = (*m)(i) != 0.0 ? 1 : 0;
            }
            layer["mask"] = bits;
        }
        layers.push_back(std::move(layer));
    }
    const auto& p = net.parameters();
    return {{"format_version", kNetFormatVersion},
            {"layers", std::move(layers)},
            {"parameters", std::vector<double>(p.data(), p.data() + p.size())}};
}

DenseNet net_from_json(const nlohmann::json& j) {
    const int version = j.at("format_version").get<int>();
    if (version != kNetFormatVersion) {
        throw ConfigError(fmt::format("unsupported network format version {}", version));
    }
    std::vector<LayerShape> shapes;
    for (const auto& layer : j.at("layers")) {
        shapes.push_back({layer.at("inputs").get<int>(), layer.at("outputs").get<int>(),
                          activation_from_string(layer.at("activation").get<std::string>())});
    }
    DenseNet net(shapes);
    const auto values = j.at("parameters").get<std::vector<double>>();
    if (values.size() != net.parameter_count()) {
        throw ConfigError(fmt::format("network file holds {} parameters, layout needs {}",
                                      values.size(), net.parameter_count()));
    }
    net.set_parameters(Eigen::Map<const Eigen::VectorXd>(values.data(),
                                                         static_cast<Eigen::Index>(values.size())));
    std::size_t l = 0;
    for (const auto& layer : j.at("layers")) {
        if (layer.contains("mask")) {
            const auto bits = layer.at("mask").get<std::vector<int>>();
            Eigen::MatrixXd mask(shapes[l].outputs, shapes[l].inputs);
            if (static_cast<Eigen::Index>(bits.size()) != mask.size()) {
                throw ConfigError(fmt::format("mask size mismatch in layer {}", l));
            }
            for (Eigen::Index i = 0; i < mask.size(); ++i) {
                mask(i) = bits[static_cast<std::size_t>(i)];
            }
            net.set_mask(l, mask);
        }
        ++l;
    }
    return net;
}

}  // namespace causalflow::numerics
