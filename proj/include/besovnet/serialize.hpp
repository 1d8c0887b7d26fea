#pragma once
#include <json.hpp>
#include <string>
#include <variant>

#include "besovnet/network.hpp"

namespace besovnet {

inline constexpr int kDocumentVersion = 1;

std::string format_real(double v);   // 17 significant digits
double parse_real(const nlohmann::json& j, const std::string& path);

nlohmann::json serialize(const MlpNetwork& net);
nlohmann::json serialize(const CnnNetwork& net);
nlohmann::json serialize(const ConvResNet& net);

using AnyNetwork = std::variant<MlpNetwork, CnnNetwork, ConvResNet>;

// throws SchemaError naming the offending path
AnyNetwork deserialize(const nlohmann::json& doc);
MlpNetwork deserialize_mlp(const nlohmann::json& doc);
CnnNetwork deserialize_cnn(const nlohmann::json& doc);
ConvResNet deserialize_resnet(const nlohmann::json& doc);

}  // namespace besovnet
