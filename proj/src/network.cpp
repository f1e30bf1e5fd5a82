#include "infwide/network.hpp"

namespace infwide {

std::string to_string(FusionMode m)
{
    switch (m) {
    case FusionMode::xrfm: return "xrfm";
    case FusionMode::add: return "add";
    case FusionMode::concat: return "concat";
    }
    return "?";
}

std::string to_string(BranchMode m)
{
    switch (m) {
    case BranchMode::both: return "both";
    case BranchMode::image_only: return "image";
    case BranchMode::feature_only: return "feature";
    }
    return "?";
}

FusionMode parse_fusion_mode(const std::string& s)
{
    if (s == "xrfm") return FusionMode::xrfm;
    if (s == "add") return FusionMode::add;
    if (s == "concat") return FusionMode::concat;
    throw ContractError("unknown fusion mode '" + s + "' (expected xrfm, add or concat)");
}

BranchMode parse_branch_mode(const std::string& s)
{
    if (s == "both") return BranchMode::both;
    if (s == "image" || s == "image_only") return BranchMode::image_only;
    if (s == "feature" || s == "feature_only") return BranchMode::feature_only;
    throw ContractError("unknown branch mode '" + s + "' (expected both, image or feature)");
}

void NetworkConfig::validate() const
{
    if (base_channels < 1) throw ContractError("base_channels must be >= 1");
    if (unet_depth < 1 || unet_depth > 6) throw ContractError("unet_depth must be in [1, 6]");
    if (resblocks_per_level < 0) throw ContractError("resblocks_per_level must be >= 0");
    if (fm_feature_count < 1) throw ContractError("fm_feature_count must be >= 1");
    if (scales < 1 || scales > 4) throw ContractError("scales must be in [1, 4]");
}

std::uint64_t NetworkConfig::hash() const
{
    return hash_name(nlohmann::json(*this).dump());
}

void to_json(nlohmann::json& j, const NetworkConfig& c)
{
    j = nlohmann::json{{"base_channels", c.base_channels},
                       {"unet_depth", c.unet_depth},
                       {"resblocks_per_level", c.resblocks_per_level},
                       {"fm_feature_count", c.fm_feature_count},
                       {"scales", c.scales},
                       {"fusion", to_string(c.fusion)},
                       {"branch", to_string(c.branch)},
                       {"per_feature_nsr", c.per_feature_nsr}};
}

void from_json(const nlohmann::json& j, NetworkConfig& c)
{
    c.base_channels = j.value("base_channels", c.base_channels);
    c.unet_depth = j.value("unet_depth", c.unet_depth);
    c.resblocks_per_level = j.value("resblocks_per_level", c.resblocks_per_level);
    c.fm_feature_count = j.value("fm_feature_count", c.fm_feature_count);
    c.scales = j.value("scales", c.scales);
    if (j.contains("fusion")) c.fusion = parse_fusion_mode(j.at("fusion").get<std::string>());
    if (j.contains("branch")) c.branch = parse_branch_mode(j.at("branch").get<std::string>());
    c.per_feature_nsr = j.value("per_feature_nsr", c.per_feature_nsr);
    c.validate();
}

template class ParamStore<float>;
template class ParamStore<double>;

} // namespace infwide
