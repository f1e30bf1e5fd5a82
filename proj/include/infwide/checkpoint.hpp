#pragma once

// Checkpoint directory:
//   manifest.json          config, config hash, step, optimizer scalars, extra metadata
//   params/<name>.rt       one raw tensor per parameter
//   adam/<name>.m.rt, .v.rt

#include "infwide/adam.hpp"
#include "infwide/network.hpp"

#include <filesystem>

namespace infwide {

struct Checkpoint {
    NetworkConfig config;
    ParamStore<float> store;
    long step = 0;
    long adam_steps = 0;
    std::vector<AdamMoments<float>> moments; // empty when the checkpoint has no optimizer state
    nlohmann::json extra;                    // free-form training metadata
};

void save_checkpoint(const std::filesystem::path& dir, const NetworkConfig& cfg, const ParamStore<float>& store,
                     const Adam<float>* adam, long step, const nlohmann::json& extra = nlohmann::json::object());

Checkpoint load_checkpoint(const std::filesystem::path& dir);

} // namespace infwide
