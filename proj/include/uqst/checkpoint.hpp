#pragma once

#include <string>

#include "uqst/dataset.hpp"
#include "uqst/model.hpp"
#include "uqst/training.hpp"

namespace uqst::checkpoint {

// Versioned binary container: magic "UQST", u32 version, then named
// parameter arrays (little-endian f64), then a JSON trailer with the
// normalization spec, configs, and best validation loss.
inline constexpr std::uint32_t kVersion = 1;

struct Checkpoint {
    model::ModelConfig model_cfg;
    training::TrainConfig train_cfg;
    std::size_t n_regions = 0, n_vars = 0;
    std::vector<std::string> variable_names;
    dataset::MinMaxSpec norm_spec;
    double best_val_loss = 0;
    std::size_t best_epoch = 0;
    std::vector<std::pair<std::string, NDArray>> params;  // registration order
};

void save(const Checkpoint& ck, const std::string& path);
Checkpoint load(const std::string& path);

Checkpoint from_model(const model::Model& m, const training::TrainConfig& tcfg,
                      const dataset::MinMaxSpec& spec,
                      const std::vector<std::string>& variable_names, double best_val_loss,
                      std::size_t best_epoch);

// Rebuild a model (graph ops supplied separately) and load its weights.
model::Model to_model(const Checkpoint& ck, graph::DiffusionOps ops);

}  // namespace uqst::checkpoint
