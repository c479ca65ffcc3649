#pragma once

#include <filesystem>

#include "json.hpp"
#include "nlual/al.hpp"
#include "nlual/corpus.hpp"
#include "nlual/featurize.hpp"
#include "nlual/linear.hpp"
#include "nlual/nlu.hpp"
#include "nlual/sim.hpp"

namespace nlual {

// Structured-config readers. Each reader starts from the type's defaults and
// overrides the fields present; unknown keys and ill-typed values raise
// ConfigError naming the offending field.

FeatureConfig feature_config_from_json(const nlohmann::json& j, FeatureConfig base = {});
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
SplitSpec split_spec_from_json(const nlohmann::json& j);
SynthSpec synth_spec_from_json(const nlohmann::json& j);
AlConfig al_config_from_json(const nlohmann::json& j, AlConfig base = {});
NluConfig nlu_config_from_json(const nlohmann::json& j, NluConfig base = {});

/// Relative paths inside the document resolve against base_dir.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j,
                                             const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

nlohmann::json to_json(const FeatureConfig& c);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const AlConfig& c);

nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace nlual
