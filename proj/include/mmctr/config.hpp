#pragma once

/** \file config.hpp
 *  \brief JSON (de)serialization of run, training, optimizer and model configs.
 *
 * Parsers reject unknown keys and report errors as ConfigError with the JSON
 * pointer of the offending key, e.g. `/optimizer/learning_rate: must be ...`.
 *
 * Run config layout (every key optional unless noted):
 *
 *     {
 *       "data": "train.csv", "eval_data": "test.csv", "out": "ckpt.json",
 *       "epochs": 10, "batch_size": 64, "eval_every": 1, "deterministic": true,
 *       "optimizer": {"learning_rate": 0.1, "lr_schedule": "constant", "ball_eps": 1e-5,
 *                     "grad_clip": null, "attention_weight_decay": 0.0},
 *       "model": {
 *         "manifolds": [{"kind": "poincare", "dim": 8, "curvature": 1.0}],   // required
 *         "negatives_per_positive": 1, "init_scale": 0.01,
 *         "update_mode": "riemannian", "seed": 42
 *       }
 *     }
 */

#include <optional>
#include <string>

#include <json.hpp>

#include "mmctr/trainer.hpp"

namespace mmctr {

using Json = nlohmann::json;

Json to_json(const ManifoldSpec& spec);
ManifoldSpec manifold_spec_from_json(const Json& j, const std::string& path);

Json to_json(const OptimizerConfig& cfg);
OptimizerConfig optimizer_config_from_json(const Json& j, const std::string& path);

/// With `with_manifolds` false the "manifolds" key is neither written nor accepted.
Json to_json(const ModelConfig& cfg, bool with_manifolds = true);
ModelConfig model_config_from_json(const Json& j, const std::string& path,
                                   bool with_manifolds = true);

/// Training fields only (epochs, batch_size, eval_every, deterministic, optimizer).
Json train_fields_to_json(const TrainConfig& cfg);

/// Parses the training fields and attaches `model`; the object may hold nothing else.
TrainConfig train_config_from_json(const Json& j, const std::string& path, ModelConfig model);

struct RunConfig {
    TrainConfig train;
    std::optional<std::string> data;
    std::optional<std::string> eval_data;
    std::optional<std::string> out;
};

RunConfig run_config_from_json(const Json& j);
Json to_json(const RunConfig& cfg);

/// Reads and parses a run config file; relative paths inside it are taken
/// relative to the file's directory. IoError / ConfigError.
RunConfig load_run_config(const std::string& path);

}  // namespace mmctr
