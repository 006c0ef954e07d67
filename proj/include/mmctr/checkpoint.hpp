#pragma once

/** \file checkpoint.hpp
 *  \brief Single-document JSON checkpoints.
 *
 * Top-level fields: `version` ("1"), `model_config`, `train_config`,
 * `manifolds`, `vocab` ({users, ads} ordered id arrays), `user_tables` and
 * `ad_tables` (one row-major array per manifold), `fusion`.
 *
 * Table values are written as the exact decimal expansion of their
 * single-precision value, fusion parameters with double round-trip
 * precision, so loading reproduces every parameter bit for bit. Output is
 * byte-stable: keys are emitted in sorted order.
 */

#include <filesystem>
#include <string>

#include "mmctr/config.hpp"
#include "mmctr/trainer.hpp"

namespace mmctr {

inline constexpr const char* kCheckpointVersion = "1";

Json checkpoint_to_json(const ModelCheckpoint& ckpt);

/// Throws FormatError (with JSON pointer) or VersionError.
ModelCheckpoint checkpoint_from_json(const Json& j);

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path);

/// Throws IoError, FormatError or VersionError.
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mmctr
