#pragma once

/** \file trainer.hpp
 *  \brief Deterministic mini-batch training and held-out evaluation.
 */

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "mmctr/data.hpp"
#include "mmctr/model.hpp"
#include "mmctr/optim.hpp"

namespace mmctr {

struct TrainConfig {
    std::size_t epochs{10};
    std::size_t batch_size{64};
    OptimizerConfig optimizer;
    ModelConfig model;
    std::size_t eval_every{1};
    bool deterministic{true};

    void validate() const;
};

/// A trained model together with everything needed to reuse it.
struct ModelCheckpoint {
    TrainConfig config;
    Vocab vocab;
    ModelParams params;

    /// Click probability by string id; throws UnknownEntity.
    double predict_ctr(std::string_view user, std::string_view ad) const;
};

struct Metrics {
    double auc{0.5};
    double logloss{0.0};
    std::size_t num_eval{0};
    std::size_t num_skipped{0};  ///< records with out-of-vocabulary ids
};

/// Mann-Whitney statistic with ties counted as one half. Throws
/// DegenerateLabels unless both classes are present.
double auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// Scores every record whose ids are in the vocabulary. Throws
/// DegenerateLabels when nothing is scorable or only one class remains.
Metrics evaluate(const ModelParams& params, const Vocab& vocab,
                 std::span<const InteractionRecord> records, std::size_t threads = 1);
Metrics evaluate(const ModelCheckpoint& checkpoint, std::span<const InteractionRecord> records,
                 std::size_t threads = 1);

struct EpochReport {
    std::size_t epoch{0};
    double loss{0.0};  ///< mean training loss over the epoch's batches
    std::optional<Metrics> eval;
};

struct TrainResult {
    ModelCheckpoint checkpoint;
    std::vector<EpochReport> epochs;
};

struct TrainOptions {
    /// Held-out records scored every `eval_every` epochs; none when empty.
    std::span<const InteractionRecord> eval_records;
    /// Receives `epoch=<n> loss=<float> [auc=<float> logloss=<float>]` lines.
    std::ostream* log{nullptr};
    std::size_t eval_threads{1};
};

/// Builds the vocabulary from `records`, initializes the model and runs
/// `epochs` passes of negative sampling, shuffling and batched updates.
/// Throws NonFiniteLoss naming the offending epoch and batch.
TrainResult train(const TrainConfig& cfg, std::span<const InteractionRecord> records,
                  const TrainOptions& options = {});

}  // namespace mmctr
