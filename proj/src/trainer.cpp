#include "mmctr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <thread>

#include "mmctr/errors.hpp"
#include "mmctr/rng.hpp"

namespace mmctr {

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs: must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size: must be >= 1");
    if (eval_every < 1) throw ConfigError("eval_every: must be >= 1");
    optimizer.validate();
    model.validate();
}

double ModelCheckpoint::predict_ctr(std::string_view user, std::string_view ad) const {
    const auto u = vocab.users.find(user);
    if (!u) throw UnknownEntity("unknown user '" + std::string(user) + "'");
    const auto a = vocab.ads.find(ad);
    if (!a) throw UnknownEntity("unknown ad '" + std::string(ad) + "'");
    return mmctr::predict_ctr(params, *u, *a);
}

double auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size()) throw LengthMismatch("auc: scores and labels differ in length");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double pos_rank_sum = 0.0;
    std::size_t num_pos = 0;
    for (std::size_t i = 0; i < n;) {
        if (!std::isfinite(scores[order[i]])) throw DomainError("auc: non-finite score");
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        // Ranks i+1 .. j share their mean.
        const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]] == 1) {
                pos_rank_sum += mid_rank;
                ++num_pos;
            }
        }
        i = j;
    }
    const std::size_t num_neg = n - num_pos;
    if (num_pos == 0 || num_neg == 0) {
        throw DegenerateLabels("auc needs at least one positive and one negative label", n);
    }
    const double np = static_cast<double>(num_pos);
    const double u_stat = pos_rank_sum - np * (np + 1.0) / 2.0;
    return u_stat / (np * static_cast<double>(num_neg));
}

Metrics evaluate(const ModelParams& params, const Vocab& vocab,
                 std::span<const InteractionRecord> records, std::size_t threads) {
    std::vector<Example> scorable;
    Metrics metrics;
    for (const auto& r : records) {
        const auto u = vocab.users.find(r.user);
        const auto a = vocab.ads.find(r.ad);
        if (!u || !a) {
            ++metrics.num_skipped;
            continue;
        }
        scorable.push_back({static_cast<std::uint32_t>(*u), static_cast<std::uint32_t>(*a),
                            static_cast<std::uint8_t>(r.label)});
    }
    metrics.num_eval = scorable.size();
    if (scorable.empty()) {
        throw DegenerateLabels("no evaluation record has known ids (num_eval=0, skipped=" +
                                   std::to_string(metrics.num_skipped) + ")",
                               0);
    }

    const ManifoldSet set = params.manifolds();
    std::vector<double> probs(scorable.size());
    auto score_range = [&](std::size_t begin, std::size_t end) {
        std::vector<double> u(set.total_dim());
        std::vector<double> a(set.total_dim());
        for (std::size_t i = begin; i < end; ++i) {
            params.gather_user(scorable[i].user, u);
            params.gather_ad(scorable[i].ad, a);
            probs[i] = sigmoid(pair_logit(set, u, a, params.fusion));
        }
    };
    threads = std::clamp<std::size_t>(threads, 1, scorable.size());
    if (threads == 1) {
        score_range(0, scorable.size());
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (scorable.size() + threads - 1) / threads;
        for (std::size_t t = 0; t < threads; ++t) {
            const std::size_t begin = t * chunk;
            const std::size_t end = std::min(scorable.size(), begin + chunk);
            if (begin < end) pool.emplace_back(score_range, begin, end);
        }
        for (auto& th : pool) th.join();
    }

    std::vector<std::uint8_t> labels(scorable.size());
    std::transform(scorable.begin(), scorable.end(), labels.begin(),
                   [](const Example& e) { return e.label; });
    metrics.auc = auc(probs, labels);
    metrics.logloss = bce_loss(probs, labels);
    return metrics;
}

Metrics evaluate(const ModelCheckpoint& checkpoint, std::span<const InteractionRecord> records,
                 std::size_t threads) {
    return evaluate(checkpoint.params, checkpoint.vocab, records, threads);
}

namespace {

std::string format_epoch_line(const EpochReport& r) {
    char buf[160];
    int n = std::snprintf(buf, sizeof buf, "epoch=%zu loss=%.6f", r.epoch, r.loss);
    if (r.eval) {
        std::snprintf(buf + n, sizeof buf - static_cast<std::size_t>(n), " auc=%.6f logloss=%.6f",
                      r.eval->auc, r.eval->logloss);
    }
    return buf;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, std::span<const InteractionRecord> records,
                  const TrainOptions& options) {
    cfg.validate();
    if (records.empty()) throw ConfigError("training needs at least one record");

    TrainResult result;
    ModelCheckpoint& ckpt = result.checkpoint;
    ckpt.config = cfg;
    ckpt.vocab = build_vocab(records);
    ckpt.params = init_embeddings(cfg.model, ckpt.vocab.users.size(), ckpt.vocab.ads.size());
    const std::vector<Example> base = index_records(records, ckpt.vocab);

    const std::uint64_t sampling_seed = derive_seed(cfg.model.seed, "sampling");
    const std::uint64_t shuffle_seed = derive_seed(cfg.model.seed, "shuffle");

    std::size_t per_epoch = base.size();
    for (const auto& e : base) per_epoch += e.label == 1 ? cfg.model.negatives_per_positive : 0;
    const std::size_t total_steps = cfg.epochs * ((per_epoch + cfg.batch_size - 1) / cfg.batch_size);
    std::size_t step = 0;
    OptimizerConfig step_cfg = cfg.optimizer;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<Example> examples =
            sample_negatives(base, ckpt.vocab, cfg.model.negatives_per_positive, sampling_seed + epoch);
        Rng shuffle_rng(shuffle_seed + epoch);
        std::shuffle(examples.begin(), examples.end(), shuffle_rng);

        double loss_sum = 0.0;
        const std::span<const Example> all(examples);
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < all.size(); start += cfg.batch_size, ++batch_index) {
            const auto batch = all.subspan(start, std::min(cfg.batch_size, all.size() - start));
            const Gradients grads = backward(batch, ckpt.params);
            if (!std::isfinite(grads.loss)) throw NonFiniteLoss(epoch, batch_index);
            step_cfg.learning_rate = scheduled_learning_rate(cfg.optimizer, step++, total_steps);
            apply_gradients(ckpt.params, grads, step_cfg, cfg.model.update_mode);
            loss_sum += grads.loss * static_cast<double>(batch.size());
        }

        EpochReport report;
        report.epoch = epoch;
        report.loss = loss_sum / static_cast<double>(all.size());
        if (!options.eval_records.empty() && epoch % cfg.eval_every == 0) {
            report.eval = evaluate(ckpt.params, ckpt.vocab, options.eval_records, options.eval_threads);
        }
        if (options.log != nullptr) *options.log << format_epoch_line(report) << '\n' << std::flush;
        result.epochs.push_back(report);
    }
    return result;
}

}  // namespace mmctr
