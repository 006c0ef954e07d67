#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "mmctr/errors.hpp"
#include "mmctr/trainer.hpp"
#include "oracles.hpp"

using namespace mmctr;

namespace {

std::vector<InteractionRecord> micro_records() {
    return {{"u1", "a1", 1, {}}, {"u1", "a2", 0, {}}, {"u2", "a1", 0, {}}, {"u2", "a2", 1, {}}};
}

TrainConfig micro_config(std::size_t epochs) {
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = 4;
    cfg.model.manifolds = {ManifoldSpec::euclidean(2), ManifoldSpec::poincare(2, 1.0)};
    return cfg;
}

}  // namespace

TEST_CASE("auc examples") {
    using L = std::vector<std::uint8_t>;
    CHECK(auc(std::vector<double>{0.9, 0.1}, L{1, 0}) == 1.0);
    CHECK(auc(std::vector<double>{0.8, 0.4, 0.6, 0.2}, L{1, 1, 0, 0}) == 0.75);
    CHECK(auc(std::vector<double>{0.5, 0.5}, L{1, 0}) == 0.5);
    CHECK_THROWS_AS(auc(std::vector<double>{0.5, 0.7}, L{1, 1}), DegenerateLabels);
    CHECK_THROWS_AS(auc(std::vector<double>{0.5}, L{1, 0}), LengthMismatch);
    CHECK_THROWS_AS(auc(std::vector<double>{std::nan(""), 0.1}, L{1, 0}), DomainError);
}

TEST_CASE("auc equals exhaustive pair counting") {
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<int> size(2, 200);
    std::uniform_int_distribution<int> level(0, 9);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int t = 0; t < 500; ++t) {
        const int n = size(rng);
        std::vector<double> s(n);
        std::vector<std::uint8_t> y(n);
        const bool coarse = t % 2 == 0;  // many ties
        for (int i = 0; i < n; ++i) {
            s[i] = coarse ? level(rng) / 10.0 : unit(rng);
            y[i] = unit(rng) < 0.4 ? 1 : 0;
        }
        y[0] = 1;
        y[1] = 0;
        CHECK(auc(s, y) == oracle::pair_count_auc(s, y));
    }
}

TEST_CASE("training config validation") {
    TrainConfig cfg = micro_config(0);
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = micro_config(1);
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK_THROWS_AS(train(micro_config(1), std::vector<InteractionRecord>{}), ConfigError);
}

TEST_CASE("micro dataset is learned") {
    const auto records = micro_records();
    std::ostringstream log;
    TrainOptions opts;
    opts.eval_records = records;
    opts.log = &log;
    const auto result = train(micro_config(300), records, opts);
    const Metrics m = evaluate(result.checkpoint, records);
    CHECK(m.auc == 1.0);
    CHECK(m.logloss < 0.1);
    CHECK(m.num_eval == 4);
    CHECK(result.epochs.back().loss < result.epochs.front().loss);
    CHECK(log.str().rfind("epoch=1 loss=", 0) == 0);
    CHECK(log.str().find("auc=") != std::string::npos);
    CHECK(result.checkpoint.predict_ctr("u1", "a1") > 0.9);
    CHECK_THROWS_AS(result.checkpoint.predict_ctr("u9", "a1"), UnknownEntity);
}

TEST_CASE("training is deterministic") {
    const auto records = micro_records();
    const auto a = train(micro_config(20), records);
    const auto b = train(micro_config(20), records);
    REQUIRE(a.epochs.size() == b.epochs.size());
    for (std::size_t i = 0; i < a.epochs.size(); ++i) CHECK(a.epochs[i].loss == b.epochs[i].loss);
    for (std::size_t m = 0; m < 2; ++m) {
        CHECK(a.checkpoint.params.users[m].data() == b.checkpoint.params.users[m].data());
        CHECK(a.checkpoint.params.ads[m].data() == b.checkpoint.params.ads[m].data());
    }
    CHECK(a.checkpoint.params.fusion == b.checkpoint.params.fusion);

    TrainConfig other = micro_config(20);
    other.model.seed = 7;
    CHECK_FALSE(train(other, records).epochs.back().loss == a.epochs.back().loss);
}

TEST_CASE("evaluation does not change training") {
    const auto records = micro_records();
    TrainOptions opts;
    opts.eval_records = records;
    const auto with_eval = train(micro_config(10), records, opts);
    const auto without = train(micro_config(10), records);
    CHECK(with_eval.epochs.back().loss == without.epochs.back().loss);
    CHECK(with_eval.checkpoint.params.fusion == without.checkpoint.params.fusion);
}

TEST_CASE("evaluation skips unknown ids and rejects degenerate sets") {
    const auto records = micro_records();
    const auto result = train(micro_config(5), records);
    std::vector<InteractionRecord> eval = records;
    eval.push_back({"ghost", "a1", 1, {}});
    const Metrics m = evaluate(result.checkpoint, eval);
    CHECK(m.num_eval == 4);
    CHECK(m.num_skipped == 1);
    CHECK(evaluate(result.checkpoint, eval, 3).auc == m.auc);

    try {
        evaluate(result.checkpoint, std::vector<InteractionRecord>{{"x", "y", 1, {}}});
        FAIL("expected DegenerateLabels");
    } catch (const DegenerateLabels& e) {
        CHECK(e.num_eval() == 0);
    }
}

TEST_CASE("a constant model scores half AUC and ln 2 loss") {
    auto result = train(micro_config(1), micro_records());
    auto& p = result.checkpoint.params;
    for (std::size_t m = 0; m < 2; ++m) {
        for (std::size_t r = 0; r < 2; ++r) {
            p.users[m].store_row(r, std::vector<double>{0.0, 0.0});
            p.ads[m].store_row(r, std::vector<double>{0.0, 0.0});
        }
    }
    p.fusion = FusionParams::neutral(2);
    const Metrics m = evaluate(result.checkpoint, micro_records());
    CHECK(m.auc == 0.5);
    CHECK(m.logloss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("training loss falls on the tree dataset") {
    SyntheticTreeSpec spec;
    spec.depth = 4;
    spec.branching = 3;
    spec.users_per_leaf = 2;
    const auto ds = generate_tree_dataset(spec);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.model.manifolds = {ManifoldSpec::poincare(4, 1.0)};
    const auto result = train(cfg, ds.records);
    CHECK(result.epochs.front().loss == doctest::Approx(std::log(2.0)).epsilon(0.05));
    CHECK(result.epochs.back().loss < result.epochs.front().loss);
}

TEST_CASE("linear schedule and tangent-origin mode train") {
    TrainConfig cfg = micro_config(200);
    cfg.optimizer.lr_schedule = LrSchedule::Linear;
    cfg.model.update_mode = UpdateMode::TangentOrigin;
    const auto result = train(cfg, micro_records());
    CHECK(evaluate(result.checkpoint, micro_records()).auc == 1.0);
}
