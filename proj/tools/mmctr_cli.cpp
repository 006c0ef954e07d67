// mmctr: generate synthetic data, train, evaluate, retrieve and self-check
// multi-manifold click models.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "mmctr/checkpoint.hpp"
#include "mmctr/config.hpp"
#include "mmctr/data.hpp"
#include "mmctr/errors.hpp"
#include "mmctr/rng.hpp"
#include "mmctr/selftest.hpp"
#include "mmctr/serving.hpp"
#include "mmctr/trainer.hpp"

namespace fs = std::filesystem;
using namespace mmctr;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct Flags {
    std::string config;
    std::string data;
    std::string eval_data;
    std::string out;
    std::string checkpoint;
    std::size_t depth{6};
    std::size_t branching{3};
    std::size_t users_per_leaf{20};
    double noise{0.1};
    double test_fraction{0.1};
    std::uint64_t seed{42};
    std::size_t threads{1};
    std::size_t k{10};
    std::vector<std::string> users;
};

int run_generate(const Flags& f) {
    SyntheticTreeSpec spec;
    spec.depth = f.depth;
    spec.branching = f.branching;
    spec.users_per_leaf = f.users_per_leaf;
    spec.click_noise = f.noise;
    spec.seed = f.seed;
    const TreeDataset ds = generate_tree_dataset(spec);
    const fs::path dir(f.out);
    fs::create_directories(dir);
    write_interactions(dir / "interactions.csv", ds.records);
    write_edges(dir / "edges.csv", ds.edges);
    const DataSplit split = split_train_test(ds.records, f.test_fraction, derive_seed(f.seed, "split"));
    write_interactions(dir / "train.csv", split.train);
    write_interactions(dir / "test.csv", split.test);
    std::cerr << "generated " << ds.records.size() << " records (" << ds.num_users << " users, "
              << ds.num_ads << " ads, " << ds.edges.size() << " edges) into " << dir.string() << '\n';
    return kExitOk;
}

int run_train(const Flags& f, const CLI::App& cmd) {
    RunConfig cfg = load_run_config(f.config);
    if (cmd.count("--data") != 0) cfg.data = f.data;
    if (cmd.count("--eval-data") != 0) cfg.eval_data = f.eval_data;
    if (cmd.count("--out") != 0) cfg.out = f.out;
    if (cmd.count("--checkpoint") != 0) cfg.out = f.checkpoint;
    if (cmd.count("--seed") != 0) cfg.train.model.seed = f.seed;
    if (!cfg.data) throw ConfigError("no training data: set \"data\" in the config or pass --data");
    if (!cfg.out) throw ConfigError("no checkpoint path: set \"out\" in the config or pass --out");

    const InteractionLog log = load_interactions(*cfg.data);
    InteractionLog eval_log;
    if (cfg.eval_data) eval_log = load_interactions(*cfg.eval_data);

    TrainOptions options;
    options.eval_records = eval_log.records;
    options.log = &std::cout;
    options.eval_threads = f.threads;
    const TrainResult result = train(cfg.train, log.records, options);
    save_checkpoint(result.checkpoint, *cfg.out);
    std::cerr << "wrote checkpoint " << *cfg.out << '\n';
    return kExitOk;
}

int run_eval(const Flags& f) {
    const ModelCheckpoint ckpt = load_checkpoint(f.checkpoint);
    const InteractionLog log = load_interactions(f.data);
    const Metrics m = evaluate(ckpt, log.records, f.threads);
    std::printf("auc=%.6f logloss=%.6f\n", m.auc, m.logloss);
    std::cerr << "num_eval=" << m.num_eval << " skipped=" << m.num_skipped << '\n';
    return kExitOk;
}

int run_topk(const Flags& f) {
    const ModelCheckpoint ckpt = load_checkpoint(f.checkpoint);
    const AdRanker ranker(ckpt);
    const std::vector<std::string>& users = f.users.empty() ? ckpt.vocab.users.ids() : f.users;
    for (const auto& ranked : ranker.batch_topk(users, f.k, f.threads)) write_ranked(std::cout, ranked);
    return kExitOk;
}

int run_selftest(const Flags& f) {
    const auto results = mmctr::run_selftest(f.seed);
    print_results(std::cout, results);
    const bool ok = all_passed(results);
    std::cerr << (ok ? "all properties hold" : "some properties FAILED") << '\n';
    return ok ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-manifold click model toolkit"};
    app.footer("Subcommands: generate, train, eval, topk, selftest");
    app.require_subcommand(1);
    Flags f;

    auto* gen = app.add_subcommand("generate", "write a synthetic hierarchical interaction dataset");
    gen->add_option("--out", f.out, "output directory")->required();
    gen->add_option("--depth", f.depth, "tree depth")->capture_default_str();
    gen->add_option("--branching", f.branching, "children per ad node")->capture_default_str();
    gen->add_option("--users-per-leaf", f.users_per_leaf, "users per leaf ad")->capture_default_str();
    gen->add_option("--noise", f.noise, "click noise in [0, 0.5)")->capture_default_str();
    gen->add_option("--test-fraction", f.test_fraction, "held-out share written to test.csv")->capture_default_str();
    gen->add_option("--seed", f.seed, "master seed")->capture_default_str();
    gen->add_option("--config", f.config, "unused; accepted for symmetry");

    auto* tr = app.add_subcommand("train", "train a model and write a checkpoint");
    tr->add_option("--config", f.config, "run config (JSON)")->required();
    tr->add_option("--data", f.data, "training interactions (overrides config)");
    tr->add_option("--eval-data", f.eval_data, "held-out interactions scored every eval_every epochs");
    tr->add_option("--out", f.out, "checkpoint path (overrides config)");
    tr->add_option("--checkpoint", f.checkpoint, "alias of --out");
    tr->add_option("--seed", f.seed, "master seed (overrides config)");
    tr->add_option("--threads", f.threads, "evaluation threads")->capture_default_str();

    auto* ev = app.add_subcommand("eval", "score interactions with a checkpoint");
    ev->add_option("--checkpoint", f.checkpoint, "checkpoint path")->required();
    ev->add_option("--data", f.data, "interactions to score")->required();
    ev->add_option("--threads", f.threads, "scoring threads")->capture_default_str();

    auto* tk = app.add_subcommand("topk", "rank the ad catalog for users");
    tk->add_option("--checkpoint", f.checkpoint, "checkpoint path")->required();
    tk->add_option("--user", f.users, "user id (repeatable; default: every user)");
    tk->add_option("--k", f.k, "ads per user")->capture_default_str();
    tk->add_option("--threads", f.threads, "query threads")->capture_default_str();

    auto* st = app.add_subcommand("selftest", "run the geometry / optimizer / gradient invariant suite");
    st->add_option("--seed", f.seed, "sampling seed")->capture_default_str();
    st->add_option("--config", f.config, "unused; accepted for symmetry");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try {
        if (gen->parsed()) return run_generate(f);
        if (tr->parsed()) return run_train(f, *tr);
        if (ev->parsed()) return run_eval(f);
        if (tk->parsed()) return run_topk(f);
        if (st->parsed()) return run_selftest(f);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}
