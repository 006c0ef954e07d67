#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "mmctr/config.hpp"
#include "mmctr/errors.hpp"

using namespace mmctr;

namespace {

std::string error_of(const Json& j) {
    try {
        run_config_from_json(j);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

Json minimal() {
    return Json::parse(R"({"model": {"manifolds": [{"kind": "poincare", "dim": 8, "curvature": 1.0}]}})");
}

}  // namespace

TEST_CASE("minimal run config takes defaults") {
    const RunConfig cfg = run_config_from_json(minimal());
    CHECK(cfg.train.epochs == 10);
    CHECK(cfg.train.batch_size == 64);
    CHECK(cfg.train.optimizer.learning_rate == 0.1);
    CHECK(cfg.train.optimizer.lr_schedule == LrSchedule::Constant);
    CHECK(cfg.train.model.seed == 42);
    CHECK(cfg.train.model.manifolds == std::vector<ManifoldSpec>{ManifoldSpec::poincare(8, 1.0)});
    CHECK_FALSE(cfg.data);
}

TEST_CASE("full run config") {
    const Json j = Json::parse(R"({
        "data": "train.csv", "eval_data": "test.csv", "out": "ckpt.json",
        "epochs": 3, "batch_size": 16, "eval_every": 2, "deterministic": true,
        "optimizer": {"learning_rate": 0.5, "lr_schedule": "linear", "ball_eps": 1e-4,
                      "grad_clip": 5.0, "attention_weight_decay": 0.25},
        "model": {"manifolds": [{"kind": "euclidean", "dim": 4},
                                {"kind": "poincare", "dim": 4, "curvature": 2.0}],
                  "negatives_per_positive": 3, "init_scale": 0.05,
                  "update_mode": "tangent_origin", "seed": 7}
    })");
    const RunConfig cfg = run_config_from_json(j);
    CHECK(*cfg.data == "train.csv");
    CHECK(cfg.train.eval_every == 2);
    CHECK(*cfg.train.optimizer.grad_clip == 5.0);
    CHECK(cfg.train.optimizer.attention_weight_decay == 0.25);
    CHECK(cfg.train.optimizer.lr_schedule == LrSchedule::Linear);
    CHECK(cfg.train.model.update_mode == UpdateMode::TangentOrigin);
    CHECK(cfg.train.model.manifolds[1] == ManifoldSpec::poincare(4, 2.0));

    const RunConfig again = run_config_from_json(to_json(cfg));
    CHECK(to_json(again) == to_json(cfg));
}

TEST_CASE("config errors name the offending key") {
    Json j = minimal();
    j["epochs"] = 0;
    CHECK(error_of(j).rfind("/epochs:", 0) == 0);

    j = minimal();
    j["optimizer"] = Json{{"learning_rate", -1.0}};
    CHECK(error_of(j).rfind("/optimizer/learning_rate:", 0) == 0);

    j = minimal();
    j["optimizer"] = Json{{"lr_schedule", "cosine"}};
    CHECK(error_of(j).rfind("/optimizer/lr_schedule:", 0) == 0);

    j = minimal();
    j["model"]["manifolds"][0]["curvature"] = -1.0;
    CHECK(error_of(j).rfind("/model/manifolds/0", 0) == 0);

    j = minimal();
    j["model"]["init_scale"] = 0.5;
    CHECK(error_of(j).rfind("/model/init_scale:", 0) == 0);

    j = minimal();
    j["batchsize"] = 3;
    CHECK(error_of(j) == "/batchsize: unknown key");

    j = minimal();
    j["model"]["extra"] = 1;
    CHECK(error_of(j) == "/model/extra: unknown key");

    CHECK(error_of(Json::parse(R"({"epochs": 3})")).rfind("/model:", 0) == 0);

    j = minimal();
    j["epochs"] = "ten";
    CHECK(error_of(j).rfind("/epochs:", 0) == 0);
}

TEST_CASE("config files resolve paths next to themselves") {
    const auto dir = std::filesystem::temp_directory_path() / "mmctr_config_test";
    std::filesystem::create_directories(dir);
    Json j = minimal();
    j["data"] = "train.csv";
    j["out"] = "/abs/ckpt.json";
    std::ofstream(dir / "run.json") << j.dump();
    const RunConfig cfg = load_run_config((dir / "run.json").string());
    CHECK(*cfg.data == (dir / "train.csv").string());
    CHECK(*cfg.out == "/abs/ckpt.json");

    std::ofstream(dir / "bad.json") << "{ not json";
    CHECK_THROWS_AS(load_run_config((dir / "bad.json").string()), ConfigError);
    CHECK_THROWS_AS(load_run_config((dir / "missing.json").string()), IoError);
    std::filesystem::remove_all(dir);
}
