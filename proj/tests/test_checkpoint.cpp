#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mmctr/checkpoint.hpp"
#include "mmctr/errors.hpp"

using namespace mmctr;
namespace fs = std::filesystem;

namespace {

ModelCheckpoint trained() {
    SyntheticTreeSpec spec;
    spec.depth = 3;
    spec.users_per_leaf = 2;
    const auto ds = generate_tree_dataset(spec);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.optimizer.learning_rate = 0.3;
    cfg.model.manifolds = {ManifoldSpec::euclidean(3), ManifoldSpec::poincare(2, 0.7)};
    return train(cfg, ds.records).checkpoint;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path temp(const std::string& name) { return fs::temp_directory_path() / name; }

template <typename Fn>
std::string format_field(Fn&& fn) {
    try {
        fn();
    } catch (const FormatError& e) {
        return e.field();
    }
    return "<none>";
}

}  // namespace

TEST_CASE("round trip preserves every parameter bit for bit") {
    const ModelCheckpoint ckpt = trained();
    const auto path = temp("mmctr_ckpt_roundtrip.json");
    save_checkpoint(ckpt, path);
    const ModelCheckpoint back = load_checkpoint(path);

    CHECK(back.vocab == ckpt.vocab);
    CHECK(back.config.model.manifolds == ckpt.config.model.manifolds);
    CHECK(back.config.epochs == ckpt.config.epochs);
    CHECK(back.config.optimizer.learning_rate == ckpt.config.optimizer.learning_rate);
    for (std::size_t m = 0; m < 2; ++m) {
        const auto& a = ckpt.params.users[m].data();
        const auto& b = back.params.users[m].data();
        REQUIRE(a.size() == b.size());
        CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
        CHECK(ckpt.params.ads[m].data() == back.params.ads[m].data());
    }
    CHECK(back.params.fusion == ckpt.params.fusion);

    SyntheticTreeSpec spec;
    spec.depth = 3;
    spec.users_per_leaf = 2;
    spec.seed = 5;
    const auto eval = generate_tree_dataset(spec).records;
    const Metrics m1 = evaluate(ckpt, eval);
    const Metrics m2 = evaluate(back, eval);
    CHECK(m1.auc == m2.auc);
    CHECK(m1.logloss == m2.logloss);

    const auto again = temp("mmctr_ckpt_roundtrip2.json");
    save_checkpoint(back, again);
    CHECK(read_file(path) == read_file(again));
    fs::remove(path);
    fs::remove(again);
}

TEST_CASE("checkpoint documents carry the expected fields") {
    const Json j = checkpoint_to_json(trained());
    CHECK(j["version"] == "1");
    for (const char* key : {"model_config", "train_config", "manifolds", "vocab", "user_tables", "ad_tables", "fusion"}) {
        CHECK(j.contains(key));
    }
    CHECK(j["fusion"]["attention"].size() == 2);
    CHECK(j["manifolds"][1]["kind"] == "poincare");
}

TEST_CASE("truncated and malformed files") {
    const auto path = temp("mmctr_ckpt_trunc.json");
    save_checkpoint(trained(), path);
    const std::string full = read_file(path);
    std::ofstream(path, std::ios::binary | std::ios::trunc) << full.substr(0, full.size() / 2);
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);
    std::ofstream(path, std::ios::binary | std::ios::trunc) << "";
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);
    fs::remove(path);
    CHECK_THROWS_AS(load_checkpoint(temp("mmctr_no_such_ckpt.json")), IoError);
}

TEST_CASE("version checks") {
    Json j = checkpoint_to_json(trained());
    j["version"] = "999";
    CHECK_THROWS_AS(checkpoint_from_json(j), VersionError);
    j["version"] = 1;
    CHECK_THROWS_AS(checkpoint_from_json(j), VersionError);
    j.erase("version");
    CHECK(format_field([&] { checkpoint_from_json(j); }) == "/version");
}

TEST_CASE("field errors carry a JSON pointer") {
    const Json good = checkpoint_to_json(trained());

    Json j = good;
    j.erase("fusion");
    CHECK(format_field([&] { checkpoint_from_json(j); }) == "/fusion");

    j = good;
    j["user_tables"][1][0] = 0.1;  // not representable in single precision
    CHECK(format_field([&] { checkpoint_from_json(j); }) == "/user_tables/1/0");

    j = good;
    j["ad_tables"][1][0] = 5.0;  // outside the ball
    CHECK(format_field([&] { checkpoint_from_json(j); }).rfind("/ad_tables/1", 0) == 0);

    j = good;
    j["ad_tables"][0].erase(0);
    CHECK(format_field([&] { checkpoint_from_json(j); }) == "/ad_tables/0");

    j = good;
    j["vocab"]["users"][1] = j["vocab"]["users"][0];
    CHECK(format_field([&] { checkpoint_from_json(j); }) == "/vocab/users");

    j = good;
    j["train_config"]["epochs"] = 0;
    CHECK(format_field([&] { checkpoint_from_json(j); }) == "/train_config/epochs");

    j = good;
    j["fusion"]["manifold_scale"][0] = -1.0;
    CHECK(format_field([&] { checkpoint_from_json(j); }).rfind("/fusion", 0) == 0);

    j = good;
    j["manifolds"][0]["kind"] = "klein";
    CHECK(format_field([&] { checkpoint_from_json(j); }).rfind("/manifolds/0", 0) == 0);
}
