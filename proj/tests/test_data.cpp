#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "mmctr/data.hpp"
#include "mmctr/errors.hpp"

using namespace mmctr;

TEST_CASE("parsing interaction lines") {
    const auto r = parse_interaction_line("u1,a7,1", 1);
    CHECK(r == InteractionRecord{"u1", "a7", 1, std::nullopt});
    CHECK(parse_interaction_line("u1,a7,0,1700000000", 1).timestamp == 1700000000);
    CHECK(parse_interaction_line("u1,a7,0\r", 1).label == 0);
    CHECK_THROWS_AS(parse_interaction_line("u1,a7,2", 1), ParseError);
    CHECK_THROWS_AS(parse_interaction_line("u1,a7", 1), ParseError);
    CHECK_THROWS_AS(parse_interaction_line("u1,a7,1,x", 1), ParseError);
    CHECK_THROWS_AS(parse_interaction_line("u1,a7,1,2,3", 1), ParseError);
    CHECK_THROWS_AS(parse_interaction_line(",a7,1", 1), ParseError);
}

TEST_CASE("parse errors name the line") {
    std::istringstream in("u1,a1,1\n# comment\n\nu2,a2,2\n");
    try {
        read_interactions(in);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 4);
    }
    std::istringstream again("u1,a1,1\nbad\nu2,a2,0\n");
    const auto log = read_interactions(again, OnBadLine::Skip);
    CHECK(log.records.size() == 2);
    CHECK(log.rejected_lines == std::vector<std::size_t>{2});
}

TEST_CASE("empty input gives no records") {
    std::istringstream in("");
    CHECK(read_interactions(in).records.empty());
    CHECK_THROWS_AS(load_interactions("/nonexistent/interactions.csv"), IoError);
}

TEST_CASE("write then read round-trips") {
    const std::vector<InteractionRecord> records{
        {"u1", "a1", 1, std::nullopt}, {"u2", "a3", 0, 12}, {"u\xc3\xa9", "ad-9", 1, -4}};
    const auto path = std::filesystem::temp_directory_path() / "mmctr_roundtrip.csv";
    write_interactions(path, records);
    CHECK(load_interactions(path).records == records);
    std::filesystem::remove(path);

    std::ostringstream out;
    CHECK_THROWS_AS(write_interactions(out, std::vector<InteractionRecord>{{"u,1", "a", 1, {}}}), ConfigError);
    CHECK_THROWS_AS(write_interactions(out, std::vector<InteractionRecord>{{"#u", "a", 1, {}}}), ConfigError);
}

TEST_CASE("vocabulary follows first appearance") {
    const std::vector<InteractionRecord> records{{"u1", "a2", 1, {}}, {"u2", "a1", 0, {}}, {"u1", "a1", 1, {}}};
    const Vocab v = build_vocab(records);
    CHECK(v.users.ids() == std::vector<std::string>{"u1", "u2"});
    CHECK(v.ads.ids() == std::vector<std::string>{"a2", "a1"});
    CHECK(v.users.count(0) == 2);
    CHECK(*v.users.find("u2") == 1);
    CHECK_FALSE(v.users.find("u9"));
    CHECK(build_vocab(records) == v);
    CHECK(build_vocab({}).users.empty());
    CHECK_FALSE(IdIndex::from_ids({"x", "y", "x"}));

    const auto examples = index_records(records, v);
    CHECK(examples[2] == Example{0, 1, 1});
    const std::vector<InteractionRecord> unknown{{"u1", "a1", 1, {}}, {"u3", "a1", 1, {}}};
    try {
        index_records(unknown, v);
        FAIL("expected UnknownEntity");
    } catch (const UnknownEntity& e) {
        CHECK(e.position() == 1);
    }
}

TEST_CASE("negative sampling") {
    const std::vector<InteractionRecord> records{{"u1", "a1", 1, {}}, {"u1", "a2", 0, {}}};
    const Vocab v = build_vocab(records);
    const auto base = index_records(records, v);

    const auto batch = sample_negatives(std::span(base).first(1), v, 2, 1);
    REQUIRE(batch.size() == 3);
    CHECK(batch[0].label == 1);
    CHECK(batch[1].label == 0);
    CHECK(batch[2].label == 0);
    CHECK(batch[1].ad == 1);
    CHECK(batch[2].ad == 1);
    CHECK(sample_negatives(base, v, 3, 9) == sample_negatives(base, v, 3, 9));
    CHECK_THROWS_AS(sample_negatives(base, v, 0, 1), ConfigError);
}

TEST_CASE("negative sampling never returns the positive ad and covers the rest") {
    std::vector<InteractionRecord> records;
    for (int a = 0; a < 10; ++a) records.push_back({"u", "a" + std::to_string(a), 1, {}});
    const Vocab v = build_vocab(records);
    const auto base = index_records(records, v);
    const auto batch = sample_negatives(base, v, 50, 3);
    std::map<std::uint32_t, std::set<std::uint32_t>> seen;
    std::uint32_t current = 0;
    for (const auto& e : batch) {
        if (e.label == 1) {
            current = e.ad;
            continue;
        }
        CHECK(e.ad != current);
        seen[current].insert(e.ad);
    }
    for (const auto& [pos, negs] : seen) CHECK(negs.size() == 9);
}

TEST_CASE("tree dataset shape") {
    SyntheticTreeSpec spec;
    spec.depth = 2;
    spec.branching = 2;
    spec.users_per_leaf = 3;
    const auto ds = generate_tree_dataset(spec);
    CHECK(ds.num_ads == 7);
    CHECK(ds.edges.size() == 6);
    CHECK(ds.num_users == 12);
    CHECK(ds.edges.front() == std::pair<std::string, std::string>{tree_ad_id(0), tree_ad_id(1)});

    for (std::size_t depth = 1; depth <= 8; ++depth) {
        for (std::size_t b = 2; b <= 5; ++b) {
            SyntheticTreeSpec s;
            s.depth = depth;
            s.branching = b;
            std::size_t expected = 0;
            std::size_t level = 1;
            for (std::size_t i = 0; i <= depth; ++i, level *= b) expected += level;
            CHECK(s.num_ads() == expected);
        }
    }
    CHECK(SyntheticTreeSpec{}.num_ads() == 1093);
}

TEST_CASE("noise-free users click exactly their root-to-leaf path") {
    SyntheticTreeSpec spec;
    spec.depth = 3;
    spec.branching = 3;
    spec.users_per_leaf = 2;
    spec.click_noise = 0.0;
    const auto ds = generate_tree_dataset(spec);

    std::map<std::string, std::string> parent;
    for (const auto& [p, c] : ds.edges) parent[c] = p;
    std::map<std::string, std::set<std::string>> clicked;
    for (const auto& r : ds.records) {
        if (r.label == 1) clicked[r.user].insert(r.ad);
    }
    CHECK(clicked.size() == ds.num_users);
    for (const auto& [user, ads] : clicked) {
        CHECK(ads.size() == spec.depth + 1);
        // The deepest clicked ad must be a leaf whose ancestors are exactly the rest.
        std::set<std::string> path;
        std::string node;
        for (const auto& a : ads) {
            bool is_parent = false;
            for (const auto& b : ads) is_parent = is_parent || (parent.count(b) && parent.at(b) == a);
            if (!is_parent) node = a;
        }
        path.insert(node);
        while (parent.count(node)) {
            node = parent.at(node);
            path.insert(node);
        }
        CHECK(path == ads);
    }
}

TEST_CASE("tree dataset is deterministic per seed") {
    SyntheticTreeSpec spec;
    spec.depth = 3;
    const auto a = generate_tree_dataset(spec);
    const auto b = generate_tree_dataset(spec);
    CHECK(a.records == b.records);
    spec.seed = 43;
    CHECK_FALSE(generate_tree_dataset(spec).records == a.records);
    spec.click_noise = 0.5;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("train/test split") {
    std::vector<InteractionRecord> untimed;
    for (int i = 0; i < 100; ++i) untimed.push_back({"u" + std::to_string(i), "a", i % 2, {}});
    const auto s1 = split_train_test(untimed, 0.1, 5);
    CHECK(s1.test.size() == 10);
    CHECK(s1.train.size() == 90);
    CHECK(split_train_test(untimed, 0.1, 5).test == s1.test);

    std::vector<InteractionRecord> timed;
    for (int i = 0; i < 20; ++i) timed.push_back({"u", "a" + std::to_string(i), 1, (i * 7) % 20});
    const auto s2 = split_train_test(timed, 0.1, 5);
    REQUIRE(s2.test.size() == 2);
    for (const auto& r : s2.test) CHECK(*r.timestamp >= 18);
}
