#include "mmctr/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "mmctr/errors.hpp"
#include "mmctr/rng.hpp"

namespace mmctr {

InteractionRecord parse_interaction_line(std::string_view line, std::size_t line_no) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    if (fields.size() != 3 && fields.size() != 4) {
        throw ParseError(line_no, "expected 3 or 4 comma-separated fields, got " +
                                      std::to_string(fields.size()));
    }
    if (fields[0].empty()) throw ParseError(line_no, "empty user id");
    if (fields[1].empty()) throw ParseError(line_no, "empty ad id");
    InteractionRecord rec;
    rec.user = std::string(fields[0]);
    rec.ad = std::string(fields[1]);
    if (fields[2] == "0") {
        rec.label = 0;
    } else if (fields[2] == "1") {
        rec.label = 1;
    } else {
        throw ParseError(line_no, "label must be 0 or 1, got '" + std::string(fields[2]) + "'");
    }
    if (fields.size() == 4) {
        std::int64_t ts = 0;
        const auto f = fields[3];
        const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), ts);
        if (f.empty() || ec != std::errc{} || ptr != f.data() + f.size()) {
            throw ParseError(line_no, "timestamp must be a decimal integer, got '" +
                                          std::string(f) + "'");
        }
        rec.timestamp = ts;
    }
    return rec;
}

InteractionLog read_interactions(std::istream& in, OnBadLine policy) {
    InteractionLog log;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r" || line.front() == '#') continue;
        try {
            log.records.push_back(parse_interaction_line(line, line_no));
        } catch (const ParseError&) {
            if (policy == OnBadLine::Throw) throw;
            log.rejected_lines.push_back(line_no);
        }
    }
    if (in.bad()) throw IoError("read error after line " + std::to_string(line_no));
    return log;
}

InteractionLog load_interactions(const std::filesystem::path& path, OnBadLine policy) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open interaction log '" + path.string() + "'");
    return read_interactions(in, policy);
}

void write_interactions(std::ostream& out, std::span<const InteractionRecord> records) {
    for (const auto& r : records) {
        for (const auto* id : {&r.user, &r.ad}) {
            if (id->empty() || id->find_first_of(",\r\n") != std::string::npos) {
                throw ConfigError("id '" + *id + "' cannot be written to the CSV log");
            }
        }
        if (r.user.front() == '#') throw ConfigError("user id '" + r.user + "' starts with '#'");
        if (r.label != 0 && r.label != 1) throw ConfigError("label must be 0 or 1");
        out << r.user << ',' << r.ad << ',' << r.label;
        if (r.timestamp) out << ',' << *r.timestamp;
        out << '\n';
    }
}

void write_interactions(const std::filesystem::path& path,
                        std::span<const InteractionRecord> records) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    write_interactions(out, records);
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::optional<IdIndex> IdIndex::from_ids(std::vector<std::string> ids) {
    IdIndex out;
    for (auto& id : ids) {
        if (out.index_.count(id) != 0) return std::nullopt;
        out.index_.emplace(id, out.ids_.size());
        out.ids_.push_back(std::move(id));
        out.counts_.push_back(0);
    }
    return out;
}

std::size_t IdIndex::observe(const std::string& id) {
    auto [it, inserted] = index_.try_emplace(id, ids_.size());
    if (inserted) {
        ids_.push_back(id);
        counts_.push_back(0);
    }
    ++counts_[it->second];
    return it->second;
}

std::optional<std::size_t> IdIndex::find(std::string_view id) const {
    const auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

Vocab build_vocab(std::span<const InteractionRecord> records) {
    Vocab v;
    for (const auto& r : records) {
        v.users.observe(r.user);
        v.ads.observe(r.ad);
    }
    return v;
}

std::vector<Example> index_records(std::span<const InteractionRecord> records, const Vocab& vocab) {
    std::vector<Example> out;
    out.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto u = vocab.users.find(records[i].user);
        if (!u) throw UnknownEntity("unknown user '" + records[i].user + "'", i);
        const auto a = vocab.ads.find(records[i].ad);
        if (!a) throw UnknownEntity("unknown ad '" + records[i].ad + "'", i);
        out.push_back({static_cast<std::uint32_t>(*u), static_cast<std::uint32_t>(*a),
                       static_cast<std::uint8_t>(records[i].label)});
    }
    return out;
}

std::vector<Example> sample_negatives(std::span<const Example> examples, const Vocab& vocab,
                                      std::size_t k, std::uint64_t seed) {
    if (k < 1) throw ConfigError("negatives_per_positive must be >= 1");
    const std::size_t num_ads = vocab.ads.size();
    if (num_ads < 2) throw ConfigError("negative sampling needs at least 2 ads in the vocabulary");
    Rng rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, num_ads - 2);
    std::vector<Example> out;
    const auto positives =
        std::count_if(examples.begin(), examples.end(), [](const Example& e) { return e.label == 1; });
    out.reserve(examples.size() + static_cast<std::size_t>(positives) * k);
    for (const auto& e : examples) {
        out.push_back(e);
        if (e.label != 1) continue;
        for (std::size_t j = 0; j < k; ++j) {
            std::size_t ad = pick(rng);
            if (ad >= e.ad) ++ad;
            out.push_back({e.user, static_cast<std::uint32_t>(ad), 0});
        }
    }
    return out;
}

void SyntheticTreeSpec::validate() const {
    if (depth < 1) throw ConfigError("depth: must be >= 1");
    if (branching < 2) throw ConfigError("branching: must be >= 2");
    if (users_per_leaf < 1) throw ConfigError("users_per_leaf: must be >= 1");
    if (!(click_noise >= 0.0 && click_noise < 0.5)) {
        throw ConfigError("noise: must lie in [0, 0.5)");
    }
    // Guard against sizes that cannot be materialized.
    const double nodes = (std::pow(static_cast<double>(branching), static_cast<double>(depth) + 1) - 1) /
                         static_cast<double>(branching - 1);
    if (nodes > 1e7) throw ConfigError("tree with " + std::to_string(nodes) + " nodes is too large");
}

std::size_t SyntheticTreeSpec::num_ads() const {
    std::size_t total = 0;
    std::size_t level = 1;
    for (std::size_t d = 0; d <= depth; ++d) {
        total += level;
        level *= branching;
    }
    return total;
}

std::string tree_ad_id(std::size_t node) { return "ad" + std::to_string(node); }
std::string tree_user_id(std::size_t user) { return "user" + std::to_string(user); }

TreeDataset generate_tree_dataset(const SyntheticTreeSpec& spec) {
    spec.validate();
    TreeDataset ds;
    ds.num_ads = spec.num_ads();
    const std::size_t b = spec.branching;
    // Breadth-first numbering: children of node i are b*i + 1 .. b*i + b.
    for (std::size_t child = 1; child < ds.num_ads; ++child) {
        ds.edges.emplace_back(tree_ad_id((child - 1) / b), tree_ad_id(child));
    }
    std::size_t num_leaves = 1;
    for (std::size_t d = 0; d < spec.depth; ++d) num_leaves *= b;
    const std::size_t first_leaf = ds.num_ads - num_leaves;
    ds.num_users = num_leaves * spec.users_per_leaf;

    Rng rng(derive_seed(spec.seed, "tree"));
    std::bernoulli_distribution on_path_click(1.0 - spec.click_noise);
    std::bernoulli_distribution off_path_click(spec.click_noise);

    const std::size_t path_len = spec.depth + 1;
    std::vector<std::size_t> path(path_len);
    std::vector<char> on_path(ds.num_ads, 0);
    std::vector<std::size_t> pool;
    pool.reserve(ds.num_ads);
    ds.records.reserve(ds.num_users * 2 * path_len);

    for (std::size_t u = 0; u < ds.num_users; ++u) {
        const std::size_t leaf = first_leaf + u / spec.users_per_leaf;
        std::size_t node = leaf;
        for (std::size_t i = path_len; i-- > 0;) {
            path[i] = node;
            node = node == 0 ? 0 : (node - 1) / b;
        }
        const std::string user = tree_user_id(u);
        for (std::size_t p : path) {
            on_path[p] = 1;
            ds.records.push_back({user, tree_ad_id(p), on_path_click(rng) ? 1 : 0, std::nullopt});
        }
        pool.clear();
        for (std::size_t a = 0; a < ds.num_ads; ++a) {
            if (!on_path[a]) pool.push_back(a);
        }
        const std::size_t take = std::min(path_len, pool.size());
        for (std::size_t i = 0; i < take; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
            std::swap(pool[i], pool[pick(rng)]);
            ds.records.push_back(
                {user, tree_ad_id(pool[i]), off_path_click(rng) ? 1 : 0, std::nullopt});
        }
        for (std::size_t p : path) on_path[p] = 0;
    }
    return ds;
}

void write_edges(const std::filesystem::path& path,
                 std::span<const std::pair<std::string, std::string>> edges) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    for (const auto& [parent, child] : edges) out << parent << ',' << child << '\n';
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

DataSplit split_train_test(std::span<const InteractionRecord> records, double test_fraction,
                           std::uint64_t seed) {
    if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
        throw ConfigError("test_fraction: must lie in [0, 1)");
    }
    const std::size_t n = records.size();
    const auto num_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    const bool timed = n > 0 && std::all_of(records.begin(), records.end(),
                                            [](const InteractionRecord& r) { return r.timestamp.has_value(); });
    if (timed) {
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return *records[a].timestamp < *records[b].timestamp;
        });
        // Latest records go to the test side.
        std::reverse(order.begin(), order.end());
    } else {
        Rng rng(seed);
        std::shuffle(order.begin(), order.end(), rng);
    }
    std::vector<char> is_test(n, 0);
    for (std::size_t i = 0; i < num_test; ++i) is_test[order[i]] = 1;
    DataSplit split;
    split.test.reserve(num_test);
    split.train.reserve(n - num_test);
    for (std::size_t i = 0; i < n; ++i) {
        (is_test[i] ? split.test : split.train).push_back(records[i]);
    }
    return split;
}

}  // namespace mmctr
