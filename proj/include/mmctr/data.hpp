#pragma once

/** \file data.hpp
 *  \brief Interaction logs, vocabularies, negative sampling and the synthetic
 *  hierarchical dataset.
 *
 * Interaction log format: UTF-8 CSV without header, one record per line,
 * `user_id,ad_id,label[,timestamp]` with label in {0,1} and an optional
 * decimal timestamp. Blank lines and lines starting with `#` are ignored.
 */

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace mmctr {

struct InteractionRecord {
    std::string user;
    std::string ad;
    int label{0};
    std::optional<std::int64_t> timestamp;

    friend bool operator==(const InteractionRecord&, const InteractionRecord&) = default;
};

/// A record after vocabulary lookup.
struct Example {
    std::uint32_t user{0};
    std::uint32_t ad{0};
    std::uint8_t label{0};

    friend bool operator==(const Example&, const Example&) = default;
};

enum class OnBadLine { Throw, Skip };

struct InteractionLog {
    std::vector<InteractionRecord> records;
    std::vector<std::size_t> rejected_lines;  ///< 1-based; only filled with OnBadLine::Skip
};

/// Parses a single non-comment line. Throws ParseError tagged with `line_no`.
InteractionRecord parse_interaction_line(std::string_view line, std::size_t line_no);

InteractionLog read_interactions(std::istream& in, OnBadLine policy = OnBadLine::Throw);
InteractionLog load_interactions(const std::filesystem::path& path,
                                 OnBadLine policy = OnBadLine::Throw);

void write_interactions(std::ostream& out, std::span<const InteractionRecord> records);
void write_interactions(const std::filesystem::path& path,
                        std::span<const InteractionRecord> records);

/// Dense bijection between string ids and indices [0, n), with occurrence counts.
class IdIndex {
public:
    IdIndex() = default;

    /// Builds from an ordered id list; returns std::nullopt on duplicates.
    static std::optional<IdIndex> from_ids(std::vector<std::string> ids);

    /// Index of `id`, inserting it at the end when unseen. Increments its count.
    std::size_t observe(const std::string& id);

    std::optional<std::size_t> find(std::string_view id) const;
    const std::string& id(std::size_t index) const { return ids_.at(index); }
    const std::vector<std::string>& ids() const noexcept { return ids_; }
    std::size_t count(std::size_t index) const { return counts_.at(index); }
    std::size_t size() const noexcept { return ids_.size(); }
    bool empty() const noexcept { return ids_.empty(); }

    friend bool operator==(const IdIndex& a, const IdIndex& b) { return a.ids_ == b.ids_; }

private:
    struct Hash {
        using is_transparent = void;
        std::size_t operator()(std::string_view s) const noexcept {
            return std::hash<std::string_view>{}(s);
        }
    };

    std::vector<std::string> ids_;
    std::vector<std::size_t> counts_;
    std::unordered_map<std::string, std::size_t, Hash, std::equal_to<>> index_;
};

struct Vocab {
    IdIndex users;
    IdIndex ads;

    friend bool operator==(const Vocab&, const Vocab&) = default;
};

/// First appearance defines the index.
Vocab build_vocab(std::span<const InteractionRecord> records);

/// Throws UnknownEntity (with the record position) for out-of-vocabulary ids.
std::vector<Example> index_records(std::span<const InteractionRecord> records, const Vocab& vocab);

/// Copies `examples` and follows every positive with `k` label-0 examples for
/// the same user and an ad drawn uniformly from the other ads.
std::vector<Example> sample_negatives(std::span<const Example> examples, const Vocab& vocab,
                                      std::size_t k, std::uint64_t seed);

struct SyntheticTreeSpec {
    std::size_t depth{6};
    std::size_t branching{3};
    std::size_t users_per_leaf{20};
    double click_noise{0.1};
    std::uint64_t seed{42};

    void validate() const;
    std::size_t num_ads() const;
};

struct TreeDataset {
    std::vector<InteractionRecord> records;
    std::vector<std::pair<std::string, std::string>> edges;  ///< (parent ad, child ad)
    std::size_t num_ads{0};
    std::size_t num_users{0};
};

/// Ads form a complete `branching`-ary tree of the given depth (breadth-first
/// ids ad0, ad1, ...). Every user gets a home leaf; the depth + 1 ads on its
/// root-to-leaf path are recorded, each clicked with probability
/// 1 - click_noise, along with as many off-path ads, each clicked with
/// probability click_noise.
TreeDataset generate_tree_dataset(const SyntheticTreeSpec& spec);

std::string tree_ad_id(std::size_t node);
std::string tree_user_id(std::size_t user);

void write_edges(const std::filesystem::path& path,
                 std::span<const std::pair<std::string, std::string>> edges);

struct DataSplit {
    std::vector<InteractionRecord> train;
    std::vector<InteractionRecord> test;
};

/// Holds out the latest `test_fraction` of records when every record has a
/// timestamp, otherwise a seeded random subset. Record order is preserved.
DataSplit split_train_test(std::span<const InteractionRecord> records, double test_fraction,
                           std::uint64_t seed);

}  // namespace mmctr
