#pragma once

/** \file serving.hpp
 *  \brief Exact top-K ad retrieval from a checkpoint.
 *
 * Every ad in the catalog is scored with its click probability; ties are
 * broken by ascending ad index so results are fully deterministic.
 */

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mmctr/trainer.hpp"

namespace mmctr {

struct RankedAd {
    std::string ad;
    std::size_t ad_index{0};
    double score{0.0};

    friend bool operator==(const RankedAd&, const RankedAd&) = default;
};

struct RankedAds {
    std::string user;
    std::size_t k{0};
    std::vector<RankedAd> ads;  ///< descending score, length min(k, catalog size)

    friend bool operator==(const RankedAds&, const RankedAds&) = default;
};

/// Scores the full catalog against users of one checkpoint. Holds
/// double-precision copies of the tables; immutable after construction and
/// safe to query from any number of threads.
class AdRanker {
public:
    explicit AdRanker(const ModelCheckpoint& checkpoint);

    std::size_t num_ads() const noexcept { return num_ads_; }

    /// Throws UnknownEntity for an unknown user, ConfigError for k == 0.
    RankedAds topk(const std::string& user, std::size_t k) const;

    /// Element-wise topk; UnknownEntity carries the position of the first bad user.
    std::vector<RankedAds> batch_topk(std::span<const std::string> users, std::size_t k,
                                      std::size_t threads = 1) const;

private:
    RankedAds rank(std::size_t user_index, const std::string& user, std::size_t k) const;

    const ModelCheckpoint& checkpoint_;
    ManifoldSet set_;
    std::size_t num_ads_;
    std::vector<double> user_rows_;  ///< concatenated per user
    std::vector<double> ad_rows_;    ///< concatenated per ad
};

RankedAds topk(const ModelCheckpoint& checkpoint, const std::string& user, std::size_t k);

std::vector<RankedAds> batch_topk(const ModelCheckpoint& checkpoint,
                                  std::span<const std::string> users, std::size_t k,
                                  std::size_t threads = 1);

/// `user_id<TAB>rank<TAB>ad_id<TAB>score` per line, rank from 1, score with 6 decimals.
void write_ranked(std::ostream& out, const RankedAds& ranked);

}  // namespace mmctr
