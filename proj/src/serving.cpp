#include "mmctr/serving.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <thread>

#include "mmctr/errors.hpp"

namespace mmctr {

AdRanker::AdRanker(const ModelCheckpoint& checkpoint)
    : checkpoint_(checkpoint),
      set_(checkpoint.params.manifolds()),
      num_ads_(checkpoint.params.num_ads()) {
    const auto& p = checkpoint.params;
    const std::size_t td = set_.total_dim();
    user_rows_.resize(p.num_users() * td);
    ad_rows_.resize(num_ads_ * td);
    for (std::size_t u = 0; u < p.num_users(); ++u) {
        p.gather_user(u, std::span<double>(user_rows_).subspan(u * td, td));
    }
    for (std::size_t a = 0; a < num_ads_; ++a) {
        p.gather_ad(a, std::span<double>(ad_rows_).subspan(a * td, td));
    }
}

RankedAds AdRanker::rank(std::size_t user_index, const std::string& user, std::size_t k) const {
    const std::size_t td = set_.total_dim();
    const std::span<const double> urow(user_rows_.data() + user_index * td, td);
    std::vector<double> scores(num_ads_);
    for (std::size_t a = 0; a < num_ads_; ++a) {
        const std::span<const double> arow(ad_rows_.data() + a * td, td);
        scores[a] = sigmoid(pair_logit(set_, urow, arow, checkpoint_.params.fusion));
    }
    const std::size_t take = std::min(k, num_ads_);
    std::vector<std::size_t> order(num_ads_);
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (scores[a] != scores[b]) return scores[a] > scores[b];
                          return a < b;
                      });
    RankedAds out;
    out.user = user;
    out.k = k;
    out.ads.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        const std::size_t a = order[i];
        out.ads.push_back({checkpoint_.vocab.ads.id(a), a, scores[a]});
    }
    return out;
}

RankedAds AdRanker::topk(const std::string& user, std::size_t k) const {
    if (k == 0) throw ConfigError("k must be >= 1");
    const auto u = checkpoint_.vocab.users.find(user);
    if (!u) throw UnknownEntity("unknown user '" + user + "'");
    return rank(*u, user, k);
}

std::vector<RankedAds> AdRanker::batch_topk(std::span<const std::string> users, std::size_t k,
                                            std::size_t threads) const {
    if (k == 0) throw ConfigError("k must be >= 1");
    std::vector<std::size_t> index(users.size());
    for (std::size_t i = 0; i < users.size(); ++i) {
        const auto u = checkpoint_.vocab.users.find(users[i]);
        if (!u) throw UnknownEntity("unknown user '" + users[i] + "' at position " + std::to_string(i), i);
        index[i] = *u;
    }
    std::vector<RankedAds> out(users.size());
    auto run = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) out[i] = rank(index[i], users[i], k);
    };
    threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(users.size(), 1));
    if (threads == 1) {
        run(0, users.size());
        return out;
    }
    std::vector<std::thread> pool;
    const std::size_t chunk = (users.size() + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
        const std::size_t begin = t * chunk;
        const std::size_t end = std::min(users.size(), begin + chunk);
        if (begin < end) pool.emplace_back(run, begin, end);
    }
    for (auto& th : pool) th.join();
    return out;
}

RankedAds topk(const ModelCheckpoint& checkpoint, const std::string& user, std::size_t k) {
    return AdRanker(checkpoint).topk(user, k);
}

std::vector<RankedAds> batch_topk(const ModelCheckpoint& checkpoint,
                                  std::span<const std::string> users, std::size_t k,
                                  std::size_t threads) {
    return AdRanker(checkpoint).batch_topk(users, k, threads);
}

void write_ranked(std::ostream& out, const RankedAds& ranked) {
    char score[64];
    for (std::size_t i = 0; i < ranked.ads.size(); ++i) {
        std::snprintf(score, sizeof score, "%.6f", ranked.ads[i].score);
        out << ranked.user << '\t' << (i + 1) << '\t' << ranked.ads[i].ad << '\t' << score << '\n';
    }
}

}  // namespace mmctr
