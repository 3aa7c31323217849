#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "cwrec/backbone.hpp"
#include "cwrec/dataset.hpp"

namespace cwrec {

struct EmptyGroundTruth : std::runtime_error {
    EmptyGroundTruth() : std::runtime_error("ground truth set is empty") {}
};

// Masked items excluded, remaining sorted by score descending, ties broken
// by ascending item id.
inline std::vector<int> rank_items(const std::vector<double>& scores,
                                   const std::unordered_set<int>& mask) {
    std::vector<int> order;
    order.reserve(scores.size());
    for (int i = 0; i < static_cast<int>(scores.size()); ++i)
        if (!mask.count(i)) order.push_back(i);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return scores[a] > scores[b]; });
    return order;
}

inline double recall_at_k(const std::vector<int>& ranked, const std::unordered_set<int>& truth,
                          int K) {
    if (truth.empty()) throw EmptyGroundTruth();
    const auto top = std::min<std::size_t>(K, ranked.size());
    std::size_t hits = 0;
    for (std::size_t r = 0; r < top; ++r)
        if (truth.count(ranked[r])) ++hits;
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

inline double ndcg_at_k(const std::vector<int>& ranked, const std::unordered_set<int>& truth,
                        int K) {
    if (truth.empty()) throw EmptyGroundTruth();
    const auto top = std::min<std::size_t>(K, ranked.size());
    double dcg = 0.0;
    for (std::size_t r = 0; r < top; ++r)
        if (truth.count(ranked[r])) dcg += 1.0 / std::log2(2.0 + static_cast<double>(r));
    double idcg = 0.0;
    const auto ideal = std::min<std::size_t>(K, truth.size());
    for (std::size_t r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(2.0 + static_cast<double>(r));
    return dcg / idcg;
}

// Unbounded DCG with the Heaviside rank pi(i) = #{j : r_uj >= r_ui}
// (ties count as worse rank, mirroring the analysis-side definition).
inline double dcg_full(const std::vector<double>& scores, const std::unordered_set<int>& positives) {
    if (positives.empty()) throw std::invalid_argument("positives must be non-empty");
    double dcg = 0.0;
    for (int i : positives) {
        std::size_t pi = 0;
        for (double s : scores)
            if (s >= scores[i]) ++pi;
        dcg += 1.0 / std::log2(1.0 + static_cast<double>(pi));
    }
    return dcg;
}

struct RankingReport {
    struct PerUser {
        int user;
        double recall;
        double ndcg;
        int hits;
    };
    int K = 0;
    std::vector<PerUser> per_user;
    double mean_recall = 0.0;
    double mean_ndcg = 0.0;
    int users_evaluated = 0;
};

// Per-user masked ranking; users with empty ground truth are skipped, and
// the aggregates are arithmetic means over evaluated users.
inline RankingReport evaluate(const EmbeddingTable& emb, const InteractionDataset& ground_truth,
                              const InteractionDataset& train_mask, int K) {
    RankingReport rep;
    rep.K = K;
    for (int u = 0; u < ground_truth.num_users; ++u) {
        const auto& gt = ground_truth.user_positives[u];
        if (gt.empty()) continue;
        std::unordered_set<int> truth(gt.begin(), gt.end());
        std::unordered_set<int> mask(train_mask.user_positives[u].begin(),
                                     train_mask.user_positives[u].end());
        auto ranked = rank_items(score_all_items(emb, u), mask);
        const double rec = recall_at_k(ranked, truth, K);
        const double ndcg = ndcg_at_k(ranked, truth, K);
        int hits = 0;
        for (int r = 0; r < std::min<int>(K, ranked.size()); ++r)
            if (truth.count(ranked[r])) ++hits;
        rep.per_user.push_back({u, rec, ndcg, hits});
        rep.mean_recall += rec;
        rep.mean_ndcg += ndcg;
        ++rep.users_evaluated;
    }
    if (rep.users_evaluated > 0) {
        rep.mean_recall /= rep.users_evaluated;
        rep.mean_ndcg /= rep.users_evaluated;
    }
    return rep;
}

inline void write_report_csv(const RankingReport& rep, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "user_id,recall,ndcg\n";
    out.precision(10);
    for (const auto& p : rep.per_user) out << p.user << ',' << p.recall << ',' << p.ndcg << '\n';
    out << "aggregate," << rep.mean_recall << ',' << rep.mean_ndcg << '\n';
}

}  // namespace cwrec
