#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "cwrec/dataset.hpp"

namespace cwrec {

struct TrainingBatch {
    struct Row {
        int u;
        int i;                       // positive anchor
        std::vector<int> negs;       // N draws from the full item set
        std::vector<int> extra_pos;  // M draws from the user's train positives
    };
    std::vector<Row> rows;
    int N = 0;
    int M = 0;
};

// Positive anchors uniform over train pairs; negatives uniform with
// replacement over ALL items (contamination by unlabeled positives is what
// the corrected loss handles); extra positives uniform with replacement
// over the user's train positives.
struct BatchSampler {
    const InteractionDataset* train;
    std::mt19937_64 rng;

    BatchSampler(const InteractionDataset& ds, std::uint64_t seed) : train(&ds), rng(seed) {}

    TrainingBatch next(int batch_size, int N, int M) {
        if (M < 1) throw std::invalid_argument("M must be >= 1");
        std::uniform_int_distribution<std::size_t> pair_dist(0, train->pairs.size() - 1);
        std::uniform_int_distribution<int> item_dist(0, train->num_items - 1);
        TrainingBatch b;
        b.N = N;
        b.M = M;
        b.rows.resize(batch_size);
        for (auto& row : b.rows) {
            auto [u, i] = train->pairs[pair_dist(rng)];
            row.u = u;
            row.i = i;
            row.negs.resize(N);
            for (auto& j : row.negs) j = item_dist(rng);
            const auto& pos = train->user_positives[u];
            std::uniform_int_distribution<std::size_t> pos_dist(0, pos.size() - 1);
            row.extra_pos.resize(M);
            for (auto& k : row.extra_pos) k = pos[pos_dist(rng)];
        }
        return b;
    }
};

inline TrainingBatch sample_batch(const InteractionDataset& train, int batch_size, int N, int M,
                                  std::uint64_t seed) {
    BatchSampler s(train, seed);
    return s.next(batch_size, N, M);
}

enum class PriorMode { constant, per_user_rate, popularity };

struct InvalidConstant : std::runtime_error {
    InvalidConstant() : std::runtime_error("prior constant must lie in [0,1)") {}
};

struct PriorEstimate {
    PriorMode mode = PriorMode::constant;
    std::vector<double> tau_plus;  // per user, each in [0,1)

    double tau_minus(int u) const { return 1.0 - tau_plus[u]; }
};

inline PriorEstimate estimate_prior(const InteractionDataset& train, PriorMode mode,
                                    double constant = 0.1) {
    PriorEstimate p;
    p.mode = mode;
    p.tau_plus.assign(train.num_users, 0.0);
    switch (mode) {
        case PriorMode::constant:
            if (constant < 0 || constant >= 1) throw InvalidConstant();
            for (auto& t : p.tau_plus) t = constant;
            break;
        case PriorMode::per_user_rate:
            for (int u = 0; u < train.num_users; ++u)
                p.tau_plus[u] = static_cast<double>(train.user_positives[u].size()) /
                                static_cast<double>(train.num_items);
            break;
        case PriorMode::popularity: {
            // tau+ = positive mass of the user's items under the empirical
            // item-popularity distribution
            std::vector<double> pop(train.num_items, 0.0);
            double total = 0.0;
            for (auto [u, i] : train.pairs) {
                (void)u;
                pop[i] += 1.0;
                total += 1.0;
            }
            for (int u = 0; u < train.num_users; ++u) {
                double mass = 0.0;
                for (int i : train.user_positives[u]) mass += pop[i];
                p.tau_plus[u] = mass / total;
            }
            break;
        }
    }
    return p;
}

}  // namespace cwrec
