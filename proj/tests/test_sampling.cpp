#include <catch_amalgamated.hpp>

#include <algorithm>
#include <set>

#include "cwrec/sampling.hpp"
#include "support/synth.hpp"

using namespace cwrec;
using cwrec_test::raw;

namespace {
InteractionDataset grid_dataset(int users, int items) {
    std::vector<RawInteraction> raws;
    for (int u = 0; u < users; ++u)
        for (int i = 0; i < items; ++i) raws.push_back(raw(u, i));
    return index_dataset(raws);
}
}  // namespace

TEST_CASE("sample_batch shapes and membership") {
    auto ds = grid_dataset(6, 9);
    auto b = sample_batch(ds, 32, 5, 3, 7);
    REQUIRE(b.rows.size() == 32);
    CHECK(b.N == 5);
    CHECK(b.M == 3);
    for (const auto& row : b.rows) {
        CHECK(row.u >= 0);
        CHECK(row.u < ds.num_users);
        // anchor is a genuine train pair
        const auto& pos = ds.user_positives[row.u];
        CHECK(std::binary_search(pos.begin(), pos.end(), row.i));
        REQUIRE(row.negs.size() == 5);
        for (int j : row.negs) {
            CHECK(j >= 0);
            CHECK(j < ds.num_items);
        }
        REQUIRE(row.extra_pos.size() == 3);
        for (int k : row.extra_pos) CHECK(std::binary_search(pos.begin(), pos.end(), k));
    }
    CHECK_THROWS_AS(sample_batch(ds, 4, 5, 0, 7), std::invalid_argument);
}

TEST_CASE("sampling is deterministic per seed and advances state") {
    auto ds = grid_dataset(5, 8);
    auto a = sample_batch(ds, 16, 4, 2, 11);
    auto b = sample_batch(ds, 16, 4, 2, 11);
    REQUIRE(a.rows.size() == b.rows.size());
    for (std::size_t r = 0; r < a.rows.size(); ++r) {
        CHECK(a.rows[r].u == b.rows[r].u);
        CHECK(a.rows[r].i == b.rows[r].i);
        CHECK(a.rows[r].negs == b.rows[r].negs);
        CHECK(a.rows[r].extra_pos == b.rows[r].extra_pos);
    }
    BatchSampler s(ds, 11);
    auto first = s.next(16, 4, 2);
    auto second = s.next(16, 4, 2);
    bool differ = false;
    for (std::size_t r = 0; r < first.rows.size() && !differ; ++r)
        differ = first.rows[r].negs != second.rows[r].negs;
    CHECK(differ);
}

TEST_CASE("negatives are uniform over all items, positives included") {
    // user 0 likes items 0..3 out of 10; negatives must still hit 0..3 at
    // roughly uniform rate (contamination is intentional)
    std::vector<RawInteraction> raws;
    for (int i = 0; i < 4; ++i) raws.push_back(raw(0, i));
    for (int i = 0; i < 10; ++i) raws.push_back(raw(1, i));
    auto ds = index_dataset(raws);

    BatchSampler s(ds, 3);
    std::vector<int> counts(ds.num_items, 0);
    int total = 0;
    for (int rep = 0; rep < 200; ++rep) {
        auto b = s.next(8, 10, 1);
        for (const auto& row : b.rows)
            for (int j : row.negs) {
                ++counts[j];
                ++total;
            }
    }
    const double expect = static_cast<double>(total) / ds.num_items;
    double chi2 = 0.0;
    for (int c : counts) chi2 += (c - expect) * (c - expect) / expect;
    CHECK(chi2 < 36.191);  // chi-square df=9 would be 21.67; keep slack at df=19 level
    for (int c : counts) CHECK(c > 0);
}

TEST_CASE("estimate_prior constant mode") {
    auto ds = grid_dataset(4, 6);
    auto p = estimate_prior(ds, PriorMode::constant, 0.25);
    REQUIRE(p.tau_plus.size() == 4);
    for (double t : p.tau_plus) CHECK(t == 0.25);
    CHECK(p.tau_minus(0) == 0.75);
    CHECK_THROWS_AS(estimate_prior(ds, PriorMode::constant, 1.0), InvalidConstant);
    CHECK_THROWS_AS(estimate_prior(ds, PriorMode::constant, -0.1), InvalidConstant);
    CHECK_NOTHROW(estimate_prior(ds, PriorMode::constant, 0.0));
}

TEST_CASE("estimate_prior per_user_rate") {
    std::vector<RawInteraction> raws;
    for (int i = 0; i < 2; ++i) raws.push_back(raw(0, i));
    for (int i = 0; i < 5; ++i) raws.push_back(raw(1, i));
    auto ds = index_dataset(raws);
    auto p = estimate_prior(ds, PriorMode::per_user_rate);
    CHECK(p.tau_plus[0] == Catch::Approx(2.0 / 5.0));
    CHECK(p.tau_plus[1] == Catch::Approx(1.0));  // degenerate full-row user
}

TEST_CASE("estimate_prior popularity hand example") {
    // item 0 has 2 interactions, item 1 has 1; total mass 3.
    // user 0 likes {0}: tau+ = 2/3. user 1 likes {0,1}: tau+ = 3/3.
    std::vector<RawInteraction> raws{raw(0, 0), raw(1, 0), raw(1, 1)};
    auto ds = index_dataset(raws);
    auto p = estimate_prior(ds, PriorMode::popularity);
    CHECK(p.tau_plus[0] == Catch::Approx(2.0 / 3.0));
    CHECK(p.tau_plus[1] == Catch::Approx(1.0));
}
