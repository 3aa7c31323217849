#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace cwrec {

struct RawInteraction {
    std::string user_key;
    std::string item_key;
    std::optional<double> rating;
    std::optional<std::int64_t> timestamp;
};

enum class FileFormat { tsv, csv };

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct MalformedLine : std::runtime_error {
    std::size_t line_no;
    explicit MalformedLine(std::size_t line)
        : std::runtime_error("malformed line " + std::to_string(line)), line_no(line) {}
};

struct EmptyAfterFilter : std::runtime_error {
    EmptyAfterFilter() : std::runtime_error("k-core filter removed every interaction") {}
};

struct EmptyInput : std::runtime_error {
    EmptyInput() : std::runtime_error("no interactions to index") {}
};

inline std::vector<RawInteraction> load_interactions(const std::string& path, FileFormat format) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    const char delim = format == FileFormat::tsv ? '\t' : ',';
    std::vector<RawInteraction> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            std::size_t pos = line.find(delim, start);
            fields.push_back(line.substr(start, pos - start));
            if (pos == std::string::npos) break;
            start = pos + 1;
        }
        if (fields.size() < 2 || fields[0].empty() || fields[1].empty())
            throw MalformedLine(line_no);
        RawInteraction r;
        r.user_key = fields[0];
        r.item_key = fields[1];
        try {
            if (fields.size() >= 3 && !fields[2].empty()) r.rating = std::stod(fields[2]);
            if (fields.size() >= 4 && !fields[3].empty()) r.timestamp = std::stoll(fields[3]);
        } catch (const std::exception&) {
            throw MalformedLine(line_no);
        }
        out.push_back(std::move(r));
    }
    return out;
}

// Interactions without a rating are implicit positives and always kept.
inline std::vector<RawInteraction> filter_ratings(std::vector<RawInteraction> raw, double min_rating) {
    raw.erase(std::remove_if(raw.begin(), raw.end(),
                             [&](const RawInteraction& r) {
                                 return r.rating.has_value() && *r.rating < min_rating;
                             }),
              raw.end());
    return raw;
}

// Maximal subset where every surviving user and item has >= k interactions,
// found by pruning degrees to a fixpoint.
inline std::vector<RawInteraction> k_core_filter(std::vector<RawInteraction> raw, int k) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    while (true) {
        std::unordered_map<std::string, int> udeg, ideg;
        for (const auto& r : raw) {
            ++udeg[r.user_key];
            ++ideg[r.item_key];
        }
        auto before = raw.size();
        raw.erase(std::remove_if(raw.begin(), raw.end(),
                                 [&](const RawInteraction& r) {
                                     return udeg[r.user_key] < k || ideg[r.item_key] < k;
                                 }),
                  raw.end());
        if (raw.size() == before) break;
    }
    if (raw.empty()) throw EmptyAfterFilter();
    return raw;
}

struct InteractionDataset {
    int num_users = 0;
    int num_items = 0;
    std::vector<std::pair<int, int>> pairs;            // de-duplicated (user_id, item_id)
    std::vector<std::vector<int>> user_positives;      // sorted ascending per user
    std::vector<std::string> user_keys, item_keys;     // id -> raw key
    std::unordered_map<std::string, int> user_ids, item_ids;

    std::size_t num_interactions() const { return pairs.size(); }
};

// Contiguous ids in first-seen order; duplicate pairs collapsed.
inline InteractionDataset index_dataset(const std::vector<RawInteraction>& raw) {
    if (raw.empty()) throw EmptyInput();
    InteractionDataset ds;
    std::vector<std::unordered_map<int, bool>> seen;
    for (const auto& r : raw) {
        auto [uit, unew] = ds.user_ids.try_emplace(r.user_key, ds.num_users);
        if (unew) {
            ds.user_keys.push_back(r.user_key);
            ++ds.num_users;
            seen.emplace_back();
        }
        auto [iit, inew] = ds.item_ids.try_emplace(r.item_key, ds.num_items);
        if (inew) {
            ds.item_keys.push_back(r.item_key);
            ++ds.num_items;
        }
        int u = uit->second, i = iit->second;
        if (!seen[u].emplace(i, true).second) continue;
        ds.pairs.emplace_back(u, i);
    }
    ds.user_positives.assign(ds.num_users, {});
    for (auto [u, i] : ds.pairs) ds.user_positives[u].push_back(i);
    for (auto& v : ds.user_positives) std::sort(v.begin(), v.end());
    return ds;
}

namespace detail {
inline InteractionDataset make_view(const InteractionDataset& parent,
                                    const std::vector<std::pair<int, int>>& pairs) {
    InteractionDataset v;
    v.num_users = parent.num_users;
    v.num_items = parent.num_items;
    v.pairs = pairs;
    v.user_keys = parent.user_keys;
    v.item_keys = parent.item_keys;
    v.user_ids = parent.user_ids;
    v.item_ids = parent.item_ids;
    v.user_positives.assign(v.num_users, {});
    for (auto [u, i] : v.pairs) v.user_positives[u].push_back(i);
    for (auto& p : v.user_positives) std::sort(p.begin(), p.end());
    return v;
}
}  // namespace detail

struct SplitDataset {
    InteractionDataset train, validation, test;
    std::uint64_t seed = 0;
};

// Per-user random split: ceil(test_frac * |I_u|) pairs to test (keeping at
// least one train pair when the user has >= 2), then val_frac of the
// remaining train pairs to validation.
inline SplitDataset split_dataset(const InteractionDataset& ds, double test_frac,
                                  double val_frac, std::uint64_t seed) {
    if (test_frac < 0 || test_frac >= 1 || val_frac < 0 || val_frac >= 1)
        throw std::invalid_argument("fractions must be in [0,1)");
    std::mt19937_64 rng(seed);
    std::vector<std::pair<int, int>> train_pairs, val_pairs, test_pairs;
    for (int u = 0; u < ds.num_users; ++u) {
        std::vector<int> items = ds.user_positives[u];
        std::shuffle(items.begin(), items.end(), rng);
        std::size_t n = items.size();
        auto n_test = static_cast<std::size_t>(std::ceil(test_frac * static_cast<double>(n)));
        if (n_test >= n) n_test = n - 1;  // always retain one train pair
        std::size_t n_rest = n - n_test;
        auto n_val = static_cast<std::size_t>(std::floor(val_frac * static_cast<double>(n_rest)));
        if (n_rest >= 1 && n_val >= n_rest) n_val = n_rest - 1;
        for (std::size_t s = 0; s < n; ++s) {
            if (s < n_test)
                test_pairs.emplace_back(u, items[s]);
            else if (s < n_test + n_val)
                val_pairs.emplace_back(u, items[s]);
            else
                train_pairs.emplace_back(u, items[s]);
        }
    }
    SplitDataset out;
    out.train = detail::make_view(ds, train_pairs);
    out.validation = detail::make_view(ds, val_pairs);
    out.test = detail::make_view(ds, test_pairs);
    out.seed = seed;
    return out;
}

struct DatasetStats {
    int users = 0;
    int items = 0;
    std::size_t interactions = 0;
    double density = 0.0;
};

inline DatasetStats dataset_stats(const InteractionDataset& ds) {
    DatasetStats s;
    s.users = ds.num_users;
    s.items = ds.num_items;
    s.interactions = ds.pairs.size();
    s.density = ds.num_users > 0 && ds.num_items > 0
                    ? static_cast<double>(s.interactions) /
                          (static_cast<double>(ds.num_users) * ds.num_items)
                    : 0.0;
    return s;
}

}  // namespace cwrec
