#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "cwrec/dataset.hpp"

namespace cwrec {

enum class BackboneKind { MF, LightGCN, XSimGCL };

inline std::string to_string(BackboneKind k) {
    switch (k) {
        case BackboneKind::MF: return "MF";
        case BackboneKind::LightGCN: return "LightGCN";
        default: return "XSimGCL";
    }
}

struct ZeroNormVector : std::runtime_error {
    ZeroNormVector() : std::runtime_error("embedding vector has zero norm") {}
};

struct DimensionMismatch : std::runtime_error {
    DimensionMismatch() : std::runtime_error("adjacency/embedding dimension mismatch") {}
};

struct EmbeddingTable {
    int num_users = 0;
    int num_items = 0;
    int d = 0;
    std::vector<double> user_vecs;  // row-major [num_users x d]
    std::vector<double> item_vecs;  // row-major [num_items x d]

    double* user_row(int u) { return user_vecs.data() + static_cast<std::size_t>(u) * d; }
    const double* user_row(int u) const { return user_vecs.data() + static_cast<std::size_t>(u) * d; }
    double* item_row(int i) { return item_vecs.data() + static_cast<std::size_t>(i) * d; }
    const double* item_row(int i) const { return item_vecs.data() + static_cast<std::size_t>(i) * d; }
};

inline EmbeddingTable init_embeddings(int num_users, int num_items, int d, std::uint64_t seed,
                                      double scale) {
    if (d < 1) throw std::invalid_argument("d must be >= 1");
    EmbeddingTable t;
    t.num_users = num_users;
    t.num_items = num_items;
    t.d = d;
    t.user_vecs.resize(static_cast<std::size_t>(num_users) * d);
    t.item_vecs.resize(static_cast<std::size_t>(num_items) * d);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (auto& x : t.user_vecs) x = scale * dist(rng);
    for (auto& x : t.item_vecs) x = scale * dist(rng);
    return t;
}

inline double default_init_scale(int d) { return 0.1 / std::sqrt(static_cast<double>(d)); }

// Symmetric normalized user-item adjacency over (num_users + num_items)
// nodes: entry (u, i) = 1/sqrt(deg(u) deg(i)), zero diagonal, no self loops.
// Users occupy nodes [0, num_users), items [num_users, num_users + num_items).
struct NormalizedAdjacency {
    int num_users = 0;
    int num_items = 0;
    std::vector<std::size_t> indptr;  // CSR over all nodes
    std::vector<int> indices;
    std::vector<double> values;

    int num_nodes() const { return num_users + num_items; }

    // y = A x for a dense [num_nodes x d] matrix, row-major
    void multiply(const std::vector<double>& x, std::vector<double>& y, int d) const {
        const auto n = static_cast<std::size_t>(num_nodes());
        if (x.size() != n * d) throw DimensionMismatch();
        y.assign(n * d, 0.0);
        for (std::size_t row = 0; row < n; ++row) {
            double* yr = y.data() + row * d;
            for (std::size_t e = indptr[row]; e < indptr[row + 1]; ++e) {
                const double w = values[e];
                const double* xr = x.data() + static_cast<std::size_t>(indices[e]) * d;
                for (int c = 0; c < d; ++c) yr[c] += w * xr[c];
            }
        }
    }
};

inline NormalizedAdjacency build_adjacency(const InteractionDataset& train) {
    NormalizedAdjacency a;
    a.num_users = train.num_users;
    a.num_items = train.num_items;
    const int n = a.num_nodes();
    std::vector<int> deg(n, 0);
    for (auto [u, i] : train.pairs) {
        ++deg[u];
        ++deg[train.num_users + i];
    }
    std::vector<std::vector<std::pair<int, double>>> rows(n);
    for (auto [u, i] : train.pairs) {
        const int iu = u, ii = train.num_users + i;
        const double w = 1.0 / std::sqrt(static_cast<double>(deg[iu]) * deg[ii]);
        rows[iu].emplace_back(ii, w);
        rows[ii].emplace_back(iu, w);
    }
    a.indptr.assign(n + 1, 0);
    for (int r = 0; r < n; ++r) a.indptr[r + 1] = a.indptr[r] + rows[r].size();
    a.indices.resize(a.indptr[n]);
    a.values.resize(a.indptr[n]);
    for (int r = 0; r < n; ++r) {
        std::sort(rows[r].begin(), rows[r].end());
        std::size_t e = a.indptr[r];
        for (auto [c, w] : rows[r]) {
            a.indices[e] = c;
            a.values[e] = w;
            ++e;
        }
    }
    return a;
}

struct PropagateResult {
    EmbeddingTable final;
    std::vector<EmbeddingTable> per_layer;  // E(0) .. E(L)
};

namespace detail {
inline std::vector<double> stack_nodes(const EmbeddingTable& t) {
    std::vector<double> x;
    x.reserve(t.user_vecs.size() + t.item_vecs.size());
    x.insert(x.end(), t.user_vecs.begin(), t.user_vecs.end());
    x.insert(x.end(), t.item_vecs.begin(), t.item_vecs.end());
    return x;
}

inline EmbeddingTable unstack_nodes(const std::vector<double>& x, int nu, int ni, int d) {
    EmbeddingTable t;
    t.num_users = nu;
    t.num_items = ni;
    t.d = d;
    t.user_vecs.assign(x.begin(), x.begin() + static_cast<std::size_t>(nu) * d);
    t.item_vecs.assign(x.begin() + static_cast<std::size_t>(nu) * d, x.end());
    return t;
}

// XSimGCL-style row perturbation: delta = eps * sign(row) .* |xi| / ||xi||
inline void add_sign_aligned_noise(std::vector<double>& x, int d, double eps,
                                   std::mt19937_64& rng) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const std::size_t rows = x.size() / d;
    std::vector<double> xi(d);
    for (std::size_t r = 0; r < rows; ++r) {
        double norm2 = 0.0;
        for (int c = 0; c < d; ++c) {
            xi[c] = uni(rng);
            norm2 += xi[c] * xi[c];
        }
        const double inv = 1.0 / std::max(std::sqrt(norm2), 1e-12);
        double* row = x.data() + r * d;
        for (int c = 0; c < d; ++c) {
            const double s = row[c] >= 0.0 ? 1.0 : -1.0;
            row[c] += eps * s * xi[c] * inv;
        }
    }
}
}  // namespace detail

// E(0) = base; E(k+1) = A E(k) (+ sign-aligned noise when noise_eps > 0);
// final = mean of E(0)..E(L).
inline PropagateResult propagate(const EmbeddingTable& base, const NormalizedAdjacency& adj,
                                 int layers, double noise_eps, std::uint64_t seed) {
    if (adj.num_users != base.num_users || adj.num_items != base.num_items)
        throw DimensionMismatch();
    const int d = base.d;
    std::mt19937_64 rng(seed);
    PropagateResult out;
    out.per_layer.reserve(layers + 1);
    out.per_layer.push_back(base);
    std::vector<double> cur = detail::stack_nodes(base);
    std::vector<double> mean = cur;
    std::vector<double> next;
    for (int l = 0; l < layers; ++l) {
        adj.multiply(cur, next, d);
        if (noise_eps > 0) detail::add_sign_aligned_noise(next, d, noise_eps, rng);
        cur.swap(next);
        for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += cur[k];
        out.per_layer.push_back(detail::unstack_nodes(cur, base.num_users, base.num_items, d));
    }
    const double inv = 1.0 / (layers + 1);
    for (auto& v : mean) v *= inv;
    out.final = detail::unstack_nodes(mean, base.num_users, base.num_items, d);
    return out;
}

// Pulls a gradient on the mean-of-layers output back to the base table:
// g_base = (1/(L+1)) sum_k A^k g_final (A symmetric).
inline EmbeddingTable backprop_mean_of_layers(const NormalizedAdjacency& adj,
                                              const EmbeddingTable& grad_final, int layers) {
    const int d = grad_final.d;
    std::vector<double> g = detail::stack_nodes(grad_final);
    const double inv = 1.0 / (layers + 1);
    for (auto& v : g) v *= inv;
    std::vector<double> acc = g, next;
    for (int l = 0; l < layers; ++l) {
        adj.multiply(g, next, d);
        g.swap(next);
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += g[k];
    }
    return detail::unstack_nodes(acc, grad_final.num_users, grad_final.num_items, d);
}

// g_base = A^l g for a gradient landing on layer l.
inline EmbeddingTable backprop_to_layer(const NormalizedAdjacency& adj,
                                        const EmbeddingTable& grad_layer, int layer) {
    const int d = grad_layer.d;
    std::vector<double> g = detail::stack_nodes(grad_layer), next;
    for (int l = 0; l < layer; ++l) {
        adj.multiply(g, next, d);
        g.swap(next);
    }
    return detail::unstack_nodes(g, grad_layer.num_users, grad_layer.num_items, d);
}

namespace detail {
inline double dot(const double* a, const double* b, int d) {
    double s = 0.0;
    for (int c = 0; c < d; ++c) s += a[c] * b[c];
    return s;
}

inline double norm(const double* a, int d) { return std::sqrt(dot(a, a, d)); }
}  // namespace detail

// Half cosine similarity, in [-1/2, 1/2].
inline double score(const EmbeddingTable& emb, int u, int i) {
    const double* eu = emb.user_row(u);
    const double* ei = emb.item_row(i);
    const double nu = detail::norm(eu, emb.d);
    const double ni = detail::norm(ei, emb.d);
    if (nu == 0.0 || ni == 0.0) throw ZeroNormVector();
    return 0.5 * detail::dot(eu, ei, emb.d) / (nu * ni);
}

inline std::vector<double> score_all_items(const EmbeddingTable& emb, int u) {
    const double* eu = emb.user_row(u);
    const double nu = detail::norm(eu, emb.d);
    if (nu == 0.0) throw ZeroNormVector();
    std::vector<double> out(emb.num_items);
    for (int i = 0; i < emb.num_items; ++i) {
        const double* ei = emb.item_row(i);
        const double ni = detail::norm(ei, emb.d);
        if (ni == 0.0) throw ZeroNormVector();
        out[i] = 0.5 * detail::dot(eu, ei, emb.d) / (nu * ni);
    }
    return out;
}

struct LayerIndexOutOfRange : std::runtime_error {
    LayerIndexOutOfRange() : std::runtime_error("contrast layer index out of range") {}
};

struct ContrastLossOutput {
    double loss = 0.0;
    // node id (user-item stacked indexing) -> d-vector gradient
    std::unordered_map<int, std::vector<double>> grad_final;
    std::unordered_map<int, std::vector<double>> grad_layer;
};

namespace detail {
inline const double* node_row(const EmbeddingTable& t, int node) {
    return node < t.num_users ? t.user_row(node) : t.item_row(node - t.num_users);
}
}  // namespace detail

// InfoNCE between the final embeddings and the l*-layer embeddings of the
// batch nodes; positives are the same node, negatives the other batch
// nodes. Duplicate node ids are collapsed. Degenerate batches (fewer than
// two distinct nodes, or lambda = 0) contribute zero.
inline ContrastLossOutput xsimgcl_contrast_loss(const std::vector<EmbeddingTable>& per_layer,
                                                const EmbeddingTable& final,
                                                const std::vector<int>& batch_nodes,
                                                int contrast_layer, double temp, double lambda) {
    if (contrast_layer < 0 || contrast_layer >= static_cast<int>(per_layer.size()))
        throw LayerIndexOutOfRange();
    ContrastLossOutput out;
    std::vector<int> nodes = batch_nodes;
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
    const auto B = nodes.size();
    if (lambda == 0.0 || B < 2) return out;
    const EmbeddingTable& lay = per_layer[contrast_layer];
    const int d = final.d;

    std::vector<double> nz(B), ny(B);
    for (std::size_t b = 0; b < B; ++b) {
        nz[b] = detail::norm(detail::node_row(final, nodes[b]), d);
        ny[b] = detail::norm(detail::node_row(lay, nodes[b]), d);
    }
    std::vector<double> cosm(B * B);  // cos(z_b, y_c)
    for (std::size_t b = 0; b < B; ++b) {
        const double* zb = detail::node_row(final, nodes[b]);
        for (std::size_t c = 0; c < B; ++c)
            cosm[b * B + c] =
                detail::dot(zb, detail::node_row(lay, nodes[c]), d) / (nz[b] * ny[c]);
    }
    const double coeff = lambda / static_cast<double>(B);
    for (std::size_t b = 0; b < B; ++b) {
        double mx = -1.0;
        for (std::size_t c = 0; c < B; ++c) mx = std::max(mx, cosm[b * B + c]);
        double z = 0.0;
        for (std::size_t c = 0; c < B; ++c) z += std::exp((cosm[b * B + c] - mx) / temp);
        out.loss += coeff * ((mx - cosm[b * B + b]) / temp + std::log(z));
        const double* zb = detail::node_row(final, nodes[b]);
        auto& gz = out.grad_final.try_emplace(nodes[b], d, 0.0).first->second;
        for (std::size_t c = 0; c < B; ++c) {
            const double p = std::exp((cosm[b * B + c] - mx) / temp) / z;
            const double w = coeff * (p - (b == c ? 1.0 : 0.0)) / temp;
            const double* yc = detail::node_row(lay, nodes[c]);
            const double cs = cosm[b * B + c];
            // d cos / d z_b and d cos / d y_c with cached norms
            const double izy = 1.0 / (nz[b] * ny[c]);
            for (int k = 0; k < d; ++k)
                gz[k] += w * (yc[k] * izy - cs * zb[k] / (nz[b] * nz[b]));
            auto& gy = out.grad_layer.try_emplace(nodes[c], d, 0.0).first->second;
            for (int k = 0; k < d; ++k)
                gy[k] += w * (zb[k] * izy - cs * yc[k] / (ny[c] * ny[c]));
        }
    }
    return out;
}

// --- checkpoint io -------------------------------------------------------
//
// Text format, one header line then one row per embedding vector:
//   cwrec-checkpoint <num_users> <num_items> <d> <backbone-kind>
//   values with 9 significant digits, space separated, users first.

inline void save_checkpoint(const std::string& path, const EmbeddingTable& t, BackboneKind kind) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "cwrec-checkpoint " << t.num_users << ' ' << t.num_items << ' ' << t.d << ' '
        << to_string(kind) << '\n';
    out << std::setprecision(9);
    auto dump = [&](const std::vector<double>& v, int rows) {
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < t.d; ++c) out << (c ? " " : "") << v[static_cast<std::size_t>(r) * t.d + c];
            out << '\n';
        }
    };
    dump(t.user_vecs, t.num_users);
    dump(t.item_vecs, t.num_items);
}

inline std::pair<EmbeddingTable, BackboneKind> load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path);
    std::string magic, kind_str;
    EmbeddingTable t;
    in >> magic >> t.num_users >> t.num_items >> t.d >> kind_str;
    if (magic != "cwrec-checkpoint" || !in) throw IoError("bad checkpoint header in " + path);
    BackboneKind kind = kind_str == "MF"         ? BackboneKind::MF
                        : kind_str == "LightGCN" ? BackboneKind::LightGCN
                                                 : BackboneKind::XSimGCL;
    t.user_vecs.resize(static_cast<std::size_t>(t.num_users) * t.d);
    t.item_vecs.resize(static_cast<std::size_t>(t.num_items) * t.d);
    for (auto& x : t.user_vecs) in >> x;
    for (auto& x : t.item_vecs) in >> x;
    if (!in) throw IoError("truncated checkpoint " + path);
    return {std::move(t), kind};
}

struct BackboneConfig {
    BackboneKind kind = BackboneKind::MF;
    int d = 64;
    int layers = 2;             // LightGCN default; XSimGCL uses 3
    double noise_eps = 0.1;     // XSimGCL perturbation magnitude
    int contrast_layer = 1;     // l*, with the embedding layer as layer 0
    double contrast_temp = 0.1;
    double contrast_weight = 0.1;  // lambda, from {0.05, 0.1, 0.2}
    double init_scale = -1.0;      // < 0 -> 0.1/sqrt(d)

    double resolved_init_scale() const { return init_scale < 0 ? default_init_scale(d) : init_scale; }
};

}  // namespace cwrec
