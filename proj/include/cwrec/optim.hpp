#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <unordered_map>
#include <vector>

#include "cwrec/backbone.hpp"
#include "cwrec/dataset.hpp"
#include "cwrec/eval.hpp"
#include "cwrec/losses.hpp"
#include "cwrec/sampling.hpp"

namespace cwrec {

struct AdamState {
    std::vector<double> m_user, v_user, m_item, v_item;
    std::int64_t t = 0;
    double lr = 1e-3;
    double wd = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState create(const EmbeddingTable& params, double lr, double wd) {
        AdamState s;
        s.lr = lr;
        s.wd = wd;
        s.m_user.assign(params.user_vecs.size(), 0.0);
        s.v_user.assign(params.user_vecs.size(), 0.0);
        s.m_item.assign(params.item_vecs.size(), 0.0);
        s.v_item.assign(params.item_vecs.size(), 0.0);
        return s;
    }
};

namespace detail {
inline void adam_update_row(double* p, double* m, double* v, const double* g, int d,
                            const AdamState& s, double bc1, double bc2) {
    // decoupled weight decay applied before the Adam delta
    if (s.wd > 0)
        for (int k = 0; k < d; ++k) p[k] *= 1.0 - s.lr * s.wd;
    for (int k = 0; k < d; ++k) {
        if (!std::isfinite(g[k])) throw NonFiniteGradient();
        m[k] = s.beta1 * m[k] + (1.0 - s.beta1) * g[k];
        v[k] = s.beta2 * v[k] + (1.0 - s.beta2) * g[k] * g[k];
        const double mhat = m[k] / bc1;
        const double vhat = v[k] / bc2;
        p[k] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
    }
}
}  // namespace detail

// Lazy/sparse Adam: only rows carrying gradients update moments and
// parameters; everything else is left bit-identical.
inline void adam_step(AdamState& state, EmbeddingTable& params, const LossOutput& grads) {
    ++state.t;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    const int d = params.d;
    for (const auto& [u, g] : grads.user_grads)
        detail::adam_update_row(params.user_row(u),
                                state.m_user.data() + static_cast<std::size_t>(u) * d,
                                state.v_user.data() + static_cast<std::size_t>(u) * d, g.data(), d,
                                state, bc1, bc2);
    for (const auto& [i, g] : grads.item_grads)
        detail::adam_update_row(params.item_row(i),
                                state.m_item.data() + static_cast<std::size_t>(i) * d,
                                state.v_item.data() + static_cast<std::size_t>(i) * d, g.data(), d,
                                state, bc1, bc2);
}

struct TrainSchedule {
    int epochs = 200;
    int batch_size = 1024;
    int eval_every = 10;
    int early_stop_patience = -1;  // evaluations without improvement; < 0 disables
};

struct SamplerConfig {
    int N = 1000;
    int M = 4;
};

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double clamp_rate = 0.0;
    bool evaluated = false;
    double val_recall = 0.0;
    double val_ndcg = 0.0;
};

struct TrainResult {
    EmbeddingTable best_base;   // checkpoint with best validation NDCG@20
    int best_epoch = 0;
    double best_val_ndcg = -1.0;
    std::vector<EpochLog> log;
};

// Final embeddings used for scoring/evaluation: propagated without noise
// for the graph backbones, the base table for MF.
inline EmbeddingTable inference_embeddings(const EmbeddingTable& base, const BackboneConfig& cfg,
                                           const NormalizedAdjacency* adj) {
    if (cfg.kind == BackboneKind::MF) return base;
    return propagate(base, *adj, cfg.layers, 0.0, 0).final;
}

namespace detail {
inline EmbeddingTable dense_grad_table(const EmbeddingTable& like, const LossOutput& grads) {
    EmbeddingTable g;
    g.num_users = like.num_users;
    g.num_items = like.num_items;
    g.d = like.d;
    g.user_vecs.assign(like.user_vecs.size(), 0.0);
    g.item_vecs.assign(like.item_vecs.size(), 0.0);
    for (const auto& [u, gv] : grads.user_grads)
        std::copy(gv.begin(), gv.end(), g.user_row(u));
    for (const auto& [i, gv] : grads.item_grads)
        std::copy(gv.begin(), gv.end(), g.item_row(i));
    return g;
}

inline void add_node_grads(EmbeddingTable& g,
                           const std::unordered_map<int, std::vector<double>>& node_grads) {
    for (const auto& [node, gv] : node_grads) {
        double* row = node < g.num_users ? g.user_row(node) : g.item_row(node - g.num_users);
        for (int k = 0; k < g.d; ++k) row[k] += gv[k];
    }
}

inline LossOutput to_sparse_grads(const EmbeddingTable& dense, double value, double clamp_rate) {
    LossOutput out;
    out.value = value;
    out.clamp_rate = clamp_rate;
    auto sweep = [&](const std::vector<double>& vecs, int rows, int d, auto& map) {
        for (int r = 0; r < rows; ++r) {
            const double* p = vecs.data() + static_cast<std::size_t>(r) * d;
            bool nonzero = false;
            for (int k = 0; k < d; ++k)
                if (p[k] != 0.0) {
                    nonzero = true;
                    break;
                }
            if (nonzero) map.emplace(r, std::vector<double>(p, p + d));
        }
    };
    sweep(dense.user_vecs, dense.num_users, dense.d, out.user_grads);
    sweep(dense.item_vecs, dense.num_items, dense.d, out.item_grads);
    return out;
}
}  // namespace detail

inline TrainResult train(const SplitDataset& split, const BackboneConfig& backbone,
                         const LossConfig& loss_cfg, const PriorEstimate& prior,
                         const TrainSchedule& schedule, const SamplerConfig& sampler_cfg,
                         double lr, double wd, std::uint64_t seed) {
    const auto& tr = split.train;
    EmbeddingTable base = init_embeddings(tr.num_users, tr.num_items, backbone.d, seed,
                                          backbone.resolved_init_scale());
    AdamState adam = AdamState::create(base, lr, wd);
    NormalizedAdjacency adj;
    const bool graph = backbone.kind != BackboneKind::MF;
    if (graph) adj = build_adjacency(tr);

    BatchSampler sampler(tr, seed ^ 0x9e3779b97f4a7c15ULL);
    std::mt19937_64 noise_rng(seed ^ 0x517cc1b727220a95ULL);

    TrainResult result;
    result.best_base = base;
    const auto steps = std::max<std::size_t>(
        1, (tr.pairs.size() + schedule.batch_size - 1) / schedule.batch_size);
    int evals_since_best = 0;

    for (int epoch = 1; epoch <= schedule.epochs; ++epoch) {
        double epoch_loss = 0.0, epoch_clamp = 0.0;
        for (std::size_t step = 0; step < steps; ++step) {
            TrainingBatch batch = sampler.next(schedule.batch_size, sampler_cfg.N, sampler_cfg.M);
            if (!graph) {
                LossOutput grads = loss_batch(base, batch, loss_cfg, prior);
                epoch_loss += grads.value;
                epoch_clamp += grads.clamp_rate;
                adam_step(adam, base, grads);
                continue;
            }
            const double eps = backbone.kind == BackboneKind::XSimGCL ? backbone.noise_eps : 0.0;
            PropagateResult prop = propagate(base, adj, backbone.layers, eps, noise_rng());
            LossOutput grads = loss_batch(prop.final, batch, loss_cfg, prior);
            epoch_loss += grads.value;
            epoch_clamp += grads.clamp_rate;
            EmbeddingTable gfinal = detail::dense_grad_table(prop.final, grads);
            EmbeddingTable gbase;
            if (backbone.kind == BackboneKind::XSimGCL && backbone.contrast_weight > 0) {
                std::vector<int> user_nodes, item_nodes;
                user_nodes.reserve(batch.rows.size());
                item_nodes.reserve(batch.rows.size());
                for (const auto& row : batch.rows) {
                    user_nodes.push_back(row.u);
                    item_nodes.push_back(tr.num_users + row.i);
                }
                EmbeddingTable glayer = detail::dense_grad_table(prop.final, LossOutput{});
                for (const auto& nodes : {user_nodes, item_nodes}) {
                    auto cl = xsimgcl_contrast_loss(prop.per_layer, prop.final, nodes,
                                                    backbone.contrast_layer, backbone.contrast_temp,
                                                    backbone.contrast_weight);
                    epoch_loss += cl.loss;
                    detail::add_node_grads(gfinal, cl.grad_final);
                    detail::add_node_grads(glayer, cl.grad_layer);
                }
                gbase = backprop_mean_of_layers(adj, gfinal, backbone.layers);
                EmbeddingTable glb = backprop_to_layer(adj, glayer, backbone.contrast_layer);
                for (std::size_t k = 0; k < gbase.user_vecs.size(); ++k)
                    gbase.user_vecs[k] += glb.user_vecs[k];
                for (std::size_t k = 0; k < gbase.item_vecs.size(); ++k)
                    gbase.item_vecs[k] += glb.item_vecs[k];
            } else {
                gbase = backprop_mean_of_layers(adj, gfinal, backbone.layers);
            }
            adam_step(adam, base,
                      detail::to_sparse_grads(gbase, grads.value, grads.clamp_rate));
        }

        EpochLog log;
        log.epoch = epoch;
        log.train_loss = epoch_loss / static_cast<double>(steps);
        log.clamp_rate = epoch_clamp / static_cast<double>(steps);

        const bool eval_now = schedule.eval_every > 0 && (epoch % schedule.eval_every == 0 ||
                                                          epoch == schedule.epochs);
        if (eval_now && split.validation.num_interactions() > 0) {
            EmbeddingTable inf = inference_embeddings(base, backbone, graph ? &adj : nullptr);
            RankingReport rep = evaluate(inf, split.validation, tr, 20);
            log.evaluated = true;
            log.val_recall = rep.mean_recall;
            log.val_ndcg = rep.mean_ndcg;
            if (rep.mean_ndcg > result.best_val_ndcg) {
                result.best_val_ndcg = rep.mean_ndcg;
                result.best_epoch = epoch;
                result.best_base = base;
                evals_since_best = 0;
            } else {
                ++evals_since_best;
            }
        }
        result.log.push_back(log);
        if (schedule.early_stop_patience > 0 && evals_since_best >= schedule.early_stop_patience)
            break;
    }
    if (result.best_val_ndcg < 0) result.best_base = base;  // no evaluation happened
    return result;
}

}  // namespace cwrec
