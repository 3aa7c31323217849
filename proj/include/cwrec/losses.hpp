#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "cwrec/backbone.hpp"
#include "cwrec/sampling.hpp"

namespace cwrec {

enum class LossKind { BPR, SL, BSL, PSL, L_C, L_W, CW };
enum class Activation { exp, relu, tanh, atan };
enum class SigmaForm { exp_of_activation, raw_power };

inline std::string to_string(LossKind k) {
    switch (k) {
        case LossKind::BPR: return "BPR";
        case LossKind::SL: return "SL";
        case LossKind::BSL: return "BSL";
        case LossKind::PSL: return "PSL";
        case LossKind::L_C: return "L_C";
        case LossKind::L_W: return "L_W";
        default: return "CW";
    }
}

struct LossConfig {
    LossKind kind = LossKind::CW;
    double tau = 0.2;    // temperature
    double tau2 = 0.2;   // BSL positive-side temperature
    double beta = 0.8;   // weight sharpness
    Activation activation = Activation::relu;
    SigmaForm sigma_form = SigmaForm::exp_of_activation;
    double eps_clamp = 1e-8;  // floor for the corrected log argument
    double q_override = -1;   // Q; < 0 means Q = N
};

struct WrongNegativeCount : std::runtime_error {
    WrongNegativeCount() : std::runtime_error("BPR requires exactly one negative per row") {}
};

namespace detail {
// (sigma(d), sigma'(d)); the exp activation under exp_of_activation is the
// identity path so that phi(d) = exp(d/tau) recovers plain SL.
inline std::pair<double, double> sigma_eval(Activation a, SigmaForm form, double d) {
    switch (a) {
        case Activation::exp:
            if (form == SigmaForm::exp_of_activation) return {d, 1.0};
            return {std::exp(d), std::exp(d)};
        case Activation::relu: return {d > 0 ? d : 0.0, d > 0 ? 1.0 : 0.0};
        case Activation::tanh: {
            const double t = std::tanh(d);
            return {t, 1.0 - t * t};
        }
        default: return {std::atan(d), 1.0 / (1.0 + d * d)};
    }
}
}  // namespace detail

// Per-pair surrogate term phi and its derivative.
//   exp_of_activation: phi(d) = exp(sigma(d)/tau)
//   raw_power:         phi(d) = max(sigma(d), eps_clamp)^(1/tau)
inline std::pair<double, double> phi_eval(const LossConfig& cfg, double d) {
    auto [s, sp] = detail::sigma_eval(cfg.activation, cfg.sigma_form, d);
    if (cfg.sigma_form == SigmaForm::exp_of_activation) {
        const double p = std::exp(s / cfg.tau);
        return {p, p * sp / cfg.tau};
    }
    if (s <= cfg.eps_clamp) return {std::pow(cfg.eps_clamp, 1.0 / cfg.tau), 0.0};
    const double p = std::pow(s, 1.0 / cfg.tau);
    return {p, p / s * sp / cfg.tau};
}

inline double phi(double d, const LossConfig& cfg) { return phi_eval(cfg, d).first; }

struct PairScoreContext {
    double r_ui = 0.0;
    std::vector<double> r_uj;   // negative scores, length N
    std::vector<double> r_uik;  // extra-positive scores, length M
};

// Loss value and its partial derivatives with respect to the row's scores.
struct RowGrad {
    double value = 0.0;
    double g_pos = 0.0;
    std::vector<double> g_neg;
    std::vector<double> g_extra;
    bool clamped = false;
};

namespace detail {
inline double log_sum_exp(const std::vector<double>& x) {
    double mx = x[0];
    for (double v : x) mx = std::max(mx, v);
    double s = 0.0;
    for (double v : x) s += std::exp(v - mx);
    return mx + std::log(s);
}
}  // namespace detail

inline RowGrad loss_row(const PairScoreContext& ctx, const LossConfig& cfg, double tau_plus) {
    const std::size_t N = ctx.r_uj.size();
    const std::size_t M = ctx.r_uik.size();
    RowGrad out;
    out.g_neg.assign(N, 0.0);
    out.g_extra.assign(M, 0.0);

    std::vector<double> d(N);
    for (std::size_t j = 0; j < N; ++j) d[j] = ctx.r_uj[j] - ctx.r_ui;
    std::vector<double> e(M);
    for (std::size_t k = 0; k < M; ++k) e[k] = ctx.r_uik[k] - ctx.r_ui;

    const double Q = cfg.q_override > 0 ? cfg.q_override : static_cast<double>(N);
    const double tau_minus = 1.0 - tau_plus;

    switch (cfg.kind) {
        case LossKind::BPR: {
            if (N != 1) throw WrongNegativeCount();
            // -log sigmoid(r_ui - r_uj) = softplus(d)
            const double x = d[0];
            out.value = x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
            const double s = 1.0 / (1.0 + std::exp(-x));
            out.g_neg[0] = s;
            out.g_pos = -s;
            break;
        }
        case LossKind::SL:
        case LossKind::BSL: {
            // with a single sampled positive per row the BSL positive-side
            // log-sum-exp at tau2 degenerates to SL at tau
            std::vector<double> z(N);
            for (std::size_t j = 0; j < N; ++j) z[j] = d[j] / cfg.tau;
            const double lse = detail::log_sum_exp(z);
            out.value = lse;
            for (std::size_t j = 0; j < N; ++j) {
                const double p = std::exp(z[j] - lse);
                out.g_neg[j] = p / cfg.tau;
                out.g_pos -= p / cfg.tau;
            }
            break;
        }
        case LossKind::PSL: {
            double sum = 0.0;
            std::vector<double> pv(N), pg(N);
            for (std::size_t j = 0; j < N; ++j) {
                std::tie(pv[j], pg[j]) = phi_eval(cfg, d[j]);
                sum += pv[j];
            }
            out.value = std::log(sum);
            for (std::size_t j = 0; j < N; ++j) {
                out.g_neg[j] = pg[j] / sum;
                out.g_pos -= pg[j] / sum;
            }
            break;
        }
        case LossKind::L_W: {
            double sum = 0.0;
            std::vector<double> tg(N);
            for (std::size_t j = 0; j < N; ++j) {
                auto [p, pgrad] = phi_eval(cfg, d[j]);
                const double w = std::exp(-cfg.beta * d[j]);
                sum += w * p;
                tg[j] = w * (pgrad - cfg.beta * p);
            }
            out.value = std::log(sum);
            for (std::size_t j = 0; j < N; ++j) {
                out.g_neg[j] = tg[j] / sum;
                out.g_pos -= tg[j] / sum;
            }
            break;
        }
        case LossKind::L_C: {
            // log((Q/tau-) max(mean_j exp(d/tau) - tau+ mean_k exp(e/tau), eps))
            double A = 0.0;
            std::vector<double> ea(N), eb(M);
            for (std::size_t j = 0; j < N; ++j) {
                ea[j] = std::exp(d[j] / cfg.tau);
                A += ea[j];
            }
            A /= static_cast<double>(N);
            double B = 0.0;
            for (std::size_t k = 0; k < M; ++k) {
                eb[k] = std::exp(e[k] / cfg.tau);
                B += eb[k];
            }
            B *= tau_plus / static_cast<double>(M);
            const double inner = A - B;
            if (inner <= cfg.eps_clamp) {
                out.clamped = true;
                out.value = std::log(Q / tau_minus * cfg.eps_clamp);
                break;
            }
            out.value = std::log(Q / tau_minus * inner);
            for (std::size_t j = 0; j < N; ++j) {
                const double g = ea[j] / (cfg.tau * static_cast<double>(N) * inner);
                out.g_neg[j] = g;
                out.g_pos -= g;
            }
            for (std::size_t k = 0; k < M; ++k) {
                const double g = -tau_plus * eb[k] / (cfg.tau * static_cast<double>(M) * inner);
                out.g_extra[k] = g;
                out.g_pos -= g;
            }
            break;
        }
        case LossKind::CW: {
            // A = sum_j w_j phi(d_j) / Zbar with w_j = exp(-beta d_j) and
            // Zbar = mean_j w_j, so the weights sum to N and beta -> 0
            // recovers PSL up to the additive log Q.
            std::vector<double> w(N), pv(N), pg(N);
            double S = 0.0, W = 0.0;
            for (std::size_t j = 0; j < N; ++j) {
                w[j] = std::exp(-cfg.beta * d[j]);
                std::tie(pv[j], pg[j]) = phi_eval(cfg, d[j]);
                S += w[j] * pv[j];
                W += w[j];
            }
            const double A = static_cast<double>(N) * S / W;
            double B = 0.0;
            std::vector<double> qg(M);
            for (std::size_t k = 0; k < M; ++k) {
                auto [p, pgrad] = phi_eval(cfg, e[k]);
                B += p;
                qg[k] = pgrad;
            }
            B *= tau_plus / static_cast<double>(M);
            const double inner = A - B;
            if (inner <= cfg.eps_clamp) {
                out.clamped = true;
                out.value = std::log(Q / tau_minus * cfg.eps_clamp);
                break;
            }
            out.value = std::log(Q / tau_minus * inner);
            for (std::size_t j = 0; j < N; ++j) {
                const double dA = static_cast<double>(N) *
                                  (w[j] * (pg[j] - cfg.beta * pv[j]) / W +
                                   cfg.beta * w[j] * S / (W * W));
                const double g = dA / inner;
                out.g_neg[j] = g;
                out.g_pos -= g;
            }
            for (std::size_t k = 0; k < M; ++k) {
                const double g = -tau_plus * qg[k] / (static_cast<double>(M) * inner);
                out.g_extra[k] = g;
                out.g_pos -= g;
            }
            break;
        }
    }
    return out;
}

// Standalone PU estimator of E_{p-}[phi] from pre-applied phi samples.
inline double corrected_expectation_estimator(const std::vector<double>& samples_p,
                                              const std::vector<double>& samples_pplus,
                                              double tau_plus) {
    if (tau_plus >= 1.0) throw std::invalid_argument("tau_plus must be < 1");
    double mp = 0.0;
    for (double v : samples_p) mp += v;
    mp /= static_cast<double>(samples_p.size());
    double mq = 0.0;
    for (double v : samples_pplus) mq += v;
    mq /= static_cast<double>(samples_pplus.size());
    return (mp - tau_plus * mq) / (1.0 - tau_plus);
}

struct NonFiniteGradient : std::runtime_error {
    NonFiniteGradient() : std::runtime_error("non-finite gradient") {}
};

struct LossOutput {
    double value = 0.0;       // mean over batch rows
    double clamp_rate = 0.0;  // fraction of rows hitting the PU clamp
    std::unordered_map<int, std::vector<double>> user_grads;
    std::unordered_map<int, std::vector<double>> item_grads;
};

// Batch loss over an embedding table: value plus analytic gradients for
// every embedding the batch touches. BPR scores by dot product, everything
// else by half-cosine. Item norms are cached across the batch; the pair dot
// is reconstructed from the score so the backward pass costs one pass over
// each vector.
inline LossOutput loss_batch(const EmbeddingTable& emb, const TrainingBatch& batch,
                             const LossConfig& cfg, const PriorEstimate& prior) {
    LossOutput out;
    const int d = emb.d;
    const bool use_dot = cfg.kind == LossKind::BPR;
    const double inv_rows = 1.0 / static_cast<double>(batch.rows.size());
    std::size_t clamped = 0;

    std::vector<double> item_norm(use_dot ? 0 : emb.num_items, -1.0);
    auto norm_of_item = [&](int i) {
        if (item_norm[i] < 0) {
            item_norm[i] = detail::norm(emb.item_row(i), d);
            if (item_norm[i] == 0.0) throw ZeroNormVector();
        }
        return item_norm[i];
    };
    auto grad_vec = [d](std::unordered_map<int, std::vector<double>>& m, int id) {
        return m.try_emplace(id, d, 0.0).first->second.data();
    };

    for (const auto& row : batch.rows) {
        const double* eu = emb.user_row(row.u);
        double nu = 0.0;
        if (!use_dot) {
            nu = detail::norm(eu, d);
            if (nu == 0.0) throw ZeroNormVector();
        }
        auto raw_score = [&](int i) {
            const double uv = detail::dot(eu, emb.item_row(i), d);
            return use_dot ? uv : 0.5 * uv / (nu * norm_of_item(i));
        };
        PairScoreContext ctx;
        ctx.r_ui = raw_score(row.i);
        ctx.r_uj.resize(row.negs.size());
        for (std::size_t j = 0; j < row.negs.size(); ++j) ctx.r_uj[j] = raw_score(row.negs[j]);
        ctx.r_uik.resize(row.extra_pos.size());
        for (std::size_t k = 0; k < row.extra_pos.size(); ++k)
            ctx.r_uik[k] = raw_score(row.extra_pos[k]);

        RowGrad rg = loss_row(ctx, cfg, prior.tau_plus.empty() ? 0.0 : prior.tau_plus[row.u]);
        out.value += rg.value * inv_rows;
        if (rg.clamped) ++clamped;

        double* gu = grad_vec(out.user_grads, row.u);
        auto chain = [&](int item, double r, double coeff) {
            if (coeff == 0.0) return;
            const double* ev = emb.item_row(item);
            double* gv = grad_vec(out.item_grads, item);
            if (use_dot) {
                for (int k = 0; k < d; ++k) {
                    gu[k] += coeff * ev[k];
                    gv[k] += coeff * eu[k];
                }
                return;
            }
            // r = (u.v) / (2 |u| |v|), so dr/du = v/(2|u||v|) - r u/|u|^2
            const double nv = norm_of_item(item);
            const double cross = coeff * 0.5 / (nu * nv);
            const double cu = coeff * r / (nu * nu);
            const double cv = coeff * r / (nv * nv);
            for (int k = 0; k < d; ++k) {
                gu[k] += cross * ev[k] - cu * eu[k];
                gv[k] += cross * eu[k] - cv * ev[k];
            }
        };
        chain(row.i, ctx.r_ui, rg.g_pos * inv_rows);
        for (std::size_t j = 0; j < row.negs.size(); ++j)
            chain(row.negs[j], ctx.r_uj[j], rg.g_neg[j] * inv_rows);
        for (std::size_t k = 0; k < row.extra_pos.size(); ++k)
            chain(row.extra_pos[k], ctx.r_uik[k], rg.g_extra[k] * inv_rows);
    }
    out.clamp_rate = static_cast<double>(clamped) * inv_rows;
    return out;
}

}  // namespace cwrec
