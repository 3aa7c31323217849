#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cwrec/config.hpp"
#include "cwrec/dataset.hpp"
#include "cwrec/eval.hpp"
#include "cwrec/optim.hpp"

namespace cwrec {

struct DataEmpty : std::runtime_error {
    DataEmpty() : std::runtime_error("DATA_EMPTY: no interactions after preprocessing") {}
};

// Load -> rating filter -> k-core -> index -> split.
inline SplitDataset prepare_dataset(const ExperimentConfig& cfg) {
    auto raw = load_interactions(cfg.data_path, cfg.data_format);
    raw = filter_ratings(std::move(raw), cfg.data_min_rating);
    if (raw.empty()) throw DataEmpty();
    try {
        if (cfg.data_k_core > 1) raw = k_core_filter(std::move(raw), cfg.data_k_core);
    } catch (const EmptyAfterFilter&) {
        throw DataEmpty();
    }
    auto ds = index_dataset(raw);
    return split_dataset(ds, cfg.split_test_frac, cfg.split_val_frac, cfg.split_seed);
}

struct ExperimentResult {
    TrainResult training;
    RankingReport test_report;
    double test_recall = 0.0;
    double test_ndcg = 0.0;
};

inline ExperimentResult run_training(const ExperimentConfig& cfg, const SplitDataset& split) {
    PriorEstimate prior = estimate_prior(split.train, cfg.prior_mode, cfg.prior_constant);
    ExperimentResult res;
    res.training = train(split, cfg.backbone, cfg.loss, prior, cfg.schedule, cfg.sampler,
                         cfg.optim_lr, cfg.optim_wd, cfg.seed);
    NormalizedAdjacency adj;
    const bool graph = cfg.backbone.kind != BackboneKind::MF;
    if (graph) adj = build_adjacency(split.train);
    EmbeddingTable inf =
        inference_embeddings(res.training.best_base, cfg.backbone, graph ? &adj : nullptr);
    res.test_report = evaluate(inf, split.test, split.train, cfg.eval_k);
    res.test_recall = res.test_report.mean_recall;
    res.test_ndcg = res.test_report.mean_ndcg;
    return res;
}

inline void write_epoch_log_csv(const std::vector<EpochLog>& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "epoch,train_loss,clamp_rate,val_recall@20,val_ndcg@20\n";
    out.precision(10);
    for (const auto& e : log) {
        out << e.epoch << ',' << e.train_loss << ',' << e.clamp_rate << ',';
        if (e.evaluated)
            out << e.val_recall << ',' << e.val_ndcg;
        else
            out << ',';
        out << '\n';
    }
}

// Writes the four artifacts (resolved config, per-epoch log, test report,
// checkpoint) into cfg.output_dir.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    validate_config(cfg);
    SplitDataset split = prepare_dataset(cfg);
    ExperimentResult res = run_training(cfg, split);
    std::filesystem::create_directories(cfg.output_dir);
    const auto dir = std::filesystem::path(cfg.output_dir);
    std::ofstream snap(dir / "config_resolved.txt");
    snap << serialize_config(cfg);
    snap.close();
    write_epoch_log_csv(res.training.log, (dir / "epochs.csv").string());
    write_report_csv(res.test_report, (dir / "report.csv").string());
    save_checkpoint((dir / "checkpoint.txt").string(), res.training.best_base, cfg.backbone.kind);
    return res;
}

struct GridCell {
    std::vector<std::string> overrides;
    bool failed = false;
    std::string error;
    double val_ndcg = -1.0;
    double test_recall = 0.0;
    double test_ndcg = 0.0;
};

// Cartesian product of per-key override lists; each cell trains and is
// ranked by validation NDCG@20. Per-cell failures are recorded and the
// grid continues.
inline std::vector<GridCell> run_grid(const ExperimentConfig& base,
                                      const std::vector<std::pair<std::string, std::vector<std::string>>>& axes,
                                      const std::string& leaderboard_path = "") {
    std::vector<GridCell> cells{GridCell{}};
    for (const auto& [key, values] : axes) {
        std::vector<GridCell> next;
        for (const auto& cell : cells)
            for (const auto& v : values) {
                GridCell c = cell;
                c.overrides.push_back(key + "=" + v);
                next.push_back(std::move(c));
            }
        cells = std::move(next);
    }
    for (auto& cell : cells) {
        try {
            ExperimentConfig cfg = base;
            for (const auto& kv : cell.overrides) apply_override(cfg, kv);
            validate_config(cfg);
            SplitDataset split = prepare_dataset(cfg);
            ExperimentResult res = run_training(cfg, split);
            cell.val_ndcg = res.training.best_val_ndcg;
            cell.test_recall = res.test_recall;
            cell.test_ndcg = res.test_ndcg;
        } catch (const std::exception& e) {
            cell.failed = true;
            cell.error = e.what();
        }
    }
    std::stable_sort(cells.begin(), cells.end(),
                     [](const GridCell& a, const GridCell& b) { return a.val_ndcg > b.val_ndcg; });
    if (!leaderboard_path.empty()) {
        std::ofstream out(leaderboard_path);
        out << "rank,overrides,val_ndcg@20,test_recall,test_ndcg,status\n";
        out.precision(10);
        int rank = 1;
        for (const auto& cell : cells) {
            std::string ov;
            for (const auto& kv : cell.overrides) ov += (ov.empty() ? "" : " ") + kv;
            out << rank++ << ",\"" << ov << "\",";
            if (cell.failed)
                out << ",,," << "FAILED\n";
            else
                out << cell.val_ndcg << ',' << cell.test_recall << ',' << cell.test_ndcg
                    << ",ok\n";
        }
    }
    return cells;
}

enum class AblationAxis { tau_plus, pos_count, beta, loss_factor };

struct AblationRow {
    std::string setting;
    double recall = 0.0;
    double ndcg = 0.0;
    bool failed = false;
};

inline std::vector<AblationRow> run_ablation(const ExperimentConfig& base, AblationAxis axis,
                                             const std::string& csv_path = "") {
    std::vector<std::pair<std::string, std::vector<std::string>>> settings;
    switch (axis) {
        case AblationAxis::loss_factor:
            settings.push_back({"loss.kind", {"SL", "PSL", "L_C", "L_W", "CW"}});
            break;
        case AblationAxis::tau_plus: {
            std::vector<std::string> vals;
            for (double t : {0.05, 0.06, 0.07, 0.08, 0.09, 0.10, 0.11, 0.12}) {
                std::ostringstream s;
                s << t;
                vals.push_back("prior.constant=" + s.str());
            }
            vals.push_back("prior.mode=popularity");
            settings.push_back({"", vals});
            break;
        }
        case AblationAxis::pos_count: {
            std::vector<std::string> vals;
            for (int m = 1; m <= 8; ++m) vals.push_back("sampler.M=" + std::to_string(m));
            settings.push_back({"", vals});
            break;
        }
        case AblationAxis::beta: {
            std::vector<std::string> vals;
            for (double b : {0.2, 0.4, 0.6, 0.8, 1.0}) {
                std::ostringstream s;
                s << b;
                vals.push_back("loss.beta=" + s.str());
            }
            settings.push_back({"", vals});
            break;
        }
    }
    std::vector<AblationRow> rows;
    for (const auto& [key, values] : settings)
        for (const auto& v : values) {
            AblationRow row;
            const std::string kv = key.empty() ? v : key + "=" + v;
            row.setting = kv;
            try {
                ExperimentConfig cfg = base;
                apply_override(cfg, kv);
                validate_config(cfg);
                SplitDataset split = prepare_dataset(cfg);
                ExperimentResult res = run_training(cfg, split);
                row.recall = res.test_recall;
                row.ndcg = res.test_ndcg;
            } catch (const std::exception&) {
                row.failed = true;
            }
            rows.push_back(row);
        }
    if (!csv_path.empty()) {
        std::ofstream out(csv_path);
        out << "setting,recall@20,ndcg@20\n";
        out.precision(10);
        for (const auto& r : rows) {
            out << '"' << r.setting << "\",";
            if (r.failed)
                out << ",\n";
            else
                out << r.recall << ',' << r.ndcg << '\n';
        }
    }
    return rows;
}

}  // namespace cwrec
