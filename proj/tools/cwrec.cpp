#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "cwrec/experiment.hpp"

namespace {

cwrec::ExperimentConfig load_config(const std::string& config_path,
                                    const std::vector<std::string>& overrides) {
    cwrec::ExperimentConfig cfg;
    if (!config_path.empty()) cfg = cwrec::parse_config_file(config_path);
    for (const auto& kv : overrides) cwrec::apply_override(cfg, kv);
    if (const char* env = std::getenv("CWREC_OUTPUT_DIR")) cfg.output_dir = env;
    return cfg;
}

int fail(const std::exception& e) {
    const std::string msg = e.what();
    // error tags are machine-parsable: CONFIG_INVALID, DATA_EMPTY, NONFINITE
    if (msg.rfind("CONFIG_INVALID", 0) == 0 || msg.rfind("DATA_EMPTY", 0) == 0)
        std::cerr << msg << '\n';
    else if (dynamic_cast<const cwrec::NonFiniteGradient*>(&e))
        std::cerr << "NONFINITE: " << msg << '\n';
    else
        std::cerr << "CONFIG_INVALID: " << msg << '\n';
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"corrected-and-weighted loss training toolkit"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::vector<std::string> overrides;
    app.add_option("-c,--config", config_path, "flat key=value config file");
    app.add_option("-s,--set", overrides, "override, e.g. loss.kind=CW (repeatable)");

    auto* cmd_run = app.add_subcommand("run", "train and evaluate one configuration");
    auto* cmd_grid = app.add_subcommand("grid", "grid search over hyperparameters");
    std::vector<std::string> grid_axes;
    cmd_grid->add_option("--axis", grid_axes,
                         "grid axis key=v1,v2,... (repeatable, Cartesian product)")
        ->required();
    auto* cmd_ablate = app.add_subcommand("ablate", "run one ablation axis");
    std::string ablate_axis;
    cmd_ablate->add_option("--axis", ablate_axis, "tau_plus | pos_count | beta | loss_factor")
        ->required();
    auto* cmd_eval = app.add_subcommand("eval", "evaluate a saved checkpoint");
    std::string checkpoint_path;
    cmd_eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        cwrec::ExperimentConfig cfg = load_config(config_path, overrides);

        if (cmd_run->parsed()) {
            auto res = cwrec::run_experiment(cfg);
            std::cout << "recall@" << cfg.eval_k << "=" << res.test_recall << " ndcg@"
                      << cfg.eval_k << "=" << res.test_ndcg
                      << " users=" << res.test_report.users_evaluated << '\n';
            return 0;
        }

        if (cmd_grid->parsed()) {
            cwrec::validate_config(cfg);
            std::vector<std::pair<std::string, std::vector<std::string>>> axes;
            for (const auto& spec : grid_axes) {
                auto eq = spec.find('=');
                if (eq == std::string::npos)
                    throw cwrec::ConfigError("grid axis must be key=v1,v2,...");
                std::vector<std::string> vals;
                std::string rest = spec.substr(eq + 1);
                std::size_t start = 0;
                while (true) {
                    auto comma = rest.find(',', start);
                    vals.push_back(rest.substr(start, comma - start));
                    if (comma == std::string::npos) break;
                    start = comma + 1;
                }
                axes.emplace_back(spec.substr(0, eq), vals);
            }
            std::filesystem::create_directories(cfg.output_dir);
            auto cells = cwrec::run_grid(
                cfg, axes, (std::filesystem::path(cfg.output_dir) / "leaderboard.csv").string());
            for (const auto& cell : cells) {
                std::cout << (cell.failed ? "FAILED " : "") << "val_ndcg=" << cell.val_ndcg
                          << " test_ndcg=" << cell.test_ndcg << " [";
                for (const auto& kv : cell.overrides) std::cout << ' ' << kv;
                std::cout << " ]\n";
            }
            return 0;
        }

        if (cmd_ablate->parsed()) {
            cwrec::validate_config(cfg);
            cwrec::AblationAxis axis;
            if (ablate_axis == "tau_plus") axis = cwrec::AblationAxis::tau_plus;
            else if (ablate_axis == "pos_count") axis = cwrec::AblationAxis::pos_count;
            else if (ablate_axis == "beta") axis = cwrec::AblationAxis::beta;
            else if (ablate_axis == "loss_factor") axis = cwrec::AblationAxis::loss_factor;
            else throw cwrec::ConfigError("unknown ablation axis " + ablate_axis);
            std::filesystem::create_directories(cfg.output_dir);
            auto rows = cwrec::run_ablation(
                cfg, axis, (std::filesystem::path(cfg.output_dir) / "ablation.csv").string());
            for (const auto& r : rows)
                std::cout << r.setting << " recall@20=" << r.recall << " ndcg@20=" << r.ndcg
                          << (r.failed ? " FAILED" : "") << '\n';
            return 0;
        }

        // eval: checkpoint-only evaluation against the configured dataset
        cwrec::validate_config(cfg);
        auto split = cwrec::prepare_dataset(cfg);
        auto [base, kind] = cwrec::load_checkpoint(checkpoint_path);
        cwrec::BackboneConfig bb = cfg.backbone;
        bb.kind = kind;
        cwrec::NormalizedAdjacency adj;
        const bool graph = kind != cwrec::BackboneKind::MF;
        if (graph) adj = cwrec::build_adjacency(split.train);
        auto inf = cwrec::inference_embeddings(base, bb, graph ? &adj : nullptr);
        auto rep = cwrec::evaluate(inf, split.test, split.train, cfg.eval_k);
        std::filesystem::create_directories(cfg.output_dir);
        cwrec::write_report_csv(rep,
                                (std::filesystem::path(cfg.output_dir) / "report.csv").string());
        std::cout << "recall@" << cfg.eval_k << "=" << rep.mean_recall << " ndcg@" << cfg.eval_k
                  << "=" << rep.mean_ndcg << " users=" << rep.users_evaluated << '\n';
        return 0;
    } catch (const std::exception& e) {
        return fail(e);
    }
}
