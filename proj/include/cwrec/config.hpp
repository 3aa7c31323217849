#pragma once

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cwrec/backbone.hpp"
#include "cwrec/losses.hpp"
#include "cwrec/optim.hpp"
#include "cwrec/sampling.hpp"

namespace cwrec {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("CONFIG_INVALID: " + msg) {}
};

// Flat key=value configuration with dotted keys. Unknown keys are rejected.
struct ExperimentConfig {
    std::string data_path;
    FileFormat data_format = FileFormat::tsv;
    int data_k_core = 10;
    double data_min_rating = 3.0;

    std::uint64_t split_seed = 42;
    double split_test_frac = 0.2;
    double split_val_frac = 0.1;

    BackboneConfig backbone;
    LossConfig loss;
    SamplerConfig sampler;
    PriorMode prior_mode = PriorMode::constant;
    double prior_constant = 0.1;

    double optim_lr = 1e-3;
    double optim_wd = 0.0;
    TrainSchedule schedule;
    std::uint64_t seed = 42;

    int eval_k = 20;
    std::string output_dir = "out";
};

namespace detail {
inline double to_double(const std::string& k, const std::string& v) {
    try {
        std::size_t pos = 0;
        double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("bad number for " + k + ": " + v);
    }
}

inline std::int64_t to_int(const std::string& k, const std::string& v) {
    try {
        std::size_t pos = 0;
        std::int64_t x = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("bad integer for " + k + ": " + v);
    }
}
}  // namespace detail

inline void apply_config_key(ExperimentConfig& c, const std::string& key, const std::string& val) {
    using detail::to_double;
    using detail::to_int;
    if (key == "data.path") c.data_path = val;
    else if (key == "data.format") {
        if (val == "tsv") c.data_format = FileFormat::tsv;
        else if (val == "csv") c.data_format = FileFormat::csv;
        else throw ConfigError("data.format must be tsv or csv");
    } else if (key == "data.k_core") c.data_k_core = static_cast<int>(to_int(key, val));
    else if (key == "data.min_rating") c.data_min_rating = to_double(key, val);
    else if (key == "split.seed") c.split_seed = static_cast<std::uint64_t>(to_int(key, val));
    else if (key == "split.test_frac") c.split_test_frac = to_double(key, val);
    else if (key == "split.val_frac") c.split_val_frac = to_double(key, val);
    else if (key == "backbone.kind") {
        if (val == "MF") c.backbone.kind = BackboneKind::MF;
        else if (val == "LightGCN") { c.backbone.kind = BackboneKind::LightGCN; }
        else if (val == "XSimGCL") { c.backbone.kind = BackboneKind::XSimGCL; c.backbone.layers = 3; }
        else throw ConfigError("backbone.kind must be MF, LightGCN or XSimGCL");
    } else if (key == "backbone.d") c.backbone.d = static_cast<int>(to_int(key, val));
    else if (key == "backbone.layers") c.backbone.layers = static_cast<int>(to_int(key, val));
    else if (key == "backbone.noise_eps") c.backbone.noise_eps = to_double(key, val);
    else if (key == "backbone.contrast_layer") c.backbone.contrast_layer = static_cast<int>(to_int(key, val));
    else if (key == "backbone.contrast_temp") c.backbone.contrast_temp = to_double(key, val);
    else if (key == "backbone.contrast_weight") c.backbone.contrast_weight = to_double(key, val);
    else if (key == "backbone.init_scale") c.backbone.init_scale = to_double(key, val);
    else if (key == "loss.kind") {
        if (val == "BPR") c.loss.kind = LossKind::BPR;
        else if (val == "SL") c.loss.kind = LossKind::SL;
        else if (val == "BSL") c.loss.kind = LossKind::BSL;
        else if (val == "PSL") c.loss.kind = LossKind::PSL;
        else if (val == "L_C") c.loss.kind = LossKind::L_C;
        else if (val == "L_W") c.loss.kind = LossKind::L_W;
        else if (val == "CW") c.loss.kind = LossKind::CW;
        else throw ConfigError("unknown loss.kind " + val);
    } else if (key == "loss.tau") c.loss.tau = to_double(key, val);
    else if (key == "loss.tau2") c.loss.tau2 = to_double(key, val);
    else if (key == "loss.beta") c.loss.beta = to_double(key, val);
    else if (key == "loss.activation") {
        if (val == "exp") c.loss.activation = Activation::exp;
        else if (val == "relu") c.loss.activation = Activation::relu;
        else if (val == "tanh") c.loss.activation = Activation::tanh;
        else if (val == "atan") c.loss.activation = Activation::atan;
        else throw ConfigError("unknown loss.activation " + val);
    } else if (key == "loss.sigma_form") {
        if (val == "exp_of_activation") c.loss.sigma_form = SigmaForm::exp_of_activation;
        else if (val == "raw_power") c.loss.sigma_form = SigmaForm::raw_power;
        else throw ConfigError("unknown loss.sigma_form " + val);
    } else if (key == "loss.eps_clamp") c.loss.eps_clamp = to_double(key, val);
    else if (key == "sampler.N") c.sampler.N = static_cast<int>(to_int(key, val));
    else if (key == "sampler.M") c.sampler.M = static_cast<int>(to_int(key, val));
    else if (key == "prior.mode") {
        if (val == "constant") c.prior_mode = PriorMode::constant;
        else if (val == "per_user_rate") c.prior_mode = PriorMode::per_user_rate;
        else if (val == "popularity") c.prior_mode = PriorMode::popularity;
        else throw ConfigError("unknown prior.mode " + val);
    } else if (key == "prior.constant") c.prior_constant = to_double(key, val);
    else if (key == "optim.lr") c.optim_lr = to_double(key, val);
    else if (key == "optim.wd") c.optim_wd = to_double(key, val);
    else if (key == "schedule.epochs") c.schedule.epochs = static_cast<int>(to_int(key, val));
    else if (key == "schedule.batch_size") c.schedule.batch_size = static_cast<int>(to_int(key, val));
    else if (key == "schedule.eval_every") c.schedule.eval_every = static_cast<int>(to_int(key, val));
    else if (key == "schedule.patience") c.schedule.early_stop_patience = static_cast<int>(to_int(key, val));
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(to_int(key, val));
    else if (key == "eval.K") c.eval_k = static_cast<int>(to_int(key, val));
    else if (key == "output.dir") c.output_dir = val;
    else throw ConfigError("unknown key " + key);
}

inline void apply_override(ExperimentConfig& c, const std::string& kv) {
    auto pos = kv.find('=');
    if (pos == std::string::npos) throw ConfigError("override must be key=value: " + kv);
    apply_config_key(c, kv.substr(0, pos), kv.substr(pos + 1));
}

inline ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    ExperimentConfig c;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        apply_override(c, line.substr(first));
    }
    return c;
}

inline void validate_config(const ExperimentConfig& c) {
    if (c.data_path.empty()) throw ConfigError("data.path is required");
    if (c.loss.tau <= 0 || c.loss.tau2 <= 0) throw ConfigError("temperatures must be > 0");
    if (c.loss.beta < 0) throw ConfigError("loss.beta must be >= 0");
    if (c.loss.eps_clamp <= 0 || c.loss.eps_clamp > 1e-3)
        throw ConfigError("loss.eps_clamp must be in (0, 1e-3]");
    if (c.backbone.d < 1) throw ConfigError("backbone.d must be >= 1");
    if (c.sampler.M < 1) throw ConfigError("sampler.M must be >= 1");
    if (c.loss.kind == LossKind::BPR) {
        if (c.sampler.N != 1) throw ConfigError("BPR requires sampler.N=1");
    } else if (c.sampler.N < 1) {
        throw ConfigError("sampler.N must be >= 1");
    }
    if (c.prior_mode == PriorMode::constant && (c.prior_constant < 0 || c.prior_constant >= 1))
        throw ConfigError("prior.constant must be in [0,1)");
    if (c.schedule.epochs < 0) throw ConfigError("schedule.epochs must be >= 0");
    if (c.schedule.batch_size < 1) throw ConfigError("schedule.batch_size must be >= 1");
    if (c.eval_k < 1) throw ConfigError("eval.K must be >= 1");
    if (c.backbone.kind != BackboneKind::MF &&
        (c.backbone.contrast_layer < 0 || c.backbone.contrast_layer > c.backbone.layers))
        throw ConfigError("backbone.contrast_layer out of range");
}

// Resolved snapshot: every key explicitly, re-parseable to an equal config.
inline std::string serialize_config(const ExperimentConfig& c) {
    std::ostringstream out;
    out.precision(17);
    out << "data.path=" << c.data_path << '\n';
    out << "data.format=" << (c.data_format == FileFormat::tsv ? "tsv" : "csv") << '\n';
    out << "data.k_core=" << c.data_k_core << '\n';
    out << "data.min_rating=" << c.data_min_rating << '\n';
    out << "split.seed=" << c.split_seed << '\n';
    out << "split.test_frac=" << c.split_test_frac << '\n';
    out << "split.val_frac=" << c.split_val_frac << '\n';
    out << "backbone.kind=" << to_string(c.backbone.kind) << '\n';
    out << "backbone.d=" << c.backbone.d << '\n';
    out << "backbone.layers=" << c.backbone.layers << '\n';
    out << "backbone.noise_eps=" << c.backbone.noise_eps << '\n';
    out << "backbone.contrast_layer=" << c.backbone.contrast_layer << '\n';
    out << "backbone.contrast_temp=" << c.backbone.contrast_temp << '\n';
    out << "backbone.contrast_weight=" << c.backbone.contrast_weight << '\n';
    out << "backbone.init_scale=" << c.backbone.init_scale << '\n';
    out << "loss.kind=" << to_string(c.loss.kind) << '\n';
    out << "loss.tau=" << c.loss.tau << '\n';
    out << "loss.tau2=" << c.loss.tau2 << '\n';
    out << "loss.beta=" << c.loss.beta << '\n';
    const char* act = c.loss.activation == Activation::exp    ? "exp"
                      : c.loss.activation == Activation::relu ? "relu"
                      : c.loss.activation == Activation::tanh ? "tanh"
                                                              : "atan";
    out << "loss.activation=" << act << '\n';
    out << "loss.sigma_form="
        << (c.loss.sigma_form == SigmaForm::exp_of_activation ? "exp_of_activation" : "raw_power")
        << '\n';
    out << "loss.eps_clamp=" << c.loss.eps_clamp << '\n';
    out << "sampler.N=" << c.sampler.N << '\n';
    out << "sampler.M=" << c.sampler.M << '\n';
    const char* pm = c.prior_mode == PriorMode::constant        ? "constant"
                     : c.prior_mode == PriorMode::per_user_rate ? "per_user_rate"
                                                                : "popularity";
    out << "prior.mode=" << pm << '\n';
    out << "prior.constant=" << c.prior_constant << '\n';
    out << "optim.lr=" << c.optim_lr << '\n';
    out << "optim.wd=" << c.optim_wd << '\n';
    out << "schedule.epochs=" << c.schedule.epochs << '\n';
    out << "schedule.batch_size=" << c.schedule.batch_size << '\n';
    out << "schedule.eval_every=" << c.schedule.eval_every << '\n';
    out << "schedule.patience=" << c.schedule.early_stop_patience << '\n';
    out << "seed=" << c.seed << '\n';
    out << "eval.K=" << c.eval_k << '\n';
    out << "output.dir=" << c.output_dir << '\n';
    return out.str();
}

}  // namespace cwrec
