#include "merit/trainer.hpp"

#include "merit/error.hpp"
#include "merit/runtime.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace merit {
namespace {

using nlohmann::json;

bool finite(double v) { return std::isfinite(v); }

template <class T>
T get_as(const json& j, const char* key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key())) throw ConfigError("unknown config key '" + where + it.key() + "'");
}

AugmentationConfig augmentation_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("'augmentation' must be an object");
    reject_unknown(j,
                   {"edge_mod_ratio", "feature_mask_ratio", "subgraph_size", "ppr_alpha",
                    "ppr_method", "power_terms", "power_tol"},
                   "augmentation.");
    AugmentationConfig a;
    if (j.contains("edge_mod_ratio")) a.edge_mod_ratio = get_as<double>(j, "edge_mod_ratio");
    if (j.contains("feature_mask_ratio")) a.feature_mask_ratio = get_as<double>(j, "feature_mask_ratio");
    if (j.contains("subgraph_size")) a.subgraph_size = get_as<std::size_t>(j, "subgraph_size");
    if (j.contains("ppr_alpha")) a.ppr_alpha = get_as<double>(j, "ppr_alpha");
    if (j.contains("ppr_method")) {
        const auto m = get_as<std::string>(j, "ppr_method");
        if (m == "exact_inverse")
            a.ppr_method = PprMethod::exact_inverse;
        else if (m == "power_series")
            a.ppr_method = PprMethod::power_series;
        else
            throw ConfigError("ppr_method must be 'exact_inverse' or 'power_series'");
    }
    if (j.contains("power_terms")) a.power_terms = get_as<std::size_t>(j, "power_terms");
    if (j.contains("power_tol")) a.power_tol = get_as<double>(j, "power_tol");
    return a;
}

double cosine_lr(double base, std::size_t epoch, std::size_t total) {
    if (total <= 1) return base;
    const double progress = static_cast<double>(epoch) / static_cast<double>(total - 1);
    return base * 0.5 * (1.0 + std::cos(M_PI * progress));
}

}  // namespace

void TrainConfig::validate() const {
    auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in_unit(beta)) throw ConfigError("beta must lie in [0, 1]");
    if (!in_unit(momentum_m)) throw ConfigError("momentum_m must lie in [0, 1]");
    if (!finite(learning_rate) || learning_rate < 0.0) throw ConfigError("learning_rate must be finite and >= 0");
    if (!finite(weight_decay) || weight_decay < 0.0) throw ConfigError("weight_decay must be finite and >= 0");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
    if (!(adam_betas.first >= 0.0 && adam_betas.first < 1.0 && adam_betas.second >= 0.0 &&
          adam_betas.second < 1.0))
        throw ConfigError("adam_betas must lie in [0, 1)");
    if (!(adam_eps > 0.0) || !finite(adam_eps)) throw ConfigError("adam_eps must be positive");
    if (!(temperature > 0.0) || !finite(temperature)) throw ConfigError("temperature must be positive");
    augmentation.validate();
}

TrainConfig config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    reject_unknown(j,
                   {"beta", "momentum_m", "learning_rate", "weight_decay", "epochs", "latent_dim",
                    "seed", "augmentation", "optimizer", "adam_betas", "adam_eps", "log_path",
                    "checkpoint_path", "temperature", "embed_through_projector", "deterministic",
                    "lr_schedule", "early_stop_patience"},
                   "");
    TrainConfig c;
    if (j.contains("beta")) c.beta = get_as<double>(j, "beta");
    if (j.contains("momentum_m")) c.momentum_m = get_as<double>(j, "momentum_m");
    if (j.contains("learning_rate")) c.learning_rate = get_as<double>(j, "learning_rate");
    if (j.contains("weight_decay")) c.weight_decay = get_as<double>(j, "weight_decay");
    if (j.contains("epochs")) c.epochs = get_as<std::size_t>(j, "epochs");
    if (j.contains("latent_dim")) c.latent_dim = get_as<std::size_t>(j, "latent_dim");
    if (j.contains("seed")) c.seed = get_as<std::uint64_t>(j, "seed");
    if (j.contains("augmentation")) c.augmentation = augmentation_from_json(j.at("augmentation"));
    if (j.contains("optimizer")) {
        const auto o = get_as<std::string>(j, "optimizer");
        if (o == "adam")
            c.optimizer = OptimizerKind::adam;
        else if (o == "sgd")
            c.optimizer = OptimizerKind::sgd;
        else
            throw ConfigError("optimizer must be 'adam' or 'sgd'");
    }
    if (j.contains("adam_betas")) {
        const auto b = get_as<std::vector<double>>(j, "adam_betas");
        if (b.size() != 2) throw ConfigError("adam_betas must have two entries");
        c.adam_betas = {b[0], b[1]};
    }
    if (j.contains("adam_eps")) c.adam_eps = get_as<double>(j, "adam_eps");
    if (j.contains("log_path")) c.log_path = get_as<std::string>(j, "log_path");
    if (j.contains("checkpoint_path")) c.checkpoint_path = get_as<std::string>(j, "checkpoint_path");
    if (j.contains("temperature")) c.temperature = get_as<double>(j, "temperature");
    if (j.contains("embed_through_projector"))
        c.embed_through_projector = get_as<bool>(j, "embed_through_projector");
    if (j.contains("deterministic")) c.deterministic = get_as<bool>(j, "deterministic");
    if (j.contains("lr_schedule")) {
        const auto s = get_as<std::string>(j, "lr_schedule");
        if (s == "constant")
            c.lr_schedule = LrSchedule::constant;
        else if (s == "cosine")
            c.lr_schedule = LrSchedule::cosine;
        else
            throw ConfigError("lr_schedule must be 'constant' or 'cosine'");
    }
    if (j.contains("early_stop_patience"))
        c.early_stop_patience = get_as<std::size_t>(j, "early_stop_patience");
    c.validate();
    return c;
}

json config_to_json(const TrainConfig& c) {
    const auto& a = c.augmentation;
    return json{
        {"beta", c.beta},
        {"momentum_m", c.momentum_m},
        {"learning_rate", c.learning_rate},
        {"weight_decay", c.weight_decay},
        {"epochs", c.epochs},
        {"latent_dim", c.latent_dim},
        {"seed", c.seed},
        {"augmentation",
         {{"edge_mod_ratio", a.edge_mod_ratio},
          {"feature_mask_ratio", a.feature_mask_ratio},
          {"subgraph_size", a.subgraph_size},
          {"ppr_alpha", a.ppr_alpha},
          {"ppr_method", a.ppr_method == PprMethod::exact_inverse ? "exact_inverse" : "power_series"},
          {"power_terms", a.power_terms},
          {"power_tol", a.power_tol}}},
        {"optimizer", c.optimizer == OptimizerKind::adam ? "adam" : "sgd"},
        {"adam_betas", {c.adam_betas.first, c.adam_betas.second}},
        {"adam_eps", c.adam_eps},
        {"log_path", c.log_path},
        {"checkpoint_path", c.checkpoint_path},
        {"temperature", c.temperature},
        {"embed_through_projector", c.embed_through_projector},
        {"deterministic", c.deterministic},
        {"lr_schedule", c.lr_schedule == LrSchedule::constant ? "constant" : "cosine"},
        {"early_stop_patience", c.early_stop_patience},
    };
}

TrainConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

void adam_step(std::vector<DenseMatrix*> params, const std::vector<DenseMatrix>& grads,
               OptimizerState& state, const AdamSettings& s) {
    if (params.size() != grads.size()) throw DimensionError("adam_step: params/grads count differ");
    if (state.first_moment.empty()) {
        for (const auto* p : params) {
            state.first_moment.push_back(DenseMatrix::Zero(p->rows(), p->cols()));
            state.second_moment.push_back(DenseMatrix::Zero(p->rows(), p->cols()));
        }
    }
    if (state.first_moment.size() != params.size())
        throw DimensionError("adam_step: optimizer state does not match parameter list");
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(s.beta1, t);
    const double c2 = 1.0 - std::pow(s.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        DenseMatrix& p = *params[i];
        const DenseMatrix& g = grads[i];
        if (g.rows() != p.rows() || g.cols() != p.cols())
            throw DimensionError("adam_step: gradient shape mismatch");
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        if (s.weight_decay != 0.0) p *= (1.0 - s.lr * s.weight_decay);
        m = s.beta1 * m + (1.0 - s.beta1) * g;
        v = s.beta2 * v + (1.0 - s.beta2) * g.cwiseProduct(g);
        p.array() -= s.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + s.eps);
    }
}

void sgd_step(std::vector<DenseMatrix*> params, const std::vector<DenseMatrix>& grads, double lr,
              double weight_decay) {
    if (params.size() != grads.size()) throw DimensionError("sgd_step: params/grads count differ");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (weight_decay != 0.0) *params[i] *= (1.0 - lr * weight_decay);
        *params[i] -= lr * grads[i];
    }
}

std::vector<DenseMatrix*> online_parameters(MeritModel& model) {
    auto& o = model.online;
    std::vector<DenseMatrix*> out{&o.encoder.weight, &o.encoder.prelu_slope};
    for (auto* h : {&o.projector, &o.predictor})
        for (auto* p : {&h->w1, &h->b1, &h->bn_scale, &h->bn_shift, &h->act_slope, &h->w2, &h->b2})
            out.push_back(p);
    return out;
}

StepDiagnostics train_step(MeritModel& model, const Graph& g, const DenseMatrix& diffusion,
                           const TrainConfig& cfg, Rng& rng, OptimizerState& opt,
                           double lr_override) {
    model.momentum = cfg.momentum_m;
    const ViewPair views = make_views(g, diffusion, cfg.augmentation, rng);

    ad::Tape tape;
    const OnlineVars online = bind(tape, model.online);
    const TargetVars target = bind(tape, model.target);

    const auto out1 = online_forward(tape, model, online, views.first, true);
    const auto out2 = online_forward(tape, model, online, views.second, true);
    const ad::Var z1_hat = target_forward(tape, model, target, views.first, true);
    const ad::Var z2_hat = target_forward(tape, model, target, views.second, true);

    const Objective obj = merit_objective(out1.h, out2.h, z1_hat, z2_hat, cfg.beta, cfg.temperature);
    StepDiagnostics diag;
    diag.losses = obj.breakdown;
    if (!std::isfinite(obj.breakdown.l_total)) {
        std::ostringstream msg;
        msg << "non-finite loss: l_total=" << obj.breakdown.l_total << " l_cn=" << obj.breakdown.l_cn
            << " l_cv=" << obj.breakdown.l_cv << " |H1|max=" << out1.h.value().cwiseAbs().maxCoeff()
            << " |H2|max=" << out2.h.value().cwiseAbs().maxCoeff()
            << " |W|max=" << model.online.encoder.weight.cwiseAbs().maxCoeff();
        throw NumericError(msg.str());
    }

    tape.backward(obj.loss);

    std::vector<DenseMatrix> grads;
    for (const auto& [name, var] : online.named()) {
        grads.push_back(var.grad());
        if (!grads.back().allFinite()) diag.online_grads_finite = false;
    }
    for (const auto& [name, var] : target.named())
        diag.max_target_grad = std::max(diag.max_target_grad, var.grad().cwiseAbs().maxCoeff());
    if (!diag.online_grads_finite) throw NumericError("non-finite gradient in the online network");

    const double lr = lr_override >= 0.0 ? lr_override : cfg.learning_rate;
    auto params = online_parameters(model);
    if (cfg.optimizer == OptimizerKind::adam) {
        adam_step(params, grads, opt,
                  {lr, cfg.adam_betas.first, cfg.adam_betas.second, cfg.adam_eps, cfg.weight_decay});
    } else {
        sgd_step(params, grads, lr, cfg.weight_decay);
        ++opt.step;
    }
    momentum_update(model);
    return diag;
}

std::string log_header() { return "epoch\tl_total\tl_cn\tl_cv\tpos_sim\tneg_sim\tseconds"; }

std::string format_log_line(const EpochLog& e) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%zu\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%.3f", e.epoch,
                  e.losses.l_total, e.losses.l_cn, e.losses.l_cv, e.losses.pos_sim,
                  e.losses.neg_sim, e.seconds);
    return buf;
}

FitResult fit(const Graph& g, const TrainConfig& cfg) {
    cfg.validate();
    runtime::set_compute_mode(cfg.deterministic ? runtime::ComputeMode::deterministic
                                                : runtime::ComputeMode::fast);
    Rng rng(cfg.seed);
    Rng init_rng = rng.split();

    FitResult result;
    result.diffusion = diffusion_for(g.adjacency, cfg.augmentation);
    result.model = init_model(g.feature_dim(), cfg.latent_dim, init_rng, cfg.momentum_m);

    std::ofstream log;
    if (!cfg.log_path.empty()) {
        log.open(cfg.log_path, std::ios::trunc);
        if (!log) throw IoError("cannot open log file " + cfg.log_path);
        log << log_header() << '\n';
    }

    OptimizerState opt;
    double best = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double lr = cfg.lr_schedule == LrSchedule::cosine
                              ? cosine_lr(cfg.learning_rate, epoch - 1, cfg.epochs)
                              : cfg.learning_rate;
        const auto diag = train_step(result.model, g, result.diffusion, cfg, rng, opt, lr);
        EpochLog entry;
        entry.epoch = epoch;
        entry.losses = diag.losses;
        // Wall-clock time would make deterministic logs differ between runs.
        entry.seconds = cfg.deterministic
                            ? 0.0
                            : std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.log.push_back(entry);
        if (log.is_open()) {
            log << format_log_line(entry) << '\n';
            log.flush();
            if (!log) throw IoError("write failed: " + cfg.log_path);
        }
        if (cfg.early_stop_patience > 0) {
            if (diag.losses.l_total < best) {
                best = diag.losses.l_total;
                since_best = 0;
            } else if (++since_best >= cfg.early_stop_patience) {
                break;
            }
        }
    }

    if (!cfg.checkpoint_path.empty()) save_checkpoint(result.model, cfg.checkpoint_path);
    return result;
}

}  // namespace merit
