#pragma once

#include "merit/augment.hpp"
#include "merit/graph.hpp"
#include "merit/losses.hpp"
#include "merit/model.hpp"
#include "merit/rng.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace merit {

enum class OptimizerKind { adam, sgd };
enum class LrSchedule { constant, cosine };

struct TrainConfig {
    double beta = 0.6;
    double momentum_m = 0.8;
    double learning_rate = 5e-4;
    double weight_decay = 1e-5;
    std::size_t epochs = 500;
    std::size_t latent_dim = 512;
    std::uint64_t seed = 0;
    AugmentationConfig augmentation;
    OptimizerKind optimizer = OptimizerKind::adam;
    std::pair<double, double> adam_betas{0.9, 0.999};
    double adam_eps = 1e-8;
    std::string log_path;         // empty: no log file
    std::string checkpoint_path;  // empty: no checkpoint

    // Extensions beyond the core hyperparameters.
    double temperature = 1.0;
    bool embed_through_projector = false;
    bool deterministic = true;
    LrSchedule lr_schedule = LrSchedule::constant;
    std::size_t early_stop_patience = 0;  // epochs without improvement; 0 disables

    void validate() const;
};

// JSON object with exactly the TrainConfig field names; unknown keys rejected.
// Missing keys keep their defaults.
TrainConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const TrainConfig& cfg);
TrainConfig load_config(const std::filesystem::path& path);

/// First/second moment accumulators keyed by parameter order.
struct OptimizerState {
    std::vector<DenseMatrix> first_moment;
    std::vector<DenseMatrix> second_moment;
    std::uint64_t step = 0;
};

struct AdamSettings {
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

/// Bias-corrected Adam. Weight decay is decoupled: p <- p * (1 - lr * wd)
/// before the moment update is applied.
void adam_step(std::vector<DenseMatrix*> params, const std::vector<DenseMatrix>& grads,
               OptimizerState& state, const AdamSettings& settings);

// Plain gradient descent with the same decoupled decay.
void sgd_step(std::vector<DenseMatrix*> params, const std::vector<DenseMatrix>& grads, double lr,
              double weight_decay);

// Online parameters in optimizer order.
std::vector<DenseMatrix*> online_parameters(MeritModel& model);

struct StepDiagnostics {
    LossBreakdown losses;
    double max_target_grad = 0.0;  // must stay exactly 0
    bool online_grads_finite = true;
};

/// One optimisation step: draw views, forward both networks on both views,
/// backward the combined loss, update the online network, then blend the
/// target towards the updated online weights.
StepDiagnostics train_step(MeritModel& model, const Graph& g, const DenseMatrix& diffusion,
                           const TrainConfig& cfg, Rng& rng, OptimizerState& opt,
                           double lr_override = -1.0);

struct EpochLog {
    std::size_t epoch = 0;
    LossBreakdown losses;
    double seconds = 0.0;
};

// TSV header and one formatted row.
std::string log_header();
std::string format_log_line(const EpochLog& e);

struct FitResult {
    MeritModel model;
    std::vector<EpochLog> log;
    DenseMatrix diffusion;
};

/// Runs cfg.epochs steps. Writes the log (if log_path set) as it goes and the
/// final checkpoint (if checkpoint_path set).
FitResult fit(const Graph& g, const TrainConfig& cfg);

}  // namespace merit
