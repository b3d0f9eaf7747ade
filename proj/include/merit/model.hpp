#pragma once

#include "merit/augment.hpp"
#include "merit/autodiff.hpp"
#include "merit/graph.hpp"
#include "merit/rng.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace merit {

/// One-layer GCN: PReLU(op · X · W).
struct GcnEncoder {
    DenseMatrix weight;       // D x D'
    DenseMatrix prelu_slope;  // 1 x 1
};

/// Linear -> BatchNorm -> PReLU -> Linear.
struct MlpHead {
    DenseMatrix w1, b1;
    DenseMatrix bn_scale, bn_shift;
    DenseMatrix act_slope;  // 1 x 1
    DenseMatrix w2, b2;
    ad::BatchNormStats bn_stats;
};

struct OnlineNetwork {
    GcnEncoder encoder;
    MlpHead projector;
    MlpHead predictor;
};

struct TargetNetwork {
    GcnEncoder encoder;
    MlpHead projector;
};

struct MeritModel {
    OnlineNetwork online;
    TargetNetwork target;
    double momentum = 0.8;

    std::size_t input_dim() const { return static_cast<std::size_t>(online.encoder.weight.rows()); }
    std::size_t latent_dim() const { return static_cast<std::size_t>(online.encoder.weight.cols()); }
};

// Glorot-uniform weights, zero biases, unit BN scale, PReLU slopes 0.25.
// The target starts as an exact copy of the online encoder and projector.
MeritModel init_model(std::size_t input_dim, std::size_t latent_dim, Rng& rng,
                      double momentum = 0.8);

// Trainable tensors bound to a tape.
struct EncoderVars {
    ad::Var weight, slope;
};
struct HeadVars {
    ad::Var w1, b1, bn_scale, bn_shift, act_slope, w2, b2;
};
struct OnlineVars {
    EncoderVars encoder;
    HeadVars projector, predictor;

    // (name, var) in checkpoint naming order.
    std::vector<std::pair<std::string, ad::Var>> named() const;
};
struct TargetVars {
    EncoderVars encoder;
    HeadVars projector;

    std::vector<std::pair<std::string, ad::Var>> named() const;
};

EncoderVars bind(ad::Tape& tape, const GcnEncoder& enc, bool requires_grad = true);
HeadVars bind(ad::Tape& tape, const MlpHead& head, bool requires_grad = true);
OnlineVars bind(ad::Tape& tape, const OnlineNetwork& net);
// Target leaves are created as gradient-tracking so the stop-gradient is the
// only thing keeping gradients out of them.
TargetVars bind(ad::Tape& tape, const TargetNetwork& net);

ad::Var encode(ad::Tape& tape, const EncoderVars& enc, const GraphView& view);
ad::Var apply_head(const HeadVars& head, ad::BatchNormStats& stats, ad::Var x, bool training);

struct OnlineOutput {
    ad::Var z;  // projector output
    ad::Var h;  // predictor output
};

OnlineOutput online_forward(ad::Tape& tape, MeritModel& model, const OnlineVars& vars,
                            const GraphView& view, bool training);
// Detached projector output of the target network.
ad::Var target_forward(ad::Tape& tape, MeritModel& model, const TargetVars& vars,
                       const GraphView& view, bool training = true);

// Forward-only encode of a view (eval mode, fresh tape).
DenseMatrix encode_values(const GcnEncoder& enc, const GraphView& view);

/// target <- m * target + (1 - m) * online for every weight, bias, BN
/// scale/shift and PReLU slope. Running statistics are left alone.
void momentum_update(MeritModel& model);

/// H = g(X, Â) + g(X, S) with the online encoder, no augmentation. With
/// `through_heads` the predictor(projector(.)) outputs are summed instead.
DenseMatrix infer_embeddings(const MeritModel& model, const Graph& g, const DenseMatrix& diffusion,
                             bool through_heads = false);

// Visit every stored tensor with its checkpoint name.
void for_each_tensor(MeritModel& model, const std::function<void(const std::string&, DenseMatrix&)>& fn);
void for_each_tensor(const MeritModel& model,
                     const std::function<void(const std::string&, const DenseMatrix&)>& fn);
// Online/target pairs that momentum_update blends.
void for_each_momentum_pair(MeritModel& model,
                            const std::function<void(DenseMatrix& target, const DenseMatrix& online)>& fn);

/// Binary checkpoint: "MERIT1", then per tensor: u32 name length, name bytes,
/// u64 rows, u64 cols, rows*cols little-endian f64 (row-major). Written to a
/// temporary file and renamed into place.
void save_checkpoint(const MeritModel& model, const std::filesystem::path& path);
MeritModel load_checkpoint(const std::filesystem::path& path, double momentum = 0.8);

}  // namespace merit
