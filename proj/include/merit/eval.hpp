#pragma once

#include "merit/graph.hpp"
#include "merit/rng.hpp"
#include "merit/sparse.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace merit {

struct LinearProbe {
    DenseMatrix weight;  // D' x C
    DenseMatrix bias;    // 1 x C
    double l2_penalty = 1e-4;

    int num_classes() const { return static_cast<int>(weight.cols()); }
    DenseMatrix logits(const DenseMatrix& embeddings) const;
};

struct ProbeOptions {
    double l2 = 1e-4;
    std::size_t iters = 2000;
    double grad_tol = 1e-5;
    std::uint64_t seed = 0;  // initial weights; 0 starts from zero
};

// Mean cross-entropy over `idx` plus (l2 / 2) ||W||^2. Bias is unpenalised.
double probe_objective(const LinearProbe& probe, const DenseMatrix& embeddings,
                       const std::vector<int>& labels, std::span<const std::size_t> idx);

/// Multinomial logistic regression on train_idx by full-batch gradient descent
/// with Armijo backtracking. Stops when the gradient norm drops below
/// grad_tol or after `iters` iterations. Embeddings are read-only.
LinearProbe probe_fit(const DenseMatrix& embeddings, const std::vector<int>& labels,
                      const DataSplit& split, const ProbeOptions& opts = {});

// Fraction of idx whose argmax logit (lowest class id on ties) matches the label.
double probe_accuracy(const LinearProbe& probe, const DenseMatrix& embeddings,
                      const std::vector<int>& labels, std::span<const std::size_t> idx);

// Argmax with lowest-index tie breaking.
std::vector<int> predict(const DenseMatrix& logits);

/// per_class nodes of every class go to train, the next per_class to val, the
/// rest to test. Every class needs at least 2 * per_class members.
DataSplit make_splits_per_class(const std::vector<int>& labels, std::size_t per_class, Rng& rng);

/// Writes `N D'` then one row per node (17 significant digits). When labels
/// are given they go to a sibling file `<stem>.labels<ext>`.
void export_embeddings(const DenseMatrix& embeddings, const std::filesystem::path& path,
                       const std::optional<std::vector<int>>& labels = std::nullopt);
std::filesystem::path sibling_label_path(const std::filesystem::path& embeddings_path);

struct EvalReport {
    std::vector<double> accuracies;
    double mean = 0.0;
    double stddev = 0.0;  // population standard deviation
};

/// Fits `repeats` probes with seeds base_seed, base_seed + 1, ... Uses the
/// graph's split when present, otherwise a fresh per-class split per repeat.
EvalReport evaluate_embeddings(const DenseMatrix& embeddings, const Graph& g, std::size_t repeats,
                               std::uint64_t base_seed, const ProbeOptions& opts = {},
                               std::size_t per_class = 30);

}  // namespace merit
