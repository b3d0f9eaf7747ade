#include "merit/eval.hpp"

#include "merit/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

namespace merit {
namespace {

DenseMatrix gather_rows(const DenseMatrix& m, std::span<const std::size_t> idx) {
    DenseMatrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= static_cast<std::size_t>(m.rows()))
            throw ValidationError("index " + std::to_string(idx[i]) + " out of range");
        out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(idx[i]));
    }
    return out;
}

// Row-wise softmax with max shift.
DenseMatrix softmax_rows(const DenseMatrix& logits) {
    DenseMatrix out = logits.colwise() - logits.rowwise().maxCoeff();
    out = out.array().exp();
    const Eigen::VectorXd s = out.rowwise().sum();
    out = out.array().colwise() / s.array();
    return out;
}

struct Problem {
    DenseMatrix x;  // n x d
    DenseMatrix y;  // n x C one-hot
    double l2;
};

double objective(const Problem& p, const DenseMatrix& w, const DenseMatrix& b) {
    DenseMatrix z = (p.x * w).rowwise() + b.row(0);
    const Eigen::VectorXd mx = z.rowwise().maxCoeff();
    const Eigen::VectorXd lse = ((z.colwise() - mx).array().exp().rowwise().sum().log()).matrix() + mx;
    const double ce = (lse - z.cwiseProduct(p.y).rowwise().sum()).sum() / static_cast<double>(p.x.rows());
    return ce + 0.5 * p.l2 * w.squaredNorm();
}

void gradient(const Problem& p, const DenseMatrix& w, const DenseMatrix& b, DenseMatrix& gw,
              DenseMatrix& gb) {
    const DenseMatrix z = (p.x * w).rowwise() + b.row(0);
    const DenseMatrix r = (softmax_rows(z) - p.y) / static_cast<double>(p.x.rows());
    gw = p.x.transpose() * r + p.l2 * w;
    gb = r.colwise().sum();
}

}  // namespace

DenseMatrix LinearProbe::logits(const DenseMatrix& embeddings) const {
    if (embeddings.cols() != weight.rows()) throw DimensionError("probe: embedding width mismatch");
    return (embeddings * weight).rowwise() + bias.row(0);
}

std::vector<int> predict(const DenseMatrix& logits) {
    std::vector<int> out(static_cast<std::size_t>(logits.rows()));
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < logits.cols(); ++c)
            if (logits(i, c) > logits(i, best)) best = c;
        out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return out;
}

double probe_objective(const LinearProbe& probe, const DenseMatrix& embeddings,
                       const std::vector<int>& labels, std::span<const std::size_t> idx) {
    Problem p{gather_rows(embeddings, idx),
              DenseMatrix::Zero(static_cast<Eigen::Index>(idx.size()), probe.weight.cols()),
              probe.l2_penalty};
    for (std::size_t i = 0; i < idx.size(); ++i)
        p.y(static_cast<Eigen::Index>(i), labels[idx[i]]) = 1.0;
    return objective(p, probe.weight, probe.bias);
}

LinearProbe probe_fit(const DenseMatrix& embeddings, const std::vector<int>& labels,
                      const DataSplit& split, const ProbeOptions& opts) {
    if (labels.size() != static_cast<std::size_t>(embeddings.rows()))
        throw DimensionError("probe_fit: label count does not match embeddings");
    if (split.train_idx.empty()) throw ValidationError("probe_fit: empty training set");
    split.validate(labels.size());

    std::set<int> train_classes;
    for (auto i : split.train_idx) train_classes.insert(labels[i]);
    if (train_classes.size() < 2) throw ValidationError("probe_fit: training set has a single class");
    const int n_classes = *std::max_element(labels.begin(), labels.end()) + 1;

    Problem p{gather_rows(embeddings, split.train_idx),
              DenseMatrix::Zero(static_cast<Eigen::Index>(split.train_idx.size()), n_classes),
              opts.l2};
    for (std::size_t i = 0; i < split.train_idx.size(); ++i)
        p.y(static_cast<Eigen::Index>(i), labels[split.train_idx[i]]) = 1.0;

    LinearProbe probe;
    probe.l2_penalty = opts.l2;
    probe.weight = DenseMatrix::Zero(embeddings.cols(), n_classes);
    probe.bias = DenseMatrix::Zero(1, n_classes);
    if (opts.seed != 0) {
        Rng rng(opts.seed);
        const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(1, embeddings.cols())));
        for (Eigen::Index i = 0; i < probe.weight.size(); ++i)
            probe.weight.data()[i] = rng.uniform_real(-bound, bound) * 0.01;
    }

    DenseMatrix gw, gb;
    double f = objective(p, probe.weight, probe.bias);
    double step = 1.0;
    for (std::size_t it = 0; it < opts.iters; ++it) {
        gradient(p, probe.weight, probe.bias, gw, gb);
        const double gnorm2 = gw.squaredNorm() + gb.squaredNorm();
        if (std::sqrt(gnorm2) < opts.grad_tol) break;
        step *= 2.0;
        for (;;) {
            const DenseMatrix w_new = probe.weight - step * gw;
            const DenseMatrix b_new = probe.bias - step * gb;
            const double f_new = objective(p, w_new, b_new);
            if (f_new <= f - 1e-4 * step * gnorm2) {
                probe.weight = w_new;
                probe.bias = b_new;
                f = f_new;
                break;
            }
            step *= 0.5;
            if (step < 1e-20) return probe;
        }
    }
    return probe;
}

double probe_accuracy(const LinearProbe& probe, const DenseMatrix& embeddings,
                      const std::vector<int>& labels, std::span<const std::size_t> idx) {
    if (idx.empty()) throw ValidationError("probe_accuracy: empty index set");
    const auto pred = predict(probe.logits(gather_rows(embeddings, idx)));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < idx.size(); ++i) correct += pred[i] == labels[idx[i]];
    return static_cast<double>(correct) / static_cast<double>(idx.size());
}

DataSplit make_splits_per_class(const std::vector<int>& labels, std::size_t per_class, Rng& rng) {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    DataSplit split;
    for (auto& [cls, members] : by_class) {
        if (members.size() < 2 * per_class)
            throw ValidationError("class " + std::to_string(cls) + " has " +
                                  std::to_string(members.size()) + " nodes, need " +
                                  std::to_string(2 * per_class));
        const auto order = rng.sample_without_replacement(members.size(), members.size());
        for (std::size_t k = 0; k < order.size(); ++k) {
            const std::size_t node = members[order[k]];
            if (k < per_class)
                split.train_idx.push_back(node);
            else if (k < 2 * per_class)
                split.val_idx.push_back(node);
            else
                split.test_idx.push_back(node);
        }
    }
    std::sort(split.train_idx.begin(), split.train_idx.end());
    std::sort(split.val_idx.begin(), split.val_idx.end());
    std::sort(split.test_idx.begin(), split.test_idx.end());
    return split;
}

std::filesystem::path sibling_label_path(const std::filesystem::path& embeddings_path) {
    auto p = embeddings_path;
    const auto ext = p.extension().string();
    p.replace_extension();
    return std::filesystem::path(p.string() + ".labels" + (ext.empty() ? ".txt" : ext));
}

void export_embeddings(const DenseMatrix& embeddings, const std::filesystem::path& path,
                       const std::optional<std::vector<int>>& labels) {
    save_dense(embeddings, path);
    if (labels) save_labels(*labels, sibling_label_path(path));
}

EvalReport evaluate_embeddings(const DenseMatrix& embeddings, const Graph& g, std::size_t repeats,
                               std::uint64_t base_seed, const ProbeOptions& opts,
                               std::size_t per_class) {
    if (!g.labels) throw ValidationError("evaluation needs node labels");
    if (repeats < 1) throw ValidationError("repeats must be >= 1");
    EvalReport report;
    for (std::size_t r = 0; r < repeats; ++r) {
        const std::uint64_t seed = base_seed + r;
        DataSplit split;
        if (g.split) {
            split = *g.split;
        } else {
            Rng rng(seed);
            split = make_splits_per_class(*g.labels, per_class, rng);
        }
        ProbeOptions o = opts;
        o.seed = seed == 0 ? 0 : seed;
        const auto probe = probe_fit(embeddings, *g.labels, split, o);
        report.accuracies.push_back(probe_accuracy(probe, embeddings, *g.labels, split.test_idx));
    }
    const double n = static_cast<double>(repeats);
    report.mean = std::accumulate(report.accuracies.begin(), report.accuracies.end(), 0.0) / n;
    double ss = 0.0;
    for (double a : report.accuracies) ss += (a - report.mean) * (a - report.mean);
    report.stddev = std::sqrt(ss / n);
    return report;
}

}  // namespace merit
