// merit: train, evaluate and inspect MERIT graph embeddings.

#include "merit/augment.hpp"
#include "merit/error.hpp"
#include "merit/eval.hpp"
#include "merit/grad_check.hpp"
#include "merit/graph.hpp"
#include "merit/model.hpp"
#include "merit/trainer.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace merit;

namespace {

enum Exit { ok = 0, config_error = 1, data_error = 2, numeric_abort = 3 };

struct DataFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

Graph load_data(const std::string& dir) {
    try {
        if (!fs::is_directory(dir)) throw IoError("data directory not found: " + dir);
        return load_dataset(dir);
    } catch (const Error& e) {
        throw DataFailure(e.what());
    }
}

TrainConfig load_config_or_default(const std::string& path) {
    if (path.empty()) return TrainConfig{};
    if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
    return load_config(path);
}

void warn_duplicates(const CLI::App& app) {
    for (const CLI::Option* opt : app.get_options())
        if (opt->count() > 1)
            std::cerr << "warning: " << opt->get_name() << " given " << opt->count()
                      << " times; using the last value\n";
}

// Runs `body`, mapping library exceptions to exit codes.
template <class F>
int guarded(F&& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return config_error;
    } catch (const NumericError& e) {
        std::cerr << "numeric abort: " << e.what() << '\n';
        return numeric_abort;
    } catch (const DataFailure& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return data_error;
    } catch (const Error& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return data_error;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return data_error;
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    out << text;
    if (!out) throw IoError("cannot write " + path.string());
}

void save_triplets(const SparseMatrix& m, const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    out.precision(17);
    out << m.rows() << ' ' << m.cols() << '\n';
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto cols = m.row_cols(r);
        const auto vals = m.row_values(r);
        for (std::size_t k = 0; k < cols.size(); ++k) out << r << ' ' << cols[k] << ' ' << vals[k] << '\n';
    }
    if (!out) throw IoError("cannot write " + path.string());
}

DenseMatrix diffusion_from(const Graph& g, const AugmentationConfig& aug) {
    try {
        return diffusion_for(g.adjacency, aug);
    } catch (const NumericError&) {
        throw;
    } catch (const Error& e) {
        throw DataFailure(e.what());
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MERIT self-supervised graph representation learning"};
    app.require_subcommand(1, 1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    // train
    auto* train = app.add_subcommand("train", "Train a model and write checkpoint, log and embeddings");
    std::string config_path, data_dir, out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<double> beta, momentum, edge_mod, feat_mask, alpha, lr;
    std::optional<std::size_t> epochs, latent_dim, subgraph;
    train->add_option("--config", config_path, "JSON config (defaults when omitted)");
    train->add_option("--data", data_dir, "Dataset directory")->required();
    train->add_option("--out", out_dir, "Output directory")->required();
    train->add_option("--seed", seed, "Override the config seed");
    train->add_option("--beta", beta, "Balance between cross-view and cross-network losses");
    train->add_option("--momentum", momentum, "Target network momentum m");
    train->add_option("--edge-mod-ratio", edge_mod, "Edge modification ratio");
    train->add_option("--feature-mask-ratio", feat_mask, "Feature masking ratio");
    train->add_option("--alpha", alpha, "PPR teleport probability; 0 disables diffusion");
    train->add_option("--lr", lr, "Learning rate");
    train->add_option("--epochs", epochs, "Training epochs");
    train->add_option("--latent-dim", latent_dim, "Embedding dimension");
    train->add_option("--subgraph-size", subgraph, "Subsampled window size");

    // eval
    auto* eval = app.add_subcommand("eval", "Linear-probe accuracy of a checkpoint");
    std::string ckpt, eval_config, dataset_name;
    std::size_t repeats = 10, per_class = 30;
    std::uint64_t eval_seed = 0;
    bool through_heads = false;
    eval->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
    eval->add_option("--data", data_dir, "Dataset directory")->required();
    eval->add_option("--config", eval_config, "Config used for training (diffusion settings)");
    eval->add_option("--alpha", alpha, "PPR teleport probability override");
    eval->add_option("--repeats", repeats, "Probe repetitions with distinct seeds")->capture_default_str();
    eval->add_option("--seed", eval_seed, "Base probe seed")->capture_default_str();
    eval->add_option("--per-class", per_class, "Labels per class when no split file exists")->capture_default_str();
    eval->add_option("--name", dataset_name, "Dataset name for the report (default: directory name)");
    eval->add_flag("--through-heads", through_heads, "Embed through projector and predictor");

    // embed
    auto* embed = app.add_subcommand("embed", "Export embeddings of a checkpoint");
    std::string embed_out;
    embed->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
    embed->add_option("--data", data_dir, "Dataset directory")->required();
    embed->add_option("--config", eval_config, "Config used for training (diffusion settings)");
    embed->add_option("--alpha", alpha, "PPR teleport probability override");
    embed->add_option("--out", embed_out, "Embedding file")->required();
    embed->add_flag("--through-heads", through_heads, "Embed through projector and predictor");

    // diffuse
    auto* diffuse = app.add_subcommand("diffuse", "Compute the PPR diffusion matrix");
    std::string diffuse_out, method = "exact";
    double diffuse_alpha = 0.05;
    diffuse->add_option("--data", data_dir, "Dataset directory")->required();
    diffuse->add_option("--alpha", diffuse_alpha, "PPR teleport probability")->capture_default_str();
    diffuse->add_option("--method", method, "exact or power")
        ->check(CLI::IsMember({"exact", "power"}))
        ->capture_default_str();
    diffuse->add_option("--out", diffuse_out, "Output matrix file")->required();

    // augment-preview
    auto* preview = app.add_subcommand("augment-preview", "Write one pair of augmented views");
    preview->add_option("--config", config_path, "JSON config");
    preview->add_option("--data", data_dir, "Dataset directory")->required();
    preview->add_option("--out", out_dir, "Output directory")->required();
    preview->add_option("--seed", seed, "Override the config seed");

    // grad-check
    auto* gcheck = app.add_subcommand("grad-check", "Finite-difference check of every differentiable op");
    std::uint64_t gc_seed = 1;
    double gc_tol = 1e-4;
    gcheck->add_option("--seed", gc_seed, "Random instance seed")->capture_default_str();
    gcheck->add_option("--tol", gc_tol, "Maximum allowed relative error")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return config_error;
    }
    for (const auto* sub : app.get_subcommands()) warn_duplicates(*sub);

    auto resolve_aug = [&](const std::string& cfg_path) {
        AugmentationConfig aug = load_config_or_default(cfg_path).augmentation;
        if (alpha) aug.ppr_alpha = *alpha;
        aug.validate();
        return aug;
    };

    if (*train) {
        return guarded([&] {
            TrainConfig cfg = load_config_or_default(config_path);
            if (seed) cfg.seed = *seed;
            if (beta) cfg.beta = *beta;
            if (momentum) cfg.momentum_m = *momentum;
            if (edge_mod) cfg.augmentation.edge_mod_ratio = *edge_mod;
            if (feat_mask) cfg.augmentation.feature_mask_ratio = *feat_mask;
            if (alpha) cfg.augmentation.ppr_alpha = *alpha;
            if (lr) cfg.learning_rate = *lr;
            if (epochs) cfg.epochs = *epochs;
            if (latent_dim) cfg.latent_dim = *latent_dim;
            if (subgraph) cfg.augmentation.subgraph_size = *subgraph;
            const fs::path out(out_dir);
            fs::create_directories(out);
            cfg.log_path = (out / "train_log.tsv").string();
            cfg.checkpoint_path = (out / "checkpoint.bin").string();
            try {
                cfg.validate();
            } catch (const Error& e) {
                throw ConfigError(e.what());
            }
            write_text(out / "effective_config.json", config_to_json(cfg).dump(2) + "\n");

            const Graph g = load_data(data_dir);
            FitResult res = [&] {
                try {
                    return fit(g, cfg);
                } catch (const NumericError&) {
                    throw;
                } catch (const ConfigError&) {
                    throw;
                } catch (const Error& e) {
                    throw DataFailure(e.what());
                }
            }();
            const auto emb = infer_embeddings(res.model, g, res.diffusion, cfg.embed_through_projector);
            export_embeddings(emb, out / "embeddings.txt", g.labels);
            std::printf("trained %zu epochs, final loss %.6f\n", res.log.size(),
                        res.log.empty() ? 0.0 : res.log.back().losses.l_total);
            std::printf("wrote %s\n", out.string().c_str());
            return static_cast<int>(ok);
        });
    }

    if (*eval || *embed) {
        return guarded([&] {
            const auto aug = resolve_aug(eval_config);
            if (!fs::exists(ckpt)) throw DataFailure("checkpoint not found: " + ckpt);
            MeritModel model = [&] {
                try {
                    return load_checkpoint(ckpt);
                } catch (const Error& e) {
                    throw DataFailure(e.what());
                }
            }();
            const Graph g = load_data(data_dir);
            if (model.input_dim() != g.feature_dim())
                throw DataFailure("checkpoint expects " + std::to_string(model.input_dim()) +
                                  " features, data has " + std::to_string(g.feature_dim()));
            const auto emb = infer_embeddings(model, g, diffusion_from(g, aug), through_heads);
            if (*embed) {
                export_embeddings(emb, embed_out, g.labels);
                std::printf("wrote %s (%td x %td)\n", embed_out.c_str(), emb.rows(), emb.cols());
                return static_cast<int>(ok);
            }
            if (!g.labels) throw DataFailure("evaluation needs labels.txt in " + data_dir);
            EvalReport rep = [&] {
                try {
                    return evaluate_embeddings(emb, g, repeats, eval_seed, ProbeOptions{}, per_class);
                } catch (const Error& e) {
                    throw DataFailure(e.what());
                }
            }();
            if (dataset_name.empty()) dataset_name = fs::path(data_dir).lexically_normal().filename().string();
            if (dataset_name.empty()) dataset_name = fs::path(data_dir).lexically_normal().parent_path().filename().string();
            std::printf("dataset\taccuracy\tstd\n%s\t%.4f\t%.4f\n", dataset_name.c_str(), rep.mean, rep.stddev);
            return static_cast<int>(ok);
        });
    }

    if (*diffuse) {
        return guarded([&] {
            const Graph g = load_data(data_dir);
            AugmentationConfig aug;
            aug.ppr_alpha = diffuse_alpha;
            aug.ppr_method = method == "power" ? PprMethod::power_series : PprMethod::exact_inverse;
            try {
                aug.validate();
            } catch (const Error& e) {
                throw ConfigError(e.what());
            }
            save_dense(diffusion_from(g, aug), diffuse_out);
            std::printf("wrote %s\n", diffuse_out.c_str());
            return static_cast<int>(ok);
        });
    }

    if (*preview) {
        return guarded([&] {
            TrainConfig cfg = load_config_or_default(config_path);
            if (seed) cfg.seed = *seed;
            const Graph g = load_data(data_dir);
            const auto s = diffusion_from(g, cfg.augmentation);
            Rng rng(cfg.seed);
            const auto views = [&] {
                try {
                    return make_views(g, s, cfg.augmentation, rng);
                } catch (const Error& e) {
                    throw DataFailure(e.what());
                }
            }();
            const fs::path out(out_dir);
            fs::create_directories(out);
            save_dense(views.first.features, out / "view1_features.txt");
            save_triplets(std::get<SparseMatrix>(views.first.op), out / "view1_operator.txt");
            save_dense(views.second.features, out / "view2_features.txt");
            save_dense(std::get<DenseMatrix>(views.second.op), out / "view2_operator.txt");
            std::string nodes;
            for (auto v : views.first.node_map) nodes += std::to_string(v) + '\n';
            write_text(out / "node_map.txt", nodes);
            std::printf("window [%zu, %zu) of %zu nodes\n", views.first.node_map.front(),
                        views.first.node_map.back() + 1, g.num_nodes());
            std::printf("wrote %s\n", out.string().c_str());
            return static_cast<int>(ok);
        });
    }

    if (*gcheck) {
        return guarded([&] {
            bool pass = true;
            std::printf("%-24s %-12s %s\n", "op", "max_rel_err", "coords");
            for (const auto& e : ad::run_grad_check_suite(gc_seed)) {
                const bool good = e.result.max_rel_error < gc_tol;
                pass = pass && good;
                std::printf("%-24s %-12.3e %zu%s\n", e.name.c_str(), e.result.max_rel_error,
                            e.result.coords_checked, good ? "" : "  FAIL");
            }
            return pass ? static_cast<int>(ok) : static_cast<int>(numeric_abort);
        });
    }
    return ok;
}
