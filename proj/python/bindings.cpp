#include "merit/augment.hpp"
#include "merit/error.hpp"
#include "merit/eval.hpp"
#include "merit/grad_check.hpp"
#include "merit/graph.hpp"
#include "merit/model.hpp"
#include "merit/synthetic.hpp"
#include "merit/trainer.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace merit;

namespace {

Graph make_graph(const DenseMatrix& features, const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                 const std::optional<std::vector<int>>& labels) {
    std::vector<Triplet> t;
    t.reserve(edges.size());
    for (const auto& [u, v] : edges) t.push_back({u, v, 1.0});
    Graph g;
    g.features = features;
    g.adjacency = adjacency_from_edges(static_cast<std::size_t>(features.rows()), t);
    g.labels = labels;
    g.validate();
    return g;
}

std::vector<std::pair<std::size_t, std::size_t>> edge_list(const Graph& g) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    const DenseMatrix a = g.adjacency.to_dense();
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = i + 1; j < a.cols(); ++j)
            if (a(i, j) != 0.0) out.emplace_back(i, j);
    return out;
}

py::dict losses_dict(const LossBreakdown& l) {
    py::dict d;
    d["l_total"] = l.l_total;
    d["l_cn"] = l.l_cn;
    d["l_cv"] = l.l_cv;
    d["pos_sim"] = l.pos_sim;
    d["neg_sim"] = l.neg_sim;
    return d;
}

}  // namespace

PYBIND11_MODULE(_merit, m) {
    m.doc() = "Siamese momentum-network node embeddings (MERIT)";

    auto base = py::register_exception<Error>(m, "MeritError", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());
    py::register_exception<ParseError>(m, "ParseError", base.ptr());
    py::register_exception<NumericError>(m, "NumericError", base.ptr());
    py::register_exception<DimensionError>(m, "DimensionError", base.ptr());

    py::class_<Graph>(m, "Graph")
        .def(py::init(&make_graph), py::arg("features"), py::arg("edges"), py::arg("labels") = py::none())
        .def_property_readonly("num_nodes", &Graph::num_nodes)
        .def_property_readonly("num_edges", &Graph::num_edges)
        .def_property_readonly("feature_dim", &Graph::feature_dim)
        .def_property_readonly("features", [](const Graph& g) { return g.features; })
        .def_property_readonly("labels", [](const Graph& g) { return g.labels; })
        .def("edges", &edge_list, "Undirected edges (i < j)")
        .def("adjacency", [](const Graph& g) { return g.adjacency.to_dense(); }, "Dense adjacency matrix");

    m.def("load_dataset", &load_dataset, py::arg("path"));
    m.def("save_dataset", &save_dataset, py::arg("graph"), py::arg("path"));

    m.def(
        "make_block_graph",
        [](std::size_t num_nodes, std::size_t num_blocks, double p_in, double p_out, std::size_t feature_dim,
           std::size_t informative_dims, double signal, double noise, double nuisance_noise, std::uint64_t seed) {
            BlockGraphConfig c{num_nodes, num_blocks, p_in, p_out, feature_dim, informative_dims,
                               signal,    noise,      nuisance_noise};
            Rng rng(seed);
            return make_block_graph(c, rng);
        },
        py::arg("num_nodes") = 200, py::arg("num_blocks") = 2, py::arg("p_in") = 0.1, py::arg("p_out") = 0.01,
        py::arg("feature_dim") = 32, py::arg("informative_dims") = 0, py::arg("signal") = 1.0,
        py::arg("noise") = 1.0, py::arg("nuisance_noise") = 1.0, py::arg("seed") = 0);

    m.def(
        "ppr_diffusion",
        [](const Graph& g, double alpha, const std::string& method) {
            if (method == "exact") return ppr_diffusion_exact(g.adjacency, alpha);
            if (method == "power") return ppr_power_series(g.adjacency, alpha, 10000, 1e-12);
            throw ConfigError("method must be 'exact' or 'power'");
        },
        py::arg("graph"), py::arg("alpha") = 0.05, py::arg("method") = "exact");

    py::class_<MeritModel>(m, "Model")
        .def_property_readonly("input_dim", &MeritModel::input_dim)
        .def_property_readonly("latent_dim", &MeritModel::latent_dim)
        .def("save", [](const MeritModel& model, const std::filesystem::path& p) { save_checkpoint(model, p); })
        .def_static("load", [](const std::filesystem::path& p) { return load_checkpoint(p); })
        .def(
            "embed",
            [](const MeritModel& model, const Graph& g, double alpha, bool through_heads) {
                AugmentationConfig aug;
                aug.ppr_alpha = alpha;
                return infer_embeddings(model, g, diffusion_for(g.adjacency, aug), through_heads);
            },
            py::arg("graph"), py::arg("alpha") = 0.05, py::arg("through_heads") = false)
        .def("tensors", [](const MeritModel& model) {
            py::dict d;
            for_each_tensor(model, [&](const std::string& name, const DenseMatrix& t) { d[name.c_str()] = t; });
            return d;
        });

    m.def(
        "init_model",
        [](std::size_t input_dim, std::size_t latent_dim, std::uint64_t seed) {
            Rng rng(seed);
            return init_model(input_dim, latent_dim, rng);
        },
        py::arg("input_dim"), py::arg("latent_dim"), py::arg("seed") = 0);

    m.def("_default_config_json", [] { return config_to_json(TrainConfig{}).dump(); });
    m.def(
        "_fit_json",
        [](const Graph& g, const std::string& config_json) {
            const TrainConfig cfg = config_from_json(nlohmann::json::parse(config_json));
            FitResult r;
            {
                py::gil_scoped_release release;
                r = fit(g, cfg);
            }
            py::list log;
            for (const auto& e : r.log) {
                py::dict d = losses_dict(e.losses);
                d["epoch"] = e.epoch;
                d["seconds"] = e.seconds;
                log.append(d);
            }
            return py::make_tuple(r.model, log);
        },
        py::arg("graph"), py::arg("config_json"));

    m.def(
        "evaluate",
        [](const DenseMatrix& emb, const Graph& g, std::size_t repeats, std::uint64_t seed, std::size_t per_class) {
            const auto rep = evaluate_embeddings(emb, g, repeats, seed, {}, per_class);
            py::dict d;
            d["accuracies"] = rep.accuracies;
            d["mean"] = rep.mean;
            d["std"] = rep.stddev;
            return d;
        },
        py::arg("embeddings"), py::arg("graph"), py::arg("repeats") = 10, py::arg("seed") = 0,
        py::arg("per_class") = 30);

    m.def(
        "grad_check",
        [](std::uint64_t seed) {
            std::vector<std::pair<std::string, double>> out;
            for (const auto& e : ad::run_grad_check_suite(seed)) out.emplace_back(e.name, e.result.max_rel_error);
            return out;
        },
        py::arg("seed") = 1, "Worst relative finite-difference error per checked function");
}
