// Python bindings. Structured values cross the boundary as JSON text; the
// grade package decodes them.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <spdlog/spdlog.h>

#include "grade/augment.hpp"
#include "grade/corpus.hpp"
#include "grade/difficulty.hpp"
#include "grade/errors.hpp"
#include "grade/evalharness.hpp"
#include "grade/gmm.hpp"
#include "grade/graph.hpp"
#include "grade/pipeline.hpp"
#include "grade/qagen.hpp"

namespace py = pybind11;
using namespace grade;

namespace {

std::vector<std::tuple<std::size_t, std::size_t, std::string>> chunk_text(const std::string& text, std::size_t min_tokens,
                                                                          std::size_t max_tokens, std::size_t overlap,
                                                                          const std::string& tokenizer) {
    const auto tok = make_tokenizer(tokenizer);
    Article a;
    a.id = "text";
    a.text = text;
    std::vector<std::tuple<std::size_t, std::size_t, std::string>> out;
    for (const auto& c : chunk(a, *tok, {min_tokens, max_tokens, overlap})) out.emplace_back(c.start, c.end, c.text);
    return out;
}

std::string fit_gmm_json(const Points& data, std::size_t k, std::uint64_t seed, std::size_t max_iters, double tol) {
    GmmOptions o;
    o.k = k;
    o.seed = seed;
    o.max_iters = max_iters;
    o.tol = tol;
    py::gil_scoped_release release;
    return json(fit_gmm(data, o)).dump();
}

Points responsibilities_json(const std::string& model, const Points& data) {
    return responsibilities(json::parse(model).get<GmmModel>(), data);
}

std::string build_graph_json(const std::string& triples) {
    return json(build_graph(json::parse(triples).get<std::vector<Triple>>())).dump();
}

std::string augment_graph_json(const std::string& graph, const std::string& groups, const std::string& memberships) {
    AugmentReport report;
    auto out = augment_graph(json::parse(graph).get<KnowledgeGraph>(), json::parse(groups).get<std::vector<EquivalenceGroup>>(),
                             json::parse(memberships).get<std::map<std::string, std::vector<std::size_t>>>(), &report);
    return json{{"graph", out},
                {"report",
                 {{"exact_components", report.exact_components},
                  {"nodes_removed", report.nodes_removed},
                  {"mirrored_edges_added", report.mirrored_edges_added},
                  {"unresolved_members", report.unresolved_members}}}}
        .dump();
}

std::string enumerate_paths_json(const std::string& graph, std::size_t min_hop, std::size_t max_hop, std::size_t per_pair_cap) {
    PathOptions o;
    o.min_hop = min_hop;
    o.max_hop = max_hop;
    o.per_pair_cap = per_pair_cap;
    const auto g = json::parse(graph).get<KnowledgeGraph>();
    py::gil_scoped_release release;
    return json(enumerate_paths(g, o)).dump();
}

std::string run_pipeline(const std::string& config_path, const std::string& workdir, const std::vector<std::string>& stages,
                         bool force) {
    auto config = config_path.empty() ? PipelineConfig{} : load_config(config_path);
    config.validate();
    const auto plan = resolve_stages(stages);
    py::gil_scoped_release release;
    Pipeline pipeline(config, workdir);
    json out = json::array();
    for (const auto& r : pipeline.run(plan, force))
        out.push_back({{"stage", r.name}, {"status", r.status == StageStatus::cached ? "cached" : "executed"}, {"stats", r.stats}});
    return out.dump();
}

}  // namespace

PYBIND11_MODULE(_grade, m) {
    m.doc() = "GRADE core bindings";
    spdlog::set_level(spdlog::level::warn);

    auto base = py::register_exception<Error>(m, "GradeError", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<MissingArtifactError>(m, "MissingArtifactError", base.ptr());
    py::register_exception<TransportError>(m, "TransportError", base.ptr());

    m.def("set_log_level", [](const std::string& level) { spdlog::set_level(spdlog::level::from_str(level)); });

    m.def("aggregate", [](const std::vector<double>& s, const std::string& agg) { return aggregate(s, Aggregator::parse(agg)); },
          py::arg("similarities"), py::arg("aggregator") = "min");
    m.def("bin_sizes", &bin_sizes, py::arg("n"), py::arg("bins") = 4);
    m.def("pearson", [](const std::vector<double>& x, const std::vector<double>& y) { return pearson(x, y).r; });

    m.def("split_sentences", [](const std::string& text) { return split_text_sentences(text); });
    m.def("chunk_text", &chunk_text, py::arg("text"), py::arg("min_tokens") = 128, py::arg("max_tokens") = 256,
          py::arg("overlap") = 50, py::arg("tokenizer") = "simple");

    m.def("fit_gmm_json", &fit_gmm_json, py::arg("data"), py::arg("k"), py::arg("seed") = 7, py::arg("max_iters") = 200,
          py::arg("tol") = 1e-6);
    m.def("responsibilities_json", &responsibilities_json);

    m.def("build_graph_json", &build_graph_json);
    m.def("augment_graph_json", &augment_graph_json);
    m.def("enumerate_paths_json", &enumerate_paths_json, py::arg("graph"), py::arg("min_hop") = 2, py::arg("max_hop") = 5,
          py::arg("per_pair_cap") = 64);

    m.def("resolve_stages", &resolve_stages);
    m.def("run_pipeline", &run_pipeline, py::arg("config_path"), py::arg("workdir"),
          py::arg("stages") = std::vector<std::string>{"all"}, py::arg("force") = false);
}
