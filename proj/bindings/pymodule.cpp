#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "issrnn/bench.hpp"
#include "issrnn/compact.hpp"
#include "issrnn/config.hpp"
#include "issrnn/gradcheck.hpp"
#include "issrnn/model_groups.hpp"
#include "issrnn/model_io.hpp"
#include "issrnn/train.hpp"

namespace py = pybind11;
using namespace issrnn;

namespace {

Matrix matrix_from_numpy(py::array_t<float, py::array::c_style | py::array::forcecast> a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D float32 array");
  Matrix m(int(a.shape(0)), int(a.shape(1)));
  std::memcpy(m.data.data(), a.data(), m.numel() * sizeof(float));
  return m;
}

py::array_t<float> numpy_from_matrix(const Matrix& m) {
  py::array_t<float> a({m.rows, m.cols});
  std::memcpy(a.mutable_data(), m.data.data(), m.numel() * sizeof(float));
  return a;
}

// Model handle exposing tensors as numpy copies.
struct PyModel {
  Model model;

  std::string kind() const {
    return std::holds_alternative<LstmLmModel>(model) ? "lstm_stack" : "rhn";
  }
  py::dict tensors() const {
    py::dict d;
    for (auto& [name, t] : named_tensors_const(model))
      d[py::str(name)] = numpy_from_matrix(*t);
    return d;
  }
  void set_tensor(const std::string& name, py::array_t<float> a) {
    Matrix m = matrix_from_numpy(a);
    for (auto& [n, t] : named_tensors(model)) {
      if (n == name) {
        if (!t->same_shape(m)) throw ShapeError("set_tensor: shape mismatch for " + name);
        *t = std::move(m);
        return;
      }
    }
    throw ParameterError("set_tensor: no tensor named '" + name + "'");
  }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Structured-sparsity toolkit for recurrent networks: ISS group maps, "
            "group-Lasso training steps, compaction and GEMM benchmarking.";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ParameterError>(m, "ParameterError", PyExc_ValueError);
  py::register_exception<TopologyError>(m, "TopologyError", PyExc_ValueError);
  py::register_exception<ConsistencyError>(m, "ConsistencyError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def(
      "gemm",
      [](py::array_t<float> a, py::array_t<float> b, int threads) {
        return numpy_from_matrix(gemm(matrix_from_numpy(a), matrix_from_numpy(b), threads));
      },
      py::arg("a"), py::arg("b"), py::arg("threads") = 1);

  m.def(
      "rng_uniform",
      [](uint64_t seed, float lo, float hi, int rows, int cols) {
        Rng rng(seed);
        return numpy_from_matrix(rng_uniform(rng, lo, hi, rows, cols));
      },
      py::arg("seed"), py::arg("lo"), py::arg("hi"), py::arg("rows"), py::arg("cols"));

  py::class_<PyModel>(m, "Model")
      .def_static(
          "lstm",
          [](int vocab, int embed, const std::vector<int>& hidden, uint64_t seed) {
            return PyModel{make_lstm_lm(vocab, embed, hidden, seed)};
          },
          py::arg("vocab"), py::arg("embed_dim"), py::arg("hidden_sizes"),
          py::arg("seed") = 1)
      .def_static(
          "rhn",
          [](int vocab, int embed, int width, int depth, bool coupled_c, bool tied,
             uint64_t seed) {
            return PyModel{make_rhn_lm(vocab, embed, width, depth, coupled_c, tied, seed)};
          },
          py::arg("vocab"), py::arg("embed_dim"), py::arg("width"), py::arg("depth"),
          py::arg("coupled_c") = true, py::arg("tied") = false, py::arg("seed") = 1)
      .def_static("load", [](const std::string& path) { return PyModel{load_model(path)}; })
      .def("save", [](const PyModel& pm, const std::string& path) { save_model(pm.model, path); })
      .def_property_readonly("kind", &PyModel::kind)
      .def_property_readonly("num_params",
                             [](const PyModel& pm) { return count_params(pm.model); })
      .def("tensors", &PyModel::tensors)
      .def("set_tensor", &PyModel::set_tensor);

  m.def(
      "group_sizes",
      [](const PyModel& pm, bool rhn_dedup) {
        IssGroupMap map = build_groups_for(pm.model, rhn_dedup);
        std::vector<std::vector<long long>> out;
        for (int n = 0; n < map.num_layers(); ++n) out.push_back(map.group_sizes(n));
        return out;
      },
      py::arg("model"), py::arg("rhn_dedup_diagonal") = false,
      "Per-layer ISS weight-group sizes for the model's own topology");

  m.def(
      "export_groups_json",
      [](const PyModel& pm, bool rhn_dedup) {
        return export_group_map_json(build_groups_for(pm.model, rhn_dedup));
      },
      py::arg("model"), py::arg("rhn_dedup_diagonal") = false);

  m.def(
      "group_lasso_penalty",
      [](const PyModel& pm, double epsilon) {
        auto tensors = named_tensors_const(pm.model);
        auto resolved = resolve_groups(build_groups_for(pm.model), tensors);
        return group_lasso_penalty(tensors, resolved, epsilon);
      },
      py::arg("model"), py::arg("epsilon") = 1e-8);

  m.def(
      "threshold_weights",
      [](PyModel& pm, double tau) {
        auto tensors = named_tensors(pm.model);
        auto resolved = resolve_groups(build_groups_for(pm.model), as_const_tensors(tensors));
        return threshold_weights(tensors, resolved, tau);
      },
      py::arg("model"), py::arg("tau"));

  m.def(
      "detect_zero_groups",
      [](const PyModel& pm, double zero_tol) {
        auto rep = detect_zero_groups(named_tensors_const(pm.model),
                                      build_groups_for(pm.model), zero_tol);
        py::list out;
        for (const auto& l : rep.layers) {
          py::dict d;
          d["layer"] = l.layer;
          d["total"] = l.total;
          d["zero"] = l.zero;
          d["zero_components"] = l.zero_components;
          out.append(d);
        }
        return out;
      },
      py::arg("model"), py::arg("zero_tol") = 0.0);

  m.def(
      "sgd_step_group_lasso_single",
      [](py::array_t<float> w, py::array_t<float> g, double eta, double lambda,
         double epsilon) {
        // One hand-constructed group covering the whole vector.
        Matrix wm = matrix_from_numpy(w), gm = matrix_from_numpy(g);
        IssGroupMap map;
        map.model_kind = "custom";
        LayerGroups lg;
        lg.hidden_size = 1;
        IssGroup grp;
        grp.layer = 0;
        grp.component = 0;
        for (int r = 0; r < wm.rows; ++r)
          grp.spans.push_back({"w", GroupSpan::kRow, r, 0, wm.cols});
        grp.size = (long long)wm.numel();
        lg.groups.push_back(grp);
        map.layers.push_back(lg);
        map.tensor_shapes["w"] = {wm.rows, wm.cols};
        NamedTensors weights{{"w", &wm}};
        NamedTensorsConst grads{{"w", &gm}};
        auto resolved = resolve_groups(map, as_const_tensors(weights));
        sgd_step_group_lasso(weights, grads, resolved, eta, lambda, epsilon);
        return numpy_from_matrix(wm);
      },
      py::arg("weights"), py::arg("grads"), py::arg("eta"), py::arg("lambda_"),
      py::arg("epsilon") = 1e-8,
      "Group-Lasso SGD update treating the whole array as one ISS weight group");

  m.def(
      "perplexity",
      [](const PyModel& pm, const std::vector<int>& tokens, int eval_batch, int unroll) {
        return perplexity<float>(pm.model, tokens, eval_batch, unroll);
      },
      py::arg("model"), py::arg("tokens"), py::arg("eval_batch") = 8,
      py::arg("unroll") = 64);

  m.def(
      "train",
      [](const std::string& config_json, const std::string& corpus_text) {
        RunConfig cfg = parse_run_config(config_json);
        LmDataset data = make_dataset(corpus_text, cfg.data.valid_fraction);
        Model model = cfg.model.kind == "lstm_stack"
                          ? make_lstm_lm(data.vocab.size(), cfg.model.embed_dim,
                                         cfg.model.hidden_sizes, cfg.train.seed)
                          : make_rhn_lm(data.vocab.size(), cfg.model.embed_dim,
                                        cfg.model.width, cfg.model.depth,
                                        cfg.model.coupled_c, cfg.model.tied,
                                        cfg.train.seed);
        IssGroupMap map = build_groups_for(model);
        TrainMetrics metrics = train_language_model(model, data, cfg.train, cfg.reg, map);
        py::dict out;
        out["metrics_csv"] = metrics_csv(metrics, cfg.fingerprint);
        out["aborted"] = metrics.aborted;
        out["model"] = PyModel{std::move(model)};
        return out;
      },
      py::arg("config_json"), py::arg("corpus_text"),
      "Train a character LM; returns the trained model and metrics CSV");

  m.def(
      "fd_check_lstm",
      [](int vocab, int embed, const std::vector<int>& hidden, int steps, uint64_t seed,
         double epsilon) {
        return fd_check_random_lstm(vocab, embed, hidden, steps, 2, seed, epsilon)
            .max_rel_error;
      },
      py::arg("vocab") = 8, py::arg("embed_dim") = 4,
      py::arg("hidden_sizes") = std::vector<int>{3}, py::arg("steps") = 5,
      py::arg("seed") = 7, py::arg("epsilon") = 1e-5);

  m.def(
      "fd_check_rhn",
      [](int vocab, int width, int depth, bool coupled_c, bool tied, int steps,
         uint64_t seed, double epsilon) {
        return fd_check_random_rhn(vocab, width, width, depth, coupled_c, tied, steps, 2,
                                   seed, epsilon)
            .max_rel_error;
      },
      py::arg("vocab") = 8, py::arg("width") = 4, py::arg("depth") = 3,
      py::arg("coupled_c") = true, py::arg("tied") = false, py::arg("steps") = 4,
      py::arg("seed") = 7, py::arg("epsilon") = 1e-5);

  m.def(
      "compact",
      [](const PyModel& pm, double zero_tol) {
        IssGroupMap map = build_groups_for(pm.model);
        auto rep = detect_zero_groups(named_tensors_const(pm.model), map, zero_tol);
        CompactionPlan plan = plan_compaction(pm.model, map, rep);
        Model compacted = apply_compaction(pm.model, plan);
        const double diff = verify_equivalence(pm.model, compacted, plan, 10, 12, 99);
        py::dict out;
        out["model"] = PyModel{std::move(compacted)};
        out["plan_json"] = plan_to_json(plan);
        out["max_abs_diff"] = diff;
        return out;
      },
      py::arg("model"), py::arg("zero_tol") = 0.0);

  m.def(
      "spmm_csr",
      [](py::array_t<float> w, py::array_t<float> x) {
        return numpy_from_matrix(
            spmm_csr(csr_from_dense(matrix_from_numpy(w)), matrix_from_numpy(x)));
      },
      py::arg("w_dense"), py::arg("x"),
      "Multiply through a CSR encoding of w (zeros dropped)");

  m.def(
      "sparsify_random",
      [](py::array_t<float> w, double s, uint64_t seed) {
        Rng rng(seed);
        return numpy_from_matrix(sparsify_random(matrix_from_numpy(w), s, rng));
      },
      py::arg("w"), py::arg("s"), py::arg("seed") = 1);

  m.def(
      "structured_shrink",
      [](int hidden, int input, int batch, double target) {
        BenchCase c{hidden, input, batch, target, 15, 3, 1};
        auto s = structured_shrink(c, target);
        return py::make_tuple(s.k, s.rows, s.cols, s.fraction);
      },
      py::arg("hidden"), py::arg("input"), py::arg("batch"), py::arg("target"),
      "(k, rows, cols, achieved_fraction) for the matched-sparsity shrink");
}
