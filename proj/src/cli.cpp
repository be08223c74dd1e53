#include "issrnn/cli.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "issrnn/bench.hpp"
#include "issrnn/compact.hpp"
#include "issrnn/config.hpp"
#include "issrnn/gradcheck.hpp"
#include "issrnn/model_groups.hpp"
#include "issrnn/model_io.hpp"
#include "issrnn/train.hpp"

namespace issrnn {

namespace {

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParameterError("cannot open '" + path + "' for writing");
  out << content;
}

Model build_model(const ModelSpec& spec, int vocab, uint64_t seed) {
  if (spec.kind == "lstm_stack")
    return make_lstm_lm(vocab, spec.embed_dim, spec.hidden_sizes, seed);
  return make_rhn_lm(vocab, spec.embed_dim, spec.width, spec.depth, spec.coupled_c,
                     spec.tied, seed);
}

std::string options_fingerprint(const nlohmann::json& j) {
  return config_fingerprint(j.dump());
}

std::string sparsity_report_csv(const SparsityReport& rep, const std::string& fingerprint) {
  std::ostringstream out;
  out << "# config_fingerprint=" << fingerprint << "\n";
  out << "record,name,total,zero,surviving,params_before,params_after\n";
  for (const auto& l : rep.layers)
    out << "layer," << l.layer << "," << l.total << "," << l.zero << ","
        << l.surviving << ",,\n";
  for (const auto& t : rep.tensors)
    out << "tensor," << t.tensor << ",,,," << t.before << "," << t.after << "\n";
  return out.str();
}

std::string histogram_csv(const GroupNormHistogram& hist, const std::string& fingerprint) {
  std::ostringstream out;
  out << "# config_fingerprint=" << fingerprint << "\n";
  out << "bin_lo,bin_hi,count\n";
  char buf[96];
  for (size_t b = 0; b < hist.counts.size(); ++b) {
    snprintf(buf, sizeof buf, "%.8g,%.8g,%lld\n", hist.bin_edges[b],
             hist.bin_edges[b + 1], (long long)hist.counts[b]);
    out << buf;
  }
  return out.str();
}

std::vector<double> parse_double_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stod(item));
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stoi(item));
  }
  return out;
}

// ---------------------------------------------------------------------------

int cmd_train(const std::string& config_path, const std::string& corpus_override,
              double lambda, double tau, double epsilon, double l1_decay,
              const std::string& mode, int64_t seed, int epochs, int threads,
              const std::string& model_out, const std::string& metrics_out) {
  RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
  if (!corpus_override.empty()) cfg.data.corpus = corpus_override;
  if (lambda >= 0) {
    cfg.reg.lambda = lambda;
    if (mode.empty() && lambda > 0) cfg.reg.mode = RegConfig::Mode::kGroupLasso;
  }
  if (tau >= 0) cfg.reg.tau = tau;
  if (epsilon >= 0) cfg.reg.epsilon = epsilon;
  if (l1_decay >= 0) cfg.reg.l1_decay = l1_decay;
  if (!mode.empty()) cfg.reg.mode = reg_mode_from_name(mode);
  if (seed >= 0) cfg.train.seed = uint64_t(seed);
  if (epochs >= 0) cfg.train.epochs = epochs;
  if (threads >= 1) cfg.train.threads = threads;
  cfg.model.validate();
  cfg.train.validate();
  cfg.reg.validate();
  cfg.fingerprint = config_fingerprint(run_config_to_json(cfg));

  LmDataset data = load_corpus(cfg.data.corpus, cfg.data.valid_fraction);
  Model model = build_model(cfg.model, data.vocab.size(), cfg.train.seed);
  IssGroupMap map = build_groups_for(model);

  TrainMetrics metrics = train_language_model(model, data, cfg.train, cfg.reg, map);
  write_file(metrics_out, metrics_csv(metrics, cfg.fingerprint));
  save_model(model, model_out);

  if (!metrics.epochs.empty()) {
    const auto& last = metrics.epochs.back();
    std::cout << "trained " << metrics.epochs.size() << " epochs; valid ppl "
              << last.valid_ppl << "; zero groups";
    for (int z : last.zero_groups) std::cout << " " << z;
    std::cout << "\n";
  }
  if (metrics.aborted) {
    std::cerr << "training aborted: " << metrics.abort_reason << "\n";
    return 1;
  }
  std::cout << "model -> " << model_out << "\nmetrics -> " << metrics_out << "\n";
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& corpus,
             const std::string& split, double valid_fraction, int threads) {
  Model model = load_model(model_path);
  LmDataset data = load_corpus(corpus, valid_fraction);
  const int vocab = std::visit([](const auto& m) { return m.vocab; }, model);
  if (vocab != data.vocab.size())
    throw ParameterError("eval: corpus vocabulary (" + std::to_string(data.vocab.size()) +
                         ") does not match the model (" + std::to_string(vocab) + ")");
  std::vector<int> tokens;
  if (split == "valid") {
    tokens = data.valid;
  } else if (split == "train") {
    tokens = data.train;
  } else {
    tokens = data.train;
    tokens.insert(tokens.end(), data.valid.begin(), data.valid.end());
  }
  const double ppl = perplexity<float>(model, tokens, 8, 64, threads);
  char buf[64];
  snprintf(buf, sizeof buf, "%.6f", ppl);
  std::cout << "perplexity (" << split << "): " << buf << "\n";
  return 0;
}

int cmd_analyze(const std::string& model_path, const std::string& report_out,
                const std::string& hist_out, double zero_tol, bool rhn_dedup) {
  Model model = load_model(model_path);
  IssGroupMap map = build_groups_for(model, rhn_dedup);
  auto tensors = named_tensors_const(model);
  SparsityReport rep = detect_zero_groups(tensors, map, zero_tol);

  nlohmann::json opts = {{"cmd", "analyze"}, {"model", model_path}, {"zero_tol", zero_tol}};
  const std::string fp = options_fingerprint(opts);
  write_file(report_out, sparsity_report_csv(rep, fp));
  write_file(hist_out, histogram_csv(rep.histogram, fp));

  for (const auto& l : rep.layers)
    std::cout << "layer " << l.layer << ": " << l.zero << " / " << l.total
              << " components zero\n";
  std::cout << "report -> " << report_out << "\nhistogram -> " << hist_out << "\n";
  return 0;
}

int cmd_compact(const std::string& model_path, const std::string& model_out,
                const std::string& plan_out, double zero_tol, int probes, int steps,
                const std::string& equiv_out) {
  Model model = load_model(model_path);
  IssGroupMap map = build_groups_for(model);
  auto tensors = named_tensors(model);
  ResolvedGroups resolved = resolve_groups(map, as_const_tensors(tensors));
  SparsityReport rep = detect_zero_groups(as_const_tensors(tensors), resolved, zero_tol);

  if (zero_tol > 0) {
    // Make the guarantee exact: force detected-zero groups to literal zeros
    // before excising them.
    for (size_t gi = 0; gi < resolved.groups.size(); ++gi) {
      const auto& g = resolved.groups[gi];
      bool zero = false;
      for (int z : rep.layers[size_t(g.layer)].zero_components)
        if (z == g.component) zero = true;
      if (!zero) continue;
      for (const auto& c : g.coords)
        tensors[size_t(c.tensor)].second->data[size_t(c.offset)] = 0.0f;
    }
  }

  CompactionPlan plan = plan_compaction(model, map, rep);
  Model compacted = apply_compaction(model, plan);
  const double diff = verify_equivalence(model, compacted, plan, probes, steps, 12345);

  save_model(compacted, model_out);
  write_file(plan_out, plan_to_json(plan));

  nlohmann::json opts = {{"cmd", "compact"}, {"model", model_path}, {"zero_tol", zero_tol}};
  std::ostringstream eq;
  eq << "# config_fingerprint=" << options_fingerprint(opts) << "\n";
  eq << "probes,steps,max_abs_diff\n";
  eq << probes << "," << steps << "," << diff << "\n";
  if (!equiv_out.empty()) write_file(equiv_out, eq.str());

  std::cout << "kept components:";
  for (const auto& k : plan.kept) std::cout << " " << k.size();
  std::cout << "\nparams " << count_params(model) << " -> " << count_params(compacted)
            << "\nmax |output difference| over " << probes << " probes: " << diff << "\n";
  std::cout << "model -> " << model_out << "\nplan -> " << plan_out << "\n";
  return 0;
}

int cmd_bench(const std::string& sizes_csv, const std::string& batches_csv,
              const std::string& sparsities_csv, int reps, int warmup, int threads,
              bool paper_shapes, const std::string& out_path, uint64_t seed) {
  std::vector<BenchCase> cases;
  auto sizes = parse_int_list(sizes_csv);
  auto batches = parse_int_list(batches_csv);
  auto sparsities = parse_double_list(sparsities_csv);
  for (int h : sizes)
    for (int b : batches)
      for (double s : sparsities)
        cases.push_back({h, h, b, s, reps, warmup, threads});
  if (paper_shapes)
    for (double s : sparsities) cases.push_back({1500, 1500, 10, s, reps, warmup, threads});

  BenchReport report = run_bench(cases, seed);
  nlohmann::json opts = {{"cmd", "bench"},       {"sizes", sizes},
                         {"batches", batches},   {"sparsities", sparsities},
                         {"reps", reps},         {"warmup", warmup},
                         {"threads", threads},   {"paper_shapes", paper_shapes},
                         {"seed", seed}};
  const std::string csv = bench_report_csv(report, options_fingerprint(opts));
  if (!out_path.empty()) write_file(out_path, csv);
  std::cout << csv;
  return 0;
}

int cmd_gradcheck(const std::string& kind, int count, uint64_t seed, double epsilon,
                  double tol, const std::string& model_path) {
  double worst = 0;
  if (!model_path.empty()) {
    Model f32 = load_model(model_path);
    LmModelT<double> m64 = convert_model<float, double>(f32);
    FdCheckReport rep = finite_difference_check(m64, 4, 2, seed, epsilon);
    std::cout << "model " << model_path << ": max rel err " << rep.max_rel_error
              << " (worst tensor " << rep.worst_tensor << ")\n";
    worst = rep.max_rel_error;
  } else {
    Rng rng(seed);
    if (kind == "lstm" || kind == "both") {
      for (int i = 0; i < count; ++i) {
        const int vocab = 5 + int(rng.below(8));
        const int embed = 2 + int(rng.below(4));
        std::vector<int> hidden{2 + int(rng.below(7))};
        if (rng.bernoulli(0.5)) hidden.push_back(2 + int(rng.below(7)));
        const int steps = 2 + int(rng.below(5));
        auto rep = fd_check_random_lstm(vocab, embed, hidden, steps, 2,
                                        seed + uint64_t(i) * 977, epsilon);
        worst = std::max(worst, rep.max_rel_error);
        std::cout << "lstm config " << i << ": max rel err " << rep.max_rel_error
                  << " (worst: " << rep.worst_tensor << "[" << rep.worst_index << "])\n";
      }
    }
    if (kind == "rhn" || kind == "both") {
      for (int i = 0; i < count; ++i) {
        const int vocab = 5 + int(rng.below(8));
        const int width = 2 + int(rng.below(4));
        const int depth = 1 + int(rng.below(3));
        const bool coupled = rng.bernoulli(0.5);
        const bool tied = rng.bernoulli(0.5);
        auto rep = fd_check_random_rhn(vocab, width, width, depth, coupled, tied,
                                       2 + int(rng.below(4)), 2,
                                       seed + 31337 + uint64_t(i) * 977, epsilon);
        worst = std::max(worst, rep.max_rel_error);
        std::cout << "rhn config " << i << ": max rel err " << rep.max_rel_error << "\n";
      }
    }
  }
  std::cout << "max relative error: " << worst << " (tolerance " << tol << ")\n";
  return worst < tol ? 0 : 1;
}

int cmd_calibrate_tau(const std::string& model_path, const std::string& corpus,
                      double valid_fraction, const std::string& grid_csv,
                      double tolerance) {
  Model model = load_model(model_path);
  LmDataset data = load_corpus(corpus, valid_fraction);
  IssGroupMap map = build_groups_for(model);
  auto grid = parse_double_list(grid_csv);
  TauCalibration cal = calibrate_tau(model, map, data.valid, grid, tolerance);
  std::cout << "baseline ppl: " << cal.baseline_ppl << "\n";
  for (auto& [tau, ppl] : cal.evaluated)
    std::cout << "tau " << tau << " -> ppl " << ppl << "\n";
  std::cout << "chosen tau: " << cal.tau << (cal.warning ? " (warning: no grid point kept perplexity within tolerance)" : "")
            << "\n";
  return 0;
}

int cmd_export_groups(const std::string& model_path, const std::string& out_path,
                      bool rhn_dedup) {
  Model model = load_model(model_path);
  IssGroupMap map = build_groups_for(model, rhn_dedup);
  write_file(out_path, export_group_map_json(map));
  std::cout << "groups -> " << out_path << "\n";
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"Structured-sparsity toolkit for recurrent language models"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "Train a character-level LM with optional ISS regularization");
  std::string config_path, corpus_override, mode, model_out = "model.issm",
              metrics_out = "metrics.csv";
  double lambda = -1, tau = -1, epsilon = -1, l1_decay = -1;
  int64_t seed = -1;
  int epochs = -1, threads = -1;
  train->add_option("--config", config_path, "Run-config JSON");
  train->add_option("--corpus", corpus_override, "Corpus path override");
  train->add_option("--lambda", lambda, "Group-Lasso coefficient");
  train->add_option("--tau", tau, "Thresholding tau");
  train->add_option("--epsilon", epsilon, "Safe-norm epsilon");
  train->add_option("--l1-decay", l1_decay, "l1 weight decay");
  train->add_option("--mode", mode, "Regularizer: none, group_lasso, l1");
  train->add_option("--seed", seed, "RNG seed");
  train->add_option("--epochs", epochs, "Epoch count override");
  train->add_option("--threads", threads, "GEMM thread count");
  train->add_option("--out", model_out, "Output model path");
  train->add_option("--metrics", metrics_out, "Metrics CSV path");

  // eval
  auto* eval = app.add_subcommand("eval", "Report validation perplexity of a saved model");
  std::string eval_model, eval_corpus, eval_split = "valid";
  double eval_vf = 0.1;
  int eval_threads = 1;
  eval->add_option("--model", eval_model)->required();
  eval->add_option("--corpus", eval_corpus)->required();
  eval->add_option("--split", eval_split, "valid, train or all");
  eval->add_option("--valid-fraction", eval_vf);
  eval->add_option("--threads", eval_threads);

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Emit the sparsity report and group-norm histogram");
  std::string an_model, an_report = "sparsity.csv", an_hist = "group_norms.csv";
  double an_zero_tol = 0;
  bool an_dedup = false;
  analyze->add_option("--model", an_model)->required();
  analyze->add_option("--report", an_report);
  analyze->add_option("--hist", an_hist);
  analyze->add_option("--zero-tol", an_zero_tol);
  analyze->add_flag("--rhn-dedup-diagonal", an_dedup);

  // compact
  auto* compact = app.add_subcommand("compact", "Excise all-zero components into a smaller dense model");
  std::string co_model, co_out = "compact.issm", co_plan = "plan.json", co_equiv;
  double co_zero_tol = 0;
  int co_probes = 20, co_steps = 20;
  compact->add_option("--model", co_model)->required();
  compact->add_option("--out", co_out);
  compact->add_option("--plan", co_plan);
  compact->add_option("--zero-tol", co_zero_tol,
                      "Treat groups with all |w| <= tol as zero (they are zeroed first)");
  compact->add_option("--equiv-report", co_equiv);
  compact->add_option("--probes", co_probes);
  compact->add_option("--steps", co_steps);

  // bench
  auto* bench = app.add_subcommand("bench", "Dense vs CSR vs structured-shrunk GEMM benchmark");
  std::string be_sizes = "256,512,1024", be_batches = "10,32",
              be_sparsities = "0.5,0.7,0.8,0.9,0.95", be_out;
  int be_reps = 15, be_warmup = 3, be_threads = 1;
  bool be_paper = false;
  uint64_t be_seed = 1;
  bench->add_option("--sizes", be_sizes, "hidden=input sizes, comma separated");
  bench->add_option("--batches", be_batches);
  bench->add_option("--sparsities", be_sparsities);
  bench->add_option("--reps", be_reps);
  bench->add_option("--warmup", be_warmup);
  bench->add_option("--threads", be_threads);
  bench->add_flag("--paper-shapes", be_paper, "Add the 1500-hidden shape");
  bench->add_option("--out", be_out, "CSV output path");
  bench->add_option("--seed", be_seed);

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
  std::string gc_kind = "both", gc_model;
  int gc_count = 5;
  uint64_t gc_seed = 7;
  double gc_eps = 1e-5, gc_tol = 1e-4;
  gradcheck->add_option("--kind", gc_kind, "lstm, rhn or both");
  gradcheck->add_option("--count", gc_count, "Random configs per kind");
  gradcheck->add_option("--seed", gc_seed);
  gradcheck->add_option("--epsilon", gc_eps);
  gradcheck->add_option("--tol", gc_tol);
  gradcheck->add_option("--model", gc_model, "Check a saved model instead");

  // calibrate-tau
  auto* cal = app.add_subcommand("calibrate-tau", "Pick the largest harmless threshold");
  std::string ct_model, ct_corpus, ct_grid = "0,1e-5,1e-4,1e-3";
  double ct_vf = 0.1, ct_tol = 0.001;
  cal->add_option("--model", ct_model)->required();
  cal->add_option("--corpus", ct_corpus)->required();
  cal->add_option("--valid-fraction", ct_vf);
  cal->add_option("--grid", ct_grid, "Ascending tau grid, comma separated");
  cal->add_option("--tolerance", ct_tol, "Relative perplexity tolerance");

  // export-groups
  auto* exg = app.add_subcommand("export-groups", "Write the ISS group map as JSON");
  std::string ex_model, ex_out = "groups.json";
  bool ex_dedup = false;
  exg->add_option("--model", ex_model)->required();
  exg->add_option("--out", ex_out);
  exg->add_flag("--rhn-dedup-diagonal", ex_dedup);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand(train))
      return cmd_train(config_path, corpus_override, lambda, tau, epsilon, l1_decay,
                       mode, seed, epochs, threads, model_out, metrics_out);
    if (app.got_subcommand(eval))
      return cmd_eval(eval_model, eval_corpus, eval_split, eval_vf, eval_threads);
    if (app.got_subcommand(analyze))
      return cmd_analyze(an_model, an_report, an_hist, an_zero_tol, an_dedup);
    if (app.got_subcommand(compact))
      return cmd_compact(co_model, co_out, co_plan, co_zero_tol, co_probes, co_steps,
                         co_equiv);
    if (app.got_subcommand(bench))
      return cmd_bench(be_sizes, be_batches, be_sparsities, be_reps, be_warmup,
                       be_threads, be_paper, be_out, be_seed);
    if (app.got_subcommand(gradcheck))
      return cmd_gradcheck(gc_kind, gc_count, gc_seed, gc_eps, gc_tol, gc_model);
    if (app.got_subcommand(cal))
      return cmd_calibrate_tau(ct_model, ct_corpus, ct_vf, ct_grid, ct_tol);
    if (app.got_subcommand(exg)) return cmd_export_groups(ex_model, ex_out, ex_dedup);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace issrnn
