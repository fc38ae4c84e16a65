#include "helix/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

#include "helix/baselines.hpp"
#include "helix/checkpoint.hpp"
#include "helix/errors.hpp"
#include "helix/kernels.hpp"
#include "helix/pipeline.hpp"

namespace helix {

namespace {

namespace fs = std::filesystem;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string variant, pattern, method = "helix", out;
  std::optional<double> rate;
};

struct Context {
  RunConfig cfg;
  fs::path out;
  std::string method;
  std::ostream& log;

  fs::path file(const std::string& name) const { return out / name; }
  fs::path data_path() const { return cfg.paths.data.empty() ? file("data.csv") : fs::path(cfg.paths.data); }
  fs::path coords_path() const { return cfg.paths.coords.empty() ? file("coords.csv") : fs::path(cfg.paths.coords); }
  fs::path imputed_path() const { return file("imputed_" + method + ".csv"); }
};

RunConfig resolve_config(const Options& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  cfg.train.seed = cfg.seed;
  if (!o.variant.empty()) cfg.train.variant = parse_variant(o.variant);
  if (!o.pattern.empty()) cfg.corruption.pattern = parse_pattern(o.pattern);
  if (o.rate) cfg.corruption.rate = *o.rate;
  if (!o.out.empty()) cfg.paths.out = o.out;
  if (o.method != "helix") parse_baseline(o.method);
  cfg.validate();
  return cfg;
}

std::ofstream open_report(const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path.string());
  f << std::setprecision(10);
  return f;
}

Series load_required(const fs::path& path, const std::string& hint) {
  if (!fs::exists(path)) throw DataError(path.string() + " not found; run `" + hint + "` first");
  return load_dataset(path);
}

// Normalized-scale model imputation of a raw series; rows outside every
// window keep their original mask.
Series impute_with_model(const Checkpoint& ck, const Series& input) {
  const PreparedData d = prepare_data(input.values, input.mask, ck.run.data, &ck.norm);
  const Tensor imputed = impute(ck.model, WindowData{d.windows.values, d.windows.mask});
  Tensor series = normalize_apply(input.values, input.mask, ck.norm);
  scatter_windows(imputed, d.windows.starts, series);
  Series out = input;
  out.values = normalize_inverse(series, ck.norm);
  Tensor covered(input.mask.shape(), 0.0);
  scatter_windows(Tensor(d.windows.mask.shape(), 1.0), d.windows.starts, covered);
  for (std::size_t i = 0; i < out.values.numel(); ++i) {
    if (input.mask[i] != 0.0) {
      out.values[i] = input.values[i];
    } else if (covered[i] == 0.0) {
      out.values[i] = 0.0;
      continue;
    }
    out.mask[i] = 1.0;
  }
  return out;
}

Series impute_with_baseline(BaselineKind kind, const RunConfig& cfg, const Series& input,
                            std::vector<std::string>& warnings) {
  const Windows w = make_windows(input.values, input.mask, cfg.data.window, cfg.data.window);
  const FeatureStats stats =
      fit_feature_stats(slice_windows(w.values, 0, w.split.train), slice_windows(w.mask, 0, w.split.train));
  BaselineResult res = impute_baseline(kind, w.values, w.mask, stats);
  warnings = std::move(res.warnings);
  Series out = input;
  scatter_windows(res.imputed, w.starts, out.values);
  scatter_windows(Tensor(w.mask.shape(), 1.0), w.starts, out.mask);
  return out;
}

struct Scored {
  Windows truth, imputed;
  Tensor eval_mask;  // [W, T, F]
};

// Truth and imputation on the normalized scale, windowed with stride = window.
Scored score_inputs(const RunConfig& cfg, const Series& truth, const Series& corrupted, const Series& imputed) {
  if (truth.values.shape() != corrupted.values.shape() || truth.values.shape() != imputed.values.shape())
    throw DimensionError("evaluate: data " + shape_str(truth.values.shape()) + ", corrupted " +
                         shape_str(corrupted.values.shape()) + ", imputed " + shape_str(imputed.values.shape()));
  DataConfig dc = cfg.data;
  dc.stride = dc.window;
  const NormStats norm = prepare_data(corrupted.values, corrupted.mask, dc).norm;
  Tensor hidden(truth.mask.shape(), 0.0);
  for (std::size_t i = 0; i < hidden.numel(); ++i)
    if (truth.mask[i] != 0.0 && corrupted.mask[i] == 0.0) {
      if (imputed.mask[i] == 0.0) throw DataError("evaluate: imputed file leaves hidden entries missing");
      hidden[i] = 1.0;
    }
  const Tensor ones(truth.mask.shape(), 1.0);
  Scored s{make_windows(normalize_apply(truth.values, truth.mask, norm), truth.mask, dc.window),
           make_windows(normalize_apply(imputed.values, ones, norm), ones, dc.window), {}};
  s.eval_mask = make_windows(hidden, ones, dc.window).values;
  return s;
}

std::optional<EvalReport> split_metrics(const Scored& s, std::size_t begin, std::size_t end, const char* tag) {
  const Tensor mask = slice_windows(s.eval_mask, begin, end);
  if (std::all_of(mask.data().begin(), mask.data().end(), [](double m) { return m == 0.0; })) return std::nullopt;
  return metrics(slice_windows(s.truth.values, begin, end), slice_windows(s.imputed.values, begin, end), mask, tag);
}

Tensor leading_rows(const Tensor& series, std::size_t rows) {
  const std::size_t F = series.dim(1);
  return Tensor(Shape{rows, F}, std::vector<double>(series.data().begin(), series.data().begin() + rows * F));
}

void print_report(std::ostream& os, const EvalReport& r) {
  os << r.tag << ": MAE " << r.mae << "  MSE " << r.mse << "  MRE ";
  if (r.mre_undefined)
    os << "undefined";
  else
    os << r.mre;
  os << "  (n=" << r.count << ")\n";
}

// ---- subcommands --------------------------------------------------------------

int cmd_generate(const Context& c) {
  SyntheticSpec spec = c.cfg.synthetic;
  spec.window = c.cfg.data.window;
  const SyntheticData syn = synth_spatial(spec, Rng(c.cfg.seed, "synthetic"));
  write_dataset(c.file("data.csv"), make_series(syn.values, Tensor(syn.values.shape(), 1.0)));
  write_coords(c.file("coords.csv"), syn.coords);
  c.log << "generated " << syn.values.dim(0) << " x " << syn.values.dim(1) << " series -> "
        << c.file("data.csv").string() << "\n";
  return kExitOk;
}

int cmd_corrupt(const Context& c) {
  const Series data = load_required(c.data_path(), "helix generate");
  const SeriesCorruption sc =
      corrupt_series(data.values, data.mask, c.cfg.data.window, c.cfg.corruption, Rng(c.cfg.seed, "corruption"));
  Series out = data;
  out.values = sc.values;
  out.mask = sc.mask;
  write_dataset(c.file("corrupted.csv"), out);
  c.log << to_string(c.cfg.corruption.pattern) << " corruption hid " << sc.windows.hidden << " of "
        << sc.windows.observed << " observed entries (rate " << sc.windows.realized_rate << ")\n";
  return kExitOk;
}

int cmd_train(const Context& c) {
  const Series input = load_required(c.file("corrupted.csv"), "helix corrupt");
  const PreparedData data = prepare_data(input.values, input.mask, c.cfg.data);
  auto history = open_report(c.file("history.csv"));
  history << "epoch,train_loss,val_mae\n";
  FitHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& r) { history << r.epoch << ',' << r.train_loss << ',' << r.val_mae << '\n'; };
  const TrainedModel trained = train_model(c.cfg, data, hooks);
  save_checkpoint(c.file("model.ckpt"), c.cfg, trained.model, data.norm);
  c.log << "variant " << to_string(c.cfg.train.variant) << ": best epoch " << trained.fit.best_epoch
        << ", validation MAE " << trained.fit.best_val_mae << " (initial " << trained.fit.initial_val_mae << ")\n";
  return kExitOk;
}

int cmd_impute(const Context& c) {
  const Series input = load_required(c.file("corrupted.csv"), "helix corrupt");
  Series out;
  if (c.method == "helix") {
    const fs::path ckpt = c.file("model.ckpt");
    if (!fs::exists(ckpt)) throw DataError(ckpt.string() + " not found; run `helix train` first");
    out = impute_with_model(load_checkpoint(ckpt), input);
  } else {
    std::vector<std::string> warnings;
    out = impute_with_baseline(parse_baseline(c.method), c.cfg, input, warnings);
    for (const auto& w : warnings) c.log << "warning: " << w << "\n";
  }
  write_dataset(c.imputed_path(), out);
  c.log << "imputed with " << c.method << " -> " << c.imputed_path().string() << "\n";
  return kExitOk;
}

int cmd_evaluate(const Context& c) {
  const Series truth = load_required(c.data_path(), "helix generate");
  const Series corrupted = load_required(c.file("corrupted.csv"), "helix corrupt");
  const Series imputed = load_required(c.imputed_path(), "helix impute --method " + c.method);
  const Scored s = score_inputs(c.cfg, truth, corrupted, imputed);
  const Split& sp = s.truth.split;
  auto f = open_report(c.file("metrics_" + c.method + ".csv"));
  f << "split,count,mae,mse,mre\n";
  const std::pair<const char*, std::pair<std::size_t, std::size_t>> parts[] = {
      {"val", {sp.val_begin(), sp.test_begin()}}, {"test", {sp.test_begin(), s.truth.count()}}, {"all", {0, s.truth.count()}}};
  bool any = false;
  for (const auto& [tag, range] : parts) {
    const auto r = split_metrics(s, range.first, range.second, tag);
    if (!r) continue;
    any = true;
    f << r->tag << ',' << r->count << ',' << r->mae << ',' << r->mse << ',' << r->mre << '\n';
    print_report(c.log, *r);
  }
  if (!any) throw DataError("evaluate: no hidden entries to score");
  return kExitOk;
}

int cmd_analyze(const Context& c) {
  const fs::path ckpt_path = c.file("model.ckpt");
  if (!fs::exists(ckpt_path)) throw DataError(ckpt_path.string() + " not found; run `helix train` first");
  const Checkpoint ck = load_checkpoint(ckpt_path);
  const Series truth = load_required(c.data_path(), "helix generate");
  const Series corrupted = load_required(c.file("corrupted.csv"), "helix corrupt");
  std::vector<std::string> warnings;
  const Scored model = score_inputs(ck.run, truth, corrupted, impute_with_model(ck, corrupted));
  const Scored linear =
      score_inputs(ck.run, truth, corrupted, impute_with_baseline(BaselineKind::linear, ck.run, corrupted, warnings));
  const std::size_t tb = model.truth.split.test_begin(), te = model.truth.count();
  const Tensor t_truth = slice_windows(model.truth.values, tb, te);
  const Tensor t_model = slice_windows(model.imputed.values, tb, te);
  const Tensor t_linear = slice_windows(linear.imputed.values, tb, te);
  const Tensor t_mask = slice_windows(model.eval_mask, tb, te);

  auto summary = open_report(c.file("analysis.txt"));
  auto gap = open_report(c.file("gap_curve.csv"));
  gap << "bucket,count,helix_mae,linear_mae\n";
  const auto g_model = gap_length_curve(t_truth, t_model, t_mask);
  const auto g_linear = gap_length_curve(t_truth, t_linear, t_mask);
  for (std::size_t i = 0; i < g_model.size(); ++i)
    gap << g_model[i].label << ',' << g_model[i].count << ',' << g_model[i].mae << ',' << g_linear[i].mae << '\n';

  const PreparedData prepared = prepare_data(corrupted.values, corrupted.mask, ck.run.data, &ck.norm);
  const std::size_t train_rows = prepared.windows.row_end(prepared.windows.split.train);
  const auto corr = max_abs_correlation(leading_rows(corrupted.values, train_rows), leading_rows(corrupted.mask, train_rows));
  auto bins = open_report(c.file("correlation_bins.csv"));
  bins << "bin,features,count,helix_mae,linear_mae,improvement\n";
  for (const auto& r : correlation_bin_curve(t_truth, t_model, t_linear, t_mask, corr))
    bins << r.label << ',' << r.features << ',' << r.count << ',' << r.model_mae << ',' << r.baseline_mae << ','
         << r.improvement << '\n';

  if (!fs::exists(c.coords_path())) {
    summary << "no coordinates at " << c.coords_path().string() << "; structure analyses skipped\n";
    c.log << "warning: no coordinates; structure analyses skipped\n";
  } else {
    const auto coords = load_coords(c.coords_path());
    if (!ck.model.feature_ids.value.empty()) {
      const StructureReport st = embedding_structure(ck.model.feature_ids.value, coords);
      auto f = open_report(c.file("embedding_structure.csv"));
      f << "i,j,distance,similarity\n";
      const std::size_t F = coords.size();
      for (std::size_t i = 0; i < F; ++i)
        for (std::size_t j = i + 1; j < F; ++j)
          f << i << ',' << j << ',' << st.distance.at({i, j}) << ',' << st.similarity.at({i, j}) << '\n';
      for (const auto& w : st.warnings) summary << "warning: " << w << '\n';
      summary << "embedding similarity vs distance: r " << st.similarity_vs_distance.r << ", p "
              << st.similarity_vs_distance.p << ", pairs " << st.similarity_vs_distance.n << '\n';
      c.log << "embedding similarity vs distance: r " << st.similarity_vs_distance.r << " (p "
            << st.similarity_vs_distance.p << ")\n";
    }
    const auto layers = attention_structure(collect_attention(ck.model, prepared.test()), coords);
    auto f = open_report(c.file("attention_structure.csv"));
    f << "layer,r,p,n\n";
    for (std::size_t l = 0; l < layers.size(); ++l) {
      f << l << ',' << layers[l].r << ',' << layers[l].p << ',' << layers[l].n << '\n';
      summary << "layer " << l << " feature attention vs proximity: r " << layers[l].r << ", p " << layers[l].p << '\n';
      c.log << "layer " << l << " attention vs proximity: r " << layers[l].r << "\n";
    }
  }
  for (const auto& r : g_model) summary << "gap " << r.label << ": " << r.count << " entries, MAE " << r.mae << '\n';
  c.log << "reports written to " << c.out.string() << "\n";
  return kExitOk;
}

int cmd_ablate(const Context& c) {
  const Series truth = load_required(c.data_path(), "helix generate");
  const Series corrupted = load_required(c.file("corrupted.csv"), "helix corrupt");
  const PreparedData data = prepare_data(corrupted.values, corrupted.mask, c.cfg.data);
  auto f = open_report(c.file("ablation.csv"));
  f << "variant,parameters,best_epoch,val_mae,test_mae,test_mse,test_mre,count\n";
  const Variant variants[] = {Variant::full,      Variant::no_featid,    Variant::no_fusion,
                              Variant::no_hybrid, Variant::learnable_pe, Variant::gated_fusion};
  for (Variant v : variants) {
    RunConfig cfg = c.cfg;
    cfg.train.variant = v;
    const TrainedModel trained = train_model(cfg, data, {});
    const Checkpoint ck{cfg, trained.model, data.norm};
    const Scored s = score_inputs(cfg, truth, corrupted, impute_with_model(ck, corrupted));
    const auto r = split_metrics(s, s.truth.split.test_begin(), s.truth.count(), "test");
    if (!r) throw DataError("ablate: test split has no hidden entries");
    f << to_string(v) << ',' << trained.model.parameter_count() << ',' << trained.fit.best_epoch << ','
      << trained.fit.best_val_mae << ',' << r->mae << ',' << r->mse << ',' << r->mre << ',' << r->count << '\n';
    c.log << std::left << std::setw(14) << to_string(v) << " test MAE " << r->mae << "\n";
  }
  return kExitOk;
}

int exit_code(const Error& e) {
  switch (e.category()) {
    case Error::Category::usage: return kExitUsage;
    case Error::Category::data: return kExitData;
    case Error::Category::numeric: return kExitNumeric;
  }
  return kExitData;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"helix: self-attention imputation for multivariate time series", "helix"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "seed for every random stream");
  app.add_option("--variant", o.variant, "full|no_featid|no_fusion|no_hybrid|learnable_pe|gated_fusion");
  app.add_option("--pattern", o.pattern, "point|block|subseq");
  app.add_option("--rate", o.rate, "fraction of observed entries to hide");
  app.add_option("--method", o.method, "helix|mean|median|locf|linear");
  app.add_option("--out", o.out, "working directory for inputs and outputs");

  using Handler = int (*)(const Context&);
  const std::pair<const char*, std::pair<const char*, Handler>> commands[] = {
      {"generate", {"write a spatially correlated synthetic dataset", cmd_generate}},
      {"corrupt", {"hide entries with a missingness pattern", cmd_corrupt}},
      {"train", {"fit a model and write a checkpoint", cmd_train}},
      {"impute", {"fill hidden entries with the model or a baseline", cmd_impute}},
      {"evaluate", {"score an imputation on the hidden entries", cmd_evaluate}},
      {"analyze", {"embedding, attention, gap-length and correlation reports", cmd_analyze}},
      {"ablate", {"train every variant and compare test errors", cmd_ablate}},
  };
  std::vector<std::pair<CLI::App*, Handler>> subs;
  for (const auto& [name, info] : commands) subs.emplace_back(app.add_subcommand(name, info.first)->fallthrough(), info.second);

  if (args.empty()) {
    err << app.help();
    return kExitUsage;
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    const RunConfig cfg = resolve_config(o);
    const fs::path dir = cfg.paths.out;
    fs::create_directories(dir);
    const Context ctx{cfg, dir, o.method, out};
    for (const auto& [sub, handler] : subs)
      if (sub->parsed()) return handler(ctx);
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
}

int cli_main(int argc, char** argv) {
  kernels::configure_threads();
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace helix
