#include "helix/pipeline.hpp"

#include "helix/errors.hpp"

namespace helix {

WindowData PreparedData::part(std::size_t begin, std::size_t end) const {
  return {slice_windows(windows.values, begin, end), slice_windows(windows.mask, begin, end)};
}

PreparedData prepare_data(const Tensor& values, const Tensor& mask, const DataConfig& data, const NormStats* norm) {
  PreparedData out;
  const Windows raw = make_windows(values, mask, data.window, data.stride);
  if (raw.split.train == 0 || raw.split.val == 0 || raw.split.test == 0)
    throw DataError("prepare_data: " + std::to_string(raw.count()) +
                    " windows are too few for a train/val/test split");
  out.norm = norm ? *norm : normalize_fit(values, mask, 0, raw.row_end(raw.split.train));
  out.windows = make_windows(normalize_apply(values, mask, out.norm), mask, data.window, data.stride);
  return out;
}

SeriesCorruption corrupt_series(const Tensor& values, const Tensor& mask, std::size_t window,
                                const CorruptionSpec& spec, Rng rng) {
  const Windows w = make_windows(values, mask, window, window);
  SeriesCorruption out{values, mask, corrupt(w.values, w.mask, spec, rng)};
  scatter_windows(out.windows.values, w.starts, out.values);
  scatter_windows(out.windows.mask, w.starts, out.mask);
  return out;
}

TrainedModel train_model(const RunConfig& cfg, const PreparedData& data, const FitHooks& hooks) {
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  TrainedModel out{make_model(cfg.model_for(data.windows.values.dim(2)), tc.variant, tc.seed), {}};
  out.fit = fit(out.model, data.train(), data.val(), tc, hooks);
  return out;
}

Tensor SyntheticBenchmark::test_slice(const Tensor& windows) const {
  return slice_windows(windows, data.windows.split.test_begin(), data.windows.count());
}

SyntheticBenchmark synthetic_benchmark(const RunConfig& cfg) {
  SyntheticSpec spec = cfg.synthetic;
  spec.window = cfg.data.window;
  SyntheticBenchmark b;
  b.synthetic = synth_spatial(spec, Rng(cfg.seed, "synthetic"));
  const Tensor& truth = b.synthetic.values;
  const Tensor full(truth.shape(), 1.0);
  b.corruption = corrupt_series(truth, full, cfg.data.window, cfg.corruption, Rng(cfg.seed, "corruption"));
  DataConfig dc = cfg.data;
  dc.stride = dc.window;
  b.data = prepare_data(b.corruption.values, b.corruption.mask, dc);
  b.truth = make_windows(normalize_apply(truth, full, b.data.norm), full, dc.window).values;
  b.eval_mask = b.corruption.windows.eval_mask;
  return b;
}

}  // namespace helix
