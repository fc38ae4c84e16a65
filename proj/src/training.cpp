#include "helix/training.hpp"

#include <cmath>
#include <numeric>

#include "helix/errors.hpp"

namespace helix {

MaskPlan make_artificial_mask(const Tensor& values, const Tensor& mask, double rho, Rng rng) {
  if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("make_artificial_mask: rho must be in (0, 1)");
  if (mask.shape() != values.shape())
    throw DimensionError("make_artificial_mask: values " + shape_str(values.shape()) + ", mask " +
                         shape_str(mask.shape()));
  MaskPlan plan;
  plan.observed = Tensor(values.shape(), 0.0);
  plan.artificial = Tensor(values.shape(), 0.0);
  plan.residual = Tensor(values.shape(), 0.0);
  plan.input_values = Tensor(values.shape(), 0.0);
  for (std::size_t i = 0; i < values.numel(); ++i) {
    const bool draw = rng.bernoulli(rho);
    if (mask[i] == 0.0) continue;
    plan.observed[i] = 1.0;
    ++plan.observed_count;
    if (draw) {
      plan.artificial[i] = 1.0;
      ++plan.artificial_count;
    } else {
      plan.residual[i] = 1.0;
      plan.input_values[i] = values[i];
      ++plan.residual_count;
    }
  }
  if (plan.observed_count == 0) throw DataError("make_artificial_mask: window has no observations");
  return plan;
}

namespace {

LossTerm masked_mae(const Tensor& x, const Tensor& x_hat, const Tensor& set) {
  if (x.shape() != x_hat.shape() || x.shape() != set.shape())
    throw DimensionError("loss: x " + shape_str(x.shape()) + ", x_hat " + shape_str(x_hat.shape()) +
                         ", index set " + shape_str(set.shape()));
  LossTerm term;
  double sum = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i)
    if (set[i] != 0.0) {
      sum += std::abs(x_hat[i] - x[i]);
      ++term.count;
    }
  if (term.count == 0) {
    term.degenerate = true;
    return term;
  }
  term.value = sum / static_cast<double>(term.count);
  return term;
}

}  // namespace

LossTerm ort_loss(const Tensor& x, const Tensor& x_hat, const MaskPlan& plan) {
  return masked_mae(x, x_hat, plan.residual);
}

LossTerm mit_loss(const Tensor& x, const Tensor& x_hat, const MaskPlan& plan) {
  return masked_mae(x, x_hat, plan.artificial);
}

void TrainConfig::validate() const {
  if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("train: rho must be in (0, 1), got " + std::to_string(rho));
  if (patience < 1) throw ConfigError("train: patience must be at least 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be at least 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train: lr must be positive");
}

TrainStreams::TrainStreams(std::uint64_t seed)
    : init(seed, "init"), masking(seed, "masking"), dropout(seed, "dropout"), data(seed, "data"),
      validation(seed, "validation") {}

HelixModel make_model(ModelConfig base, Variant variant, std::uint64_t seed) {
  return HelixModel(apply_variant(std::move(base), variant), TrainStreams(seed).init);
}

namespace {

void check_data(const WindowData& d, std::size_t features, const char* who) {
  if (d.values.rank() != 3 || d.mask.shape() != d.values.shape())
    throw DimensionError(std::string(who) + ": expected matching [W,T,F] values and mask");
  if (d.values.dim(2) != features)
    throw DimensionError(std::string(who) + ": data has " + std::to_string(d.values.dim(2)) +
                         " features, model expects " + std::to_string(features));
}

Tensor gather(const Tensor& src, const std::vector<std::size_t>& rows, std::size_t begin, std::size_t end) {
  const std::size_t block = src.dim(1) * src.dim(2);
  Tensor out(Shape{end - begin, src.dim(1), src.dim(2)});
  for (std::size_t i = begin; i < end; ++i)
    std::copy_n(src.data().begin() + rows[i] * block, block, out.data().begin() + (i - begin) * block);
  return out;
}

template <typename F>
void for_each_batch(std::size_t count, std::size_t batch_size, F&& f) {
  for (std::size_t b = 0, start = 0; start < count; ++b, start += batch_size)
    f(b, start, std::min(count, start + batch_size));
}

std::vector<std::size_t> identity_order(std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  return order;
}

std::vector<Tensor> snapshot(const HelixModel& model) {
  std::vector<Tensor> out;
  for (const auto* p : model.parameters()) out.push_back(p->value);
  return out;
}

void restore(HelixModel& model, const std::vector<Tensor>& values) {
  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

}  // namespace

double validation_mae(const HelixModel& model, const WindowData& data, const MaskPlan& plan,
                      std::size_t batch_size) {
  check_data(data, model.config().n_features, "validation_mae");
  const auto order = identity_order(data.count());
  double sum = 0.0;
  std::size_t count = 0;
  for_each_batch(data.count(), batch_size, [&](std::size_t, std::size_t begin, std::size_t end) {
    const Tensor truth = gather(data.values, order, begin, end);
    const Tensor target = gather(plan.artificial, order, begin, end);
    const SeriesBatch batch{gather(plan.input_values, order, begin, end), gather(plan.residual, order, begin, end),
                            truth};
    ag::Tape tape;
    const Tensor& x_hat = forward(tape, model, batch, {}).x_hat.value();
    for (std::size_t i = 0; i < truth.numel(); ++i)
      if (target[i] != 0.0) {
        sum += std::abs(x_hat[i] - truth[i]);
        ++count;
      }
  });
  if (count == 0) throw DataError("validation_mae: validation plan masks no entries");
  return sum / static_cast<double>(count);
}

FitResult fit(HelixModel& model, const WindowData& train, const WindowData& val, const TrainConfig& cfg,
              const FitHooks& hooks) {
  cfg.validate();
  const std::size_t F = model.config().n_features;
  check_data(train, F, "fit (train)");
  check_data(val, F, "fit (val)");
  if (train.count() == 0 || val.count() == 0) throw DataError("fit: train and validation sets must be non-empty");

  const TrainStreams streams(cfg.seed);
  const MaskPlan val_plan = make_artificial_mask(val.values, val.mask, cfg.rho, streams.validation);
  const std::size_t eval_batch = std::max<std::size_t>(cfg.batch_size, 64);

  FitResult result;
  result.initial_val_mae = validation_mae(model, val, val_plan, eval_batch);
  result.best_val_mae = result.initial_val_mae;
  if (cfg.epochs == 0) return result;

  auto params = model.parameters();
  ag::AdamState adam = ag::make_adam(params, ag::AdamConfig{cfg.lr});
  std::vector<Tensor> best = snapshot(model);
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto order = identity_order(train.count());
    Rng shuffle = streams.data.derive(epoch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for_each_batch(train.count(), cfg.batch_size, [&](std::size_t b, std::size_t begin, std::size_t end) {
      const Tensor values = gather(train.values, order, begin, end);
      const Tensor mask = gather(train.mask, order, begin, end);
      bool any = false;
      for (double m : mask.data()) any |= m != 0.0;
      if (!any) return;
      const MaskPlan plan = make_artificial_mask(values, mask, cfg.rho, streams.masking.derive(epoch).derive(b));
      const SeriesBatch batch{plan.input_values, plan.residual, values};

      ag::Tape tape;
      ForwardOptions opts;
      opts.mode = ag::Mode::train;
      opts.rng = streams.dropout.derive(epoch).derive(b);
      const ag::Var x_hat = forward(tape, model, batch, opts).x_hat;
      const ag::Var ort = ag::masked_mean_abs(x_hat, values, plan.residual);
      const ag::Var mit = ag::masked_mean_abs(x_hat, values, plan.artificial);
      const ag::Var total = ag::add(ort, mit);

      StepRecord step{epoch, b, {ort.value().item(), mit.value().item(), total.value().item(),
                                 plan.residual_count, plan.artificial_count}};
      if (!std::isfinite(step.loss.total))
        throw NumericError("fit: non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));
      if (hooks.on_step) hooks.on_step(step);

      model.zero_grad();
      tape.backward(total);
      ag::adam_step(params, adam);
      loss_sum += step.loss.total;
      ++batches;
    });

    EpochRecord rec{epoch, batches ? loss_sum / static_cast<double>(batches) : 0.0,
                    validation_mae(model, val, val_plan, eval_batch)};
    if (!std::isfinite(rec.val_mae)) throw NumericError("fit: non-finite validation MAE at epoch " + std::to_string(epoch));
    result.history.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);

    if (rec.val_mae < result.best_val_mae) {
      result.best_val_mae = rec.val_mae;
      result.best_epoch = epoch;
      best = snapshot(model);
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      result.stopped_early = true;
      break;
    }
  }
  restore(model, best);
  return result;
}

Tensor predict(const HelixModel& model, const WindowData& data, std::size_t batch_size) {
  check_data(data, model.config().n_features, "predict");
  Tensor out(data.values.shape());
  const auto order = identity_order(data.count());
  for_each_batch(data.count(), batch_size, [&](std::size_t, std::size_t begin, std::size_t end) {
    const Tensor mask = gather(data.mask, order, begin, end);
    Tensor values = gather(data.values, order, begin, end);
    for (std::size_t i = 0; i < values.numel(); ++i)
      if (mask[i] == 0.0) values[i] = 0.0;
    const SeriesBatch batch{values, mask, values};
    ag::Tape tape;
    const Tensor& x_hat = forward(tape, model, batch, {}).x_hat.value();
    std::copy(x_hat.data().begin(), x_hat.data().end(), out.data().begin() + begin * values.numel() / (end - begin));
  });
  return out;
}

Tensor impute(const HelixModel& model, const WindowData& data, std::size_t batch_size) {
  Tensor out = predict(model, data, batch_size);
  for (std::size_t i = 0; i < out.numel(); ++i)
    if (data.mask[i] != 0.0) out[i] = data.values[i];
  return out;
}

AttentionRecord collect_attention(const HelixModel& model, const WindowData& data, std::size_t batch_size) {
  check_data(data, model.config().n_features, "collect_attention");
  AttentionRecord record;
  const auto order = identity_order(data.count());
  for_each_batch(data.count(), batch_size, [&](std::size_t, std::size_t begin, std::size_t end) {
    const Tensor mask = gather(data.mask, order, begin, end);
    Tensor values = gather(data.values, order, begin, end);
    for (std::size_t i = 0; i < values.numel(); ++i)
      if (mask[i] == 0.0) values[i] = 0.0;
    ag::Tape tape;
    ForwardOptions opts;
    opts.store_attention = true;
    record.merge(*forward(tape, model, SeriesBatch{values, mask, values}, opts).attention);
  });
  return record;
}

}  // namespace helix
