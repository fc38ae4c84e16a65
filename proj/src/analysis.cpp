#include "helix/analysis.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <limits>
#include <numeric>

#include "helix/errors.hpp"

namespace helix {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void same_shape(const Tensor& a, const Tensor& b, const char* who) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(who) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
}

}  // namespace

EvalReport metrics(const Tensor& truth, const Tensor& pred, const Tensor& eval_mask, std::string tag) {
  same_shape(truth, pred, "metrics");
  same_shape(truth, eval_mask, "metrics");
  EvalReport r;
  r.tag = std::move(tag);
  double abs_sum = 0.0, sq_sum = 0.0, truth_sum = 0.0;
  for (std::size_t i = 0; i < truth.numel(); ++i) {
    if (eval_mask[i] == 0.0) continue;
    const double e = pred[i] - truth[i];
    abs_sum += std::abs(e);
    sq_sum += e * e;
    truth_sum += std::abs(truth[i]);
    ++r.count;
  }
  if (r.count == 0) throw ContractError("metrics: evaluation mask is empty");
  const double n = static_cast<double>(r.count);
  r.mae = abs_sum / n;
  r.mse = sq_sum / n;
  if (truth_sum == 0.0) {
    r.mre = kNaN;
    r.mre_undefined = true;
  } else {
    r.mre = abs_sum / truth_sum;
  }
  return r;
}

PearsonResult pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw DimensionError("pearson: " + std::to_string(x.size()) + " vs " + std::to_string(y.size()) + " samples");
  PearsonResult res;
  res.n = x.size();
  if (res.n < 3) {
    res.degenerate = true;
    res.r = kNaN;
    res.p = kNaN;
    return res;
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < res.n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(res.n);
  my /= static_cast<double>(res.n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < res.n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) {
    res.degenerate = true;
    res.r = kNaN;
    res.p = kNaN;
    return res;
  }
  res.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double df = static_cast<double>(res.n - 2);
  if (std::abs(res.r) == 1.0) {
    res.p = 0.0;
  } else {
    const double t = res.r * std::sqrt(df / (1.0 - res.r * res.r));
    boost::math::students_t dist(df);
    res.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  }
  return res;
}

namespace {

Tensor distance_matrix(const std::vector<Coord>& coords) {
  const std::size_t F = coords.size();
  Tensor d(Shape{F, F});
  for (std::size_t i = 0; i < F; ++i)
    for (std::size_t j = 0; j < F; ++j) d[i * F + j] = distance(coords[i], coords[j]);
  return d;
}

}  // namespace

StructureReport embedding_structure(const Tensor& ids, const std::vector<Coord>& coords) {
  if (ids.rank() != 2 || ids.dim(0) != coords.size())
    throw DimensionError("embedding_structure: identity table " + shape_str(ids.shape()) + " for " +
                         std::to_string(coords.size()) + " coordinates");
  const std::size_t F = ids.dim(0), k = ids.dim(1);
  StructureReport rep;
  rep.distance = distance_matrix(coords);
  rep.similarity = Tensor(Shape{F, F}, kNaN);
  std::vector<double> norm(F, 0.0);
  for (std::size_t i = 0; i < F; ++i) {
    for (std::size_t c = 0; c < k; ++c) norm[i] += ids[i * k + c] * ids[i * k + c];
    norm[i] = std::sqrt(norm[i]);
    if (norm[i] == 0.0)
      rep.warnings.push_back("embedding_structure: identity row " + std::to_string(i) +
                             " has zero norm; its pairs are excluded");
  }
  std::vector<double> sims, dists;
  for (std::size_t i = 0; i < F; ++i)
    for (std::size_t j = 0; j < F; ++j) {
      if (norm[i] == 0.0 || norm[j] == 0.0) continue;
      double dot = 0.0;
      for (std::size_t c = 0; c < k; ++c) dot += ids[i * k + c] * ids[j * k + c];
      rep.similarity[i * F + j] = i == j ? 1.0 : dot / (norm[i] * norm[j]);
      if (j > i) {
        sims.push_back(rep.similarity[i * F + j]);
        dists.push_back(rep.distance[i * F + j]);
      }
    }
  rep.similarity_vs_distance = pearson(sims, dists);
  return rep;
}

Tensor proximity_matrix(const std::vector<Coord>& coords) {
  const std::size_t F = coords.size();
  const Tensor d = distance_matrix(coords);
  std::vector<double> off;
  for (std::size_t i = 0; i < F; ++i)
    for (std::size_t j = i + 1; j < F; ++j) off.push_back(d[i * F + j]);
  if (off.empty()) throw ContractError("proximity_matrix: need at least two features");
  std::sort(off.begin(), off.end());
  const std::size_t n = off.size();
  const double median = n % 2 ? off[n / 2] : 0.5 * (off[n / 2 - 1] + off[n / 2]);
  Tensor p(Shape{F, F});
  for (std::size_t i = 0; i < F * F; ++i) p[i] = median > 0.0 ? std::exp(-d[i] / median) : (d[i] == 0.0 ? 1.0 : 0.0);
  return p;
}

std::vector<PearsonResult> attention_structure(const AttentionRecord& record, const std::vector<Coord>& coords) {
  if (record.layers() == 0) throw ContractError("attention_structure: no attention records");
  const std::size_t F = coords.size();
  const Tensor prox = proximity_matrix(coords);
  std::vector<PearsonResult> out;
  for (std::size_t l = 0; l < record.layers(); ++l) {
    if (!record.has(l, Axis::feature))
      throw ContractError("attention_structure: layer " + std::to_string(l) + " has no feature attention");
    const Tensor a = record.feature(l);
    if (a.dim(0) != F)
      throw DimensionError("attention_structure: attention over " + std::to_string(a.dim(0)) + " features, " +
                           std::to_string(F) + " coordinates");
    std::vector<double> w, p;
    for (std::size_t i = 0; i < F; ++i)
      for (std::size_t j = 0; j < F; ++j)
        if (i != j) {
          w.push_back(a[i * F + j]);
          p.push_back(prox[i * F + j]);
        }
    out.push_back(pearson(w, p));
  }
  return out;
}

std::size_t gap_bucket(std::size_t run) {
  if (run <= 2) return 0;
  if (run <= 5) return 1;
  if (run <= 10) return 2;
  return 3;
}

std::vector<CurveRow> gap_length_curve(const Tensor& truth, const Tensor& pred, const Tensor& eval_mask) {
  same_shape(truth, pred, "gap_length_curve");
  same_shape(truth, eval_mask, "gap_length_curve");
  if (truth.rank() != 3) throw DimensionError("gap_length_curve: expected [W,T,F], got " + shape_str(truth.shape()));
  const std::size_t W = truth.dim(0), T = truth.dim(1), F = truth.dim(2);
  std::vector<CurveRow> rows{{"1-2"}, {"3-5"}, {"6-10"}, {"11+"}};
  std::vector<double> sums(kGapBuckets, 0.0);
  for (std::size_t w = 0; w < W; ++w)
    for (std::size_t f = 0; f < F; ++f) {
      std::size_t t = 0;
      while (t < T) {
        if (eval_mask[(w * T + t) * F + f] == 0.0) {
          ++t;
          continue;
        }
        std::size_t end = t;
        while (end < T && eval_mask[(w * T + end) * F + f] != 0.0) ++end;
        const std::size_t b = gap_bucket(end - t);
        for (std::size_t s = t; s < end; ++s) {
          const std::size_t i = (w * T + s) * F + f;
          sums[b] += std::abs(pred[i] - truth[i]);
          ++rows[b].count;
        }
        t = end;
      }
    }
  for (std::size_t b = 0; b < kGapBuckets; ++b)
    rows[b].mae = rows[b].count ? sums[b] / static_cast<double>(rows[b].count) : kNaN;
  return rows;
}

std::vector<double> max_abs_correlation(const Tensor& values, const Tensor& mask) {
  same_shape(values, mask, "max_abs_correlation");
  if (values.rank() != 2) throw DimensionError("max_abs_correlation: expected [N,F]");
  const std::size_t N = values.dim(0), F = values.dim(1);
  if (F < 2) throw ContractError("max_abs_correlation: need at least two features");
  std::vector<double> best(F, 0.0);
  std::vector<double> x, y;
  for (std::size_t i = 0; i < F; ++i)
    for (std::size_t j = i + 1; j < F; ++j) {
      x.clear();
      y.clear();
      for (std::size_t r = 0; r < N; ++r)
        if (mask[r * F + i] != 0.0 && mask[r * F + j] != 0.0) {
          x.push_back(values[r * F + i]);
          y.push_back(values[r * F + j]);
        }
      const auto p = pearson(x, y);
      if (p.degenerate) continue;
      best[i] = std::max(best[i], std::abs(p.r));
      best[j] = std::max(best[j], std::abs(p.r));
    }
  return best;
}

std::vector<std::size_t> tercile_bins(const std::vector<double>& score) {
  const std::size_t F = score.size();
  std::vector<std::size_t> order(F);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
  std::vector<std::size_t> bins(F);
  for (std::size_t rank = 0; rank < F; ++rank) bins[order[rank]] = 3 * rank / F;
  return bins;
}

std::vector<CorrelationBinRow> correlation_bin_curve(const Tensor& truth, const Tensor& pred_model,
                                                     const Tensor& pred_baseline, const Tensor& eval_mask,
                                                     const std::vector<double>& feature_correlation) {
  same_shape(truth, pred_model, "correlation_bin_curve");
  same_shape(truth, pred_baseline, "correlation_bin_curve");
  same_shape(truth, eval_mask, "correlation_bin_curve");
  const std::size_t F = truth.shape().back();
  if (F < 2) throw ContractError("correlation_bin_curve: need at least two features");
  if (feature_correlation.size() != F)
    throw DimensionError("correlation_bin_curve: " + std::to_string(feature_correlation.size()) +
                         " correlation scores for " + std::to_string(F) + " features");
  const auto bins = tercile_bins(feature_correlation);
  std::vector<CorrelationBinRow> rows{{"low"}, {"mid"}, {"high"}};
  std::vector<double> model_sum(3, 0.0), base_sum(3, 0.0);
  for (std::size_t f = 0; f < F; ++f) ++rows[bins[f]].features;
  for (std::size_t i = 0; i < truth.numel(); ++i) {
    if (eval_mask[i] == 0.0) continue;
    const std::size_t b = bins[i % F];
    model_sum[b] += std::abs(pred_model[i] - truth[i]);
    base_sum[b] += std::abs(pred_baseline[i] - truth[i]);
    ++rows[b].count;
  }
  for (std::size_t b = 0; b < 3; ++b) {
    if (rows[b].count == 0) {
      rows[b].model_mae = rows[b].baseline_mae = rows[b].improvement = kNaN;
      continue;
    }
    const double n = static_cast<double>(rows[b].count);
    rows[b].model_mae = model_sum[b] / n;
    rows[b].baseline_mae = base_sum[b] / n;
    rows[b].improvement = rows[b].baseline_mae > 0.0
                              ? (rows[b].baseline_mae - rows[b].model_mae) / rows[b].baseline_mae
                              : 0.0;
  }
  return rows;
}

}  // namespace helix
