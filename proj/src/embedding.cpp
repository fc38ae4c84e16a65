#include "helix/embedding.hpp"

#include <cmath>

#include "helix/errors.hpp"

namespace helix {

std::vector<double> sinusoidal_pe(std::size_t t, std::size_t d_pe) {
  if (d_pe == 0 || d_pe % 2 != 0)
    throw ConfigError("sinusoidal_pe: width must be positive and even, got " + std::to_string(d_pe));
  std::vector<double> pe(d_pe);
  for (std::size_t k = 0; k < d_pe / 2; ++k) {
    const double freq = std::pow(10000.0, static_cast<double>(2 * k) / static_cast<double>(d_pe));
    const double arg = static_cast<double>(t) / freq;
    pe[2 * k] = std::sin(arg);
    pe[2 * k + 1] = std::cos(arg);
  }
  return pe;
}

Tensor sinusoidal_table(std::size_t steps, std::size_t d_pe) {
  Tensor table(Shape{steps, d_pe});
  for (std::size_t t = 0; t < steps; ++t) {
    const auto row = sinusoidal_pe(t, d_pe);
    std::copy(row.begin(), row.end(), table.data().begin() + t * d_pe);
  }
  return table;
}

SlotLayout::SlotLayout(const EmbeddingConfig& cfg) {
  value = 0;
  pe = {1, cfg.d_pe};
  identity = {pe.end(), cfg.feature_id ? cfg.d_f : 0};
  mask = identity.end();
  width = mask + 1;
}

std::vector<std::size_t> SlotLayout::context_indices() const {
  std::vector<std::size_t> idx{value};
  for (std::size_t i = pe.begin; i < pe.end(); ++i) idx.push_back(i);
  idx.push_back(mask);
  return idx;
}

std::vector<std::size_t> SlotLayout::identity_indices() const {
  std::vector<std::size_t> idx;
  for (std::size_t i = identity.begin; i < identity.end(); ++i) idx.push_back(i);
  return idx;
}

ag::Var embed_batch(ag::Tape& tape, const SeriesBatch& batch, const EmbeddingInputs& inputs) {
  batch.validate();
  const auto& cfg = inputs.config;
  const std::size_t B = batch.batch(), T = batch.steps(), F = batch.features();

  Tensor value(Shape{B, T, F, 1});
  Tensor mask(Shape{B, T, F, 1});
  for (std::size_t i = 0; i < value.numel(); ++i) {
    mask[i] = batch.mask[i] != 0.0 ? 1.0 : 0.0;
    value[i] = mask[i] != 0.0 ? batch.values[i] : 0.0;
  }

  std::vector<ag::Var> parts;
  parts.push_back(tape.constant(std::move(value)));

  if (cfg.pe_kind == PeKind::sinusoidal) {
    const Tensor table = sinusoidal_table(T, cfg.d_pe);
    Tensor pe(Shape{B, T, F, cfg.d_pe});
    double* dst = pe.data().data();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t f = 0; f < F; ++f, dst += cfg.d_pe)
          std::copy_n(table.data().data() + t * cfg.d_pe, cfg.d_pe, dst);
    parts.push_back(tape.constant(std::move(pe)));
  } else {
    if (!inputs.pe_table.valid()) throw ContractError("embed_batch: learnable PE table not bound");
    const auto& ts = inputs.pe_table.shape();
    if (ts.size() != 2 || ts[1] != cfg.d_pe)
      throw DimensionError("embed_batch: PE table " + shape_str(ts) + " for d_pe " +
                           std::to_string(cfg.d_pe));
    if (T > ts[0])
      throw RangeError("embed_batch: window length " + std::to_string(T) + " exceeds t_max " +
                       std::to_string(ts[0]));
    ag::Var flat = ag::reshape(inputs.pe_table, Shape{1, ts[0] * cfg.d_pe});
    ag::Var rows = ag::reshape(ag::slice_last(flat, 0, T * cfg.d_pe), Shape{T, 1, cfg.d_pe});
    parts.push_back(ag::broadcast_to(rows, Shape{B, T, F, cfg.d_pe}));
  }

  if (cfg.feature_id) {
    if (!inputs.feature_ids.valid()) throw ContractError("embed_batch: feature identities not bound");
    const auto& is = inputs.feature_ids.shape();
    if (is.size() != 2 || is[0] != F || is[1] != cfg.d_f)
      throw DimensionError("embed_batch: identity table " + shape_str(is) + " for " +
                           std::to_string(F) + " features of width " + std::to_string(cfg.d_f));
    parts.push_back(ag::broadcast_to(inputs.feature_ids, Shape{B, T, F, cfg.d_f}));
  }

  parts.push_back(tape.constant(std::move(mask)));
  return ag::concat_last(parts);
}

ag::Var project_input(const ag::Var& tokens, const ag::Var& w, const ag::Var& b) {
  return ag::linear(tokens, w, b);
}

ScoreTerms score_decomposition(std::span<const double> e_i, std::span<const double> e_j,
                               const Tensor& wq, const Tensor& wk, const SlotLayout& layout) {
  const std::size_t de = layout.width;
  if (e_i.size() != de || e_j.size() != de)
    throw ContractError("score_decomposition: token width " + std::to_string(e_i.size()) + "/" +
                        std::to_string(e_j.size()) + " does not match layout width " +
                        std::to_string(de));
  if (wq.rank() != 2 || wk.shape() != wq.shape() || wq.dim(0) != de)
    throw ContractError("score_decomposition: projections " + shape_str(wq.shape()) + ", " +
                        shape_str(wk.shape()) + " do not map width " + std::to_string(de));
  const std::size_t dk = wq.dim(1);

  // A = Wq Wk^T, so the score (e_i Wq) . (e_j Wk) equals e_i^T A e_j.
  std::vector<double> a(de * de, 0.0);
  for (std::size_t r = 0; r < de; ++r)
    for (std::size_t c = 0; c < de; ++c) {
      double acc = 0.0;
      for (std::size_t k = 0; k < dk; ++k) acc += wq[r * dk + k] * wk[c * dk + k];
      a[r * de + c] = acc;
    }

  const auto ctx = layout.context_indices();
  const auto ids = layout.identity_indices();
  auto block = [&](const std::vector<std::size_t>& rows, std::span<const double> left,
                   const std::vector<std::size_t>& cols, std::span<const double> right) {
    double acc = 0.0;
    for (auto r : rows)
      for (auto c : cols) acc += left[r] * a[r * de + c] * right[c];
    return acc;
  };
  ScoreTerms terms;
  terms.identity_prior = block(ids, e_i, ids, e_j);
  terms.identity_context = block(ids, e_i, ctx, e_j);
  terms.context_identity = block(ctx, e_i, ids, e_j);
  terms.dynamic_context = block(ctx, e_i, ctx, e_j);
  return terms;
}

}  // namespace helix
