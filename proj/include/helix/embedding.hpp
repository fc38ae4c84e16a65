#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "helix/autograd.hpp"
#include "helix/model.hpp"

namespace helix {

/// Sinusoidal encoding of 0-based step `t`: index 2k holds
/// sin(t / 10000^(2k/d_pe)), index 2k+1 the matching cosine.
std::vector<double> sinusoidal_pe(std::size_t t, std::size_t d_pe);
// [steps, d_pe] table of sinusoidal_pe rows.
Tensor sinusoidal_table(std::size_t steps, std::size_t d_pe);

struct SlotRange {
  std::size_t begin = 0;
  std::size_t size = 0;
  std::size_t end() const { return begin + size; }
};

/// Token layout (value, PE, identity, mask). The identity slots form the
/// `f` view; every other slot belongs to the context view `r`.
struct SlotLayout {
  std::size_t value = 0;
  SlotRange pe;
  SlotRange identity;  // size 0 without feature identities
  std::size_t mask = 0;
  std::size_t width = 0;

  explicit SlotLayout(const EmbeddingConfig& cfg);
  std::vector<std::size_t> context_indices() const;
  std::vector<std::size_t> identity_indices() const;
};

/// Tape-bound embedding parameters. Vars are left invalid when the
/// corresponding feature is disabled in `config`.
struct EmbeddingInputs {
  EmbeddingConfig config;
  ag::Var feature_ids;  // [F, d_f]
  ag::Var pe_table;     // [t_max, d_pe]
};

/// Builds the [B, T, F, d_e] token tensor for a batch.
ag::Var embed_batch(ag::Tape& tape, const SeriesBatch& batch, const EmbeddingInputs& inputs);

/// Per-token affine map d_e -> d.
ag::Var project_input(const ag::Var& tokens, const ag::Var& w, const ag::Var& b);

/// Four-way split of the bilinear score e_i^T A e_j, A = Wq Wk^T, along the
/// identity / context partition of the token layout.
struct ScoreTerms {
  double identity_prior = 0.0;    // f_i A_ff f_j
  double identity_context = 0.0;  // f_i A_fr r_j
  double context_identity = 0.0;  // r_i A_rf f_j
  double dynamic_context = 0.0;   // r_i A_rr r_j

  double cross_terms() const { return identity_context + context_identity; }
  double total() const { return identity_prior + cross_terms() + dynamic_context; }
};

// wq, wk: [d_e, d_k] maps applied to row vectors (q = e * wq).
ScoreTerms score_decomposition(std::span<const double> e_i, std::span<const double> e_j,
                               const Tensor& wq, const Tensor& wk, const SlotLayout& layout);

}  // namespace helix
