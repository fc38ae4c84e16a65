#include <cmath>
#include <vector>

#include "doctest.h"
#include "helix/embedding.hpp"
#include "helix/errors.hpp"
#include "test_util.hpp"

using namespace helix;
using helix::testing::random_batch;
using helix::testing::random_tensor;

namespace {

EmbeddingConfig small_config(std::size_t d_pe = 4, std::size_t d_f = 3) {
  EmbeddingConfig cfg;
  cfg.d_pe = d_pe;
  cfg.d_f = d_f;
  return cfg;
}

double token(const Tensor& e, std::size_t t, std::size_t f, std::size_t slot) {
  const auto& s = e.shape();
  return e[((0 * s[1] + t) * s[2] + f) * s[3] + slot];
}

}  // namespace

TEST_CASE("sinusoidal_pe") {
  for (std::size_t d : {2, 6, 16}) {
    const auto pe = sinusoidal_pe(0, d);
    for (std::size_t i = 0; i < d; ++i) CHECK(pe[i] == (i % 2 == 0 ? 0.0 : 1.0));
  }
  const auto one = sinusoidal_pe(1, 2);
  CHECK(one[0] == std::sin(1.0));
  CHECK(one[1] == std::cos(1.0));

  const auto p = sinusoidal_pe(7, 8);
  for (std::size_t k = 0; k < 4; ++k) {
    const double arg = 7.0 / std::pow(10000.0, 2.0 * double(k) / 8.0);
    CHECK(std::abs(p[2 * k] - std::sin(arg)) <= 1e-15);
    CHECK(std::abs(p[2 * k + 1] - std::cos(arg)) <= 1e-15);
  }
  for (std::size_t t = 0; t < 200; t += 7)
    for (double v : sinusoidal_pe(t, 16)) CHECK((v >= -1.0 && v <= 1.0));
  CHECK_THROWS_AS(sinusoidal_pe(3, 5), ConfigError);
}

TEST_CASE("embed_batch layout") {
  const auto cfg = small_config();
  const SlotLayout layout(cfg);
  CHECK(layout.width == cfg.d_e());
  CHECK(cfg.d_e() == 1 + 4 + 3 + 1);

  auto batch = random_batch(1, 5, 4, 1);
  batch.mask[0] = 0.0;
  batch.values[0] = 0.0;
  const auto ids = random_tensor({4, 3}, 2);

  ag::Tape tape;
  const auto e = embed_batch(tape, batch, {cfg, tape.constant(ids), {}}).value();
  CHECK(e.shape() == Shape{1, 5, 4, 9});

  // Fully missing entry: value and mask are zero, PE and identity intact.
  CHECK(token(e, 0, 0, layout.value) == 0.0);
  CHECK(token(e, 0, 0, layout.mask) == 0.0);
  for (std::size_t k = 0; k < cfg.d_pe; ++k) CHECK(token(e, 0, 0, layout.pe.begin + k) == sinusoidal_pe(0, 4)[k]);
  for (std::size_t k = 0; k < cfg.d_f; ++k) CHECK(token(e, 0, 0, layout.identity.begin + k) == ids[k]);

  // Round trip of every slot.
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t f = 0; f < 4; ++f) {
      const std::size_t i = t * 4 + f;
      CHECK(token(e, t, f, layout.value) == batch.values[i] * batch.mask[i]);
      CHECK(token(e, t, f, layout.mask) == batch.mask[i]);
      const auto pe = sinusoidal_pe(t, 4);
      for (std::size_t k = 0; k < 4; ++k) CHECK(token(e, t, f, layout.pe.begin + k) == pe[k]);
      for (std::size_t k = 0; k < 3; ++k) CHECK(token(e, t, f, layout.identity.begin + k) == ids[f * 3 + k]);
      if (batch.mask[i] == 0.0) CHECK(token(e, t, f, layout.value) == 0.0);
    }

  EmbeddingConfig paper = small_config(16, 8);
  CHECK(paper.d_e() == 26);
  const auto big = embed_batch(tape, batch, {paper, tape.constant(random_tensor({4, 8}, 3)), {}});
  CHECK(big.shape().back() == 26);
}

TEST_CASE("embed_batch ignores the stored value where the mask is zero") {
  const auto cfg = small_config();
  auto batch = random_batch(2, 3, 2, 4);
  batch.mask[1] = 0.0;
  batch.values[1] = 123.0;  // garbage behind a missing entry
  ag::Tape tape;
  const auto e = embed_batch(tape, batch, {cfg, tape.constant(random_tensor({2, 3}, 5)), {}}).value();
  CHECK(e[1 * cfg.d_e()] == 0.0);
}

TEST_CASE("embed_batch errors") {
  const auto cfg = small_config();
  const auto batch = random_batch(1, 6, 4, 6);
  ag::Tape tape;
  CHECK_THROWS_AS(embed_batch(tape, batch, {cfg, tape.constant(random_tensor({3, 3}, 7)), {}}), DimensionError);

  EmbeddingConfig learn = cfg;
  learn.pe_kind = PeKind::learnable;
  learn.t_max = 5;
  const auto ids = tape.constant(random_tensor({4, 3}, 8));
  CHECK_THROWS_AS(embed_batch(tape, batch, {learn, ids, tape.constant(sinusoidal_table(5, 4))}), RangeError);
}

TEST_CASE("learnable PE rows replace the sinusoidal slots") {
  auto cfg = small_config();
  cfg.pe_kind = PeKind::learnable;
  cfg.t_max = 8;
  const auto table = random_tensor({8, 4}, 9);
  const auto batch = random_batch(1, 6, 3, 10);
  ag::Tape tape;
  const auto e = embed_batch(tape, batch, {cfg, tape.constant(random_tensor({3, 3}, 11)), tape.constant(table)}).value();
  const SlotLayout layout(cfg);
  for (std::size_t t = 0; t < 6; ++t)
    for (std::size_t f = 0; f < 3; ++f)
      for (std::size_t k = 0; k < 4; ++k) CHECK(token(e, t, f, layout.pe.begin + k) == table[t * 4 + k]);
}

TEST_CASE("shared slots across tokens") {
  const auto cfg = small_config();
  const SlotLayout layout(cfg);
  const auto batch = random_batch(1, 4, 3, 12);
  ag::Tape tape;
  const auto e = embed_batch(tape, batch, {cfg, tape.constant(random_tensor({3, 3}, 13)), {}}).value();
  for (std::size_t k = 0; k < cfg.d_pe; ++k) CHECK(token(e, 2, 0, layout.pe.begin + k) == token(e, 2, 2, layout.pe.begin + k));
  for (std::size_t k = 0; k < cfg.d_f; ++k)
    CHECK(token(e, 0, 1, layout.identity.begin + k) == token(e, 3, 1, layout.identity.begin + k));
}

TEST_CASE("embed_batch is deterministic and identity rows act locally") {
  const auto cfg = small_config();
  const auto batch = random_batch(2, 4, 3, 14);
  auto ids = random_tensor({3, 3}, 15);
  ag::Tape tape;
  const auto a = embed_batch(tape, batch, {cfg, tape.constant(ids), {}}).value();
  const auto b = embed_batch(tape, batch, {cfg, tape.constant(ids), {}}).value();
  CHECK(helix::testing::bitwise_equal(a, b));

  ids[1 * 3 + 2] += 0.5;  // perturb f_1
  const auto c = embed_batch(tape, batch, {cfg, tape.constant(ids), {}}).value();
  const std::size_t de = cfg.d_e();
  for (std::size_t tok = 0; tok < a.numel() / de; ++tok) {
    const std::size_t f = tok % 3;
    bool changed = false;
    for (std::size_t s = 0; s < de; ++s) changed |= a[tok * de + s] != c[tok * de + s];
    CHECK(changed == (f == 1));
  }
}

TEST_CASE("no_featid layout drops the identity slots") {
  auto cfg = small_config();
  cfg.feature_id = false;
  const SlotLayout layout(cfg);
  CHECK(layout.identity.size == 0);
  CHECK(layout.width == 1 + 4 + 1);
  ag::Tape tape;
  const auto e = embed_batch(tape, random_batch(1, 3, 2, 16), {cfg, {}, {}});
  CHECK(e.shape() == Shape{1, 3, 2, 6});
}

TEST_CASE("project_input") {
  const auto cfg = small_config();
  const std::size_t de = cfg.d_e();
  const auto batch = random_batch(2, 3, 2, 17);
  ag::Tape tape;
  const auto tokens = embed_batch(tape, batch, {cfg, tape.constant(random_tensor({2, 3}, 18)), {}});

  const auto bias = random_tensor({5}, 19);
  const auto zero = project_input(tokens, tape.constant(Tensor({de, 5}, 0.0)), tape.constant(bias)).value();
  for (std::size_t i = 0; i < zero.numel(); ++i) CHECK(zero[i] == bias[i % 5]);

  Tensor eye(Shape{de, de}, 0.0);
  for (std::size_t i = 0; i < de; ++i) eye[i * de + i] = 1.0;
  const auto same = project_input(tokens, tape.constant(eye), tape.constant(Tensor({de}, 0.0))).value();
  CHECK(same == tokens.value());

  const auto w = random_tensor({de, 5}, 20);
  const auto h0 = project_input(tokens, tape.constant(w), tape.constant(bias)).value();
  const auto& e = tokens.value();
  for (std::size_t tok = 0; tok < e.numel() / de; ++tok)
    for (std::size_t j = 0; j < 5; ++j) {
      double acc = bias[j];
      for (std::size_t i = 0; i < de; ++i) acc += e[tok * de + i] * w[i * 5 + j];
      CHECK(std::abs(h0[tok * 5 + j] - acc) <= 1e-12);
    }
  CHECK_THROWS_AS(project_input(tokens, tape.constant(Tensor({de + 1, 5}, 0.0)), tape.constant(bias)),
                  DimensionError);
}

TEST_CASE("score decomposition") {
  const auto cfg = small_config(4, 3);
  const SlotLayout layout(cfg);
  const std::size_t de = layout.width, dk = 5;

  auto bilinear = [&](const Tensor& ei, const Tensor& ej, const Tensor& wq, const Tensor& wk) {
    double s = 0.0;
    for (std::size_t k = 0; k < dk; ++k) {
      double qi = 0.0, kj = 0.0;
      for (std::size_t r = 0; r < de; ++r) {
        qi += ei[r] * wq[r * dk + k];
        kj += ej[r] * wk[r * dk + k];
      }
      s += qi * kj;
    }
    return s;
  };

  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    const auto ei = random_tensor({de}, 4 * trial), ej = random_tensor({de}, 4 * trial + 1);
    const auto wq = random_tensor({de, dk}, 4 * trial + 2), wk = random_tensor({de, dk}, 4 * trial + 3);
    const auto terms = score_decomposition(ei.data(), ej.data(), wq, wk, layout);
    CHECK(std::abs(terms.total() - bilinear(ei, ej, wq, wk)) <= 1e-10);
  }

  // Two fully missing tokens at the same step with zero identity vectors.
  const auto wq = random_tensor({de, dk}, 900), wk = random_tensor({de, dk}, 901);
  std::vector<double> first;
  for (std::size_t pair = 0; pair < 3; ++pair) {
    Tensor ei(Shape{de}, 0.0), ej(Shape{de}, 0.0);
    const auto pe = sinusoidal_pe(3, 4);
    for (std::size_t k = 0; k < 4; ++k) ei[layout.pe.begin + k] = ej[layout.pe.begin + k] = pe[k];
    const auto terms = score_decomposition(ei.data(), ej.data(), wq, wk, layout);
    CHECK(terms.identity_prior == 0.0);
    CHECK(terms.identity_context == 0.0);
    CHECK(terms.context_identity == 0.0);
    first.push_back(terms.dynamic_context);
  }
  CHECK(first[0] == first[1]);
  CHECK(first[1] == first[2]);

  const auto ei = random_tensor({de}, 950), ej = random_tensor({de}, 951);
  const auto zero = score_decomposition(ei.data(), ej.data(), Tensor({de, dk}, 0.0), wk, layout);
  CHECK(zero.identity_prior == 0.0);
  CHECK(zero.cross_terms() == 0.0);
  CHECK(zero.dynamic_context == 0.0);

  const auto short_e = random_tensor({de - 1}, 952);
  CHECK_THROWS_AS(score_decomposition(short_e.data(), ej.data(), wq, wk, layout), ContractError);
}
