#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "slua/model.hpp"
#include "slua/train.hpp"

using namespace slua;

namespace {

Matrix<double> random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Matrix<double> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

// Dense pooling operator built entry by entry from the definition.
Matrix<double> pooling_operator(Eigen::Index n, int win) {
  Matrix<double> c = Matrix<double>::Identity(n, n);
  const int half = (win - 1) / 2;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (std::abs(i - j) <= half) c(i, j) += 1.0 / win;
  return c;
}

// Negatives drawn from the pair itself (sentence scope), deterministic.
NegativeSamples sentence_negatives(const SentencePair& pair, int k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const SentencePair batch[] = {pair};
  return sample_negatives(batch, 0, k, NegativeScope::kSentence, rng);
}

}  // namespace

TEST_CASE("contextualize matches the pooling definition") {
  SUBCASE("single word is padded on both sides") {
    Matrix<double> v(1, 3);
    v << 3, -6, 1.5;
    CHECK(contextualize(v, 3).isApprox(v * (4.0 / 3.0)));
  }
  SUBCASE("window of one doubles every row") {
    std::mt19937_64 rng(1);
    const auto e = random_matrix(5, 4, rng);
    CHECK(contextualize(e, 1).isApprox(2.0 * e));
  }
  SUBCASE("basis vectors") {
    const Matrix<double> e = Matrix<double>::Identity(3, 3);
    const auto x = contextualize(e, 3);
    RowVector<double> expect(3);
    expect << 1.0 / 3, 1.0 / 3 + 1, 1.0 / 3;
    CHECK(x.row(1).isApprox(expect));
  }
  SUBCASE("random inputs agree with the dense operator") {
    std::mt19937_64 rng(2);
    for (int win : {1, 3, 5, 7}) {
      for (Eigen::Index n : {1, 2, 3, 6, 11}) {
        const auto e = random_matrix(n, 4, rng);
        CHECK(contextualize(e, win).isApprox(pooling_operator(n, win) * e, 1e-12));
      }
    }
  }
  SUBCASE("even window is rejected") {
    CHECK_THROWS_AS(contextualize(Matrix<double>::Ones(2, 2), 2), InputError);
    CHECK_THROWS_AS(contextualize(Matrix<double>::Ones(2, 2), 0), InputError);
  }
}

TEST_CASE("attention maps") {
  SUBCASE("constant logits give a uniform row") {
    Matrix<double> x = Matrix<double>::Zero(2, 3);
    std::mt19937_64 rng(3);
    const auto y = random_matrix(4, 3, rng);
    const auto att = attention_forward(x, y);
    CHECK(att.s2t.isApprox(Matrix<double>::Constant(2, 4, 0.25)));
  }
  SUBCASE("single target word takes all the mass") {
    std::mt19937_64 rng(4);
    const auto att = attention_forward(random_matrix(5, 3, rng), random_matrix(1, 3, rng));
    CHECK(att.s2t.isApprox(Matrix<double>::Ones(5, 1)));
  }
  SUBCASE("logits 0 and ln 3") {
    Matrix<double> x(1, 1), y(2, 1);
    x << 1;
    y << 0, std::log(3.0);
    const auto att = attention_forward(x, y);
    CHECK(att.s2t(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(att.s2t(0, 1) == doctest::Approx(0.75).epsilon(1e-12));
  }
  SUBCASE("contexts are attention-weighted values") {
    std::mt19937_64 rng(5);
    const auto x = random_matrix(3, 4, rng);
    const auto y = random_matrix(5, 4, rng);
    const auto att = attention_forward(x, y);
    for (Eigen::Index i = 0; i < 3; ++i) {
      RowVector<double> c = RowVector<double>::Zero(4);
      for (Eigen::Index j = 0; j < 5; ++j) c += att.s2t(i, j) * y.row(j);
      CHECK(att.src_context.row(i).isApprox(c));
    }
  }
  SUBCASE("rows are distributions for arbitrary inputs") {
    std::mt19937_64 rng(6);
    std::uniform_int_distribution<int> len(1, 9);
    for (int trial = 0; trial < 200; ++trial) {
      const double scale = trial % 4 == 0 ? 30.0 : 1.0;
      const auto x = random_matrix(len(rng), 5, rng, scale).cast<float>().eval();
      const auto y = random_matrix(len(rng), 5, rng, scale).cast<float>().eval();
      const auto att = attention_forward(x, y);
      for (const auto* m : {&att.s2t, &att.t2s}) {
        REQUIRE(m->allFinite());
        CHECK(m->minCoeff() >= 0.0f);
        CHECK(m->maxCoeff() <= 1.0f);
        for (Eigen::Index r = 0; r < m->rows(); ++r) CHECK(std::abs(m->row(r).sum() - 1.0f) <= 1e-6f);
      }
    }
  }
}

TEST_CASE("align_score is the sigmoid of the inner product") {
  Vector<double> q(2), c(2);
  q << 1, 0;
  c << 0, 5;
  CHECK(align_score(q, c) == doctest::Approx(0.5));
  c << std::log(3.0), 9;
  CHECK(align_score(q, c) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(align_score(Vector<double>::Zero(2), c) == 0.5);
  c << 1e6, 0;
  CHECK(align_score(q, c) == 1.0);
  CHECK(align_score(-q, c) == 0.0);
}

TEST_CASE("nce loss") {
  SUBCASE("all scores one half gives log(k+1)") {
    for (int k : {1, 2, 5}) {
      const Matrix<double> zero = Matrix<double>::Zero(3, 4);
      const Matrix<double> negs = Matrix<double>::Zero(3 * k, 4);
      CHECK(nce_loss_direction(zero, zero, negs, k) == doctest::Approx(std::log(k + 1.0)));
    }
    CHECK(nce_loss_direction<double>(Matrix<double>::Zero(1, 1), Matrix<double>::Zero(1, 1),
                                     Matrix<double>::Zero(1, 1), 1) == doctest::Approx(0.6931).epsilon(1e-4));
  }
  SUBCASE("perfect separation drives the loss to zero") {
    Matrix<double> q(1, 1), c(1, 1), n(2, 1);
    q << 1;
    c << 200;
    n << -1, -1;
    const double loss = nce_loss_direction(q, c, n, 2);
    CHECK(std::isfinite(loss));
    CHECK(loss == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("hand evaluated instance") {
    Matrix<double> q(1, 1), c(1, 1), n(2, 1);
    q << 1;
    c << std::log(3.0);
    n << 0, 1;
    CHECK(nce_loss_direction(q, c, n, 2) == doctest::Approx(std::log(8.0 / 3.0)).epsilon(1e-12));
    CHECK(std::log(8.0 / 3.0) == doctest::Approx(0.9808).epsilon(1e-4));
  }
  SUBCASE("saturated scores stay finite") {
    Matrix<double> q(1, 1), c(1, 1), n(1, 1);
    q << -1;
    c << 1e4;
    n << -1;
    CHECK(std::isfinite(nce_loss_direction(q, c, n, 1)));
    n << 1;
    CHECK(nce_loss_direction(q, c, n, 1) == doctest::Approx(1e4).epsilon(1e-6));
  }
  SUBCASE("no negatives is an error") {
    CHECK_THROWS_AS(nce_loss_direction<double>(Matrix<double>::Zero(1, 2), Matrix<double>::Zero(1, 2),
                                               Matrix<double>::Zero(0, 2), 0),
                    InputError);
  }
  SUBCASE("never negative") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 200; ++trial) {
      const int k = 1 + trial % 6;
      const auto q = random_matrix(4, 3, rng, 3.0);
      const auto c = random_matrix(4, 3, rng, 3.0);
      const auto n = random_matrix(4 * k, 3, rng, 3.0);
      CHECK(nce_loss_direction(q, c, n, k) >= 0.0);
    }
  }
}

TEST_CASE("agreement loss") {
  std::mt19937_64 rng(9);
  const auto att = attention_forward(random_matrix(3, 4, rng), random_matrix(5, 4, rng));
  CHECK(agreement_loss<double>(att.s2t, att.s2t.transpose()) == 0.0);
  CHECK(agreement_loss<double>(Matrix<double>::Ones(1, 1), Matrix<double>::Ones(1, 1)) == 0.0);
  Matrix<double> a(1, 2), b(2, 1);
  a << 0.6, 0.4;
  b << 1.0, 0.0;
  CHECK(agreement_loss(a, b) == doctest::Approx(0.32).epsilon(1e-12));
  CHECK(agreement_loss(att) > 0.0);
  CHECK_THROWS_AS(agreement_loss<double>(Matrix<double>::Ones(2, 3), Matrix<double>::Ones(2, 3)), InputError);
}

TEST_CASE("total loss composition") {
  std::mt19937_64 rng(10);
  EmbeddingTable<double> params{random_matrix(6, 4, rng), random_matrix(5, 4, rng)};
  const SentencePair pair{{1, 2, 3}, {4, 1}, 0};
  Hyperparams hp;
  hp.dim = 4;
  hp.k = 2;
  hp.alpha = 0.7;
  const auto neg = sentence_negatives(pair, hp.k, 1);
  const SentencePair ctx[] = {pair};

  const auto full = total_loss(pair, ctx, params, hp, neg);
  CHECK(full.total == doctest::Approx(full.s2t + full.t2s + 0.7 * full.disagree));

  SUBCASE("source-to-target only") {
    Hyperparams only = hp;
    only.use_t2s = false;
    only.use_agreement = false;
    const auto l = total_loss(pair, ctx, params, only, neg);
    CHECK(l.total == doctest::Approx(full.s2t));
  }
  SUBCASE("alpha zero ignores disagreement") {
    Hyperparams z = hp;
    z.alpha = 0.0;
    const auto l = total_loss(pair, ctx, params, z, neg);
    CHECK(l.disagree > 0.0);
    CHECK(l.total == doctest::Approx(full.s2t + full.t2s));
  }
  SUBCASE("one-word pair has no disagreement") {
    EmbeddingTable<double> shared{Matrix<double>::Ones(2, 4), Matrix<double>::Ones(2, 4)};
    const SentencePair tiny{{1}, {1}, 0};
    const SentencePair tctx[] = {tiny};
    const auto l = total_loss(tiny, tctx, shared, hp, sentence_negatives(tiny, hp.k, 2));
    CHECK(l.disagree == 0.0);
  }
}

TEST_CASE("total loss is invariant to relabeling word ids") {
  std::mt19937_64 rng(11);
  const int vs = 7, vt = 6;
  EmbeddingTable<double> params{random_matrix(vs, 5, rng), random_matrix(vt, 5, rng)};
  std::vector<WordId> ps(vs), pt(vt);
  std::iota(ps.begin(), ps.end(), 0);
  std::iota(pt.begin(), pt.end(), 0);
  std::shuffle(ps.begin(), ps.end(), rng);
  std::shuffle(pt.begin(), pt.end(), rng);
  EmbeddingTable<double> moved{Matrix<double>(vs, 5), Matrix<double>(vt, 5)};
  for (int i = 0; i < vs; ++i) moved.src.row(ps[i]) = params.src.row(i);
  for (int i = 0; i < vt; ++i) moved.tgt.row(pt[i]) = params.tgt.row(i);

  Hyperparams hp;
  hp.dim = 5;
  hp.k = 3;
  const std::vector<SentencePair> batch{{{1, 2, 3, 2}, {0, 5, 4}, 0}, {{6, 0}, {1, 2, 3}, 1}};
  std::vector<SentencePair> relabeled = batch;
  for (auto& p : relabeled) {
    for (auto& id : p.src) id = ps[id];
    for (auto& id : p.tgt) id = pt[id];
  }
  for (std::size_t p = 0; p < batch.size(); ++p) {
    std::mt19937_64 r(100 + p);
    const auto neg = sample_negatives(batch, p, hp.k, NegativeScope::kBatch, r);
    const auto a = total_loss(batch[p], batch, params, hp, neg);
    const auto b = total_loss(relabeled[p], relabeled, moved, hp, neg);
    CHECK(a.total == doctest::Approx(b.total).epsilon(1e-12));
    CHECK(a.disagree == doctest::Approx(b.disagree).epsilon(1e-12));
  }
}

namespace {

// Central differences of total_loss over every embedding entry.
EmbeddingTable<double> numeric_gradient(const SentencePair& pair, std::span<const SentencePair> ctx,
                                        EmbeddingTable<double> params, const Hyperparams& hp,
                                        const NegativeSamples& neg, double h) {
  EmbeddingTable<double> g{Matrix<double>::Zero(params.src.rows(), params.src.cols()),
                           Matrix<double>::Zero(params.tgt.rows(), params.tgt.cols())};
  for (auto [table, out] : {std::pair{&params.src, &g.src}, std::pair{&params.tgt, &g.tgt}}) {
    for (Eigen::Index i = 0; i < table->size(); ++i) {
      const double keep = table->data()[i];
      table->data()[i] = keep + h;
      const double up = total_loss(pair, ctx, params, hp, neg).total;
      table->data()[i] = keep - h;
      const double down = total_loss(pair, ctx, params, hp, neg).total;
      table->data()[i] = keep;
      out->data()[i] = (up - down) / (2 * h);
    }
  }
  return g;
}

double max_relative_error(const EmbeddingTable<double>& a, const EmbeddingTable<double>& b) {
  double worst = 0.0;
  for (auto [x, y] : {std::pair{&a.src, &b.src}, std::pair{&a.tgt, &b.tgt}}) {
    for (Eigen::Index i = 0; i < x->size(); ++i) {
      const double u = x->data()[i], v = y->data()[i];
      const double scale = std::max({std::abs(u), std::abs(v), 1e-6});
      worst = std::max(worst, std::abs(u - v) / scale);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("analytic gradient matches central differences") {
  std::mt19937_64 rng(12);
  EmbeddingTable<double> params{random_matrix(6, 4, rng, 0.8), random_matrix(5, 4, rng, 0.8)};
  const std::vector<SentencePair> batch{{{1, 2, 3}, {4, 1}, 0}, {{5, 1}, {2, 3, 3}, 1}};
  Hyperparams hp;
  hp.dim = 4;
  hp.k = 3;
  hp.alpha = 0.6;
  for (int mask = 0; mask < 8; ++mask) {
    hp.use_s2t = mask & 1;
    hp.use_t2s = mask & 2;
    hp.use_agreement = mask & 4;
    for (auto scope : {NegativeScope::kSentence, NegativeScope::kBatch}) {
      std::mt19937_64 r(mask);
      const auto neg = sample_negatives(batch, 0, hp.k, scope, r);
      const auto analytic = backward(batch[0], batch, params, hp, neg);
      const auto numeric = numeric_gradient(batch[0], batch, params, hp, neg, 1e-4);
      INFO("mask " << mask);
      CHECK(max_relative_error(analytic, numeric) < 1e-4);
    }
  }
}

TEST_CASE("gradient rows of absent words are exactly zero") {
  std::mt19937_64 rng(13);
  EmbeddingTable<double> params{random_matrix(10, 3, rng), random_matrix(10, 3, rng)};
  const SentencePair pair{{1, 2, 3}, {4, 5}, 0};
  Hyperparams hp;
  hp.dim = 3;
  hp.k = 2;
  const SentencePair ctx[] = {pair};
  const auto g = backward(pair, ctx, params, hp, sentence_negatives(pair, hp.k, 3));
  for (WordId w : {0, 4, 5, 6, 7, 8, 9}) CHECK(g.src.row(w).isZero(0.0));
  for (WordId w : {0, 1, 2, 3, 6, 7, 8, 9}) CHECK(g.tgt.row(w).isZero(0.0));
  CHECK(!g.src.row(1).isZero(0.0));
  CHECK(!g.tgt.row(4).isZero(0.0));
}

TEST_CASE("zero alpha makes the agreement switch irrelevant") {
  std::mt19937_64 rng(14);
  EmbeddingTable<double> params{random_matrix(5, 3, rng), random_matrix(5, 3, rng)};
  const SentencePair pair{{1, 2, 3}, {4, 1, 2}, 0};
  const SentencePair ctx[] = {pair};
  Hyperparams hp;
  hp.dim = 3;
  hp.k = 2;
  hp.alpha = 0.0;
  const auto neg = sentence_negatives(pair, hp.k, 4);
  hp.use_agreement = true;
  const auto a = backward(pair, ctx, params, hp, neg);
  hp.use_agreement = false;
  const auto b = backward(pair, ctx, params, hp, neg);
  CHECK(a.src == b.src);
  CHECK(a.tgt == b.tgt);
}

TEST_CASE("contrastive loss respects the mutual-information bound on a dictionary task") {
  // A bijective toy dictionary of V words: the bound log(k) - loss <= log(V)
  // must hold for any parameters.
  const int V = 8;
  std::mt19937_64 rng(15);
  EmbeddingTable<double> params{random_matrix(V, 6, rng, 2.0), random_matrix(V, 6, rng, 2.0)};
  Hyperparams hp;
  hp.dim = 6;
  hp.k = 4;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<WordId> src(V);
    std::iota(src.begin(), src.end(), 0);
    std::shuffle(src.begin(), src.end(), rng);
    std::vector<WordId> tgt = src;
    std::shuffle(tgt.begin(), tgt.end(), rng);
    const SentencePair pair{src, tgt, 0};
    const SentencePair ctx[] = {pair};
    const auto l = total_loss(pair, ctx, params, hp, sentence_negatives(pair, hp.k, trial));
    CHECK(std::log(hp.k) - l.s2t <= std::log(static_cast<double>(V)));
  }
}

TEST_CASE("xavier initialization") {
  const auto a = xavier_init<float>(40, 30, 5);
  const float bound = std::sqrt(6.0f / 70.0f);
  CHECK(a.cwiseAbs().maxCoeff() <= bound);
  CHECK(a == xavier_init<float>(40, 30, 5));
  CHECK(a != xavier_init<float>(40, 30, 6));

  const auto big = xavier_init<double>(1000, 1000, 7);
  const double b = std::sqrt(6.0 / 2000.0);
  const double mean = big.mean();
  const double var = (big.array() - mean).square().sum() / static_cast<double>(big.size() - 1);
  CHECK(var == doctest::Approx(b * b / 3.0).epsilon(0.02));
  CHECK_THROWS_AS(xavier_init<float>(0, 3, 1), InputError);
}

TEST_CASE("hyperparameter validation") {
  Hyperparams hp;
  CHECK_NOTHROW(hp.validate());
  hp.win = 4;
  CHECK_THROWS_AS(hp.validate(), InputError);
  hp = {};
  hp.alpha = 1.5;
  CHECK_THROWS_AS(hp.validate(), InputError);
  hp = {};
  hp.k = 0;
  CHECK_THROWS_AS(hp.validate(), InputError);
}
