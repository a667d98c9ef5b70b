#include <gtest/gtest.h>

#include <random>

#include "mdsbl/numerics.hpp"
#include "test_support.hpp"

namespace mdsbl {
namespace {

// ---------------------------------------------------------------------------
// maximize_2d
// ---------------------------------------------------------------------------

TEST(Maximize2d, ConcaveQuadratic) {
  BoundedMaxProblem p;
  p.objective = [](const Vec2& x) { return -(x - Vec2(1.0, 2.0)).squaredNorm(); };
  p.bounds = {{-10.0, -10.0}, {10.0, 10.0}};
  p.init = {0.0, 0.0};
  const auto r = maximize_2d(p);
  EXPECT_LT((r.argmax - Vec2(1.0, 2.0)).norm(), 1e-4);
  EXPECT_LE(r.evaluations, p.max_evals + 3);
}

TEST(Maximize2d, ConstantObjectiveKeepsInit) {
  BoundedMaxProblem p;
  p.objective = [](const Vec2&) { return 5.0; };
  p.bounds = {{-1.0, -1.0}, {1.0, 1.0}};
  p.init = {0.25, -0.5};
  const auto r = maximize_2d(p);
  EXPECT_EQ(r.value, 5.0);
  EXPECT_EQ(r.argmax, p.init);
}

TEST(Maximize2d, MaximumOnBoundaryStaysInside) {
  BoundedMaxProblem p;
  p.objective = [](const Vec2& x) { return x.x() + x.y(); };
  p.bounds = {{0.0, 0.0}, {3.0, 2.0}};
  p.init = {1.0, 1.0};
  const auto r = maximize_2d(p);
  EXPECT_TRUE(p.bounds.contains(r.argmax));
  EXPECT_NEAR(r.value, 5.0, 1e-5);
}

TEST(Maximize2d, NeverBelowInitOnRandomObjectives) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double a = u(rng), b = u(rng), c = u(rng);
    BoundedMaxProblem p;
    p.objective = [=](const Vec2& x) { return std::sin(a * x.x()) * std::cos(b * x.y()) + c * x.x() * x.y(); };
    p.bounds = {{-2.0, -2.0}, {2.0, 2.0}};
    p.init = {u(rng) * 0.4, u(rng) * 0.4};
    const auto r = maximize_2d(p);
    EXPECT_GE(r.value, p.objective(p.init));
    EXPECT_TRUE(p.bounds.contains(r.argmax));
    EXPECT_DOUBLE_EQ(r.value, p.objective(r.argmax));
  }
}

TEST(Maximize2d, NonFiniteAtInitThrows) {
  BoundedMaxProblem p;
  p.objective = [](const Vec2&) { return std::nan(""); };
  p.bounds = {{-1.0, -1.0}, {1.0, 1.0}};
  EXPECT_THROW(maximize_2d(p), InvalidInputError);
  p.objective = [](const Vec2&) { return 1.0; };
  p.init = {5.0, 0.0};
  EXPECT_THROW(maximize_2d(p), InvalidInputError);
}

TEST(Maximize2d, RecoversOffGridAtomPosition) {
  const auto geom = RadarGeometry::mimo3x3({0.0, 0.0}, kPi / 2);
  const Vec2 truth(3.3, 27.1);
  const CVector y = atom(truth, geom) * Complex(5.0, -2.0);
  BoundedMaxProblem p;
  // Component SNR of an empty model with unit noise: |psi^H y|^2 / ||psi||^2.
  p.objective = [&](const Vec2& x) { return std::norm(atom(x, geom).dot(y)); };
  p.bounds = {{-30.0, 0.0}, {30.0, 60.0}};
  p.init = {4.0, 26.25};  // nearest node of a 3.75 m / 2 m lattice
  const auto r = maximize_2d(p);
  EXPECT_LT((r.argmax - truth).norm(), 1e-3);
}

// ---------------------------------------------------------------------------
// Polynomials
// ---------------------------------------------------------------------------

TEST(RealPolynomial, EvaluationAndArithmetic) {
  const RealPolynomial p({1.0, -3.0, 2.0});  // (1 - x)(1 - 2x)
  EXPECT_DOUBLE_EQ(p(0.5), 0.0);
  EXPECT_DOUBLE_EQ(p(1.0), 0.0);
  EXPECT_DOUBLE_EQ(p.derivative(2.0), 5.0);
  const auto q = p * RealPolynomial({0.0, 1.0});
  EXPECT_EQ(q.degree(), 3);
  EXPECT_DOUBLE_EQ(q(3.0), 3.0 * p(3.0));
  const auto s = p + RealPolynomial({1.0});
  EXPECT_DOUBLE_EQ(s(0.0), 2.0);
}

TEST(RealPolynomial, TrimDropsNegligibleLeadingTerms) {
  RealPolynomial p({1.0, 2.0, 1e-14});
  p.trim();
  EXPECT_EQ(p.degree(), 1);
  RealPolynomial zero({0.0, 0.0});
  EXPECT_THROW(zero.trim(), InvalidInputError);
}

TEST(PositiveRealRoots, LinearCases) {
  auto r = positive_real_roots(RealPolynomial({1.0, -2.0}));
  ASSERT_EQ(r.size(), 1u);
  EXPECT_DOUBLE_EQ(r[0], 0.5);
  EXPECT_TRUE(positive_real_roots(RealPolynomial({1.0, 1.0})).empty());
}

TEST(PositiveRealRoots, DegreeZeroIsEmptyAndZeroPolynomialThrows) {
  EXPECT_TRUE(positive_real_roots(RealPolynomial({3.0})).empty());
  EXPECT_THROW(positive_real_roots(RealPolynomial({0.0, 0.0, 0.0})), InvalidInputError);
}

TEST(PositiveRealRoots, KnownFactors) {
  // (x - 1)(x - 2)(x + 3)(x - 0.5)
  auto p = RealPolynomial({-1.0, 1.0}) * RealPolynomial({-2.0, 1.0}) * RealPolynomial({3.0, 1.0}) *
           RealPolynomial({-0.5, 1.0});
  const auto r = positive_real_roots(p);
  ASSERT_EQ(r.size(), 3u);
  EXPECT_NEAR(r[0], 0.5, 1e-12);
  EXPECT_NEAR(r[1], 1.0, 1e-12);
  EXPECT_NEAR(r[2], 2.0, 1e-12);
}

TEST(PositiveRealRoots, ResidualBoundOnRandomPolynomials) {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_int_distribution<int> deg(1, 7);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> c(static_cast<std::size_t>(deg(rng)) + 1);
    for (auto& v : c) v = n(rng);
    const RealPolynomial p(c);
    for (double x : positive_real_roots(p)) {
      EXPECT_GT(x, 1e-12);
      EXPECT_LE(std::abs(p(x)) / p.magnitude(x), 1e-6);
    }
  }
}

TEST(PositiveRealRoots, MatchesSignChangeScanOnFixedPointPolynomials) {
  // Degree-3 polynomials with the structure produced by two sensors.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> s_dist(0.2, 3.0), mu_dist(0.0, 40.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double s1 = s_dist(rng), s2 = s_dist(rng);
    const double m1 = mu_dist(rng), m2 = mu_dist(rng);
    const auto p = RealPolynomial({1.0, -(m1 - s1)}) * RealPolynomial({1.0, 2 * s2, s2 * s2}) +
                   RealPolynomial({1.0, -(m2 - s2)}) * RealPolynomial({1.0, 2 * s1, s1 * s1});
    const auto roots = positive_real_roots(p);
    const auto scan = testing_support::sign_change_roots(p, 1e-6, 1e3, 200000);
    ASSERT_EQ(roots.size(), scan.size()) << "trial " << trial;
    for (std::size_t i = 0; i < roots.size(); ++i) EXPECT_NEAR(roots[i], scan[i], 1e-6 * std::max(1.0, scan[i]));
  }
}

// ---------------------------------------------------------------------------
// Cholesky
// ---------------------------------------------------------------------------

TEST(CholeskyHermitian, IdentityAndDiagonal) {
  EXPECT_LT((cholesky_hermitian(CMatrix::Identity(4, 4)).lower - CMatrix::Identity(4, 4)).norm(), 1e-15);
  CMatrix d = CMatrix::Zero(2, 2);
  d(0, 0) = 4.0;
  d(1, 1) = 9.0;
  const auto f = cholesky_hermitian(d);
  EXPECT_NEAR(std::abs(f.lower(0, 0) - 2.0), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(f.lower(1, 1) - 3.0), 0.0, 1e-15);
  EXPECT_EQ(f.jitter, 0.0);
}

TEST(CholeskyHermitian, ReconstructsRandomGram) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const CMatrix b = testing_support::random_matrix(rng, 12, 7);
    const CMatrix a = b.adjoint() * b + CMatrix::Identity(7, 7);
    const auto f = cholesky_hermitian(a);
    EXPECT_LT((f.lower * f.lower.adjoint() - a).norm() / a.norm(), 1e-9);
  }
}

TEST(CholeskyHermitian, JitterRescuesSemidefinite) {
  const CVector v = CVector::Ones(3);
  const CMatrix a = v * v.adjoint();  // rank one
  const auto f = cholesky_hermitian(a);
  EXPECT_GT(f.jitter, 0.0);
  EXPECT_LT((f.lower * f.lower.adjoint() - a - f.jitter * CMatrix::Identity(3, 3)).norm() / a.norm(), 1e-9);
}

TEST(CholeskyHermitian, IndefiniteAndNonHermitianThrow) {
  CMatrix a = CMatrix::Identity(2, 2);
  a(1, 1) = -1.0;
  EXPECT_THROW(cholesky_hermitian(a), NumericalError);
  CMatrix b = CMatrix::Identity(2, 2);
  b(0, 1) = 0.5;
  EXPECT_THROW(cholesky_hermitian(b), InvalidInputError);
}

// ---------------------------------------------------------------------------
// Factor cache
// ---------------------------------------------------------------------------

TEST(FactorCache, EmptyActiveSet) {
  std::mt19937_64 rng(1);
  const CVector y = testing_support::random_vector(rng, 10);
  const auto env = NoiseEnvelope::identity(10);
  const auto cache = build_factor_cache(CMatrix(10, 0), {}, env, 2.5, y);
  EXPECT_EQ(cache.lowrank.cols(), 0);
  EXPECT_LT((cache.resid - 2.5 * y).norm(), 1e-14);
}

TEST(FactorCache, SingleOrthonormalAtom) {
  std::mt19937_64 rng(2);
  CVector psi = testing_support::random_vector(rng, 8);
  psi.normalize();
  const auto env = NoiseEnvelope::identity(8);
  const std::vector<double> gamma{1.0};
  const auto cache = build_factor_cache(psi, gamma, env, 1.0, CVector::Zero(8));
  EXPECT_LT((cache.lowrank * cache.lowrank.adjoint() - 0.5 * psi * psi.adjoint()).norm(), 1e-14);
}

TEST(FactorCache, ReconstructsDenseLeaveOneOutPrecision) {
  std::mt19937_64 rng(3);
  for (int k = 0; k <= 5; ++k) {
    const auto inst = testing_support::random_sensor_instance(rng, 20, k, k % 2 == 1);
    const auto cache = build_factor_cache(inst.atoms, inst.gammas, inst.envelope, inst.lambda, inst.y);
    const CMatrix dense = testing_support::dense_precision(inst);
    EXPECT_LT((cache.dense() - dense).norm() / dense.norm(), 1e-10) << "k=" << k;
    const CMatrix l = cache.chol_noise();
    CMatrix recon = l * l.adjoint();
    if (k > 0) recon -= cache.lowrank * cache.lowrank.adjoint();
    EXPECT_LT((recon - dense).norm() / dense.norm(), 1e-10);
  }
}

TEST(StatsFromCache, EmptyModelUnitAtom) {
  std::mt19937_64 rng(4);
  CVector psi = testing_support::random_vector(rng, 9);
  psi.normalize();
  const CVector y = testing_support::random_vector(rng, 9);
  const auto env = NoiseEnvelope::identity(9);
  const auto cache = build_factor_cache(CMatrix(9, 0), {}, env, 1.0, y);
  const auto st = stats_from_cache(cache, psi);
  EXPECT_NEAR(st.s, 1.0, 1e-14);
  EXPECT_LT(std::abs(st.mu - psi.dot(y)), 1e-13);
}

TEST(StatsFromCache, OrthogonalAtomUnaffectedByActiveSet) {
  std::mt19937_64 rng(6);
  const CMatrix q = testing_support::random_matrix(rng, 12, 3).householderQr().householderQ() * CMatrix::Identity(12, 3);
  const auto env = NoiseEnvelope::identity(12);
  const CVector y = testing_support::random_vector(rng, 12);
  const std::vector<double> gammas{0.3, 2.0};
  const auto with = build_factor_cache(q.leftCols(2), gammas, env, 1.7, y);
  const auto without = build_factor_cache(CMatrix(12, 0), {}, env, 1.7, y);
  const CVector probe = q.col(2);
  EXPECT_NEAR(stats_from_cache(with, probe).s, stats_from_cache(without, probe).s, 1e-12);
}

TEST(StatsFromCache, MatchesDenseFormulas) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 60; ++trial) {
    const int k = trial % 6;
    const auto inst = testing_support::random_sensor_instance(rng, 25, k, trial % 3 == 0);
    const auto cache = build_factor_cache(inst.atoms, inst.gammas, inst.envelope, inst.lambda, inst.y);
    const CVector probe = testing_support::random_vector(rng, 25);
    const auto fast = stats_from_cache(cache, probe);
    const auto dense = testing_support::dense_stats(inst, probe);
    EXPECT_LT(std::abs(fast.s - dense.s) / dense.s, 1e-10);
    EXPECT_LT(std::abs(fast.mu - dense.mu) / std::abs(dense.mu), 1e-10);
  }
}

TEST(StatsFromCache, BatchMatchesSingle) {
  std::mt19937_64 rng(12);
  const auto inst = testing_support::random_sensor_instance(rng, 30, 3, true);
  const auto cache = build_factor_cache(inst.atoms, inst.gammas, inst.envelope, inst.lambda, inst.y);
  const CMatrix probes = testing_support::random_matrix(rng, 30, 15);
  RVector s;
  CVector mu;
  stats_from_cache_batch(cache, probes, inst.envelope.quad_columns(probes), s, mu);
  for (Eigen::Index j = 0; j < probes.cols(); ++j) {
    const auto single = stats_from_cache(cache, probes.col(j));
    EXPECT_NEAR(s[j], single.s, 1e-10 * single.s);
    EXPECT_LT(std::abs(mu[j] - single.mu), 1e-10 * std::abs(single.mu));
  }
}

TEST(StatsFromCache, ActiveAtomIsDegenerate) {
  // Probing an atom that is already in the model with a tiny gamma leaves
  // almost no precision; an exactly duplicated, very weakly regularized atom
  // must not produce a negative variance.
  std::mt19937_64 rng(13);
  CVector psi = testing_support::random_vector(rng, 6);
  psi.normalize();
  const auto env = NoiseEnvelope::identity(6);
  const std::vector<double> gamma{1e-18};
  const auto cache = build_factor_cache(psi, gamma, env, 1.0, psi);
  try {
    const auto st = stats_from_cache(cache, psi);
    EXPECT_GT(st.s, 0.0);
  } catch (const DegenerateStatisticsError&) {
    SUCCEED();
  }
}

TEST(NoiseEnvelope, DiagonalAndDenseAgree) {
  std::mt19937_64 rng(14);
  RVector d(5);
  d << 1.0, 2.0, 0.5, 3.0, 1.5;
  const NoiseEnvelope diag(d.cast<Complex>().asDiagonal().toDenseMatrix());
  EXPECT_TRUE(diag.is_diagonal());
  EXPECT_NEAR(diag.log_det(), std::log(d.prod()), 1e-12);
  const CVector x = testing_support::random_vector(rng, 5);
  EXPECT_NEAR(diag.quad(x), x.dot(diag.matrix() * x).real(), 1e-12);

  const CMatrix b = testing_support::random_matrix(rng, 5, 5);
  const NoiseEnvelope dense(b.adjoint() * b + CMatrix::Identity(5, 5));
  EXPECT_FALSE(dense.is_diagonal());
  EXPECT_LT((dense.chol() * dense.chol().adjoint() - dense.matrix()).norm(), 1e-10);
  EXPECT_THROW(NoiseEnvelope(-CMatrix::Identity(2, 2)), InvalidInputError);
}

}  // namespace
}  // namespace mdsbl
