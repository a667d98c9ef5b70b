#include <gtest/gtest.h>

#include <random>

#include "mdsbl/nomp.hpp"
#include "mdsbl/scenario.hpp"
#include "test_support.hpp"

namespace mdsbl {
namespace {

RadarGeometry origin_radar() { return RadarGeometry::mimo3x3({0.0, 0.0}, kPi / 2); }

NompConfig crossing_nomp(double tau_db = 10.0) {
  NompConfig cfg;
  cfg.tau = db_to_linear(tau_db);
  cfg.region = crossing_region();
  cfg.grid = polar_grid(origin_radar(), cfg.region, 3.75, 8.0 * kPi / 180.0, 88.0 * kPi / 180.0);
  return cfg;
}

TEST(NompStatistic, MatchesSnrOfMatchedAtom) {
  const auto g = origin_radar();
  const CVector psi = atom(Vec2(2.0, 30.0), g);
  const auto env = NoiseEnvelope::identity(135);
  EXPECT_NEAR(nomp_statistic(psi, psi * Complex(3.0, 4.0), 2.0, env), 50.0, 1e-10);
}

TEST(WeightedLeastSquares, ResidualIsWeightedOrthogonal) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const CMatrix atoms = testing_support::random_matrix(rng, 135, 1 + trial % 4);
    const NoiseEnvelope env(testing_support::random_hpd(rng, 135));
    const CVector y = testing_support::random_vector(rng, 135);
    const CVector a = weighted_least_squares(atoms, y, env);
    const CVector r = y - atoms * a;
    const CVector g = atoms.adjoint() * env.apply(r);
    EXPECT_LT(g.norm(), 1e-8 * y.norm());
  }
}

TEST(NompRun, ZeroSnapshotDetectsNothing) {
  const RadarDictionary dict(origin_radar());
  const auto est = nomp_run(CVector::Zero(135), dict, crossing_nomp(), 1.0, NoiseEnvelope::identity(135));
  EXPECT_TRUE(est.locations.empty());
  EXPECT_EQ(est.residual_power, 0.0);
}

TEST(NompRun, HugeThresholdDetectsNothing) {
  Scenario sc = crossing_scenario({}, 10);
  const RadarDictionary dict(sc.sensors[0]);
  auto cfg = crossing_nomp();
  cfg.tau = 1e30;
  const auto obs = synthesize(sc, 0);
  const auto est = nomp_run(obs.sensors[0].y, dict, cfg, 1.0, NoiseEnvelope::identity(135));
  EXPECT_TRUE(est.locations.empty());
}

TEST(NompRun, NoiselessSingleAtom) {
  const auto g = origin_radar();
  const RadarDictionary dict(g);
  const Vec2 truth(-9.3, 37.1);
  const Complex alpha(12.0, -5.0);
  const CVector y = atom(truth, g) * alpha;
  const auto est = nomp_run(y, dict, crossing_nomp(), 1.0, NoiseEnvelope::identity(135));
  ASSERT_EQ(est.locations.size(), 1u);
  EXPECT_LT((est.locations[0] - truth).norm(), 1e-3);
  EXPECT_LT(std::abs(est.amplitudes[0] - alpha), 1e-2);
}

TEST(NompRun, ResidualOrthogonalAndTraceNonIncreasing) {
  const auto cfg = crossing_nomp(7.0);
  for (int t : {-10, -2, 0, 3}) {
    Scenario sc = crossing_scenario({}, t);
    const RadarDictionary dict(sc.sensors[0]);
    for (std::uint64_t r = 0; r < 5; ++r) {
      const auto obs = synthesize(sc, r);
      const auto& y = obs.sensors[0].y;
      const auto env = NoiseEnvelope::identity(135);
      const auto est = nomp_run(y, dict, cfg, 1.0, env);
      if (est.locations.empty()) continue;
      CMatrix atoms(135, static_cast<Eigen::Index>(est.locations.size()));
      for (std::size_t k = 0; k < est.locations.size(); ++k)
        atoms.col(static_cast<Eigen::Index>(k)) = dict.atom(est.locations[k]);
      CVector amps(atoms.cols());
      for (Eigen::Index k = 0; k < amps.size(); ++k) amps[k] = est.amplitudes[static_cast<std::size_t>(k)];
      const CVector resid = y - atoms * amps;
      EXPECT_LT((atoms.adjoint() * resid).norm(), 1e-8 * y.norm());
      EXPECT_NEAR(est.residual_power, resid.squaredNorm(), 1e-9 * y.squaredNorm());
      for (std::size_t i = 1; i < est.residual_trace.size(); ++i)
        EXPECT_LE(est.residual_trace[i], est.residual_trace[i - 1] * (1.0 + 1e-12));
    }
  }
}

TEST(NompRun, SeparatedObjectsFound) {
  Scenario sc = crossing_scenario({}, 20);
  const RadarDictionary dict(sc.sensors[0]);
  const auto est = nomp_run(synthesize(sc, 3).sensors[0].y, dict, crossing_nomp(), 1.0, NoiseEnvelope::identity(135));
  ASSERT_GE(est.locations.size(), 2u);
  for (const auto& obj : sc.truth()) {
    double best = 1e9;
    for (const auto& e : est.locations) best = std::min(best, (e - obj).norm());
    EXPECT_LT(best, 0.5);
  }
}

TEST(NompConfig, InvalidRejected) {
  auto cfg = crossing_nomp();
  cfg.tau = -1.0;
  EXPECT_THROW(cfg.validate(), InvalidInputError);
  cfg = crossing_nomp();
  cfg.refine_rounds = -1;
  EXPECT_THROW(cfg.validate(), InvalidInputError);
}

}  // namespace
}  // namespace mdsbl
