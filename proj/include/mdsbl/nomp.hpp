#pragma once

#include <vector>

#include "mdsbl/array_model.hpp"
#include "mdsbl/numerics.hpp"
#include "mdsbl/sbl_engine.hpp"

namespace mdsbl {

struct NompConfig {
  double tau = 10.0;  // linear detection threshold on the whitened statistic
  std::vector<Vec2> grid;
  Rect region;
  int refine_rounds = 3;
  int max_components = 20;
  double optimizer_tol = 1e-6;
  int optimizer_max_evals = 500;
  double optimizer_step = 1.0;
  double duplicate_radius = 1e-3;

  void validate() const;
};

struct NompEstimate {
  std::vector<Vec2> locations;
  std::vector<Complex> amplitudes;
  double residual_power = 0.0;          // r^H Lambda_v r
  std::vector<double> residual_trace;   // residual power after each acceptance
};

/// lambda |psi^H Lambda_v r|^2 / (psi^H Lambda_v psi): the single-sensor
/// component SNR of an empty model, so tau and chi share one scale.
double nomp_statistic(const CVector& atom, const CVector& weighted_residual, double noise_precision,
                      const NoiseEnvelope& envelope);

/// Weighted least-squares amplitudes argmin_a (y - Psi a)^H Lambda_v (y - Psi a).
CVector weighted_least_squares(const CMatrix& atoms, const CVector& y, const NoiseEnvelope& envelope);

/// Greedy detection with continuous refinement and cyclic re-refinement.
/// `bank`, if given, must hold the grid atoms of this single sensor.
NompEstimate nomp_run(const CVector& y, const ParameterizedDictionary& dictionary, const NompConfig& config,
                      double noise_precision, const NoiseEnvelope& envelope, const GridBank* bank = nullptr);

}  // namespace mdsbl
