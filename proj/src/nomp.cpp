#include "mdsbl/nomp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mdsbl/diagnostics.hpp"

namespace mdsbl {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

CMatrix atoms_at(const std::vector<Vec2>& locations, const ParameterizedDictionary& dict) {
  CMatrix out(dict.size(), static_cast<Eigen::Index>(locations.size()));
  for (std::size_t i = 0; i < locations.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = dict.atom(locations[i]);
  return out;
}

}  // namespace

void NompConfig::validate() const {
  if (!(tau > 0.0)) throw InvalidInputError("tau must be positive");
  if (grid.empty()) throw InvalidInputError("candidate grid is empty");
  if (!region.valid()) throw InvalidInputError("surveillance region is empty");
  if (refine_rounds < 0) throw InvalidInputError("refine_rounds must be >= 0");
  if (max_components < 0) throw InvalidInputError("max_components must be >= 0");
}

double nomp_statistic(const CVector& atom, const CVector& weighted_residual, double noise_precision,
                      const NoiseEnvelope& envelope) {
  const double norm = envelope.quad(atom);
  if (!(norm > 0.0)) return -kInf;
  return noise_precision * std::norm(atom.dot(weighted_residual)) / norm;
}

CVector weighted_least_squares(const CMatrix& atoms, const CVector& y, const NoiseEnvelope& envelope) {
  const CMatrix weighted = envelope.apply(atoms);
  CMatrix gram = atoms.adjoint() * weighted;
  gram = 0.5 * (gram + gram.adjoint()).eval();
  const auto factor = cholesky_hermitian(gram);
  const CVector rhs = weighted.adjoint() * y;
  const CVector z = factor.lower.triangularView<Eigen::Lower>().solve(rhs);
  return factor.lower.adjoint().triangularView<Eigen::Upper>().solve(z);
}

NompEstimate nomp_run(const CVector& y, const ParameterizedDictionary& dictionary, const NompConfig& config,
                      double noise_precision, const NoiseEnvelope& envelope, const GridBank* bank) {
  config.validate();
  if (y.size() != dictionary.size() || envelope.size() != y.size())
    throw InvalidInputError("snapshot, envelope and dictionary sizes disagree");
  if (!(noise_precision > 0.0)) throw InvalidInputError("noise precision must be positive");

  GridBank local_bank;
  if (bank == nullptr) {
    MultiSensorObservation obs;
    // Non-owning handle; the bank does not outlive this call.
    obs.sensors.push_back({std::shared_ptr<const ParameterizedDictionary>(&dictionary, [](auto*) {}), y, envelope});
    local_bank = build_grid_bank(obs, config.grid, config.region);
    bank = &local_bank;
  }

  auto refine = [&](const Vec2& init, const CVector& residual) {
    const CVector weighted = envelope.apply(residual);
    BoundedMaxProblem problem;
    problem.objective = [&](const Vec2& p) {
      if (!dictionary.admissible(p)) return -kInf;
      return nomp_statistic(dictionary.atom(p), weighted, noise_precision, envelope);
    };
    problem.bounds = config.region;
    problem.init = config.region.clamp(init);
    problem.tolerance = config.optimizer_tol;
    problem.max_evals = config.optimizer_max_evals;
    problem.initial_step = config.optimizer_step;
    try {
      return maximize_2d(problem);
    } catch (const InvalidInputError&) {
      return MaxResult{init, -kInf, 0};
    }
  };

  NompEstimate est;
  std::vector<Complex> amps;
  CVector residual = y;
  while (static_cast<int>(est.locations.size()) < config.max_components && bank->size() > 0) {
    const CVector weighted = envelope.apply(residual);
    const RVector stat =
        noise_precision * (bank->atoms[0].adjoint() * weighted).array().abs2().matrix().cwiseQuotient(bank->envelope_norms[0]);
    Eigen::Index best = 0;
    stat.maxCoeff(&best);
    const auto found = refine(bank->nodes[static_cast<std::size_t>(best)], residual);
    if (!(found.value > config.tau)) break;
    const bool duplicate = std::any_of(est.locations.begin(), est.locations.end(), [&](const Vec2& p) {
      return (p - found.argmax).norm() < config.duplicate_radius;
    });
    if (duplicate) {
      diagnostic("nomp proposal coincides with an accepted component, stopping");
      break;
    }
    est.locations.push_back(found.argmax);
    {
      const CVector psi = dictionary.atom(found.argmax);
      amps.push_back(psi.dot(weighted) / envelope.quad(psi));
    }

    // Cyclic refinement with the other gains held fixed: each step is an exact
    // coordinate update of (theta_k, a_k), so the residual never grows.
    for (int round = 0; round < config.refine_rounds; ++round) {
      for (std::size_t k = 0; k < est.locations.size(); ++k) {
        CVector others = y;
        for (std::size_t j = 0; j < est.locations.size(); ++j)
          if (j != k) others -= dictionary.atom(est.locations[j]) * amps[j];
        const auto moved = refine(est.locations[k], others);
        const CVector psi_old = dictionary.atom(est.locations[k]);
        const CVector w_others = envelope.apply(others);
        const double old_stat = nomp_statistic(psi_old, w_others, noise_precision, envelope);
        if (moved.value > old_stat) est.locations[k] = moved.argmax;
        const CVector psi = dictionary.atom(est.locations[k]);
        amps[k] = psi.dot(w_others) / envelope.quad(psi);
      }
    }
    const CMatrix atoms = atoms_at(est.locations, dictionary);
    const CVector refit = weighted_least_squares(atoms, y, envelope);
    amps.assign(refit.data(), refit.data() + refit.size());
    residual = y - atoms * refit;
    est.residual_trace.push_back(envelope.quad(residual));
  }

  est.amplitudes = amps;
  est.residual_power = envelope.quad(residual);
  return est;
}

}  // namespace mdsbl
