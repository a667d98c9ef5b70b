#include "mdsbl/sbl_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mdsbl/diagnostics.hpp"

namespace mdsbl {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct SensorPosterior {
  CMatrix psi;        // N x K
  CMatrix precision;  // Psi^H lambda Lambda_v Psi + Gamma
  CMatrix chol;       // lower factor of precision
  CVector projection; // Psi^H lambda Lambda_v y
};

SensorPosterior sensor_posterior(const SblState& state, const SensorData& sensor, double lambda) {
  SensorPosterior out;
  out.psi = active_dictionary(state, sensor);
  const auto k = out.psi.cols();
  const CMatrix weighted = lambda * sensor.envelope.apply(out.psi);
  out.precision = out.psi.adjoint() * weighted;
  for (Eigen::Index i = 0; i < k; ++i) out.precision(i, i) += state.components[static_cast<std::size_t>(i)].gamma;
  out.precision = 0.5 * (out.precision + out.precision.adjoint()).eval();
  out.projection = weighted.adjoint() * sensor.y;
  if (k > 0) {
    auto factor = cholesky_hermitian(out.precision);
    if (factor.jitter > 0.0) diagnostic("posterior precision needed jitter " + std::to_string(factor.jitter));
    out.chol = std::move(factor.lower);
  } else {
    out.chol.resize(0, 0);
  }
  return out;
}

CVector chol_solve(const CMatrix& lower, const CVector& b) {
  const CVector z = lower.triangularView<Eigen::Lower>().solve(b);
  return lower.adjoint().triangularView<Eigen::Upper>().solve(z);
}

/// Statistics of every sensor at `theta`, or nullopt if any is undefined.
std::optional<ComponentStats> probe(const Vec2& theta, std::span<const FactorCache> caches,
                                    const MultiSensorObservation& obs) {
  std::vector<AtomStats> per_sensor;
  per_sensor.reserve(obs.sensor_count());
  for (std::size_t l = 0; l < obs.sensor_count(); ++l) {
    const auto& dict = *obs.sensors[l].dictionary;
    if (!dict.admissible(theta)) return std::nullopt;
    try {
      per_sensor.push_back(stats_from_cache(caches[l], dict.atom(theta)));
    } catch (const DegenerateStatisticsError&) {
      return std::nullopt;
    }
  }
  return ComponentStats::from(per_sensor);
}

BoundedMaxProblem make_problem(const EngineConfig& config, const Vec2& init,
                               std::function<double(const Vec2&)> objective) {
  BoundedMaxProblem problem;
  problem.objective = std::move(objective);
  problem.bounds = config.region;
  problem.init = config.region.clamp(init);
  problem.tolerance = config.optimizer_tol;
  problem.max_evals = config.optimizer_max_evals;
  problem.initial_step = config.optimizer_step;
  return problem;
}

}  // namespace

void MultiSensorObservation::validate() const {
  if (sensors.empty()) throw InvalidInputError("observation needs at least one sensor");
  for (const auto& s : sensors) {
    if (!s.dictionary) throw InvalidInputError("sensor without dictionary");
    if (s.y.size() != s.dictionary->size() || s.envelope.size() != s.y.size())
      throw InvalidInputError("snapshot, envelope and dictionary sizes disagree");
    if (!s.y.allFinite()) throw InvalidInputError("snapshot contains non-finite samples");
  }
}

void EngineConfig::validate() const {
  if (!(threshold_chi >= 1.0)) throw InvalidInputError("threshold chi must be >= 1 (linear)");
  if (grid.empty()) throw InvalidInputError("candidate grid is empty");
  if (k_max < 1) throw InvalidInputError("k_max must be >= 1");
  if (max_outer_iters < 1) throw InvalidInputError("max_outer_iters must be >= 1");
  if (!region.valid()) throw InvalidInputError("surveillance region is empty");
}

ComponentStats ComponentStats::from(std::span<const AtomStats> per_sensor) {
  ComponentStats out;
  for (const auto& a : per_sensor) {
    out.s.push_back(a.s);
    out.mu.push_back(a.mu);
    out.snr.push_back(a.snr());
  }
  double sum = 0.0;
  for (double q : out.snr) sum += q;
  out.mean_snr = out.snr.empty() ? 0.0 : sum / static_cast<double>(out.snr.size());
  return out;
}

GridBank build_grid_bank(const MultiSensorObservation& obs, std::span<const Vec2> grid, const Rect& region) {
  GridBank bank;
  for (const auto& node : grid) {
    if (!region.contains(node)) continue;
    const bool ok = std::all_of(obs.sensors.begin(), obs.sensors.end(),
                                [&](const SensorData& s) { return s.dictionary->admissible(node); });
    if (ok) bank.nodes.push_back(node);
  }
  const auto g = static_cast<Eigen::Index>(bank.nodes.size());
  for (const auto& sensor : obs.sensors) {
    CMatrix atoms(sensor.dictionary->size(), g);
    for (Eigen::Index j = 0; j < g; ++j) atoms.col(j) = sensor.dictionary->atom(bank.nodes[static_cast<std::size_t>(j)]);
    bank.envelope_norms.push_back(sensor.envelope.quad_columns(atoms));
    bank.atoms.push_back(std::move(atoms));
  }
  return bank;
}

CMatrix active_dictionary(const SblState& state, const SensorData& sensor, std::optional<std::size_t> excluded) {
  const std::size_t k = state.components.size();
  const std::size_t cols = k - (excluded && *excluded < k ? 1 : 0);
  CMatrix psi(sensor.dictionary->size(), static_cast<Eigen::Index>(cols));
  Eigen::Index c = 0;
  for (std::size_t i = 0; i < k; ++i) {
    if (excluded && i == *excluded) continue;
    psi.col(c++) = sensor.dictionary->atom(state.components[i].location);
  }
  return psi;
}

std::vector<FactorCache> leave_one_out_caches(const SblState& state, const MultiSensorObservation& obs,
                                              std::optional<std::size_t> excluded) {
  std::vector<double> gammas;
  for (std::size_t i = 0; i < state.components.size(); ++i)
    if (!(excluded && i == *excluded)) gammas.push_back(state.components[i].gamma);
  std::vector<FactorCache> caches;
  caches.reserve(obs.sensor_count());
  for (std::size_t l = 0; l < obs.sensor_count(); ++l) {
    const auto& sensor = obs.sensors[l];
    caches.push_back(build_factor_cache(active_dictionary(state, sensor, excluded), gammas, sensor.envelope,
                                        state.noise_precisions.at(l), sensor.y));
  }
  return caches;
}

ComponentStats component_stats(const Vec2& theta, std::span<const FactorCache> caches,
                               const MultiSensorObservation& obs) {
  if (caches.size() != obs.sensor_count()) throw InvalidInputError("one factor cache per sensor required");
  auto stats = probe(theta, caches, obs);
  if (!stats) throw DegenerateStatisticsError("component statistics undefined at probe position");
  return *std::move(stats);
}

double partial_likelihood(const ComponentStats& stats, double gamma) {
  double acc = 0.0;
  for (std::size_t l = 0; l < stats.sensor_count(); ++l) {
    const double gs = gamma * stats.s[l];
    acc += stats.snr[l] / (1.0 + gs) - std::log1p(1.0 / gs);
  }
  return acc;
}

RealPolynomial fixed_point_polynomial(const ComponentStats& stats, double scale) {
  const std::size_t n = stats.sensor_count();
  RealPolynomial total(std::vector<double>{0.0});
  for (std::size_t l = 0; l < n; ++l) {
    const double excess = std::norm(stats.mu[l]) - stats.s[l];
    RealPolynomial term(std::vector<double>{1.0, -excess / scale});
    for (std::size_t j = 0; j < n; ++j) {
      if (j == l) continue;
      const double sj = stats.s[j] / scale;
      term = term * RealPolynomial(std::vector<double>{1.0, 2.0 * sj, sj * sj});
    }
    total = total + term;
  }
  return total;
}

double optimal_gamma(const ComponentStats& stats) {
  const std::size_t n = stats.sensor_count();
  if (n == 0) return kInf;
  double scale = 0.0;
  for (double s : stats.s) {
    if (!(s > 0.0) || !std::isfinite(s)) return kInf;
    scale += s / static_cast<double>(n);
  }

  std::vector<double> roots;
  try {
    roots = positive_real_roots(fixed_point_polynomial(stats, scale));
  } catch (const Error& e) {
    diagnostic(std::string("gamma root finding failed, deactivating: ") + e.what());
    return kInf;
  }

  // Removing the component (gamma = inf) contributes 0; a root must beat it.
  // Roots are ascending, so near-ties resolve to the smallest gamma.
  double best_gamma = kInf;
  double best_value = 0.0;
  for (double x : roots) {
    const double gamma = x / scale;
    const double value = partial_likelihood(stats, gamma);
    if (value > best_value + 1e-12 * std::max(1.0, std::abs(best_value))) {
      best_value = value;
      best_gamma = gamma;
    }
  }
  return best_gamma;
}

double update_gamma(const ComponentStats& stats, double chi) {
  if (!(stats.mean_snr > chi)) return kInf;
  return optimal_gamma(stats);
}

Vec2 update_theta(std::size_t k, const SblState& state, const MultiSensorObservation& obs,
                  std::span<const FactorCache> caches, const EngineConfig& config) {
  const auto& comp = state.components.at(k);
  const bool single = obs.sensor_count() == 1;
  const bool use_likelihood = !single && comp.active();
  auto objective = [&](const Vec2& p) {
    const auto stats = probe(p, caches, obs);
    if (!stats) return -kInf;
    return use_likelihood ? partial_likelihood(*stats, comp.gamma) : stats->mean_snr;
  };
  try {
    return maximize_2d(make_problem(config, comp.location, objective)).argmax;
  } catch (const InvalidInputError&) {
    diagnostic("position refinement failed, keeping previous estimate");
    return comp.location;
  }
}

Proposal propose_new_component(const SblState& state, const MultiSensorObservation& obs,
                               std::span<const FactorCache> caches, const EngineConfig& config,
                               const GridBank& bank) {
  if (bank.size() == 0) throw InvalidInputError("no admissible grid node inside the surveillance region");
  const auto g = static_cast<Eigen::Index>(bank.size());
  RVector mean_snr = RVector::Zero(g);
  RVector s;
  CVector mu;
  for (std::size_t l = 0; l < obs.sensor_count(); ++l) {
    stats_from_cache_batch(caches[l], bank.atoms[l], bank.envelope_norms[l], s, mu);
    mean_snr.array() += mu.array().abs2() / s.array();
  }
  mean_snr /= static_cast<double>(obs.sensor_count());
  Eigen::Index best = 0;
  mean_snr.maxCoeff(&best);

  Proposal out;
  out.grid_location = bank.nodes[static_cast<std::size_t>(best)];
  out.grid_value = mean_snr[best];
  out.location = out.grid_location;
  (void)state;

  auto objective = [&](const Vec2& p) {
    const auto stats = probe(p, caches, obs);
    return stats ? stats->mean_snr : -kInf;
  };
  try {
    const auto res = maximize_2d(make_problem(config, out.grid_location, objective));
    out.location = res.argmax;
    out.refined_value = res.value;
  } catch (const InvalidInputError&) {
    out.refined_value = out.grid_value;
  }
  out.stats = component_stats(out.location, caches, obs);
  return out;
}

std::vector<double> initial_noise_precisions(const MultiSensorObservation& obs) {
  std::vector<double> out;
  for (const auto& sensor : obs.sensors) {
    const double energy = sensor.envelope.quad(sensor.y);
    const auto n = static_cast<double>(sensor.y.size());
    out.push_back(energy > 0.0 ? 10.0 * n / energy : 1.0);
  }
  return out;
}

std::vector<double> em_noise_update(const SblState& state, const MultiSensorObservation& obs) {
  std::vector<double> out;
  for (std::size_t l = 0; l < obs.sensor_count(); ++l) {
    const auto& sensor = obs.sensors[l];
    const double lambda = state.noise_precisions.at(l);
    const auto post = sensor_posterior(state, sensor, lambda);
    double denom = 0.0;
    if (post.psi.cols() == 0) {
      denom = sensor.envelope.quad(sensor.y);
    } else {
      const CVector mean = chol_solve(post.chol, post.projection);
      const CVector resid = sensor.y - post.psi * mean;
      const CMatrix gram = post.psi.adjoint() * sensor.envelope.apply(post.psi);
      const CMatrix z = post.chol.triangularView<Eigen::Lower>().solve(gram);
      const CMatrix x = post.chol.adjoint().triangularView<Eigen::Upper>().solve(z);
      denom = sensor.envelope.quad(resid) + x.trace().real();
    }
    const auto n = static_cast<double>(sensor.y.size());
    out.push_back(denom > 0.0 && std::isfinite(denom) ? n / denom : lambda);
  }
  return out;
}

PosteriorAmplitudes posterior_amplitudes(const SblState& state, const MultiSensorObservation& obs) {
  PosteriorAmplitudes out;
  for (std::size_t l = 0; l < obs.sensor_count(); ++l) {
    const auto post = sensor_posterior(state, obs.sensors[l], state.noise_precisions.at(l));
    out.mean.push_back(post.psi.cols() > 0 ? chol_solve(post.chol, post.projection) : CVector(0));
    out.precision.push_back(post.precision);
  }
  return out;
}

double direct_objective(const SblState& state, const MultiSensorObservation& obs) {
  double total = 0.0;
  for (std::size_t l = 0; l < obs.sensor_count(); ++l) {
    const auto& sensor = obs.sensors[l];
    const double lambda = state.noise_precisions.at(l);
    const CMatrix psi = active_dictionary(state, sensor);
    const auto n = sensor.y.size();
    CMatrix cov = sensor.envelope.matrix().inverse() / lambda;
    for (Eigen::Index k = 0; k < psi.cols(); ++k) {
      const double gamma = state.components[static_cast<std::size_t>(k)].gamma;
      if (!std::isfinite(gamma)) throw InvalidInputError("direct_objective: inactive component in state");
      cov.noalias() += (1.0 / gamma) * psi.col(k) * psi.col(k).adjoint();
    }
    cov = 0.5 * (cov + cov.adjoint()).eval();
    Eigen::LLT<CMatrix> llt(cov);
    if (llt.info() != Eigen::Success) throw NumericalError("direct_objective: covariance not positive definite");
    const CMatrix lower = llt.matrixL();
    const double log_det = 2.0 * lower.diagonal().real().array().log().sum();
    const CVector z = lower.triangularView<Eigen::Lower>().solve(sensor.y);
    total += -z.squaredNorm() - log_det;
    (void)n;
  }
  return total;
}

double objective(const SblState& state, const MultiSensorObservation& obs) {
  double total = 0.0;
  for (std::size_t l = 0; l < obs.sensor_count(); ++l) {
    const auto& sensor = obs.sensors[l];
    const double lambda = state.noise_precisions.at(l);
    const auto n = static_cast<double>(sensor.y.size());
    double value = -lambda * sensor.envelope.quad(sensor.y) + n * std::log(lambda) + sensor.envelope.log_det();
    if (!state.components.empty()) {
      const auto post = sensor_posterior(state, sensor, lambda);
      const CVector z = post.chol.triangularView<Eigen::Lower>().solve(post.projection);
      value += z.squaredNorm() - 2.0 * post.chol.diagonal().real().array().log().sum();
      for (const auto& c : state.components) value += std::log(c.gamma);
    }
    total += value;
  }
  return total;
}

SblEstimate run(const MultiSensorObservation& obs, const EngineConfig& config, const GridBank* bank) {
  obs.validate();
  config.validate();
  GridBank local_bank;
  if (bank == nullptr) {
    local_bank = build_grid_bank(obs, config.grid, config.region);
    bank = &local_bank;
  }

  SblState state;
  state.noise_precisions = initial_noise_precisions(obs);

  SblEstimate est;
  auto record = [&](StepKind kind) {
    est.objective_trace.push_back(objective(state, obs));
    est.trace_steps.push_back(kind);
  };
  record(StepKind::kInit);

  double previous = est.objective_trace.back();
  for (int iter = 1; iter <= config.max_outer_iters; ++iter) {
    est.iterations = iter;
    bool set_changed = false;
    double max_move = 0.0;

    for (std::size_t k = 0; k < state.components.size();) {
      const auto caches = leave_one_out_caches(state, obs, k);
      const Vec2 old = state.components[k].location;
      const Vec2 moved = update_theta(k, state, obs, caches, config);
      double gamma = kInf;
      double unthresholded = kInf;
      try {
        const auto stats = component_stats(moved, caches, obs);
        unthresholded = optimal_gamma(stats);
        gamma = stats.mean_snr > config.threshold_chi ? unthresholded : kInf;
      } catch (const DegenerateStatisticsError&) {
        diagnostic("degenerate statistics during refinement, deactivating component");
      }
      if (std::isfinite(gamma)) {
        state.components[k] = {moved, gamma};
        max_move = std::max(max_move, (moved - old).norm());
        ++k;
        record(StepKind::kRefine);
      } else {
        state.components.erase(state.components.begin() + static_cast<std::ptrdiff_t>(k));
        set_changed = true;
        record(std::isfinite(unthresholded) ? StepKind::kThresholdPrune : StepKind::kRefine);
      }
    }

    if (static_cast<int>(state.components.size()) < config.k_max) {
      const auto caches = leave_one_out_caches(state, obs, std::nullopt);
      try {
        const auto proposal = propose_new_component(state, obs, caches, config, *bank);
        const double gamma = update_gamma(proposal.stats, config.threshold_chi);
        const bool duplicate = std::any_of(state.components.begin(), state.components.end(), [&](const auto& c) {
          return (c.location - proposal.location).norm() < config.duplicate_radius;
        });
        if (std::isfinite(gamma) && !duplicate) {
          state.components.push_back({proposal.location, gamma});
          set_changed = true;
          record(StepKind::kProposal);
        }
      } catch (const DegenerateStatisticsError&) {
        diagnostic("degenerate statistics at proposed position, skipping proposal");
      }
    }

    state.noise_precisions = em_noise_update(state, obs);
    record(StepKind::kNoiseUpdate);

    const double current = est.objective_trace.back();
    const bool objective_settled = std::abs(current - previous) <= config.objective_tol * std::max(1.0, std::abs(current));
    previous = current;
    if (!set_changed && max_move < config.position_tol && objective_settled) {
      est.converged = true;
      break;
    }
  }

  // The last noise update can push a marginal component below the threshold.
  for (std::size_t k = 0; k < state.components.size();) {
    const auto caches = leave_one_out_caches(state, obs, k);
    bool keep = false;
    try {
      keep = component_stats(state.components[k].location, caches, obs).mean_snr > config.threshold_chi;
    } catch (const DegenerateStatisticsError&) {
    }
    if (keep) {
      ++k;
    } else {
      state.components.erase(state.components.begin() + static_cast<std::ptrdiff_t>(k));
      record(StepKind::kThresholdPrune);
    }
  }

  const auto amps = posterior_amplitudes(state, obs);
  est.components = state.components;
  est.noise_precisions = state.noise_precisions;
  est.amp_mean = amps.mean;
  est.amp_precision = amps.precision;
  return est;
}

}  // namespace mdsbl
