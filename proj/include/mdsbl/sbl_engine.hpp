#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "mdsbl/array_model.hpp"
#include "mdsbl/numerics.hpp"

namespace mdsbl {

/// Observation of one sensor: snapshot, known noise envelope, dictionary.
struct SensorData {
  std::shared_ptr<const ParameterizedDictionary> dictionary;
  CVector y;
  NoiseEnvelope envelope = NoiseEnvelope::identity(1);
};

struct MultiSensorObservation {
  std::vector<SensorData> sensors;

  std::size_t sensor_count() const { return sensors.size(); }
  void validate() const;
};

/// One candidate object. gamma == +inf means inactive.
struct ComponentHypothesis {
  Vec2 location{0.0, 0.0};
  double gamma = std::numeric_limits<double>::infinity();

  bool active() const { return std::isfinite(gamma); }
};

/// Per-sensor leave-one-out statistics of a probe position.
struct ComponentStats {
  std::vector<double> s;
  std::vector<Complex> mu;
  std::vector<double> snr;  // |mu|^2 / s
  double mean_snr = 0.0;

  static ComponentStats from(std::span<const AtomStats> per_sensor);
  std::size_t sensor_count() const { return s.size(); }
};

struct EngineConfig {
  double threshold_chi = 10.0;  // linear scale, >= 1
  std::vector<Vec2> grid;       // candidate grid used to seed new components
  Rect region;                  // surveillance bounds for all position searches
  int max_outer_iters = 50;
  double position_tol = 1e-3;   // [m]
  double objective_tol = 1e-6;  // relative
  int k_max = 20;
  double optimizer_tol = 1e-6;
  int optimizer_max_evals = 500;
  double optimizer_step = 1.0;
  double duplicate_radius = 1e-3;

  void validate() const;
};

/// Current estimates; `components` lists active components only.
struct SblState {
  std::vector<ComponentHypothesis> components;
  std::vector<double> noise_precisions;
};

enum class StepKind { kInit, kRefine, kThresholdPrune, kProposal, kNoiseUpdate };

struct SblEstimate {
  std::vector<ComponentHypothesis> components;
  std::vector<double> noise_precisions;
  std::vector<CVector> amp_mean;       // per sensor, one entry per component
  std::vector<CMatrix> amp_precision;  // per sensor
  std::vector<double> objective_trace; // after every coordinate step
  std::vector<StepKind> trace_steps;   // what produced each trace entry
  bool converged = false;
  int iterations = 0;
};

/// Atoms of a fixed candidate grid, evaluated once per sensor constellation.
struct GridBank {
  std::vector<Vec2> nodes;
  std::vector<CMatrix> atoms;           // per sensor, N x G
  std::vector<RVector> envelope_norms;  // per sensor, psi^H Lambda_v psi

  std::size_t size() const { return nodes.size(); }
};

/// Keeps grid nodes inside `region` that are admissible for every sensor.
GridBank build_grid_bank(const MultiSensorObservation& obs, std::span<const Vec2> grid, const Rect& region);

/// Dictionary matrix of the active components for one sensor, optionally without component `excluded`.
CMatrix active_dictionary(const SblState& state, const SensorData& sensor, std::optional<std::size_t> excluded = {});

std::vector<FactorCache> leave_one_out_caches(const SblState& state, const MultiSensorObservation& obs,
                                              std::optional<std::size_t> excluded);

/// Throws DegenerateStatisticsError if any sensor's statistics are undefined at `theta`.
ComponentStats component_stats(const Vec2& theta, std::span<const FactorCache> caches,
                               const MultiSensorObservation& obs);

/// Change of the objective when a component with these statistics is added
/// with precision `gamma`.
double partial_likelihood(const ComponentStats& stats, double gamma);

/// Numerator polynomial of d(partial_likelihood)/d(gamma) in the scaled
/// variable x = gamma * scale; its degree is 2L - 1.
RealPolynomial fixed_point_polynomial(const ComponentStats& stats, double scale = 1.0);

/// Stationary gamma maximizing partial_likelihood, or +inf if none improves on
/// removing the component.
double optimal_gamma(const ComponentStats& stats);

/// optimal_gamma gated by the mean component SNR threshold chi.
double update_gamma(const ComponentStats& stats, double chi);

/// Continuous refinement of component k. Maximizes the component SNR for a
/// single sensor and the partial likelihood at fixed gamma otherwise.
Vec2 update_theta(std::size_t k, const SblState& state, const MultiSensorObservation& obs,
                  std::span<const FactorCache> caches, const EngineConfig& config);

struct Proposal {
  Vec2 location{0.0, 0.0};
  ComponentStats stats;
  Vec2 grid_location{0.0, 0.0};
  double grid_value = 0.0;     // mean SNR at the best grid node
  double refined_value = 0.0;  // mean SNR after continuous refinement
};

/// Grid search of the mean component SNR followed by continuous refinement.
Proposal propose_new_component(const SblState& state, const MultiSensorObservation& obs,
                               std::span<const FactorCache> caches, const EngineConfig& config,
                               const GridBank& bank);

std::vector<double> initial_noise_precisions(const MultiSensorObservation& obs);

/// EM update of every sensor's noise precision.
std::vector<double> em_noise_update(const SblState& state, const MultiSensorObservation& obs);

struct PosteriorAmplitudes {
  std::vector<CVector> mean;
  std::vector<CMatrix> precision;
};

PosteriorAmplitudes posterior_amplitudes(const SblState& state, const MultiSensorObservation& obs);

/// Log marginal likelihood (constants dropped) from the dense N x N covariance.
double direct_objective(const SblState& state, const MultiSensorObservation& obs);

/// Same quantity through the matrix inversion lemma; O(N K^2) per sensor.
double objective(const SblState& state, const MultiSensorObservation& obs);

/// Full coordinate-ascent solver.
SblEstimate run(const MultiSensorObservation& obs, const EngineConfig& config, const GridBank* bank = nullptr);

}  // namespace mdsbl
