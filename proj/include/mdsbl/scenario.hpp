#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "mdsbl/array_model.hpp"
#include "mdsbl/numerics.hpp"
#include "mdsbl/sbl_engine.hpp"

namespace mdsbl {

struct ObjectSpec {
  Vec2 position{0.0, 0.0};
  double snr_db = 30.0;
  /// If set, the SNR holds for an object at this distance from each sensor
  /// (same bearing); path loss then scales it to the true distance.
  std::optional<double> reference_distance;
};

struct Scenario {
  std::vector<RadarGeometry> sensors;
  std::vector<ObjectSpec> objects;
  std::vector<double> noise_precision;   // true lambda per sensor; empty means 1
  std::vector<NoiseEnvelope> envelopes;  // empty means identity
  std::uint64_t seed = 0;
  bool noiseless = false;

  double precision_of(std::size_t sensor) const;
  NoiseEnvelope envelope_of(std::size_t sensor) const;
  std::vector<Vec2> truth() const;
  void validate() const;
};

/// |alpha| such that lambda * psi^H Lambda_v psi * |alpha|^2 = 10^(snr_db / 10).
/// Throws DomainError if the atom has zero energy.
double amplitude_for_snr(const ObjectSpec& obj, const RadarGeometry& geom, double noise_precision = 1.0,
                         const NoiseEnvelope* envelope = nullptr);

/// Independent 64-bit seed for one (seed, run, sensor, stream) tuple.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t run_index, std::uint64_t sensor, std::uint64_t stream);

/// Deterministic in (scenario.seed, run_index); sensors use disjoint streams.
MultiSensorObservation synthesize(const Scenario& scenario, std::uint64_t run_index);

struct CrossingTracksSpec {
  double crossing_angle = 36.0 * kPi / 180.0;
  Vec2 start_a{0.0, 20.0};
  Vec2 start_b{0.3, 20.4};
  /// Per-object speed [m/step]; 0 selects 1 / (2 sin(angle / 2)) so the
  /// objects close at 1 m/step.
  double speed = 0.0;
  int t_min = -30;
  int t_max = 30;

  double effective_speed() const;
};

/// Positions of both objects at step t. Both tracks run towards +x, one
/// descending and one ascending, symmetric about the x axis direction.
std::pair<Vec2, Vec2> crossing_tracks(const CrossingTracksSpec& spec, int t);

enum class MultiRadarCase { kSingleObject, kFourObjectPathLoss };

/// Radar sites in the order they are added as L grows.
std::vector<Vec2> multi_radar_sites();

/// Built-in multi-radar scene with the first `sensor_count` radars.
Scenario multi_radar_scenario(MultiRadarCase which, int sensor_count, double carrier_wavelength = 0.3);

/// Single radar at the origin facing +y with two 30 dB objects on crossing tracks at step t.
Scenario crossing_scenario(const CrossingTracksSpec& spec, int t, double snr_db = 30.0,
                           double carrier_wavelength = 0.3);

/// Surveillance rectangle used with each built-in scene.
Rect crossing_region();
Rect multi_radar_region(MultiRadarCase which);

/// Nodes at ranges range_step, 2 range_step, ... and bearings (relative to
/// broadside) -max_angle..max_angle in angle_step, kept if inside `region`.
std::vector<Vec2> polar_grid(const RadarGeometry& geom, const Rect& region, double range_step, double angle_step,
                             double max_angle);

/// Regular lattice over `region` with spacing `step`, including both edges.
std::vector<Vec2> xy_grid(const Rect& region, double step);

}  // namespace mdsbl
