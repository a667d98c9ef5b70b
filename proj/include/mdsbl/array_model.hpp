#pragma once

#include <memory>

#include "mdsbl/common.hpp"

namespace mdsbl {

/// A dictionary whose atoms are parameterized by a continuous 2-D position.
///
/// Any sensor modality can be fused by the engine as long as it can map a
/// position to a fixed-length complex response.
class ParameterizedDictionary {
 public:
  virtual ~ParameterizedDictionary() = default;

  /// Number of samples N of one observation.
  virtual Eigen::Index size() const = 0;

  /// Response to a unit-amplitude source at `position`.
  virtual CVector atom(const Vec2& position) const = 0;

  /// Whether `atom(position)` is defined and numerically meaningful.
  virtual bool admissible(const Vec2& position) const = 0;
};

/// One co-located MIMO radar: virtual array plus frequency sampling plus pose.
struct RadarGeometry {
  Vec2 sensor_position{0.0, 0.0};
  double broadside = kPi / 2;      // radians, counterclockwise from +x
  RVector element_offsets;         // virtual element positions along the array axis [m]
  RVector freq_grid;               // baseband frequencies [Hz]
  double carrier_wavelength = 0.3; // [m]
  double freq_spacing = 0.0;       // [Hz]
  bool path_loss_enabled = false;
  double speed_of_light = 299792458.0;
  double min_distance = 0.5;       // closer positions are rejected as degenerate

  Eigen::Index num_elements() const { return element_offsets.size(); }
  Eigen::Index num_freqs() const { return freq_grid.size(); }
  Eigen::Index num_samples() const { return num_elements() * num_freqs(); }

  /// 3x3 MIMO radar (Tx spaced lambda/2, Rx spaced lambda), 15 frequencies over 20 MHz.
  static RadarGeometry mimo3x3(const Vec2& position, double broadside, bool path_loss = false,
                               double carrier_wavelength = 0.3);

  /// Radar whose broadside points from `position` towards `target`.
  static RadarGeometry mimo3x3_aimed(const Vec2& position, const Vec2& target, bool path_loss = false,
                                     double carrier_wavelength = 0.3);

  void validate() const;
};

/// Equally spaced baseband grid, centered for odd counts and shifted by half a
/// bin towards negative frequencies for even counts.
RVector centered_frequency_grid(int count, double spacing);

/// Virtual array of a co-located MIMO system: all pairwise sums of Tx and Rx
/// positions, Rx-major order.
RVector mimo_virtual_offsets(const RVector& tx_positions, const RVector& rx_positions);

struct SteeringParams {
  double angle = 0.0;     // relative to broadside, (-pi, pi]
  double distance = 0.0;  // meters
};

double wrap_angle(double angle);

SteeringParams to_steering_params(const Vec2& position, const RadarGeometry& geom);

/// exp(-i 2 pi sin(angle) p / lambda_c) for every virtual element.
CVector angle_steering(double angle, const RadarGeometry& geom);

/// Range response including optional 1/d^2 path loss.
CVector range_steering(double distance, const RadarGeometry& geom);

/// Path-loss amplitude factor lambda_c / ((4 pi)^{3/2} d^2), or 1 if disabled.
double path_gain(double distance, const RadarGeometry& geom);

/// Kronecker product of angle and range responses, scaled by 1/sqrt(N).
CVector atom(const Vec2& position, const RadarGeometry& geom);
CVector atom(const SteeringParams& params, const RadarGeometry& geom);

class RadarDictionary final : public ParameterizedDictionary {
 public:
  explicit RadarDictionary(RadarGeometry geom);

  Eigen::Index size() const override { return geom_.num_samples(); }
  CVector atom(const Vec2& position) const override { return mdsbl::atom(position, geom_); }
  bool admissible(const Vec2& position) const override;

  const RadarGeometry& geometry() const { return geom_; }

 private:
  RadarGeometry geom_;
};

}  // namespace mdsbl
