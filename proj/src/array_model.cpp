#include "mdsbl/array_model.hpp"

#include <cmath>

namespace mdsbl {

namespace {

constexpr double kBandwidth = 20e6;
constexpr int kNumFreqs = 15;

}  // namespace

RVector centered_frequency_grid(int count, double spacing) {
  if (count < 1) throw InvalidInputError("frequency grid needs at least one sample");
  RVector f(count);
  // odd: (-(n-1)/2 .. (n-1)/2) * df; even: (-n/2 .. n/2-1) * df
  const double first = (count % 2 == 1) ? -(count - 1) / 2.0 : -count / 2.0;
  for (int i = 0; i < count; ++i) f[i] = (first + i) * spacing;
  return f;
}

RVector mimo_virtual_offsets(const RVector& tx_positions, const RVector& rx_positions) {
  RVector p(tx_positions.size() * rx_positions.size());
  Eigen::Index idx = 0;
  for (Eigen::Index r = 0; r < rx_positions.size(); ++r)
    for (Eigen::Index t = 0; t < tx_positions.size(); ++t) p[idx++] = tx_positions[t] + rx_positions[r];
  return p;
}

RadarGeometry RadarGeometry::mimo3x3(const Vec2& position, double broadside, bool path_loss,
                                     double carrier_wavelength) {
  RadarGeometry g;
  g.sensor_position = position;
  g.broadside = broadside;
  g.carrier_wavelength = carrier_wavelength;
  const double lc = carrier_wavelength;
  RVector tx(3), rx(3);
  tx << -0.5 * lc, 0.0, 0.5 * lc;
  rx << -lc, 0.0, lc;
  g.element_offsets = mimo_virtual_offsets(tx, rx);
  g.freq_spacing = kBandwidth / (kNumFreqs - 1);
  g.freq_grid = centered_frequency_grid(kNumFreqs, g.freq_spacing);
  g.path_loss_enabled = path_loss;
  return g;
}

RadarGeometry RadarGeometry::mimo3x3_aimed(const Vec2& position, const Vec2& target, bool path_loss,
                                           double carrier_wavelength) {
  const Vec2 d = target - position;
  if (d.norm() == 0.0) throw DegenerateGeometryError("radar cannot aim at its own position");
  return mimo3x3(position, std::atan2(d.y(), d.x()), path_loss, carrier_wavelength);
}

void RadarGeometry::validate() const {
  if (element_offsets.size() == 0) throw InvalidInputError("radar has no virtual elements");
  if (freq_grid.size() == 0) throw InvalidInputError("radar has no frequency samples");
  if (!(carrier_wavelength > 0.0)) throw InvalidInputError("carrier wavelength must be positive");
  if (!(speed_of_light > 0.0)) throw InvalidInputError("speed of light must be positive");
  if (!sensor_position.allFinite() || !std::isfinite(broadside))
    throw InvalidInputError("radar pose must be finite");
}

double wrap_angle(double angle) {
  double a = std::remainder(angle, 2.0 * kPi);  // [-pi, pi]
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

SteeringParams to_steering_params(const Vec2& position, const RadarGeometry& geom) {
  const Vec2 d = position - geom.sensor_position;
  const double dist = d.norm();
  if (!(dist > 0.0)) throw DegenerateGeometryError("position coincides with the sensor");
  return {wrap_angle(std::atan2(d.y(), d.x()) - geom.broadside), dist};
}

CVector angle_steering(double angle, const RadarGeometry& geom) {
  const double k = -2.0 * kPi * std::sin(angle) / geom.carrier_wavelength;
  CVector out(geom.num_elements());
  for (Eigen::Index j = 0; j < out.size(); ++j) out[j] = std::polar(1.0, k * geom.element_offsets[j]);
  return out;
}

double path_gain(double distance, const RadarGeometry& geom) {
  if (!geom.path_loss_enabled) return 1.0;
  return geom.carrier_wavelength / (std::pow(4.0 * kPi, 1.5) * distance * distance);
}

CVector range_steering(double distance, const RadarGeometry& geom) {
  if (!(distance > 0.0)) throw DomainError("range steering needs a positive distance");
  const double gain = path_gain(distance, geom);
  const double k = -2.0 * kPi * 2.0 * distance / geom.speed_of_light;
  CVector out(geom.num_freqs());
  for (Eigen::Index n = 0; n < out.size(); ++n) out[n] = std::polar(gain, k * geom.freq_grid[n]);
  return out;
}

CVector atom(const SteeringParams& params, const RadarGeometry& geom) {
  const CVector a = angle_steering(params.angle, geom);
  const CVector r = range_steering(params.distance, geom);
  const Eigen::Index nf = r.size();
  const double scale = 1.0 / std::sqrt(static_cast<double>(a.size() * nf));
  CVector out(a.size() * nf);
  for (Eigen::Index j = 0; j < a.size(); ++j) out.segment(j * nf, nf) = (scale * a[j]) * r;
  return out;
}

CVector atom(const Vec2& position, const RadarGeometry& geom) {
  return atom(to_steering_params(position, geom), geom);
}

RadarDictionary::RadarDictionary(RadarGeometry geom) : geom_(std::move(geom)) { geom_.validate(); }

bool RadarDictionary::admissible(const Vec2& position) const {
  return position.allFinite() && (position - geom_.sensor_position).norm() >= geom_.min_distance;
}

}  // namespace mdsbl
