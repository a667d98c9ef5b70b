#include "mdsbl/scenario.hpp"

#include <cmath>
#include <random>

namespace mdsbl {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Vec2 unit(double angle) { return {std::cos(angle), std::sin(angle)}; }

}  // namespace

double Scenario::precision_of(std::size_t sensor) const {
  return noise_precision.empty() ? 1.0 : noise_precision.at(sensor);
}

NoiseEnvelope Scenario::envelope_of(std::size_t sensor) const {
  if (envelopes.empty()) return NoiseEnvelope::identity(sensors.at(sensor).num_samples());
  return envelopes.at(sensor);
}

std::vector<Vec2> Scenario::truth() const {
  std::vector<Vec2> out;
  for (const auto& o : objects) out.push_back(o.position);
  return out;
}

void Scenario::validate() const {
  if (sensors.empty()) throw InvalidInputError("scenario needs at least one sensor");
  for (const auto& s : sensors) s.validate();
  if (!noise_precision.empty() && noise_precision.size() != sensors.size())
    throw InvalidInputError("one noise precision per sensor required");
  for (double p : noise_precision)
    if (!(p > 0.0) || !std::isfinite(p)) throw InvalidInputError("noise precision must be finite and positive");
  if (!envelopes.empty()) {
    if (envelopes.size() != sensors.size()) throw InvalidInputError("one noise envelope per sensor required");
    for (std::size_t l = 0; l < sensors.size(); ++l)
      if (envelopes[l].size() != sensors[l].num_samples()) throw InvalidInputError("noise envelope size mismatch");
  }
  for (const auto& o : objects) {
    if (!std::isfinite(o.snr_db)) throw InvalidInputError("object SNR must be finite");
    if (!o.position.allFinite()) throw InvalidInputError("object position must be finite");
    if (o.reference_distance && !(*o.reference_distance > 0.0))
      throw InvalidInputError("SNR reference distance must be positive");
  }
}

double amplitude_for_snr(const ObjectSpec& obj, const RadarGeometry& geom, double noise_precision,
                         const NoiseEnvelope* envelope) {
  Vec2 where = obj.position;
  if (obj.reference_distance) {
    const auto params = to_steering_params(obj.position, geom);
    where = geom.sensor_position + *obj.reference_distance * unit(geom.broadside + params.angle);
  }
  const CVector psi = atom(where, geom);
  const double energy = noise_precision * (envelope ? envelope->quad(psi) : psi.squaredNorm());
  if (!(energy > 0.0) || !std::isfinite(energy)) throw DomainError("atom has no usable energy");
  return std::sqrt(db_to_linear(obj.snr_db) / energy);
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t run_index, std::uint64_t sensor, std::uint64_t stream) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ run_index);
  h = splitmix64(h ^ sensor);
  return splitmix64(h ^ stream);
}

MultiSensorObservation synthesize(const Scenario& scenario, std::uint64_t run_index) {
  scenario.validate();
  MultiSensorObservation obs;
  for (std::size_t l = 0; l < scenario.sensors.size(); ++l) {
    const auto& geom = scenario.sensors[l];
    const double lambda = scenario.precision_of(l);
    NoiseEnvelope envelope = scenario.envelope_of(l);
    std::mt19937_64 rng(stream_seed(scenario.seed, run_index, l, 0));
    std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);

    CVector y = CVector::Zero(geom.num_samples());
    for (const auto& obj : scenario.objects) {
      const double mag = amplitude_for_snr(obj, geom, lambda, &envelope);
      y += atom(obj.position, geom) * std::polar(mag, phase(rng));
    }
    if (!scenario.noiseless) {
      std::normal_distribution<double> gauss(0.0, std::sqrt(0.5));
      CVector w(y.size());
      for (Eigen::Index i = 0; i < w.size(); ++i) {
        const double re = gauss(rng);
        const double im = gauss(rng);
        w[i] = {re, im};
      }
      // Lambda_v = C C^H, so C^{-H} w / sqrt(lambda) has covariance (lambda Lambda_v)^{-1}.
      CVector v = envelope.chol().adjoint().triangularView<Eigen::Upper>().solve(w) / std::sqrt(lambda);
      y += v;
    }
    obs.sensors.push_back({std::make_shared<RadarDictionary>(geom), std::move(y), std::move(envelope)});
  }
  return obs;
}

double CrossingTracksSpec::effective_speed() const {
  return speed > 0.0 ? speed : 1.0 / (2.0 * std::sin(crossing_angle / 2.0));
}

std::pair<Vec2, Vec2> crossing_tracks(const CrossingTracksSpec& spec, int t) {
  const double half = spec.crossing_angle / 2.0;
  const double v = spec.effective_speed();
  const Vec2 a = spec.start_a + t * v * Vec2(std::cos(half), -std::sin(half));
  const Vec2 b = spec.start_b + t * v * Vec2(std::cos(half), std::sin(half));
  return {a, b};
}

std::vector<Vec2> multi_radar_sites() { return {{0.0, 0.0}, {-30.0, 30.0}, {0.0, 60.0}, {30.0, 30.0}}; }

Scenario multi_radar_scenario(MultiRadarCase which, int sensor_count, double carrier_wavelength) {
  const auto sites = multi_radar_sites();
  if (sensor_count < 1 || sensor_count > static_cast<int>(sites.size()))
    throw InvalidInputError("sensor count must be between 1 and 4");
  const Vec2 center{0.0, 30.0};
  const bool path_loss = which == MultiRadarCase::kFourObjectPathLoss;
  Scenario sc;
  for (int l = 0; l < sensor_count; ++l)
    sc.sensors.push_back(RadarGeometry::mimo3x3_aimed(sites[static_cast<std::size_t>(l)], center, path_loss,
                                                      carrier_wavelength));
  if (which == MultiRadarCase::kSingleObject) {
    sc.objects.push_back({center, 15.0, std::nullopt});
  } else {
    for (const Vec2& p : {Vec2(0.0, 10.0), Vec2(20.0, -30.0), Vec2(0.0, 50.0), Vec2(20.0, 30.0)})
      sc.objects.push_back({p, 30.0, 10.0});
  }
  return sc;
}

Scenario crossing_scenario(const CrossingTracksSpec& spec, int t, double snr_db, double carrier_wavelength) {
  Scenario sc;
  sc.sensors.push_back(RadarGeometry::mimo3x3({0.0, 0.0}, kPi / 2, false, carrier_wavelength));
  const auto [a, b] = crossing_tracks(spec, t);
  sc.objects.push_back({a, snr_db, std::nullopt});
  sc.objects.push_back({b, snr_db, std::nullopt});
  return sc;
}

Rect crossing_region() { return {{-60.0, 0.0}, {60.0, 60.0}}; }

Rect multi_radar_region(MultiRadarCase which) {
  if (which == MultiRadarCase::kSingleObject) return {{-30.0, 0.0}, {30.0, 60.0}};
  return {{-40.0, -40.0}, {40.0, 70.0}};
}

std::vector<Vec2> polar_grid(const RadarGeometry& geom, const Rect& region, double range_step, double angle_step,
                             double max_angle) {
  if (!(range_step > 0.0) || !(angle_step > 0.0) || !(max_angle >= 0.0))
    throw InvalidInputError("polar grid steps must be positive");
  double reach = 0.0;
  for (const Vec2& corner : {region.lower, region.upper, Vec2(region.lower.x(), region.upper.y()),
                             Vec2(region.upper.x(), region.lower.y())})
    reach = std::max(reach, (corner - geom.sensor_position).norm());
  const int n_angles = static_cast<int>(std::floor(2.0 * max_angle / angle_step + 1e-9)) + 1;
  std::vector<Vec2> out;
  for (int r = 1; r * range_step <= reach + 1e-9; ++r) {
    for (int a = 0; a < n_angles; ++a) {
      const double angle = -max_angle + a * angle_step;
      const Vec2 p = geom.sensor_position + r * range_step * unit(geom.broadside + angle);
      if (region.contains(p)) out.push_back(p);
    }
  }
  return out;
}

std::vector<Vec2> xy_grid(const Rect& region, double step) {
  if (!(step > 0.0)) throw InvalidInputError("grid step must be positive");
  if (!region.valid()) throw InvalidInputError("grid region is empty");
  const int nx = static_cast<int>(std::floor((region.upper.x() - region.lower.x()) / step + 1e-9)) + 1;
  const int ny = static_cast<int>(std::floor((region.upper.y() - region.lower.y()) / step + 1e-9)) + 1;
  std::vector<Vec2> out;
  out.reserve(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny));
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) out.emplace_back(region.lower.x() + i * step, region.lower.y() + j * step);
  return out;
}

}  // namespace mdsbl
