#include "mdsbl/numerics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

namespace mdsbl {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct Vertex {
  Vec2 x;
  double f;
};

}  // namespace

// ---------------------------------------------------------------------------
// maximize_2d
// ---------------------------------------------------------------------------

MaxResult maximize_2d(const BoundedMaxProblem& problem) {
  if (!problem.objective) throw InvalidInputError("maximize_2d: missing objective");
  if (!problem.bounds.valid()) throw InvalidInputError("maximize_2d: empty bounds");
  if (!(problem.tolerance > 0.0)) throw InvalidInputError("maximize_2d: tolerance must be positive");
  if (!problem.bounds.contains(problem.init)) throw InvalidInputError("maximize_2d: init outside bounds");

  int evals = 0;
  auto eval = [&](const Vec2& p) {
    ++evals;
    const double v = problem.objective(p);
    return std::isfinite(v) ? v : kNegInf;
  };

  const double f_init = problem.objective(problem.init);
  ++evals;
  if (!std::isfinite(f_init)) throw InvalidInputError("maximize_2d: objective not finite at init");

  Vertex best{problem.init, f_init};
  const Rect& box = problem.bounds;

  auto run_simplex = [&](const Vec2& start, double f_start, double step) {
    std::array<Vertex, 3> s;
    s[0] = {start, f_start};
    for (int axis = 0; axis < 2; ++axis) {
      Vec2 p = start;
      p[axis] += step;
      if (p[axis] > box.upper[axis]) p[axis] = start[axis] - step;
      p = box.clamp(p);
      s[axis + 1] = {p, eval(p)};
    }

    while (evals < problem.max_evals) {
      std::sort(s.begin(), s.end(), [](const Vertex& a, const Vertex& b) { return a.f > b.f; });
      const double size = std::max((s[1].x - s[0].x).norm(), (s[2].x - s[0].x).norm());
      if (size < problem.tolerance) break;

      const Vec2 centroid = 0.5 * (s[0].x + s[1].x);
      const Vec2 xr = box.clamp(centroid + (centroid - s[2].x));
      const double fr = eval(xr);
      if (fr > s[0].f) {
        const Vec2 xe = box.clamp(centroid + 2.0 * (centroid - s[2].x));
        const double fe = eval(xe);
        s[2] = fe > fr ? Vertex{xe, fe} : Vertex{xr, fr};
        continue;
      }
      if (fr > s[1].f) {
        s[2] = {xr, fr};
        continue;
      }
      // contraction, outside if the reflected point beats the worst vertex
      const bool outside = fr > s[2].f;
      const Vec2 xc = outside ? Vec2(centroid + 0.5 * (xr - centroid)) : Vec2(centroid + 0.5 * (s[2].x - centroid));
      const double fc = eval(xc);
      if (fc > (outside ? fr : s[2].f)) {
        s[2] = {xc, fc};
        continue;
      }
      for (int i = 1; i < 3; ++i) {
        s[i].x = s[0].x + 0.5 * (s[i].x - s[0].x);
        s[i].f = eval(s[i].x);
      }
    }
    for (const auto& v : s)
      if (v.f > best.f) best = v;
  };

  run_simplex(best.x, best.f, problem.initial_step);
  // one restart around the incumbent guards against a collapsed simplex
  if (evals < problem.max_evals) run_simplex(best.x, best.f, std::max(0.25 * problem.initial_step, 10 * problem.tolerance));

  return {best.x, best.f, evals};
}

// ---------------------------------------------------------------------------
// RealPolynomial
// ---------------------------------------------------------------------------

RealPolynomial::RealPolynomial(std::vector<double> coeffs) : coeffs_(std::move(coeffs)) {}

void RealPolynomial::trim(double rel_tol) {
  double scale = 0.0;
  for (double c : coeffs_) scale = std::max(scale, std::abs(c));
  if (coeffs_.empty() || scale == 0.0) throw InvalidInputError("polynomial has no nonzero coefficient");
  while (coeffs_.size() > 1 && std::abs(coeffs_.back()) <= rel_tol * scale) coeffs_.pop_back();
}

double RealPolynomial::operator()(double x) const {
  double acc = 0.0;
  for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) acc = acc * x + *it;
  return acc;
}

double RealPolynomial::derivative(double x) const {
  double acc = 0.0;
  for (std::size_t i = coeffs_.size(); i-- > 1;) acc = acc * x + static_cast<double>(i) * coeffs_[i];
  return acc;
}

double RealPolynomial::magnitude(double x) const {
  const double ax = std::abs(x);
  double acc = 0.0;
  for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) acc = acc * ax + std::abs(*it);
  return acc;
}

RealPolynomial RealPolynomial::operator*(const RealPolynomial& other) const {
  if (coeffs_.empty() || other.coeffs_.empty()) return RealPolynomial{};
  std::vector<double> out(coeffs_.size() + other.coeffs_.size() - 1, 0.0);
  for (std::size_t i = 0; i < coeffs_.size(); ++i)
    for (std::size_t j = 0; j < other.coeffs_.size(); ++j) out[i + j] += coeffs_[i] * other.coeffs_[j];
  return RealPolynomial(std::move(out));
}

RealPolynomial RealPolynomial::operator+(const RealPolynomial& other) const {
  std::vector<double> out(std::max(coeffs_.size(), other.coeffs_.size()), 0.0);
  for (std::size_t i = 0; i < coeffs_.size(); ++i) out[i] += coeffs_[i];
  for (std::size_t i = 0; i < other.coeffs_.size(); ++i) out[i] += other.coeffs_[i];
  return RealPolynomial(std::move(out));
}

RealPolynomial& RealPolynomial::operator*=(double f) {
  for (double& c : coeffs_) c *= f;
  return *this;
}

std::vector<double> positive_real_roots(RealPolynomial poly, double imag_tol, double pos_tol) {
  poly.trim();
  const int n = poly.degree();
  if (n < 1) return {};
  const auto& c = poly.coeffs();

  std::vector<double> candidates;
  if (n == 1) {
    candidates.push_back(-c[0] / c[1]);
  } else {
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(n, n);
    for (int i = 1; i < n; ++i) companion(i, i - 1) = 1.0;
    for (int i = 0; i < n; ++i) companion(i, n - 1) = -c[i] / c[n];
    Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
    if (solver.info() != Eigen::Success) throw NumericalError("companion eigenvalue solve failed");
    for (const auto& ev : solver.eigenvalues())
      if (std::abs(ev.imag()) <= imag_tol * (1.0 + std::abs(ev.real()))) candidates.push_back(ev.real());
  }

  std::vector<double> roots;
  for (double x : candidates) {
    for (int it = 0; it < 3; ++it) {
      const double d = poly.derivative(x);
      if (d == 0.0) break;
      const double next = x - poly(x) / d;
      if (!(std::abs(poly(next)) < std::abs(poly(x)))) break;
      x = next;
    }
    if (!(x > pos_tol)) continue;
    if (std::abs(poly(x)) > 1e-6 * poly.magnitude(x)) continue;
    roots.push_back(x);
  }

  std::sort(roots.begin(), roots.end());
  std::vector<double> unique;
  for (double r : roots)
    if (unique.empty() || std::abs(r - unique.back()) > 1e-8 * std::max(std::abs(r), std::abs(unique.back())))
      unique.push_back(r);
  return unique;
}

// ---------------------------------------------------------------------------
// Cholesky
// ---------------------------------------------------------------------------

CholeskyFactor cholesky_hermitian(const CMatrix& a, double jitter) {
  if (a.rows() != a.cols()) throw InvalidInputError("cholesky_hermitian: matrix not square");
  const Eigen::Index n = a.rows();
  if (n == 0) return {CMatrix(0, 0), 0.0};
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.adjoint()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw InvalidInputError("cholesky_hermitian: matrix not Hermitian");

  const double trace = a.diagonal().real().sum();
  const double cap = 1e-6 * std::abs(trace) / static_cast<double>(n);
  double current = std::max(jitter, 0.0);
  const CMatrix herm = 0.5 * (a + a.adjoint());
  for (;;) {
    CMatrix loaded = herm;
    loaded.diagonal().array() += current;
    Eigen::LLT<CMatrix> llt(loaded);
    if (llt.info() == Eigen::Success && llt.matrixL().toDenseMatrix().diagonal().real().minCoeff() > 0.0)
      return {llt.matrixL(), current};
    if (current >= cap || cap == 0.0) break;
    current = current == 0.0 ? std::max(1e-14 * std::abs(trace) / static_cast<double>(n), 1e-300) : current * 10.0;
    current = std::min(current, cap);
  }
  throw NumericalError("cholesky_hermitian: matrix not positive definite within jitter cap");
}

// ---------------------------------------------------------------------------
// NoiseEnvelope
// ---------------------------------------------------------------------------

NoiseEnvelope NoiseEnvelope::identity(Eigen::Index n) { return NoiseEnvelope(CMatrix::Identity(n, n)); }

NoiseEnvelope::NoiseEnvelope(CMatrix precision) : matrix_(std::move(precision)) {
  if (matrix_.rows() != matrix_.cols() || matrix_.rows() == 0)
    throw InvalidInputError("noise envelope must be a non-empty square matrix");
  CMatrix off = matrix_;
  off.diagonal().setZero();
  diagonal_ = off.cwiseAbs().maxCoeff() == 0.0;
  diag_ = matrix_.diagonal().real();
  if (diagonal_) {
    if (!(diag_.minCoeff() > 0.0)) throw InvalidInputError("noise envelope must be positive definite");
    chol_ = diag_.cwiseSqrt().cast<Complex>().asDiagonal();
    log_det_ = diag_.array().log().sum();
  } else {
    try {
      chol_ = cholesky_hermitian(matrix_).lower;
    } catch (const NumericalError&) {
      throw InvalidInputError("noise envelope must be positive definite");
    }
    log_det_ = 2.0 * chol_.diagonal().real().array().log().sum();
  }
}

CVector NoiseEnvelope::apply(const CVector& x) const {
  if (diagonal_) return (x.array() * diag_.array()).matrix();
  return matrix_ * x;
}

CMatrix NoiseEnvelope::apply(const CMatrix& x) const {
  if (diagonal_) return diag_.asDiagonal() * x;
  return matrix_ * x;
}

double NoiseEnvelope::quad(const CVector& x) const {
  if (diagonal_) return (x.array().abs2() * diag_.array()).sum();
  return x.dot(matrix_ * x).real();
}

RVector NoiseEnvelope::quad_columns(const CMatrix& x) const {
  if (diagonal_) return (diag_.asDiagonal() * x.cwiseAbs2()).colwise().sum().transpose();
  return (x.conjugate().array() * (matrix_ * x).array()).real().colwise().sum().transpose();
}

// ---------------------------------------------------------------------------
// FactorCache
// ---------------------------------------------------------------------------

CMatrix FactorCache::chol_noise() const { return std::sqrt(noise_scale) * envelope->chol(); }

CMatrix FactorCache::dense() const {
  CMatrix m = noise_scale * envelope->matrix();
  if (lowrank.cols() > 0) m.noalias() -= lowrank * lowrank.adjoint();
  return m;
}

FactorCache build_factor_cache(const CMatrix& active_atoms, std::span<const double> gammas,
                               const NoiseEnvelope& envelope, double noise_scale, const CVector& y) {
  const Eigen::Index n = envelope.size();
  const auto k = static_cast<Eigen::Index>(gammas.size());
  if (active_atoms.rows() != n || active_atoms.cols() != k || y.size() != n)
    throw InvalidInputError("build_factor_cache: dimension mismatch");
  if (!(noise_scale > 0.0) || !std::isfinite(noise_scale))
    throw InvalidInputError("build_factor_cache: noise precision must be positive");
  for (double g : gammas)
    if (!(g > 0.0) || !std::isfinite(g)) throw InvalidInputError("build_factor_cache: gammas must be finite and positive");

  FactorCache cache;
  cache.noise_scale = noise_scale;
  cache.envelope = &envelope;
  cache.resid = noise_scale * envelope.apply(y);
  if (k == 0) {
    cache.chol_amp.resize(0, 0);
    cache.lowrank.resize(n, 0);
    return cache;
  }

  const CMatrix weighted = noise_scale * envelope.apply(active_atoms);  // lambda Lambda_v Psi
  CMatrix precision = active_atoms.adjoint() * weighted;
  for (Eigen::Index i = 0; i < k; ++i) precision(i, i) += gammas[static_cast<std::size_t>(i)];
  precision = 0.5 * (precision + precision.adjoint()).eval();

  cache.chol_amp = cholesky_hermitian(precision).lower;
  // R D^H = W  <=>  D R^H = W^H
  const CMatrix r_adj = cache.chol_amp.triangularView<Eigen::Lower>().solve(weighted.adjoint());
  cache.lowrank = r_adj.adjoint();
  cache.resid.noalias() -= cache.lowrank * (r_adj * y);
  return cache;
}

AtomStats stats_from_cache(const FactorCache& cache, const CVector& atom) {
  if (atom.size() != cache.resid.size()) throw InvalidInputError("stats_from_cache: atom length mismatch");
  double denom = cache.noise_scale * cache.envelope->quad(atom);
  if (cache.lowrank.cols() > 0) denom -= (cache.lowrank.adjoint() * atom).squaredNorm();
  if (!(denom > 0.0) || !std::isfinite(denom)) throw DegenerateStatisticsError("non-positive leave-one-out variance");
  AtomStats out;
  out.s = 1.0 / denom;
  out.mu = out.s * atom.dot(cache.resid);
  return out;
}

void stats_from_cache_batch(const FactorCache& cache, const CMatrix& atoms, const RVector& envelope_norms,
                            RVector& s, CVector& mu) {
  const Eigen::Index g = atoms.cols();
  RVector denom = cache.noise_scale * envelope_norms;
  if (cache.lowrank.cols() > 0) denom -= (cache.lowrank.adjoint() * atoms).cwiseAbs2().colwise().sum().transpose();
  const CVector proj = atoms.adjoint() * cache.resid;
  s.resize(g);
  mu.resize(g);
  for (Eigen::Index j = 0; j < g; ++j) {
    if (denom[j] > 0.0 && std::isfinite(denom[j])) {
      s[j] = 1.0 / denom[j];
      mu[j] = s[j] * proj[j];
    } else {
      s[j] = std::numeric_limits<double>::infinity();
      mu[j] = 0.0;
    }
  }
}

}  // namespace mdsbl
