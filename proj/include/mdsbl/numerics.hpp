#pragma once

#include <functional>
#include <span>
#include <vector>

#include "mdsbl/common.hpp"

namespace mdsbl {

// ---------------------------------------------------------------------------
// Bounded derivative-free maximization
// ---------------------------------------------------------------------------

struct BoundedMaxProblem {
  std::function<double(const Vec2&)> objective;
  Rect bounds;
  Vec2 init{0.0, 0.0};
  double tolerance = 1e-6;   // simplex size at which the search stops [m]
  int max_evals = 500;
  double initial_step = 1.0; // edge length of the starting simplex [m]
};

struct MaxResult {
  Vec2 argmax;
  double value = 0.0;
  int evaluations = 0;
};

/// Nelder-Mead simplex search with trial points projected into the bounds.
/// Non-finite objective values count as -inf. The returned value is never
/// below objective(init).
MaxResult maximize_2d(const BoundedMaxProblem& problem);

// ---------------------------------------------------------------------------
// Polynomials
// ---------------------------------------------------------------------------

/// Real polynomial, coefficients in ascending degree order.
class RealPolynomial {
 public:
  RealPolynomial() = default;
  explicit RealPolynomial(std::vector<double> coeffs);

  /// Drops trailing coefficients below rel_tol * max|coeff|.
  /// Throws InvalidInputError if every coefficient is zero.
  void trim(double rel_tol = 1e-12);

  int degree() const { return static_cast<int>(coeffs_.size()) - 1; }
  const std::vector<double>& coeffs() const { return coeffs_; }

  double operator()(double x) const;
  double derivative(double x) const;
  /// sum |c_i| |x|^i, the natural scale for residual checks.
  double magnitude(double x) const;

  RealPolynomial operator*(const RealPolynomial& other) const;
  RealPolynomial operator+(const RealPolynomial& other) const;
  RealPolynomial& operator*=(double f);

 private:
  std::vector<double> coeffs_;
};

/// Positive real roots of `poly` from the eigenvalues of its companion matrix.
/// Near-real eigenvalues (|imag| <= imag_tol (1 + |real|)) are projected to the
/// real axis and polished by Newton steps; roots are deduplicated.
std::vector<double> positive_real_roots(RealPolynomial poly, double imag_tol = 1e-8, double pos_tol = 1e-12);

// ---------------------------------------------------------------------------
// Hermitian factorizations
// ---------------------------------------------------------------------------

struct CholeskyFactor {
  CMatrix lower;
  double jitter = 0.0;  // diagonal loading actually applied
};

/// Lower Cholesky factor of A + jitter I. Jitter is escalated geometrically up
/// to 1e-6 trace(A)/n if the factorization fails.
CholeskyFactor cholesky_hermitian(const CMatrix& a, double jitter = 0.0);

/// Known spectral envelope Lambda_v of one sensor with its factorization.
class NoiseEnvelope {
 public:
  /// Identity envelope of size n.
  static NoiseEnvelope identity(Eigen::Index n);

  explicit NoiseEnvelope(CMatrix precision);

  Eigen::Index size() const { return matrix_.rows(); }
  bool is_diagonal() const { return diagonal_; }
  const CMatrix& matrix() const { return matrix_; }
  const RVector& diag() const { return diag_; }
  const CMatrix& chol() const { return chol_; }
  double log_det() const { return log_det_; }

  CVector apply(const CVector& x) const;
  CMatrix apply(const CMatrix& x) const;
  /// x^H Lambda_v x
  double quad(const CVector& x) const;
  /// Column-wise x_j^H Lambda_v x_j
  RVector quad_columns(const CMatrix& x) const;

 private:
  CMatrix matrix_;
  RVector diag_;
  CMatrix chol_;
  bool diagonal_ = true;
  double log_det_ = 0.0;
};

// ---------------------------------------------------------------------------
// Leave-one-out factor cache
// ---------------------------------------------------------------------------

/// Precomputed factors of lambda Lambda_v M for a fixed set of active atoms,
/// so that (s, mu) of any probe atom costs O(N K).
///
///   lambda Lambda_v M = L L^H - R R^H,  R = lambda Lambda_v Psi D^{-H},
///   D D^H = Psi^H lambda Lambda_v Psi + Gamma,
///   resid = lambda Lambda_v y - R R^H y.
struct FactorCache {
  double noise_scale = 1.0;     // lambda
  const NoiseEnvelope* envelope = nullptr;
  CMatrix chol_amp;             // D
  CMatrix lowrank;              // R
  CVector resid;                // y_res

  /// L with L L^H = lambda Lambda_v (materialized on demand).
  CMatrix chol_noise() const;
  /// Dense lambda Lambda_v M reconstructed from the factors.
  CMatrix dense() const;
};

FactorCache build_factor_cache(const CMatrix& active_atoms, std::span<const double> gammas,
                               const NoiseEnvelope& envelope, double noise_scale, const CVector& y);

struct AtomStats {
  double s = 0.0;
  Complex mu{0.0, 0.0};
  double snr() const { return std::norm(mu) / s; }
};

/// s = 1 / (||L^H psi||^2 - ||R^H psi||^2), mu = s psi^H y_res.
/// Throws DegenerateStatisticsError when the denominator is not positive.
AtomStats stats_from_cache(const FactorCache& cache, const CVector& atom);

/// Batched statistics for the columns of `atoms`. `envelope_norms` holds
/// psi^H Lambda_v psi per column. Degenerate columns get s = +inf, mu = 0.
void stats_from_cache_batch(const FactorCache& cache, const CMatrix& atoms, const RVector& envelope_norms,
                            RVector& s, CVector& mu);

}  // namespace mdsbl
