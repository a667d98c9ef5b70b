#include "mdsbl/metrics.hpp"

#include <cmath>
#include <limits>

namespace mdsbl {

void OspaConfig::validate() const {
  if (!(order_p >= 1.0)) throw InvalidInputError("OSPA order must be >= 1");
  if (!(cutoff_c > 0.0)) throw InvalidInputError("OSPA cutoff must be positive");
}

// Shortest augmenting path with potentials, O(n^2 m).
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  const int m = static_cast<int>(cost.cols());
  if (n > m) throw InvalidInputError("assignment needs rows <= cols");
  if (n == 0) return {};
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= m; ++j)
    if (p[j] != 0) row_to_col[static_cast<std::size_t>(p[j] - 1)] = j - 1;
  return row_to_col;
}

double ospa(std::span<const Vec2> truth, std::span<const Vec2> estimate, const OspaConfig& cfg) {
  cfg.validate();
  const bool truth_smaller = truth.size() <= estimate.size();
  const auto small = truth_smaller ? truth : estimate;
  const auto large = truth_smaller ? estimate : truth;
  const auto n = large.size();
  if (n == 0) return 0.0;
  const double cp = std::pow(cfg.cutoff_c, cfg.order_p);

  Eigen::MatrixXd cost(static_cast<Eigen::Index>(small.size()), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < small.size(); ++i)
    for (std::size_t j = 0; j < n; ++j)
      cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          std::pow(std::min((small[i] - large[j]).norm(), cfg.cutoff_c), cfg.order_p);

  double total = cp * static_cast<double>(n - small.size());
  const auto match = solve_assignment(cost);
  for (std::size_t i = 0; i < match.size(); ++i) total += cost(static_cast<Eigen::Index>(i), match[i]);
  return std::pow(total / static_cast<double>(n), 1.0 / cfg.order_p);
}

DetectionStats detection_stats(std::span<const Vec2> truth, std::span<const Vec2> estimate, double gate) {
  if (!(gate > 0.0)) throw InvalidInputError("detection gate must be positive");
  DetectionStats out;
  out.gate = gate;
  auto within = [&](const Vec2& a, const Vec2& b) { return (a - b).norm() <= gate; };
  for (const auto& t : truth) {
    bool hit = false;
    for (const auto& e : estimate) hit = hit || within(t, e);
    if (!hit) ++out.missed_objects;
  }
  for (const auto& e : estimate) {
    bool near = false;
    for (const auto& t : truth) near = near || within(t, e);
    if (!near) ++out.false_alarms;
  }
  return out;
}

}  // namespace mdsbl
