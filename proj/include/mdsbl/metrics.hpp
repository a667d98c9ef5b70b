#pragma once

#include <span>
#include <vector>

#include "mdsbl/common.hpp"

namespace mdsbl {

struct OspaConfig {
  double order_p = 2.0;
  double cutoff_c = 10.0;  // [m]

  void validate() const;
};

/// Minimum-cost assignment of every row to a distinct column (rows <= cols).
/// Returns the column of each row.
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost);

double ospa(std::span<const Vec2> truth, std::span<const Vec2> estimate, const OspaConfig& cfg = {});

struct DetectionStats {
  int missed_objects = 0;  // truth objects without an estimate inside the gate
  int false_alarms = 0;    // estimates outside the gate of every truth object
  double gate = 5.0;

  bool miss() const { return missed_objects > 0; }
};

DetectionStats detection_stats(std::span<const Vec2> truth, std::span<const Vec2> estimate, double gate = 5.0);

}  // namespace mdsbl
