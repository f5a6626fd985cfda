#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "numkit/tensor.hpp"

namespace numkit {

// Central-difference gradient check against a scalar loss. The loss closure
// receives a full copy of the flattened parameter vector so evaluations are
// independent and safe to run in parallel.
struct GradCheckReport {
  double max_rel_err = 0.0;
  std::int64_t worst_index = -1;
  std::string worst_param;
  bool passed(double tol) const { return max_rel_err < tol; }
};

struct GradCheckItem {
  std::string name;
  std::vector<double> values;     // current parameter values
  std::vector<double> analytic;   // analytic gradient to verify
};

// rel(a, f) with a floor so near-zero gradients are compared absolutely at
// the floor's scale. h = 1e-5 pairs with f64 headroom.
inline double fd_rel_err(double analytic, double numeric, double floor_ = 1e-5) {
  const double denom = std::max({std::fabs(analytic), std::fabs(numeric), floor_});
  return std::fabs(analytic - numeric) / denom;
}

// loss(flat, offsets) -> scalar; `flat` is the concatenation of all items'
// values in order. Perturbs every entry of every item.
inline GradCheckReport gradcheck_all(
    const std::vector<GradCheckItem>& items,
    const std::function<double(const std::vector<double>&)>& loss, double h = 1e-5) {
  std::vector<double> base;
  std::vector<std::size_t> offsets;
  for (const auto& it : items) {
    offsets.push_back(base.size());
    base.insert(base.end(), it.values.begin(), it.values.end());
  }
  const std::int64_t total = static_cast<std::int64_t>(base.size());
  std::vector<double> rel(static_cast<std::size_t>(total), 0.0);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 16)
#endif
  for (std::int64_t f = 0; f < total; ++f) {
    std::vector<double> p = base;
    p[static_cast<std::size_t>(f)] = base[static_cast<std::size_t>(f)] + h;
    const double up = loss(p);
    p[static_cast<std::size_t>(f)] = base[static_cast<std::size_t>(f)] - h;
    const double dn = loss(p);
    const double numeric = (up - dn) / (2.0 * h);
    // find the analytic grad entry this flat index belongs to
    std::size_t item = 0;
    while (item + 1 < offsets.size() && offsets[item + 1] <= static_cast<std::size_t>(f)) ++item;
    const double analytic = items[item].analytic[static_cast<std::size_t>(f) - offsets[item]];
    rel[static_cast<std::size_t>(f)] = fd_rel_err(analytic, numeric);
  }

  GradCheckReport rep;
  for (std::int64_t f = 0; f < total; ++f) {
    if (rel[static_cast<std::size_t>(f)] > rep.max_rel_err) {
      rep.max_rel_err = rel[static_cast<std::size_t>(f)];
      rep.worst_index = f;
      std::size_t item = 0;
      while (item + 1 < offsets.size() && offsets[item + 1] <= static_cast<std::size_t>(f)) ++item;
      rep.worst_param = items[item].name;
    }
  }
  return rep;
}

}  // namespace numkit
