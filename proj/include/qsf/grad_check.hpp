#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "qsf/params.hpp"

namespace qsf {

struct GradCheckReport {
  real max_rel_err = 0;
  std::string worst_param;
  int worst_index = -1;
  real worst_analytic = 0;
  real worst_fd = 0;
  // worst error per top-level parameter group (prefix before the first '.')
  std::map<std::string, real> per_group;
  // parameter entries whose perturbed loss came back non-finite
  std::vector<std::string> non_finite;

  bool pass(real tol) const { return non_finite.empty() && max_rel_err < tol; }
};

// Central-difference check of analytic gradients. For every parameter
// entry compares g against (f(t+h) - f(t-h)) / 2h; the error is relative
// to max(|g|, |fd|), falling back to the absolute difference when that
// denominator is below 1e-8. loss_fn must be deterministic.
GradCheckReport grad_check(const std::function<real(const ParamStore&)>& loss_fn,
                           ParamStore params, const std::vector<Matrix>& analytic, real step);

}  // namespace qsf
