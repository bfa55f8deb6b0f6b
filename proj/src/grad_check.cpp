#include "qsf/grad_check.hpp"

#include <cmath>

namespace qsf {

namespace {
std::string group_of(const std::string& name) {
  auto dot = name.find('.');
  return dot == std::string::npos ? name : name.substr(0, dot);
}
}  // namespace

GradCheckReport grad_check(const std::function<real(const ParamStore&)>& loss_fn,
                           ParamStore params, const std::vector<Matrix>& analytic, real step) {
  if (static_cast<int>(analytic.size()) != params.count())
    throw ShapeError("grad_check: analytic gradient count mismatch");
  GradCheckReport rep;
  for (int pi = 0; pi < params.count(); ++pi) {
    Matrix& value = params.value(pi);
    const Matrix& g = analytic[pi];
    if (!value.same_shape(g))
      throw ShapeError("grad_check: gradient shape mismatch for " + params.name(pi));
    const std::string grp = group_of(params.name(pi));
    for (size_t e = 0; e < value.data.size(); ++e) {
      const real saved = value.data[e];
      value.data[e] = saved + step;
      const real fp = loss_fn(params);
      value.data[e] = saved - step;
      const real fm = loss_fn(params);
      value.data[e] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        rep.non_finite.push_back(params.name(pi) + "[" + std::to_string(e) + "]");
        continue;
      }
      const real fd = (fp - fm) / (2 * step);
      const real a = g.data[e];
      const real denom = std::max(std::abs(a), std::abs(fd));
      const real err = denom < real(1e-8) ? std::abs(a - fd) : std::abs(a - fd) / denom;
      auto it = rep.per_group.find(grp);
      if (it == rep.per_group.end())
        rep.per_group[grp] = err;
      else if (err > it->second)
        it->second = err;
      if (err > rep.max_rel_err) {
        rep.max_rel_err = err;
        rep.worst_param = params.name(pi);
        rep.worst_index = static_cast<int>(e);
        rep.worst_analytic = a;
        rep.worst_fd = fd;
      }
    }
  }
  return rep;
}

}  // namespace qsf
