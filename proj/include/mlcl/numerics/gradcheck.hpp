#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "mlcl/numerics/graph.hpp"

namespace mlcl {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

/// Relative error with an absolute floor so that entries whose true gradient
/// is ~0 are compared on absolute terms.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares analytic parameter gradients against central differences.
/// `build` constructs a fresh graph on the current parameter values and
/// returns the scalar loss node.
inline GradCheckResult check_gradients(const std::vector<Parameter*>& params,
                                       const std::function<Var(Graph&)>& build, double h = 1e-5,
                                       double floor = 1e-6) {
  for (Parameter* p : params) p->zero_grad();
  {
    Graph g;
    g.backward(build(g));
  }
  GradCheckResult result;
  auto eval = [&] {
    Graph g;
    return build(g).value().item();
  };
  for (Parameter* p : params) {
    for (std::size_t k = 0; k < p->value.size(); ++k) {
      const double orig = p->value[k];
      p->value[k] = orig + h;
      const double up = eval();
      p->value[k] = orig - h;
      const double down = eval();
      p->value[k] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double err = relative_error(p->grad[k], numeric, floor);
      ++result.checked;
      if (err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_parameter = p->name;
        result.worst_index = k;
        result.worst_analytic = p->grad[k];
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace mlcl
