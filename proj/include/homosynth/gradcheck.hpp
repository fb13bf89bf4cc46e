#pragma once

// Central finite-difference verification of the backward pass. Rebuilds the
// graph from scratch for every probe, so f must be a pure function of the
// current leaf values.

#include <functional>
#include <string>
#include <vector>

#include "homosynth/networks.hpp"
#include "homosynth/tensor.hpp"

namespace homosynth::nn {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::int64_t worst_index = -1;

  operator double() const { return max_rel_err; }
};

template <typename T>
GradCheckResult gradcheck(const std::function<Tensor<T>()>& f, ParamList<T>& params,
                          double h = 1e-4) {
  for (auto& p : params) p.tensor.zero_grad();
  auto root = f();
  require(std::isfinite(static_cast<double>(root.item())), "gradcheck: non-finite objective");
  root.backward();

  std::vector<std::vector<double>> analytic(params.size());
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const auto& g = params[pi].tensor.grad();
    analytic[pi].assign(params[pi].tensor.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) analytic[pi][i] = static_cast<double>(g[i]);
  }

  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& values = params[pi].tensor.mutable_value();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const T saved = values[i];
      values[i] = saved + static_cast<T>(h);
      const double up = static_cast<double>(f().item());
      values[i] = saved - static_cast<T>(h);
      const double down = static_cast<double>(f().item());
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[pi][i];
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      if (rel > result.max_rel_err) {
        result.max_rel_err = rel;
        result.worst_param = params[pi].name;
        result.worst_index = static_cast<std::int64_t>(i);
      }
    }
  }
  return result;
}

}  // namespace homosynth::nn
