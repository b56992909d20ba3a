#pragma once

// Central finite-difference oracle for tape gradients.
//
// Every element is first measured with a central difference at `step` and
// scored as |autodiff - fd| / max(|fd|, floor). Two situations make that
// single measurement unreliable, and an element failing `tol` there is
// re-measured before it counts as a failure:
//   * the stencil straddles a ReLU kink: the one-sided differences disagree,
//     so smaller steps are tried until they agree;
//   * the gradient is so small that rounding in the loss (about eps|L|/h)
//     swamps it: larger steps of 1e-4 and 1e-3 are used if their two
//     estimates agree with each other.
// The element passes only if some valid estimate matches within `tol`.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "contrnp/tensor.hpp"

namespace contrnp::testing {

struct GradCheckOptions {
  double tol = 1e-4;
  double step = 1e-5;
  double floor = 1e-8;
  std::size_t stride = 1;  // check every stride-th element
  bool refine = true;
};

struct GradCheckResult {
  double max_rel_error = 0.0;  // after refinement
  double max_raw_error = 0.0;  // at the primary step only
  std::size_t checked = 0;
  std::size_t kink_refined = 0;
  std::size_t noise_refined = 0;
  std::string worst;

  bool ok(double tol) const { return max_rel_error < tol; }
};

namespace detail {

struct Differences {
  double central, forward, backward;
};

inline Differences differences(std::span<double> values, std::size_t j, double h,
                               const std::function<Tensor()>& loss, double base) {
  const double saved = values[j];
  values[j] = saved + h;
  const double up = loss().item();
  values[j] = saved - h;
  const double down = loss().item();
  values[j] = saved;
  return {(up - down) / (2.0 * h), (up - base) / h, (base - down) / h};
}

}  // namespace detail

inline GradCheckResult grad_check(const std::vector<Tensor*>& inputs,
                                  const std::function<Tensor()>& loss,
                                  const GradCheckOptions& opt = {}) {
  std::vector<std::vector<double>> analytic;
  {
    GradientTape tape;
    for (auto* t : inputs) tape.watch(*t);
    Tensor out = loss();
    tape.backward(out);
    for (auto* t : inputs) {
      analytic.push_back(*t->grad());
      t->clear_grad();
    }
  }
  const double base = loss().item();
  const double eps = std::numeric_limits<double>::epsilon();

  GradCheckResult result;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto values = inputs[i]->mutable_data();
    for (std::size_t j = 0; j < values.size(); j += opt.stride) {
      const double a = analytic[i][j];
      auto rel_of = [&](double fd) { return std::abs(a - fd) / std::max(std::abs(fd), opt.floor); };
      const auto primary = detail::differences(values, j, opt.step, loss, base);
      double rel = rel_of(primary.central);
      double fd = primary.central;
      double used_step = opt.step;
      result.max_raw_error = std::max(result.max_raw_error, rel);

      if (opt.refine && !(rel < opt.tol)) {
        auto asymmetric = [&](const detail::Differences& d, double h) {
          const double noise = 100.0 * eps * std::max(std::abs(base), 1.0) / h;
          return std::abs(d.forward - d.backward) >
                 1e-3 * std::max(std::abs(d.central), opt.floor) + noise;
        };
        if (asymmetric(primary, opt.step)) {
          for (double h : {opt.step / 10.0, opt.step / 100.0}) {
            const auto d = detail::differences(values, j, h, loss, base);
            if (!asymmetric(d, h)) {
              if (rel_of(d.central) < rel) {
                rel = rel_of(d.central);
                fd = d.central;
                used_step = h;
                ++result.kink_refined;
              }
              break;
            }
          }
        } else {
          const double c4 = detail::differences(values, j, 1e-4, loss, base).central;
          const double c3 = detail::differences(values, j, 1e-3, loss, base).central;
          if (std::abs(c4 - c3) <= 0.5 * opt.tol * std::max(std::abs(c4), opt.floor) &&
              rel_of(c4) < rel) {
            rel = rel_of(c4);
            fd = c4;
            used_step = 1e-4;
            ++result.noise_refined;
          }
        }
      }

      ++result.checked;
      if (rel > result.max_rel_error || std::isnan(rel)) {
        result.max_rel_error = std::isnan(rel) ? std::numeric_limits<double>::infinity() : rel;
        std::ostringstream os;
        os.precision(10);
        os << "input " << i << ", element " << j << ": autodiff " << a << " vs fd " << fd
           << " (step " << used_step << ")";
        result.worst = os.str();
      }
    }
  }
  return result;
}

}  // namespace contrnp::testing
