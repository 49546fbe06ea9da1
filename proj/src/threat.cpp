#include "advbench/threat.hpp"

#include <algorithm>
#include <cmath>

#include "advbench/errors.hpp"

namespace advbench {

std::string to_string(Norm n) { return n == Norm::linf ? "linf" : "l2"; }
std::string to_string(Goal g) { return g == Goal::untargeted ? "untargeted" : "targeted"; }

Norm norm_from_string(const std::string& s) {
  if (s == "linf") return Norm::linf;
  if (s == "l2") return Norm::l2;
  throw ConfigError("unknown norm '" + s + "' (expected linf or l2)");
}

Goal goal_from_string(const std::string& s) {
  if (s == "untargeted") return Goal::untargeted;
  if (s == "targeted") return Goal::targeted;
  throw ConfigError("unknown goal '" + s + "' (expected untargeted or targeted)");
}

void validate(const ThreatSpec& spec) {
  if (!(spec.eps >= 0.0) || !std::isfinite(spec.eps))
    throw InvalidInput("perturbation budget must be finite and nonnegative");
}

double dist(const Tensor& a, const Tensor& b, Distance kind) {
  require_same_shape(a, b, "dist");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (kind == Distance::linf) acc = std::max(acc, std::abs(d));
    else acc += d * d;
  }
  if (kind == Distance::linf) return acc;
  const double l2 = std::sqrt(acc);
  return kind == Distance::l2 ? l2 : l2 / std::sqrt(static_cast<double>(a.size()));
}

double dist(const Tensor& a, const Tensor& b, Norm norm) {
  return dist(a, b, norm == Norm::linf ? Distance::linf : Distance::l2);
}

Tensor project(const Tensor& x_adv, const Tensor& x, const ThreatSpec& spec) {
  require_same_shape(x_adv, x, "project");
  Tensor out = x_adv;
  if (spec.norm == Norm::linf) {
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = std::clamp(std::clamp(out[i], x[i] - spec.eps, x[i] + spec.eps), 0.0, 1.0);
    return out;
  }
  const double n = dist(x_adv, x, Norm::l2);
  if (n > spec.eps) {
    const double s = n > 0.0 ? spec.eps / n : 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + (x_adv[i] - x[i]) * s;
  }
  for (auto& v : out.data()) v = std::clamp(v, 0.0, 1.0);
  // A clamp never increases |x_adv - x| when x is inside the box, but the
  // rescale itself can round a hair past eps; pull back if so.
  for (double shrink = 1e-15; dist(out, x, Norm::l2) > spec.eps; shrink *= 4) {
    const double s = spec.eps / dist(out, x, Norm::l2) * (1.0 - shrink);
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = std::clamp(x[i] + (out[i] - x[i]) * s, 0.0, 1.0);
  }
  return out;
}

bool feasible(const Tensor& x_adv, const Tensor& x, const ThreatSpec& spec, double tol) {
  for (double v : x_adv.values())
    if (v < 0.0 || v > 1.0) return false;
  return dist(x_adv, x, spec.norm) <= spec.eps + tol;
}

}  // namespace advbench
