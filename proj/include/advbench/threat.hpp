#pragma once

#include <string>

#include "advbench/tensor.hpp"

namespace advbench {

enum class Norm { linf, l2 };
enum class Goal { untargeted, targeted };
/// Distance flavours; l2_normalized is ||a-b||_2 / sqrt(d).
enum class Distance { linf, l2, l2_normalized };

std::string to_string(Norm n);
std::string to_string(Goal g);
Norm norm_from_string(const std::string& s);
Goal goal_from_string(const std::string& s);

/// Norm, goal and budget of one attack run. The valid-pixel box is [0,1].
struct ThreatSpec {
  Norm norm = Norm::linf;
  Goal goal = Goal::untargeted;
  double eps = 0.0;

  ThreatSpec with_eps(double e) const {
    ThreatSpec s = *this;
    s.eps = e;
    return s;
  }
};

void validate(const ThreatSpec& spec);

inline constexpr double kConstraintTol = 1e-12;

double dist(const Tensor& a, const Tensor& b, Distance kind);
double dist(const Tensor& a, const Tensor& b, Norm norm);

/// Projects x_adv onto the eps-ball around x and then into [0,1]. For l2 the
/// ball step is a radial rescale followed by the coordinate clamp. Feasible
/// inputs come back unchanged.
Tensor project(const Tensor& x_adv, const Tensor& x, const ThreatSpec& spec);

bool feasible(const Tensor& x_adv, const Tensor& x, const ThreatSpec& spec,
              double tol = kConstraintTol);

}  // namespace advbench
