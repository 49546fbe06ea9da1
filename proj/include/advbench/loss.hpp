#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "advbench/tensor.hpp"

namespace advbench {

/// Scalar losses over a logit vector.
///  xent   : -log softmax(Z)_y (log-sum-exp stabilized)
///  margin : Z_y - max_{i != y} Z_i
///  cw     : max(margin, 0), the hinge term of the C&W objective
enum class LossKind { xent, margin, cw };

std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& name);

/// A loss bound to a label and a multiplier. Attacks ascend `scale * loss`,
/// so targeted and untargeted variants differ only in label and sign.
struct Objective {
  LossKind kind = LossKind::xent;
  std::size_t label = 0;
  double scale = 1.0;
};

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);
/// argmax over all indices except `excluded`, lowest index on ties.
std::size_t argmax_excluding(std::span<const double> values, std::size_t excluded);

double log_sum_exp(std::span<const double> values);
Tensor softmax(const Tensor& logits);
Tensor log_softmax(const Tensor& logits);

double loss_value(LossKind kind, const Tensor& logits, std::size_t label);
/// d loss / d logits. Ties in the max use the lowest-index maximizer; the cw
/// hinge contributes a gradient only where the margin is strictly positive.
Tensor loss_logit_grad(LossKind kind, const Tensor& logits, std::size_t label);

inline double objective_value(const Objective& obj, const Tensor& logits) {
  return obj.scale * loss_value(obj.kind, logits, obj.label);
}

}  // namespace advbench
