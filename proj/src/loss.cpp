#include "advbench/loss.hpp"

#include <algorithm>
#include <cmath>

#include "advbench/errors.hpp"

namespace advbench {

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::xent: return "xent";
    case LossKind::margin: return "margin";
    case LossKind::cw: return "cw";
  }
  return "?";
}

LossKind loss_kind_from_string(const std::string& name) {
  if (name == "xent") return LossKind::xent;
  if (name == "margin") return LossKind::margin;
  if (name == "cw") return LossKind::cw;
  throw InvalidInput("unknown loss kind: " + name);
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw InvalidInput("argmax of empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

std::size_t argmax_excluding(std::span<const double> values, std::size_t excluded) {
  if (values.size() < 2) throw InvalidInput("argmax_excluding needs at least two entries");
  std::size_t best = excluded == 0 ? 1 : 0;
  for (std::size_t i = best + 1; i < values.size(); ++i)
    if (i != excluded && values[i] > values[best]) best = i;
  return best;
}

double log_sum_exp(std::span<const double> values) {
  const double m = *std::max_element(values.begin(), values.end());
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - m);
  return m + std::log(acc);
}

Tensor softmax(const Tensor& logits) {
  const double m = *std::max_element(logits.values().begin(), logits.values().end());
  Tensor out = logits;
  double total = 0.0;
  for (auto& v : out.data()) {
    v = std::exp(v - m);
    total += v;
  }
  out *= 1.0 / total;
  return out;
}

Tensor log_softmax(const Tensor& logits) {
  const double lse = log_sum_exp(logits.data());
  Tensor out = logits;
  for (auto& v : out.data()) v -= lse;
  return out;
}

namespace {

void check_label(const Tensor& logits, std::size_t label) {
  if (label >= logits.size())
    throw InvalidInput("label " + std::to_string(label) + " out of range for " +
                       std::to_string(logits.size()) + " classes");
}

double margin_of(const Tensor& logits, std::size_t label) {
  const auto other = argmax_excluding(logits.data(), label);
  return logits[label] - logits[other];
}

}  // namespace

double loss_value(LossKind kind, const Tensor& logits, std::size_t label) {
  check_label(logits, label);
  switch (kind) {
    case LossKind::xent: return log_sum_exp(logits.data()) - logits[label];
    case LossKind::margin: return margin_of(logits, label);
    case LossKind::cw: return std::max(margin_of(logits, label), 0.0);
  }
  return 0.0;
}

Tensor loss_logit_grad(LossKind kind, const Tensor& logits, std::size_t label) {
  check_label(logits, label);
  Tensor g(logits.shape(), 0.0);
  switch (kind) {
    case LossKind::xent: {
      g = softmax(logits);
      g[label] -= 1.0;
      break;
    }
    case LossKind::cw:
      if (margin_of(logits, label) <= 0.0) break;
      [[fallthrough]];
    case LossKind::margin: {
      const auto other = argmax_excluding(logits.data(), label);
      g[label] = 1.0;
      g[other] = -1.0;
      break;
    }
  }
  return g;
}

}  // namespace advbench
