#pragma once

#include <cstddef>
#include <optional>

#include "advbench/tensor.hpp"

namespace advbench {

/// One input with its true class and (optionally) an assigned target class.
struct LabeledExample {
  Tensor input;
  std::size_t label = 0;
  std::optional<std::size_t> target;
};

}  // namespace advbench
