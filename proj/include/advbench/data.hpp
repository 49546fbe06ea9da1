#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "advbench/example.hpp"

namespace advbench {

struct Dataset {
  std::string name;
  std::size_t num_classes = 0;
  Shape input_shape;
  std::vector<LabeledExample> examples;

  std::size_t size() const noexcept { return examples.size(); }
  bool has_targets() const;
};

/// Checks labels, pixel range and target invariants; throws FormatError.
void validate_dataset(const Dataset& ds);

/// Reads an IDX image/label pair (magic 0x803 / 0x801). Pixels are divided
/// by 255 so that 255 maps to exactly 1.0; images get shape (1, rows, cols).
Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path);

/// Writes pixels as round(255 * v). Inverse of load_idx for 8-bit data.
void write_idx(const Dataset& ds, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path);

/// Rows of "label,v1,...,vd" with every value in [0,1]. A non-numeric first
/// line is treated as a header.
Dataset load_csv(const std::filesystem::path& path, std::size_t num_classes = 0);

enum class SyntheticKind { two_gaussians, xor_grid };

SyntheticKind synthetic_kind_from_string(const std::string& name);

/// two_gaussians: class means (-1,0)/(+1,0), covariance 0.1*I, mapped into
///   the unit box by u = 0.5 + 0.3*x (clamped). Optimal boundary u0 = 0.5.
/// xor_grid: uniform points on [0,1]^2, label = parity of the 6x6 checker
///   cell, so no linear rule does much better than chance.
/// Labels alternate 0,1,0,1,... so classes are balanced.
Dataset gen_synthetic(SyntheticKind kind, std::size_t n, std::uint64_t seed);

/// Draws every target uniformly from the L-1 classes other than the label.
Dataset assign_targets(Dataset ds, std::uint64_t seed);

/// Deterministic shuffled split; the first part has `first_count` examples.
std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, std::size_t first_count,
                                          std::uint64_t seed);

/// First `n` examples (or all, if fewer).
Dataset head(const Dataset& ds, std::size_t n);

}  // namespace advbench
