#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qivc/pcg/signal.hpp"

namespace qivc::pcg {

/// Partition of segment indices into k folds.
struct FoldSplit {
  std::vector<std::vector<std::size_t>> folds;          // sorted ascending
  std::vector<std::array<std::size_t, 2>> class_counts;  // [normal, abnormal] per fold

  std::size_t k() const { return folds.size(); }
  /// Every index outside fold `f`, ascending.
  std::vector<std::size_t> complement(std::size_t f) const;
  friend bool operator==(const FoldSplit&, const FoldSplit&) = default;
};

enum class FoldGrouping { segment, recording };

/// Shuffles each class with `seed` and deals it round-robin, continuing the
/// deal position across classes, so fold sizes differ by at most one and
/// every class is within one member of its even share. Needs >= k members
/// per class.
FoldSplit stratified_kfold(std::span<const Label> labels, std::size_t k, std::uint64_t seed);

/// Whole recordings go to a single fold; each class's recordings are shuffled
/// and placed on the fold currently holding the fewest segments of that class.
FoldSplit grouped_stratified_kfold(std::span<const Label> labels, std::span<const std::string> groups, std::size_t k,
                                   std::uint64_t seed);

/// Splits `indices` into (train, validation) with round(fraction·n_c)
/// validation members per class (at least one when the class has two or more).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_holdout(
    std::span<const std::size_t> indices, std::span<const Label> labels, double fraction, std::uint64_t seed);

}  // namespace qivc::pcg
