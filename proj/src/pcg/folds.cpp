#include "qivc/pcg/folds.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "qivc/error.hpp"
#include "qivc/rng.hpp"

namespace qivc::pcg {

namespace {

template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

FoldSplit finish(std::vector<std::vector<std::size_t>> folds, std::span<const Label> labels) {
  FoldSplit split;
  split.class_counts.assign(folds.size(), {0, 0});
  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::sort(folds[f].begin(), folds[f].end());
    for (auto i : folds[f]) ++split.class_counts[f][static_cast<std::size_t>(labels[i])];
  }
  split.folds = std::move(folds);
  return split;
}

}  // namespace

std::vector<std::size_t> FoldSplit::complement(std::size_t f) const {
  std::vector<std::size_t> out;
  for (std::size_t g = 0; g < folds.size(); ++g)
    if (g != f) out.insert(out.end(), folds[g].begin(), folds[g].end());
  std::sort(out.begin(), out.end());
  return out;
}

FoldSplit stratified_kfold(std::span<const Label> labels, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("stratified_kfold: need k >= 2");
  std::array<std::vector<std::size_t>, 2> members;
  for (std::size_t i = 0; i < labels.size(); ++i) members[static_cast<std::size_t>(labels[i])].push_back(i);
  for (std::size_t c = 0; c < 2; ++c) {
    if (members[c].size() < k) {
      throw DataError("stratified_kfold: class '" + std::string(to_string(static_cast<Label>(c))) + "' has " +
                      std::to_string(members[c].size()) + " members, fewer than k=" + std::to_string(k));
    }
  }
  Rng rng = Rng::derive(seed, 0xf01d);
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t position = 0;
  for (auto& m : members) {
    shuffle(m, rng);
    for (auto idx : m) folds[position++ % k].push_back(idx);
  }
  return finish(std::move(folds), labels);
}

FoldSplit grouped_stratified_kfold(std::span<const Label> labels, std::span<const std::string> groups, std::size_t k,
                                   std::uint64_t seed) {
  if (k < 2) throw ConfigError("grouped_stratified_kfold: need k >= 2");
  if (groups.size() != labels.size()) throw DataError("grouped_stratified_kfold: one group id per segment required");
  std::map<std::string, std::vector<std::size_t>> by_group;
  for (std::size_t i = 0; i < groups.size(); ++i) by_group[groups[i]].push_back(i);
  std::array<std::vector<const std::vector<std::size_t>*>, 2> per_class;
  for (const auto& [id, members] : by_group) {
    std::size_t abnormal = 0;
    for (auto i : members) abnormal += labels[i] == Label::abnormal;
    per_class[abnormal * 2 > members.size() ? 1 : 0].push_back(&members);
  }
  for (std::size_t c = 0; c < 2; ++c) {
    if (per_class[c].size() < k) {
      throw DataError("grouped_stratified_kfold: class '" + std::string(to_string(static_cast<Label>(c))) + "' has " +
                      std::to_string(per_class[c].size()) + " recordings, fewer than k=" + std::to_string(k));
    }
  }
  Rng rng = Rng::derive(seed, 0x6f01d);
  std::vector<std::vector<std::size_t>> folds(k);
  for (std::size_t c = 0; c < 2; ++c) {
    shuffle(per_class[c], rng);
    std::vector<std::size_t> load(k, 0);
    for (const auto* members : per_class[c]) {
      const auto f = static_cast<std::size_t>(std::min_element(load.begin(), load.end()) - load.begin());
      folds[f].insert(folds[f].end(), members->begin(), members->end());
      load[f] += members->size();
    }
  }
  return finish(std::move(folds), labels);
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_holdout(
    std::span<const std::size_t> indices, std::span<const Label> labels, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0 && fraction < 1)) throw ConfigError("stratified_holdout: fraction must lie in [0,1)");
  std::array<std::vector<std::size_t>, 2> members;
  for (auto i : indices) members[static_cast<std::size_t>(labels[i])].push_back(i);
  Rng rng = Rng::derive(seed, 0x7a1);
  std::vector<std::size_t> train, val;
  for (auto& m : members) {
    shuffle(m, rng);
    auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(m.size())));
    if (fraction > 0 && take == 0 && m.size() >= 2) take = 1;
    val.insert(val.end(), m.begin(), m.begin() + static_cast<std::ptrdiff_t>(take));
    train.insert(train.end(), m.begin() + static_cast<std::ptrdiff_t>(take), m.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  return {std::move(train), std::move(val)};
}

}  // namespace qivc::pcg
