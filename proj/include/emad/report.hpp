#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace emad {

struct NgramDiff {
  std::vector<int> gram;
  double malicious = 0.0;  // share of all malicious n-grams
  double regular = 0.0;
  double diff = 0.0;       // malicious - regular
};

/// Relative n-gram frequencies per class and their difference, sorted by
/// |diff| descending (ties by n-gram), truncated to `top`.
std::vector<NgramDiff> ngram_diffs(const std::vector<std::vector<int>>& malicious,
                                   const std::vector<std::vector<int>>& regular, int n, std::size_t top = 10);

std::string join_ids(const std::vector<int>& ids, char sep = '-');
std::vector<int> split_ids(const std::string& text, char sep = '-');

}  // namespace emad
