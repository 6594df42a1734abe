#include "emad/report.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "emad/common.hpp"

namespace emad {

namespace {

std::map<std::vector<int>, double> frequencies(const std::vector<std::vector<int>>& seqs, int n) {
  std::map<std::vector<int>, double> counts;
  double total = 0;
  for (const auto& s : seqs)
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= s.size(); ++i) {
      counts[std::vector<int>(s.begin() + static_cast<std::ptrdiff_t>(i), s.begin() + static_cast<std::ptrdiff_t>(i) + n)] += 1;
      total += 1;
    }
  for (auto& [g, c] : counts) c /= total;
  return counts;
}

}  // namespace

std::vector<NgramDiff> ngram_diffs(const std::vector<std::vector<int>>& malicious,
                                   const std::vector<std::vector<int>>& regular, int n, std::size_t top) {
  if (n < 1) throw Error("ngram_diffs: n must be positive");
  const auto fm = frequencies(malicious, n);
  const auto fr = frequencies(regular, n);
  std::map<std::vector<int>, NgramDiff> all;
  for (const auto& [g, f] : fm) all[g].malicious = f;
  for (const auto& [g, f] : fr) all[g].regular = f;
  std::vector<NgramDiff> out;
  for (auto& [g, d] : all) {
    d.gram = g;
    d.diff = d.malicious - d.regular;
    out.push_back(d);
  }
  std::stable_sort(out.begin(), out.end(), [](const NgramDiff& a, const NgramDiff& b) {
    return std::abs(a.diff) > std::abs(b.diff);
  });
  if (out.size() > top) out.resize(top);
  return out;
}

std::string join_ids(const std::vector<int>& ids, char sep) {
  std::string s;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) s += sep;
    s += std::to_string(ids[i]);
  }
  return s;
}

std::vector<int> split_ids(const std::string& text, char sep) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, sep))
    if (!part.empty()) out.push_back(std::stoi(part));
  return out;
}

}  // namespace emad
