#pragma once

// Exhaustive lower-bound oracle for TER: breadth-first search over ALL block
// moves (no matching constraint, a superset of the metric's allowed shifts),
// scoring each reachable arrangement as moves-so-far + its own edit distance.
// Independent of src/metrics.cpp: it carries its own Levenshtein.

#include <map>
#include <queue>
#include <string>
#include <vector>

namespace ape::testing {

using Seq = std::vector<std::string>;

inline long oracle_levenshtein(const Seq& a, const Seq& b) {
  std::vector<long> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<long>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<long>(i);
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const long sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline std::string seq_key(const Seq& s) {
  std::string k;
  for (const auto& t : s) {
    k += t;
    k += '\x01';
  }
  return k;
}

// All arrangements reachable from `start` by block moves, with the minimum
// number of moves to reach each.
inline std::map<std::string, std::pair<Seq, long>> reachable_arrangements(const Seq& start) {
  std::map<std::string, std::pair<Seq, long>> seen;
  std::queue<Seq> frontier;
  seen[seq_key(start)] = {start, 0};
  frontier.push(start);
  while (!frontier.empty()) {
    Seq cur = frontier.front();
    frontier.pop();
    const long depth = seen[seq_key(cur)].second;
    for (std::size_t i = 0; i < cur.size(); ++i) {
      for (std::size_t len = 1; i + len <= cur.size(); ++len) {
        for (std::size_t dest = 0; dest + len <= cur.size(); ++dest) {
          if (dest == i) continue;
          Seq cand;
          cand.reserve(cur.size());
          for (std::size_t k = 0; k < cur.size(); ++k)
            if (k < i || k >= i + len) cand.push_back(cur[k]);
          cand.insert(cand.begin() + static_cast<long>(dest), cur.begin() + static_cast<long>(i),
                      cur.begin() + static_cast<long>(i + len));
          const std::string key = seq_key(cand);
          if (!seen.count(key)) {
            seen[key] = {cand, depth + 1};
            frontier.push(cand);
          }
        }
      }
    }
  }
  return seen;
}

inline long exhaustive_min_edits(const Seq& hyp, const Seq& ref) {
  long best = oracle_levenshtein(hyp, ref);
  for (const auto& [key, state] : reachable_arrangements(hyp)) {
    const long total = state.second + oracle_levenshtein(state.first, ref);
    best = std::min(best, total);
  }
  return best;
}

}  // namespace ape::testing
