#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "ape/types.hpp"

namespace ape {

// Byte-pair encoding learned jointly over pooled src+mt+pe text, producing
// the single shared vocabulary every side of the model consumes.
//
// Id layout: the five reserved ids, then the end-of-word marker, then base
// characters in first-encounter order, then one id per merge in learned
// order. Each merge mints a fresh id, so
//   vocab_size == num_merges + num_base_chars + num_special_symbols
// holds exactly.
//
// Pre-tokenization: whitespace split, then each word splits into letter and
// punctuation segments. Merges never cross segment boundaries; the marker
// closes each word, which is what lets decode restore spacing exactly.
class MergeTable {
 public:
  static constexpr int kEowId = kNumSpecialIds;  // end-of-word marker symbol
  static constexpr int kNumSpecialSymbols = kNumSpecialIds + 1;

  static MergeTable learn(const std::vector<std::string>& sentences, int num_merges);

  std::vector<int> encode(const std::string& sentence) const;
  std::string decode(const std::vector<int>& ids) const;

  int vocab_size() const { return static_cast<int>(symbols_.size()); }
  int num_merges() const { return static_cast<int>(merges_.size()); }
  int num_base_chars() const { return num_base_chars_; }
  const std::string& symbol_text(int id) const;

  std::string serialize() const;
  static MergeTable deserialize(const std::string& text);
  void save(const std::string& path) const;
  static MergeTable load(const std::string& path);

 private:
  MergeTable();
  int char_id(char c) const;

  std::vector<std::string> symbols_;             // id -> surface text
  std::unordered_map<char, int> char_ids_;
  std::vector<std::pair<int, int>> merges_;      // learned order
  int num_base_chars_ = 0;
};

// Whitespace words further split into letter/punctuation segments.
std::vector<std::vector<std::string>> pre_tokenize(const std::string& sentence);

}  // namespace ape
