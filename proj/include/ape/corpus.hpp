#pragma once

#include <string>
#include <vector>

#include "ape/bpe.hpp"
#include "ape/types.hpp"

namespace ape {

// Parallel (src, mt, pe) sentences; line i of each file is one triplet.
struct TripletCorpus {
  std::vector<std::string> src, mt, pe;
  std::vector<TripletExample> encoded;  // filled by encode_with
  std::string provenance;

  std::size_t size() const { return src.size(); }
  void encode_with(const MergeTable& table);
  TripletCorpus slice(std::size_t begin, std::size_t end) const;
  std::vector<std::string> all_sentences() const;  // pooled src+mt+pe, for BPE
};

// One sentence per line, whitespace-normalized.
std::vector<std::string> read_text_lines(const std::string& path);

TripletCorpus load_corpus(const std::string& src_path, const std::string& mt_path,
                          const std::string& pe_path);
void save_corpus(const TripletCorpus& corpus, const std::string& src_path,
                 const std::string& mt_path, const std::string& pe_path);

// Toy triplet generator. pe comes from a toy grammar over a small lexicon;
// src is its word-for-word translation through a bilingual lexicon; mt is pe
// corrupted per the rates. Substitutions collapse a confusion pair of target
// words onto one corrupted surface form, so mt alone cannot tell which member
// to restore while src determines it exactly.
struct SynthSpec {
  int lexicon = 40;  // target lexicon size; consecutive words pair into confusion classes
  double sub_rate = 0.2;
  double drop_rate = 0.0;
  double ins_rate = 0.0;
  double swap_rate = 0.0;
  bool domain_shift = false;           // split lexicon into generic/tune halves
  std::string domain = "generic";      // generic | tune, honored with domain_shift
  int min_len = 3;
  int max_len = 8;
  std::uint64_t seed = 1;

  void validate() const;
  std::string target_word(int index) const;
  std::string source_word(int index) const;
  std::string corrupted_form(int index) const;  // shared by both members of a pair
};

TripletCorpus gen_synthetic(const SynthSpec& spec, int n);

}  // namespace ape
