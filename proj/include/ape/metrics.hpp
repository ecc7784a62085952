#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ape/types.hpp"

namespace ape {

using Tokens = std::vector<std::string>;

Tokens tokenize_whitespace(const std::string& text);
Tokens lowercase_tokens(Tokens tokens);

// Corpus-level BLEU in [0,100]: geometric mean of clipped n-gram precisions
// times the brevity penalty. With smoothing on, n>1 precisions get add-one
// smoothing (desk-scale corpora routinely have zero 4-gram matches).
double bleu_corpus(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs,
                   int max_n = 4, bool smoothing = true);
double bleu_corpus_text(const std::vector<std::string>& hyps,
                        const std::vector<std::string>& refs, int max_n = 4,
                        bool smoothing = true);

struct TerBreakdown {
  long insertions = 0;
  long deletions = 0;
  long substitutions = 0;
  long shifts = 0;
  long ref_length = 0;

  long total_edits() const { return insertions + deletions + substitutions + shifts; }
  double score() const;
  TerBreakdown& operator+=(const TerBreakdown& o);
};

// Translation edit rate: greedy shift search (repeatedly apply the block move
// most reducing edit distance; the moved span must occur contiguously in the
// reference) plus Levenshtein insert/delete/substitute. Edits transform the
// hypothesis into the reference.
TerBreakdown ter(const Tokens& hyp, const Tokens& ref);
TerBreakdown corpus_ter(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs);
TerBreakdown corpus_ter_text(const std::vector<std::string>& hyps,
                             const std::vector<std::string>& refs);

// Per-operation error reduction of a system against the raw-MT baseline,
// both measured against pe. Undefined (rather than infinite) when the
// baseline count for an operation is zero.
struct EditReduction {
  TerBreakdown baseline;  // mt vs pe
  TerBreakdown system;    // hyp vs pe
  std::optional<double> ins, del, sub, shift;
};

EditReduction edit_reduction_report(const std::vector<std::string>& mt,
                                    const std::vector<std::string>& pe,
                                    const std::vector<std::string>& hyps);
std::string edit_report_tsv(const EditReduction& r, const std::string& system_name);
std::string edit_report_text(const EditReduction& r, const std::string& system_name);

}  // namespace ape
