#include "ape/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace ape {

Tokens tokenize_whitespace(const std::string& text) {
  Tokens out;
  std::istringstream is(text);
  std::string t;
  while (is >> t) out.push_back(t);
  return out;
}

Tokens lowercase_tokens(Tokens tokens) {
  for (auto& t : tokens)
    for (auto& c : t) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return tokens;
}

// ---- BLEU -------------------------------------------------------------------

namespace {

std::map<std::vector<std::string>, long> ngram_counts(const Tokens& t, int n) {
  std::map<std::vector<std::string>, long> counts;
  if (static_cast<int>(t.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= t.size(); ++i)
    ++counts[std::vector<std::string>(t.begin() + static_cast<long>(i),
                                      t.begin() + static_cast<long>(i) + n)];
  return counts;
}

}  // namespace

double bleu_corpus(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs, int max_n,
                   bool smoothing) {
  if (hyps.empty()) throw std::invalid_argument("bleu_corpus: empty corpus");
  if (hyps.size() != refs.size())
    throw std::invalid_argument("bleu_corpus: " + std::to_string(hyps.size()) +
                                " hypotheses vs " + std::to_string(refs.size()) + " references");
  if (max_n < 1) throw std::invalid_argument("bleu_corpus: max_n must be >= 1");

  std::vector<long> match(static_cast<std::size_t>(max_n), 0);
  std::vector<long> total(static_cast<std::size_t>(max_n), 0);
  long hyp_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    hyp_len += static_cast<long>(hyps[i].size());
    ref_len += static_cast<long>(refs[i].size());
    for (int n = 1; n <= max_n; ++n) {
      auto h = ngram_counts(hyps[i], n);
      auto r = ngram_counts(refs[i], n);
      for (const auto& [gram, count] : h) {
        total[static_cast<std::size_t>(n - 1)] += count;
        auto it = r.find(gram);
        if (it != r.end())
          match[static_cast<std::size_t>(n - 1)] += std::min(count, it->second);
      }
    }
  }
  if (hyp_len == 0) return 0.0;

  double log_prec = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    long m = match[static_cast<std::size_t>(n - 1)];
    long c = total[static_cast<std::size_t>(n - 1)];
    if (smoothing && n > 1) {
      ++m;
      ++c;
    }
    if (m == 0 || c == 0) return 0.0;
    log_prec += std::log(static_cast<double>(m) / static_cast<double>(c));
  }
  const double bp = hyp_len >= ref_len
                        ? 1.0
                        : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
  return 100.0 * bp * std::exp(log_prec / max_n);
}

double bleu_corpus_text(const std::vector<std::string>& hyps, const std::vector<std::string>& refs,
                        int max_n, bool smoothing) {
  std::vector<Tokens> h, r;
  for (const auto& s : hyps) h.push_back(tokenize_whitespace(s));
  for (const auto& s : refs) r.push_back(tokenize_whitespace(s));
  return bleu_corpus(h, r, max_n, smoothing);
}

// ---- TER --------------------------------------------------------------------

double TerBreakdown::score() const {
  if (ref_length == 0) throw std::invalid_argument("TER undefined for an empty reference");
  return static_cast<double>(total_edits()) / static_cast<double>(ref_length);
}

TerBreakdown& TerBreakdown::operator+=(const TerBreakdown& o) {
  insertions += o.insertions;
  deletions += o.deletions;
  substitutions += o.substitutions;
  shifts += o.shifts;
  ref_length += o.ref_length;
  return *this;
}

namespace {

constexpr int kMaxShiftSize = 10;

long edit_distance(const Tokens& hyp, const Tokens& ref) {
  const std::size_t h = hyp.size(), r = ref.size();
  std::vector<long> prev(r + 1), cur(r + 1);
  for (std::size_t j = 0; j <= r; ++j) prev[j] = static_cast<long>(j);
  for (std::size_t i = 1; i <= h; ++i) {
    cur[0] = static_cast<long>(i);
    for (std::size_t j = 1; j <= r; ++j) {
      const long sub = prev[j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[r];
}

// Backtraced counts: edits that turn hyp into ref. A word the hypothesis
// lacks is an insertion, an extra hypothesis word is a deletion.
void edit_counts(const Tokens& hyp, const Tokens& ref, TerBreakdown& out) {
  const std::size_t h = hyp.size(), r = ref.size();
  std::vector<std::vector<long>> d(h + 1, std::vector<long>(r + 1, 0));
  for (std::size_t i = 0; i <= h; ++i) d[i][0] = static_cast<long>(i);
  for (std::size_t j = 0; j <= r; ++j) d[0][j] = static_cast<long>(j);
  for (std::size_t i = 1; i <= h; ++i)
    for (std::size_t j = 1; j <= r; ++j)
      d[i][j] = std::min({d[i - 1][j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1), d[i - 1][j] + 1,
                          d[i][j - 1] + 1});
  std::size_t i = h, j = r;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && hyp[i - 1] == ref[j - 1] && d[i][j] == d[i - 1][j - 1]) {
      --i;
      --j;
    } else if (i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + 1) {
      ++out.substitutions;
      --i;
      --j;
    } else if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
      ++out.deletions;
      --i;
    } else {
      ++out.insertions;
      --j;
    }
  }
}

Tokens apply_shift(const Tokens& seq, std::size_t start, std::size_t len, std::size_t dest) {
  Tokens out;
  out.reserve(seq.size());
  for (std::size_t k = 0; k < seq.size(); ++k)
    if (k < start || k >= start + len) out.push_back(seq[k]);
  out.insert(out.begin() + static_cast<long>(dest), seq.begin() + static_cast<long>(start),
             seq.begin() + static_cast<long>(start + len));
  return out;
}

}  // namespace

TerBreakdown ter(const Tokens& hyp, const Tokens& ref) {
  if (ref.empty()) throw std::invalid_argument("TER undefined for an empty reference");
  TerBreakdown out;
  out.ref_length = static_cast<long>(ref.size());

  // spans that occur contiguously in the reference are eligible to move
  std::set<Tokens> ref_spans;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    Tokens span;
    for (std::size_t l = 1; l <= static_cast<std::size_t>(kMaxShiftSize) && i + l <= ref.size(); ++l) {
      span.push_back(ref[i + l - 1]);
      ref_spans.insert(span);
    }
  }

  Tokens cur = hyp;
  long dist = edit_distance(cur, ref);
  while (dist > 0 && !cur.empty()) {
    long best_gain = 0;
    Tokens best;
    for (std::size_t start = 0; start < cur.size(); ++start) {
      Tokens span;
      for (std::size_t len = 1;
           len <= static_cast<std::size_t>(kMaxShiftSize) && start + len <= cur.size(); ++len) {
        span.push_back(cur[start + len - 1]);
        if (!ref_spans.count(span)) continue;
        for (std::size_t dest = 0; dest + len <= cur.size(); ++dest) {
          if (dest == start) continue;
          Tokens cand = apply_shift(cur, start, len, dest);
          const long gain = dist - edit_distance(cand, ref);
          if (gain > best_gain) {
            best_gain = gain;
            best = std::move(cand);
          }
        }
      }
    }
    if (best_gain <= 0) break;
    cur = std::move(best);
    dist -= best_gain;
    ++out.shifts;
  }
  edit_counts(cur, ref, out);
  return out;
}

TerBreakdown corpus_ter(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs) {
  if (hyps.size() != refs.size())
    throw std::invalid_argument("corpus_ter: " + std::to_string(hyps.size()) + " hypotheses vs " +
                                std::to_string(refs.size()) + " references");
  if (hyps.empty()) throw std::invalid_argument("corpus_ter: empty corpus");
  TerBreakdown total;
  for (std::size_t i = 0; i < hyps.size(); ++i) total += ter(hyps[i], refs[i]);
  return total;
}

TerBreakdown corpus_ter_text(const std::vector<std::string>& hyps,
                             const std::vector<std::string>& refs) {
  std::vector<Tokens> h, r;
  for (const auto& s : hyps) h.push_back(tokenize_whitespace(s));
  for (const auto& s : refs) r.push_back(tokenize_whitespace(s));
  return corpus_ter(h, r);
}

// ---- edit reduction -----------------------------------------------------------

namespace {

std::optional<double> reduction(long base, long sys) {
  if (base == 0) return std::nullopt;
  return 100.0 * static_cast<double>(base - sys) / static_cast<double>(base);
}

std::string fmt_pct(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.1f", *v);
  return buf;
}

}  // namespace

EditReduction edit_reduction_report(const std::vector<std::string>& mt,
                                    const std::vector<std::string>& pe,
                                    const std::vector<std::string>& hyps) {
  if (mt.size() != pe.size() || hyps.size() != pe.size())
    throw std::invalid_argument("edit_reduction_report: corpora sizes differ (" +
                                std::to_string(mt.size()) + " mt, " + std::to_string(pe.size()) +
                                " pe, " + std::to_string(hyps.size()) + " hyp)");
  EditReduction r;
  r.baseline = corpus_ter_text(mt, pe);
  r.system = corpus_ter_text(hyps, pe);
  r.ins = reduction(r.baseline.insertions, r.system.insertions);
  r.del = reduction(r.baseline.deletions, r.system.deletions);
  r.sub = reduction(r.baseline.substitutions, r.system.substitutions);
  r.shift = reduction(r.baseline.shifts, r.system.shifts);
  return r;
}

std::string edit_report_tsv(const EditReduction& r, const std::string& system_name) {
  std::ostringstream os;
  os << "system\t%In\t%De\t%Su\t%Sh\n";
  os << system_name << '\t' << fmt_pct(r.ins) << '\t' << fmt_pct(r.del) << '\t' << fmt_pct(r.sub)
     << '\t' << fmt_pct(r.shift) << '\n';
  return os.str();
}

std::string edit_report_text(const EditReduction& r, const std::string& system_name) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-24s %8s %8s %8s %8s\n", "", "%In", "%De", "%Su", "%Sh");
  os << line;
  std::snprintf(line, sizeof line, "%-24s %8s %8s %8s %8s\n", system_name.c_str(),
                fmt_pct(r.ins).c_str(), fmt_pct(r.del).c_str(), fmt_pct(r.sub).c_str(),
                fmt_pct(r.shift).c_str());
  os << line;
  return os.str();
}

}  // namespace ape
