#include "ape/corpus.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace ape {

std::vector<std::string> read_text_lines(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open corpus file " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    // whitespace normalization only: collapse runs, trim ends
    std::istringstream is(line);
    std::string word, norm;
    while (is >> word) {
      if (!norm.empty()) norm += ' ';
      norm += word;
    }
    lines.push_back(norm);
  }
  return lines;
}

namespace {

void write_lines(const std::vector<std::string>& lines, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write corpus file " + path);
  for (const auto& l : lines) f << l << '\n';
}

}  // namespace

void TripletCorpus::encode_with(const MergeTable& table) {
  encoded.clear();
  encoded.reserve(size());
  // word-level cache: encode is deterministic per word
  std::unordered_map<std::string, std::vector<int>> cache;
  auto enc = [&](const std::string& sentence) {
    std::vector<int> ids;
    std::istringstream is(sentence);
    std::string word;
    while (is >> word) {
      auto it = cache.find(word);
      if (it == cache.end()) it = cache.emplace(word, table.encode(word)).first;
      ids.insert(ids.end(), it->second.begin(), it->second.end());
    }
    return ids;
  };
  for (std::size_t i = 0; i < size(); ++i)
    encoded.push_back(TripletExample{enc(src[i]), enc(mt[i]), enc(pe[i])});
}

TripletCorpus TripletCorpus::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > size())
    throw std::invalid_argument("corpus slice [" + std::to_string(begin) + ", " +
                                std::to_string(end) + ") out of range for size " +
                                std::to_string(size()));
  TripletCorpus out;
  out.provenance = provenance + " [" + std::to_string(begin) + ":" + std::to_string(end) + ")";
  out.src.assign(src.begin() + static_cast<long>(begin), src.begin() + static_cast<long>(end));
  out.mt.assign(mt.begin() + static_cast<long>(begin), mt.begin() + static_cast<long>(end));
  out.pe.assign(pe.begin() + static_cast<long>(begin), pe.begin() + static_cast<long>(end));
  if (!encoded.empty())
    out.encoded.assign(encoded.begin() + static_cast<long>(begin),
                       encoded.begin() + static_cast<long>(end));
  return out;
}

std::vector<std::string> TripletCorpus::all_sentences() const {
  std::vector<std::string> out;
  out.reserve(3 * size());
  out.insert(out.end(), src.begin(), src.end());
  out.insert(out.end(), mt.begin(), mt.end());
  out.insert(out.end(), pe.begin(), pe.end());
  return out;
}

TripletCorpus load_corpus(const std::string& src_path, const std::string& mt_path,
                          const std::string& pe_path) {
  TripletCorpus c;
  c.src = read_text_lines(src_path);
  c.mt = read_text_lines(mt_path);
  c.pe = read_text_lines(pe_path);
  if (c.src.size() != c.mt.size() || c.src.size() != c.pe.size()) {
    std::ostringstream os;
    os << "corpus line counts differ: " << src_path << " has " << c.src.size() << ", " << mt_path
       << " has " << c.mt.size() << ", " << pe_path << " has " << c.pe.size();
    throw std::runtime_error(os.str());
  }
  c.provenance = src_path + " + " + mt_path + " + " + pe_path;
  return c;
}

void save_corpus(const TripletCorpus& corpus, const std::string& src_path,
                 const std::string& mt_path, const std::string& pe_path) {
  write_lines(corpus.src, src_path);
  write_lines(corpus.mt, mt_path);
  write_lines(corpus.pe, pe_path);
}

// ---- synthetic generator ------------------------------------------------------

namespace {
const char* kVowels = "aeiou";
const char* kTargetConsonants = "klmnprst";
const char* kSourceConsonants = "bdfgvz";
}  // namespace

void SynthSpec::validate() const {
  if (lexicon < 1) throw std::invalid_argument("synthetic lexicon must be >= 1");
  // word-shape enumeration stays collision-free up to here
  if (lexicon > 400) throw std::invalid_argument("synthetic lexicon capped at 400");
  for (double r : {sub_rate, drop_rate, ins_rate, swap_rate})
    if (r < 0.0 || r > 1.0)
      throw std::invalid_argument("corruption rates must lie in [0,1], got " + std::to_string(r));
  if (min_len < 1 || max_len < min_len)
    throw std::invalid_argument("need 1 <= min_len <= max_len, got " + std::to_string(min_len) +
                                ".." + std::to_string(max_len));
  if (domain != "generic" && domain != "tune")
    throw std::invalid_argument("synthetic domain must be 'generic' or 'tune', got '" + domain +
                                "'");
}

std::string SynthSpec::target_word(int index) const {
  std::string w;
  w += kTargetConsonants[index % 8];
  w += kVowels[(index / 8) % 5];
  w += kTargetConsonants[(index / 40) % 8];
  w += kVowels[(index / 320) % 5];
  return w;
}

std::string SynthSpec::source_word(int index) const {
  std::string w;
  w += kSourceConsonants[index % 6];
  w += kVowels[(index / 6) % 5];
  w += kSourceConsonants[(index / 30) % 6];
  w += kVowels[(index / 180) % 5];
  return w;
}

std::string SynthSpec::corrupted_form(int index) const {
  const int cls = index / 2;  // confusion pair id
  std::string w;
  w += 'w';  // 'w' appears in no real word of either language
  w += kVowels[cls % 5];
  w += kTargetConsonants[(cls / 5) % 8];
  w += kVowels[(cls / 40) % 5];
  return w;
}

TripletCorpus gen_synthetic(const SynthSpec& spec, int n) {
  spec.validate();
  if (n < 1) throw std::invalid_argument("gen_synthetic: n must be >= 1, got " + std::to_string(n));
  if (spec.lexicon == 1 && spec.sub_rate == 0.0 && spec.drop_rate == 0.0 && spec.ins_rate == 0.0 &&
      spec.swap_rate == 0.0)
    std::fprintf(stderr,
                 "warning: degenerate synthetic spec (lexicon 1, all corruption rates 0); "
                 "generating anyway\n");

  int lo = 0, hi = spec.lexicon;
  if (spec.domain_shift && spec.lexicon >= 2) {
    if (spec.domain == "generic")
      hi = spec.lexicon / 2;
    else
      lo = spec.lexicon / 2;
  }
  const int span = hi - lo;

  Rng rng(spec.seed);
  TripletCorpus c;
  {
    std::ostringstream os;
    os << "synthetic(seed=" << spec.seed << ", lexicon=" << spec.lexicon << ", sub=" << spec.sub_rate
       << ", drop=" << spec.drop_rate << ", ins=" << spec.ins_rate << ", swap=" << spec.swap_rate
       << ", domain=" << (spec.domain_shift ? spec.domain : std::string("all")) << ")";
    c.provenance = os.str();
  }
  for (int i = 0; i < n; ++i) {
    const int len = spec.min_len + static_cast<int>(rng.below(
                                       static_cast<std::uint64_t>(spec.max_len - spec.min_len + 1)));
    std::vector<int> words;
    for (int j = 0; j < len; ++j)
      words.push_back(lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(span))));

    std::vector<std::string> pe_w, src_w, mt_w;
    for (int w : words) {
      pe_w.push_back(spec.target_word(w));
      src_w.push_back(spec.source_word(w));
    }
    for (int w : words) {
      if (rng.bernoulli(spec.drop_rate)) continue;  // dropped from mt
      mt_w.push_back(rng.bernoulli(spec.sub_rate) ? spec.corrupted_form(w) : spec.target_word(w));
      if (rng.bernoulli(spec.ins_rate))
        mt_w.push_back(
            spec.target_word(lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(span)))));
    }
    for (std::size_t j = 0; j + 1 < mt_w.size();) {
      if (rng.bernoulli(spec.swap_rate)) {
        std::swap(mt_w[j], mt_w[j + 1]);
        j += 2;
      } else {
        ++j;
      }
    }

    auto join = [](const std::vector<std::string>& ws) {
      std::string s;
      for (const auto& w : ws) {
        if (!s.empty()) s += ' ';
        s += w;
      }
      return s;
    };
    c.src.push_back(join(src_w));
    c.mt.push_back(join(mt_w));
    c.pe.push_back(join(pe_w));
  }
  return c;
}

}  // namespace ape
