#include "ape/bpe.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace ape {

namespace {

bool is_punct_byte(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }

std::string escape_symbol(const std::string& s) {
  std::string out;
  for (char c : s) {
    const unsigned char u = static_cast<unsigned char>(c);
    if (c == '\\') {
      out += "\\\\";
    } else if (u < 0x21 || u == 0x7f) {
      char buf[8];
      std::snprintf(buf, sizeof buf, "\\x%02x", u);
      out += buf;
    } else {
      out += c;
    }
  }
  return out;
}

std::string unescape_symbol(const std::string& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out += s[i];
    } else if (i + 1 < s.size() && s[i + 1] == '\\') {
      out += '\\';
      ++i;
    } else if (i + 3 < s.size() && s[i + 1] == 'x') {
      out += static_cast<char>(std::stoi(s.substr(i + 2, 2), nullptr, 16));
      i += 3;
    } else {
      throw std::invalid_argument("bad escape in merge table symbol: " + s);
    }
  }
  return out;
}

}  // namespace

std::vector<std::vector<std::string>> pre_tokenize(const std::string& sentence) {
  std::vector<std::vector<std::string>> words;
  std::istringstream is(sentence);
  std::string w;
  while (is >> w) {
    std::vector<std::string> segments;
    std::string cur;
    bool cur_punct = false;
    for (char c : w) {
      const bool p = is_punct_byte(c);
      if (!cur.empty() && p != cur_punct) {
        segments.push_back(cur);
        cur.clear();
      }
      cur += c;
      cur_punct = p;
    }
    if (!cur.empty()) segments.push_back(cur);
    words.push_back(std::move(segments));
  }
  return words;
}

MergeTable::MergeTable() {
  symbols_ = {"<s>", "</s>", "<pad>", "<sep>", "<unk>", " "};  // eow surface is the space it restores
}

int MergeTable::char_id(char c) const {
  auto it = char_ids_.find(c);
  return it == char_ids_.end() ? kUnkId : it->second;
}

const std::string& MergeTable::symbol_text(int id) const {
  if (id < 0 || id >= vocab_size())
    throw std::invalid_argument("symbol id " + std::to_string(id) + " outside vocabulary of size " +
                                std::to_string(vocab_size()));
  return symbols_[static_cast<std::size_t>(id)];
}

MergeTable MergeTable::learn(const std::vector<std::string>& sentences, int num_merges) {
  if (num_merges < 0)
    throw std::invalid_argument("num_merges must be >= 0, got " + std::to_string(num_merges));
  MergeTable t;

  // Unit of learning: a segment as id sequence, word-final segments carrying
  // the end-of-word marker. Counted by occurrence; base-char ids assigned in
  // first-encounter order.
  std::map<std::string, long> segment_counts;  // key: final flag + raw text
  bool any = false;
  for (const std::string& s : sentences) {
    for (const auto& word : pre_tokenize(s)) {
      any = true;
      for (std::size_t i = 0; i < word.size(); ++i) {
        ++segment_counts[(i + 1 == word.size() ? "1" : "0") + word[i]];
        for (char c : word[i])
          if (!t.char_ids_.count(c)) {
            t.char_ids_[c] = t.vocab_size();
            t.symbols_.push_back(std::string(1, c));
          }
      }
    }
  }
  if (!any) throw std::invalid_argument("cannot learn BPE from an empty corpus");
  t.num_base_chars_ = static_cast<int>(t.char_ids_.size());

  std::vector<std::pair<std::vector<int>, long>> units;
  for (const auto& [key, count] : segment_counts) {
    std::vector<int> ids;
    for (std::size_t i = 1; i < key.size(); ++i) ids.push_back(t.char_ids_.at(key[i]));
    if (key[0] == '1') ids.push_back(kEowId);
    units.emplace_back(std::move(ids), count);
  }

  for (int round = 0; round < num_merges; ++round) {
    // most frequent adjacent pair; ties by surface strings, lexicographically
    std::map<std::pair<int, int>, long> pair_counts;
    for (const auto& [ids, count] : units)
      for (std::size_t i = 0; i + 1 < ids.size(); ++i)
        pair_counts[{ids[i], ids[i + 1]}] += count;
    if (pair_counts.empty()) break;  // nothing left to merge
    std::pair<int, int> best{-1, -1};
    long best_count = -1;
    for (const auto& [pair, count] : pair_counts) {
      if (count > best_count) {
        best = pair;
        best_count = count;
      } else if (count == best_count) {
        const auto lhs = std::make_pair(t.symbols_[static_cast<std::size_t>(pair.first)],
                                        t.symbols_[static_cast<std::size_t>(pair.second)]);
        const auto rhs = std::make_pair(t.symbols_[static_cast<std::size_t>(best.first)],
                                        t.symbols_[static_cast<std::size_t>(best.second)]);
        if (lhs < rhs) best = pair;
      }
    }
    const int merged = t.vocab_size();
    t.symbols_.push_back(t.symbols_[static_cast<std::size_t>(best.first)] +
                         t.symbols_[static_cast<std::size_t>(best.second)]);
    t.merges_.push_back(best);
    for (auto& [ids, count] : units) {
      std::vector<int> out;
      out.reserve(ids.size());
      for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i + 1 < ids.size() && ids[i] == best.first && ids[i + 1] == best.second) {
          out.push_back(merged);
          ++i;
        } else {
          out.push_back(ids[i]);
        }
      }
      ids = std::move(out);
    }
  }
  return t;
}

std::vector<int> MergeTable::encode(const std::string& sentence) const {
  std::vector<int> out;
  for (const auto& word : pre_tokenize(sentence)) {
    for (std::size_t si = 0; si < word.size(); ++si) {
      std::vector<int> ids;
      for (char c : word[si]) ids.push_back(char_id(c));
      if (si + 1 == word.size()) ids.push_back(kEowId);
      for (std::size_t mi = 0; mi < merges_.size(); ++mi) {
        const auto [l, r] = merges_[mi];
        const int merged = kNumSpecialSymbols + num_base_chars_ + static_cast<int>(mi);
        std::vector<int> next;
        next.reserve(ids.size());
        for (std::size_t i = 0; i < ids.size(); ++i) {
          if (i + 1 < ids.size() && ids[i] == l && ids[i + 1] == r) {
            next.push_back(merged);
            ++i;
          } else {
            next.push_back(ids[i]);
          }
        }
        ids = std::move(next);
      }
      out.insert(out.end(), ids.begin(), ids.end());
    }
  }
  return out;
}

std::string MergeTable::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    if (id < 0 || id >= vocab_size())
      throw std::invalid_argument("decode: id " + std::to_string(id) +
                                  " outside vocabulary of size " + std::to_string(vocab_size()));
    out += symbols_[static_cast<std::size_t>(id)];
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::string MergeTable::serialize() const {
  std::ostringstream os;
  os << "ape-bpe v1 bos=" << kBosId << " eos=" << kEosId << " pad=" << kPadId
     << " sep=" << kSepId << " unk=" << kUnkId << " eow=" << kEowId << '\n';
  os << "chars " << num_base_chars_ << '\n';
  for (int i = 0; i < num_base_chars_; ++i)
    os << escape_symbol(symbols_[static_cast<std::size_t>(kNumSpecialSymbols + i)]) << '\n';
  os << "merges " << merges_.size() << '\n';
  for (const auto& [l, r] : merges_) os << l << ' ' << r << '\n';
  return os.str();
}

MergeTable MergeTable::deserialize(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line.rfind("ape-bpe v1", 0) != 0)
    throw std::invalid_argument("not a merge table: bad header '" + line + "'");
  MergeTable t;
  std::string tag;
  int n = 0;
  is >> tag >> n;
  if (tag != "chars" || n < 0) throw std::invalid_argument("merge table: bad chars section");
  std::getline(is, line);
  for (int i = 0; i < n; ++i) {
    if (!std::getline(is, line)) throw std::invalid_argument("merge table: truncated chars");
    const std::string sym = unescape_symbol(line);
    if (sym.size() != 1) throw std::invalid_argument("merge table: multi-byte base char '" + line + "'");
    t.char_ids_[sym[0]] = t.vocab_size();
    t.symbols_.push_back(sym);
  }
  t.num_base_chars_ = n;
  int m = 0;
  is >> tag >> m;
  if (tag != "merges" || m < 0) throw std::invalid_argument("merge table: bad merges section");
  for (int i = 0; i < m; ++i) {
    int l = -1, r = -1;
    is >> l >> r;
    if (l < 0 || r < 0 || l >= t.vocab_size() || r >= t.vocab_size())
      throw std::invalid_argument("merge table: merge " + std::to_string(i) +
                                  " references unknown symbol");
    t.symbols_.push_back(t.symbols_[static_cast<std::size_t>(l)] +
                         t.symbols_[static_cast<std::size_t>(r)]);
    t.merges_.emplace_back(l, r);
  }
  return t;
}

void MergeTable::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write merge table to " + path);
  f << serialize();
}

MergeTable MergeTable::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read merge table from " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return deserialize(os.str());
}

}  // namespace ape
