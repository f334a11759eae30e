#ifndef MVD_TOKENIZER_HPP_
#define MVD_TOKENIZER_HPP_

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "mvd/common.hpp"

namespace mvd {

// Reserved ids. The vocab file lists these five tokens first, one token
// per line, line number == id.
enum SpecialId : int {
  kClsId = 0,
  kSepId = 1,
  kPadId = 2,
  kUnkId = 3,
  kMaskId = 4,
};

inline const std::vector<std::string>& special_tokens() {
  static const std::vector<std::string> kSpecials = {"[CLS]", "[SEP]", "[PAD]",
                                                     "[UNK]", "[MASK]"};
  return kSpecials;
}

class Vocab {
 public:
  Vocab() {
    for (const auto& s : special_tokens()) add(s);
  }

  int add(const std::string& token) {
    auto it = ids_.find(token);
    if (it != ids_.end()) return it->second;
    int id = static_cast<int>(tokens_.size());
    tokens_.push_back(token);
    ids_.emplace(token, id);
    return id;
  }

  int id_of(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? -1 : it->second;
  }

  bool contains(const std::string& token) const { return ids_.count(token) != 0; }
  const std::string& token_of(int id) const { return tokens_.at(static_cast<size_t>(id)); }
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  void save(std::ostream& out) const {
    for (const auto& t : tokens_) out << t << '\n';
  }

  static Vocab load(std::istream& in) {
    Vocab v;
    v.tokens_.clear();
    v.ids_.clear();
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      v.add(line);
    }
    const auto& sp = special_tokens();
    for (size_t i = 0; i < sp.size(); ++i) {
      if (v.size() <= static_cast<int>(i) || v.token_of(static_cast<int>(i)) != sp[i])
        throw Error("vocab file missing special tokens in reserved order");
    }
    return v;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

struct TokenSequence {
  std::vector<int> ids;        // length exactly max_len
  std::vector<uint8_t> mask;   // 1 for real positions, 0 for pad
  int true_length = 0;
};

namespace detail {

inline bool is_word_byte(unsigned char c) {
  if (std::isspace(c)) return false;
  if (c < 0x80 && std::ispunct(c)) return false;
  return true;
}

}  // namespace detail

// Whitespace plus punctuation boundaries; every ASCII punctuation byte is
// its own pre-token. Bytes >= 0x80 count as word bytes.
inline std::vector<std::string> pretokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
    } else if (c < 0x80 && std::ispunct(c)) {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
      out.push_back(std::string(1, static_cast<char>(c)));
    } else {
      cur.push_back(static_cast<char>(c));
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// Greedy longest-match-first subword split. Non-initial pieces match with
// the "##" prefix; any uncoverable position collapses the word to [UNK].
inline std::vector<std::string> wordpiece_tokenize(const std::string& word,
                                                   const Vocab& vocab) {
  std::vector<std::string> pieces;
  size_t pos = 0;
  while (pos < word.size()) {
    size_t best = 0;
    std::string best_tok;
    for (size_t len = word.size() - pos; len >= 1; --len) {
      std::string cand = word.substr(pos, len);
      if (pos > 0) cand = "##" + cand;
      if (vocab.contains(cand)) {
        best = len;
        best_tok = std::move(cand);
        break;
      }
    }
    if (best == 0) return {special_tokens()[kUnkId]};
    pieces.push_back(std::move(best_tok));
    pos += best;
  }
  return pieces;
}

namespace detail {

// Initial segmentation of a word for vocab training: first byte plain,
// later bytes carry the continuation prefix.
inline std::vector<std::string> char_split(const std::string& word) {
  std::vector<std::string> syms;
  syms.reserve(word.size());
  for (size_t i = 0; i < word.size(); ++i) {
    std::string s = i == 0 ? std::string() : std::string("##");
    s.push_back(word[i]);
    syms.push_back(std::move(s));
  }
  return syms;
}

inline std::string merge_symbols(const std::string& left, const std::string& right) {
  std::string r = right;
  if (r.rfind("##", 0) == 0) r.erase(0, 2);
  return left + r;
}

}  // namespace detail

// WordPiece vocabulary training. Starts from single characters and
// greedily merges the adjacent pair (a,b) with the highest likelihood
// score count(ab) / (count(a) * count(b)), requiring
// count(ab) >= min_pair_count. Ties break toward the lexicographically
// smallest (a,b) so training is deterministic. With byte_fallback every
// printable ASCII byte gets a base piece in both positions, so unseen
// words of that alphabet still tokenize instead of collapsing to [UNK].
inline Vocab train_vocab(const std::vector<std::string>& corpus, int vocab_size,
                         int min_pair_count, bool byte_fallback = true) {
  if (corpus.empty()) throw Error("empty corpus");

  // Word frequency table over pre-tokens.
  std::map<std::string, int64_t> word_freq;
  for (const auto& text : corpus) {
    for (auto& w : pretokenize(text)) word_freq[w] += 1;
  }
  if (word_freq.empty()) throw Error("empty corpus");

  struct Word {
    std::vector<std::string> syms;
    int64_t freq;
  };
  std::vector<Word> words;
  words.reserve(word_freq.size());
  for (const auto& [w, f] : word_freq) words.push_back({detail::char_split(w), f});

  Vocab vocab;
  if (byte_fallback) {
    for (char c = '!'; c <= '~'; ++c) {
      vocab.add(std::string(1, c));
      vocab.add("##" + std::string(1, c));
    }
  }
  // Alphabet in first-seen deterministic order (words are map-sorted).
  for (const auto& w : words) {
    for (const auto& s : w.syms) vocab.add(s);
  }
  if (vocab_size < vocab.size())
    throw Error("vocab_size smaller than specials + alphabet (" +
                std::to_string(vocab.size()) + ")");

  while (vocab.size() < vocab_size) {
    std::map<std::pair<std::string, std::string>, int64_t> pair_count;
    std::map<std::string, int64_t> sym_count;
    for (const auto& w : words) {
      for (size_t i = 0; i < w.syms.size(); ++i) {
        sym_count[w.syms[i]] += w.freq;
        if (i + 1 < w.syms.size()) pair_count[{w.syms[i], w.syms[i + 1]}] += w.freq;
      }
    }
    bool found = false;
    std::pair<std::string, std::string> best_pair;
    double best_score = 0.0;
    for (const auto& [pr, cnt] : pair_count) {
      if (cnt < min_pair_count) continue;
      double score = static_cast<double>(cnt) /
                     (static_cast<double>(sym_count[pr.first]) *
                      static_cast<double>(sym_count[pr.second]));
      // Map iteration is ordered, so ">" keeps the lexicographically
      // smallest pair on ties.
      if (!found || score > best_score) {
        found = true;
        best_score = score;
        best_pair = pr;
      }
    }
    if (!found) break;

    std::string merged = detail::merge_symbols(best_pair.first, best_pair.second);
    vocab.add(merged);
    for (auto& w : words) {
      std::vector<std::string> out;
      out.reserve(w.syms.size());
      size_t i = 0;
      while (i < w.syms.size()) {
        if (i + 1 < w.syms.size() && w.syms[i] == best_pair.first &&
            w.syms[i + 1] == best_pair.second) {
          out.push_back(merged);
          i += 2;
        } else {
          out.push_back(w.syms[i]);
          ++i;
        }
      }
      w.syms = std::move(out);
    }
  }
  return vocab;
}

// Packs text into a fixed-length id sequence: [CLS] pieces... [SEP] pad...
// The piece tail is truncated so [CLS] and [SEP] always fit.
inline TokenSequence encode(std::string_view text, const Vocab& vocab, int max_len) {
  if (max_len < 3) throw Error("max_len must be >= 3");
  std::vector<int> piece_ids;
  for (const auto& word : pretokenize(text)) {
    for (const auto& piece : wordpiece_tokenize(word, vocab)) {
      int id = vocab.id_of(piece);
      piece_ids.push_back(id < 0 ? kUnkId : id);
    }
  }
  const size_t budget = static_cast<size_t>(max_len) - 2;
  if (piece_ids.size() > budget) piece_ids.resize(budget);

  TokenSequence seq;
  seq.ids.assign(static_cast<size_t>(max_len), kPadId);
  seq.mask.assign(static_cast<size_t>(max_len), 0);
  size_t p = 0;
  seq.ids[p++] = kClsId;
  for (int id : piece_ids) seq.ids[p++] = id;
  seq.ids[p++] = kSepId;
  seq.true_length = static_cast<int>(p);
  for (size_t i = 0; i < p; ++i) seq.mask[i] = 1;
  return seq;
}

// Strip "##" and join; word starts are space separated. Exact inverse of
// encode only for punctuation-free, whitespace-normalized text.
inline std::string detokenize(const TokenSequence& seq, const Vocab& vocab) {
  std::string out;
  for (int i = 0; i < seq.true_length; ++i) {
    const std::string& tok = vocab.token_of(seq.ids[i]);
    if (tok == special_tokens()[kClsId] || tok == special_tokens()[kSepId]) continue;
    if (tok.rfind("##", 0) == 0) {
      out += tok.substr(2);
    } else {
      if (!out.empty()) out += ' ';
      out += tok;
    }
  }
  return out;
}

}  // namespace mvd

#endif  // MVD_TOKENIZER_HPP_
