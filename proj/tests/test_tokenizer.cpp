#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <sstream>

#include "mvd/tokenizer.hpp"

using namespace mvd;

namespace {

// Independent scorer for the first merge: recomputes pair likelihood
// scores straight from word frequencies, no shared code with train_vocab.
std::pair<std::string, std::string> first_merge_oracle(
    const std::map<std::string, int>& word_freq, int min_pair_count) {
  std::map<std::string, long> sym;
  std::map<std::pair<std::string, std::string>, long> pair;
  for (const auto& [w, f] : word_freq) {
    std::vector<std::string> syms;
    for (size_t i = 0; i < w.size(); ++i)
      syms.push_back((i ? std::string("##") : std::string()) + w[i]);
    for (size_t i = 0; i < syms.size(); ++i) {
      sym[syms[i]] += f;
      if (i + 1 < syms.size()) pair[{syms[i], syms[i + 1]}] += f;
    }
  }
  std::pair<std::string, std::string> best;
  double best_score = -1;
  for (const auto& [p, c] : pair) {
    if (c < min_pair_count) continue;
    double s = double(c) / (double(sym[p.first]) * double(sym[p.second]));
    if (s > best_score) {
      best_score = s;
      best = p;
    }
  }
  return best;
}

Vocab tiny_vocab(const std::vector<std::string>& extra) {
  Vocab v;
  for (const auto& t : extra) v.add(t);
  return v;
}

}  // namespace

TEST_CASE("pretokenize splits whitespace and punctuation") {
  CHECK(pretokenize("a=b") == std::vector<std::string>{"a", "=", "b"});
  CHECK(pretokenize("  foo  bar ") == std::vector<std::string>{"foo", "bar"});
  CHECK(pretokenize("f(x, y)") ==
        std::vector<std::string>{"f", "(", "x", ",", "y", ")"});
  CHECK(pretokenize("") == std::vector<std::string>{});
}

TEST_CASE("wordpiece greedy longest match") {
  Vocab v = tiny_vocab({"un", "##aff", "##able", "a", "##a", "u", "##n"});
  CHECK(wordpiece_tokenize("unaffable", v) ==
        std::vector<std::string>{"un", "##aff", "##able"});
  CHECK(wordpiece_tokenize("a", v) == std::vector<std::string>{"a"});
  // 'z' has no piece anywhere -> whole word collapses.
  CHECK(wordpiece_tokenize("unz", v) == std::vector<std::string>{"[UNK]"});
}

TEST_CASE("train_vocab first merge matches likelihood oracle") {
  // Frequencies chosen so the top-scoring pair is blocked by
  // min_pair_count and the runner-up wins.
  std::map<std::string, int> freq = {{"xaa", 4}, {"xb", 1}};
  std::vector<std::string> corpus;
  for (const auto& [w, f] : freq)
    for (int i = 0; i < f; ++i) corpus.push_back(w);

  auto expect = first_merge_oracle(freq, 2);
  CHECK(expect == std::pair<std::string, std::string>{"x", "##a"});

  // alphabet: x, ##a, ##b
  Vocab v = train_vocab(corpus, 5 + 3 + 1, 2, /*byte_fallback=*/false);
  CHECK(v.size() == 9);
  CHECK(v.token_of(8) == "xa");  // merged form of the oracle pair
}

TEST_CASE("train_vocab budget at alphabet means zero merges") {
  std::vector<std::string> corpus = {"ab ba"};
  // alphabet: a, b, ##a, ##b
  Vocab v = train_vocab(corpus, 5 + 4, 5, /*byte_fallback=*/false);
  CHECK(v.size() == 9);
  for (int i = 5; i < 9; ++i) CHECK(v.token_of(i).size() <= 3);
}

TEST_CASE("train_vocab deterministic across runs") {
  std::vector<std::string> corpus = {"int foo ( int a ) { return a + a ; }",
                                     "def bar ( x ) : return x", "foo foo bar"};
  Vocab a = train_vocab(corpus, 64, 2, false);
  Vocab b = train_vocab(corpus, 64, 2, false);
  CHECK(a.tokens() == b.tokens());
}

TEST_CASE("train_vocab rejects empty corpus") {
  CHECK_THROWS_AS(train_vocab({}, 100, 2), Error);
  CHECK_THROWS_AS(train_vocab({"", "  "}, 100, 2), Error);
}

TEST_CASE("encode basic contracts") {
  Vocab v = tiny_vocab({"a", "=", "b"});

  SUBCASE("empty text") {
    TokenSequence s = encode("", v, 8);
    CHECK(s.true_length == 2);
    CHECK(s.ids[0] == kClsId);
    CHECK(s.ids[1] == kSepId);
    for (int i = 2; i < 8; ++i) {
      CHECK(s.ids[i] == kPadId);
      CHECK(s.mask[i] == 0);
    }
  }

  SUBCASE("a=b") {
    TokenSequence s = encode("a=b", v, 8);
    CHECK(s.true_length == 5);
    CHECK(s.ids[0] == kClsId);
    CHECK(s.ids[1] == v.id_of("a"));
    CHECK(s.ids[2] == v.id_of("="));
    CHECK(s.ids[3] == v.id_of("b"));
    CHECK(s.ids[4] == kSepId);
  }

  SUBCASE("truncation keeps cls and sep") {
    TokenSequence s = encode("a a a a a a a a a a", v, 4);
    CHECK(s.true_length == 4);
    CHECK(s.ids[0] == kClsId);
    CHECK(s.ids[3] == kSepId);
    CHECK(static_cast<int>(s.ids.size()) == 4);
  }
}

TEST_CASE("coverage: training corpus encodes with zero unks") {
  std::vector<std::string> corpus = {
      "void handler ( char * buf ) { strcpy ( buf , input ) ; }",
      "def parse(data):\n    return data.split(',')",
      "x += weird_name123 * 7"};
  Vocab v = train_vocab(corpus, 400, 2);
  for (const auto& text : corpus) {
    TokenSequence s = encode(text, v, 256);
    for (int i = 0; i < s.true_length; ++i) CHECK(s.ids[i] != kUnkId);
  }
}

TEST_CASE("byte fallback covers unseen ascii words, not other bytes") {
  Vocab v = train_vocab({"int main ( ) { }"}, 400, 2);
  TokenSequence s = encode("unseen_zqx99 += yy", v, 64);
  for (int i = 0; i < s.true_length; ++i) CHECK(s.ids[i] != kUnkId);

  TokenSequence u = encode("caf\xc3\xa9", v, 64);  // non-ascii byte
  bool has_unk = false;
  for (int i = 0; i < u.true_length; ++i) has_unk |= u.ids[i] == kUnkId;
  CHECK(has_unk);
}

TEST_CASE("property: encode determinism and length contract") {
  Rng rng(1234);
  const std::string alphabet = "abcxyz()=_;{}0123 ";
  std::vector<std::string> corpus;
  for (int i = 0; i < 40; ++i) {
    std::string t;
    int n = 1 + int(rng.next_below(60));
    for (int j = 0; j < n; ++j) t.push_back(alphabet[rng.next_below(alphabet.size())]);
    corpus.push_back(t);
  }
  Vocab v = train_vocab(corpus, 120, 2, false);
  for (const auto& t : corpus) {
    TokenSequence s1 = encode(t, v, 32);
    TokenSequence s2 = encode(t, v, 32);
    CHECK(s1.ids == s2.ids);
    CHECK(s1.mask == s2.mask);
    CHECK(s1.true_length == s2.true_length);
    REQUIRE(s1.ids.size() == 32);
    CHECK(s1.ids[0] == kClsId);
    CHECK(s1.ids[s1.true_length - 1] == kSepId);
    for (size_t i = 0; i < s1.ids.size(); ++i) {
      bool real = static_cast<int>(i) < s1.true_length;
      CHECK(s1.mask[i] == (real ? 1 : 0));
      if (!real) CHECK(s1.ids[i] == kPadId);
    }
  }
}

TEST_CASE("property: detokenize round-trips punctuation-free text") {
  Rng rng(99);
  std::vector<std::string> words = {"alpha", "beta", "gamma", "delta42", "xx"};
  std::vector<std::string> corpus;
  for (int i = 0; i < 30; ++i) {
    std::string t;
    int n = 1 + int(rng.next_below(6));
    for (int j = 0; j < n; ++j) {
      if (j) t += ' ';
      t += words[rng.next_below(words.size())];
    }
    corpus.push_back(t);
  }
  Vocab v = train_vocab(corpus, 80, 2, false);
  for (const auto& t : corpus) {
    TokenSequence s = encode(t, v, 128);  // no truncation at this length
    CHECK(detokenize(s, v) == t);
  }
}

TEST_CASE("vocab save/load round trip") {
  std::vector<std::string> corpus = {"foo bar baz foo"};
  Vocab v = train_vocab(corpus, 40, 2, false);
  std::stringstream ss;
  v.save(ss);
  Vocab w = Vocab::load(ss);
  CHECK(v.tokens() == w.tokens());
  CHECK(w.id_of("[PAD]") == kPadId);
}
