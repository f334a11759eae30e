#ifndef MVD_SYNTH_HPP_
#define MVD_SYNTH_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "mvd/common.hpp"
#include "mvd/corpus.hpp"

namespace mvd {

// Token-template languages with language-specific keyword alphabets. A
// function in language L is vulnerable exactly when it contains L's
// tainted-call trigram "sink_L ( taint_L". Clean functions may carry hard
// negatives (own sink with a safe argument) or confusers (another
// language's full motif), which are benign by definition in L, so a
// detector has to condition on the language to get them right.
struct SynthConfig {
  int num_languages = 3;  // SynthA, SynthB, SynthC
  int functions_per_language = 300;
  double vulnerable_fraction = 0.15;
  double hard_negative_fraction = 0.25;
  double confuser_fraction = 0.35;
  int min_statements = 4;
  int max_statements = 12;
  uint64_t seed = 20240601;
};

inline std::string synth_language_name(int index) {
  static const char* kNames[] = {"SynthA", "SynthB", "SynthC", "SynthD", "SynthE"};
  if (index < 0 || index >= 5) throw Error("synthetic language index out of range");
  return kNames[index];
}

namespace detail {

struct SynthTokens {
  std::string open_kw, close_kw;
  std::vector<std::string> proc_names;
  std::vector<std::string> vars;
  std::vector<std::string> keywords;
  std::vector<std::string> utils;
  std::string sink, taint, safe;
};

inline SynthTokens synth_tokens(int index) {
  char c = static_cast<char>('a' + index);
  std::string s(1, c);
  SynthTokens t;
  t.open_kw = "begin_" + s;
  t.close_kw = "end_" + s;
  for (int i = 0; i < 8; ++i) t.proc_names.push_back("proc_" + s + std::to_string(i));
  for (int i = 0; i < 6; ++i) t.vars.push_back("v" + s + std::to_string(i));
  for (int i = 0; i < 4; ++i) t.keywords.push_back("kw" + s + std::to_string(i));
  for (int i = 0; i < 3; ++i) t.utils.push_back("util" + s + std::to_string(i));
  t.sink = "sink_" + s;
  t.taint = "taint_" + s;
  t.safe = "safe_" + s;
  return t;
}

inline std::string motif_statement(const SynthTokens& t) {
  return t.sink + " ( " + t.taint + " ) ;";
}

inline std::string filler_statement(const SynthTokens& t, Rng& rng) {
  static const char* kOps[] = {"+", "-", "*"};
  switch (rng.next_below(3)) {
    case 0:
      return t.vars[rng.next_below(t.vars.size())] + " = " +
             t.vars[rng.next_below(t.vars.size())] + " " + kOps[rng.next_below(3)] +
             " " + std::to_string(rng.next_below(10)) + " ;";
    case 1:
      return t.keywords[rng.next_below(t.keywords.size())] + " " +
             t.vars[rng.next_below(t.vars.size())] + " ;";
    default:
      return t.utils[rng.next_below(t.utils.size())] + " ( " +
             t.vars[rng.next_below(t.vars.size())] + " , " +
             std::to_string(rng.next_below(10)) + " ) ;";
  }
}

}  // namespace detail

inline std::vector<CodeFunction> generate_synthetic(const SynthConfig& cfg) {
  if (cfg.num_languages < 1 || cfg.num_languages > 5)
    throw Error("synthetic generator supports 1..5 languages");
  if (cfg.min_statements < 1 || cfg.max_statements < cfg.min_statements)
    throw Error("bad statement count range");

  std::vector<detail::SynthTokens> toks;
  for (int i = 0; i < cfg.num_languages; ++i) toks.push_back(detail::synth_tokens(i));

  std::vector<CodeFunction> out;
  for (int li = 0; li < cfg.num_languages; ++li) {
    const auto& t = toks[static_cast<size_t>(li)];
    std::string lang = synth_language_name(li);
    Rng rng(derive_seed(cfg.seed, "synth:" + lang));
    int n = cfg.functions_per_language;
    int n_vul = static_cast<int>(std::llround(cfg.vulnerable_fraction * n));

    for (int i = 0; i < n; ++i) {
      bool vulnerable = i < n_vul;
      int n_stmt = cfg.min_statements +
                   static_cast<int>(rng.next_below(
                       static_cast<uint64_t>(cfg.max_statements - cfg.min_statements + 1)));
      std::vector<std::string> stmts;
      for (int s = 0; s < n_stmt; ++s) stmts.push_back(detail::filler_statement(t, rng));

      if (vulnerable) {
        size_t at = rng.next_below(stmts.size() + 1);
        stmts.insert(stmts.begin() + static_cast<long>(at), detail::motif_statement(t));
      } else {
        double roll = rng.next_double();
        if (roll < cfg.hard_negative_fraction) {
          // Own sink, sanitized argument: benign.
          std::string arg = rng.next_below(2) == 0 ? t.safe
                                                   : t.vars[rng.next_below(t.vars.size())];
          size_t at = rng.next_below(stmts.size() + 1);
          stmts.insert(stmts.begin() + static_cast<long>(at),
                       t.sink + " ( " + arg + " ) ;");
        } else if (roll < cfg.hard_negative_fraction + cfg.confuser_fraction &&
                   cfg.num_languages > 1) {
          // Another language's full motif: benign here, vulnerable there.
          size_t other = rng.next_below(static_cast<uint64_t>(cfg.num_languages - 1));
          if (static_cast<int>(other) >= li) ++other;
          size_t at = rng.next_below(stmts.size() + 1);
          stmts.insert(stmts.begin() + static_cast<long>(at),
                       detail::motif_statement(toks[other]));
        }
      }

      std::string body;
      for (const auto& s : stmts) body += " " + s;
      std::string source = t.open_kw + " " +
                           t.proc_names[rng.next_below(t.proc_names.size())] + " ( " +
                           t.vars[rng.next_below(t.vars.size())] + " ) {" + body + " } " +
                           t.close_kw;

      CodeFunction r;
      r.source = source;
      r.language = lang;
      r.vulnerable = vulnerable;
      r.start_line = 1;
      r.end_line = 1;
      r.commit_id = "synth";
      r.path = "synth/" + lang + "/fn" + std::to_string(i);
      out.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace mvd

#endif  // MVD_SYNTH_HPP_
