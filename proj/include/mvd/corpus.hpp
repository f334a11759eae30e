#ifndef MVD_CORPUS_HPP_
#define MVD_CORPUS_HPP_

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "mvd/common.hpp"

namespace mvd {

enum class Language { Python, Cpp, Java, CSharp, JavaScript, TypeScript };

inline const char* language_name(Language lang) {
  switch (lang) {
    case Language::Python: return "Python";
    case Language::Cpp: return "C/C++";
    case Language::Java: return "Java";
    case Language::CSharp: return "C#";
    case Language::JavaScript: return "JavaScript";
    case Language::TypeScript: return "TypeScript";
  }
  return "?";
}

// Maps a path to its language by file extension, case-insensitive.
inline std::optional<Language> classify_language(std::string_view path) {
  auto slash = path.find_last_of("/\\");
  std::string_view file = slash == std::string_view::npos ? path : path.substr(slash + 1);
  auto dot = file.find_last_of('.');
  if (dot == std::string_view::npos || dot + 1 == file.size()) return std::nullopt;
  std::string ext(file.substr(dot + 1));
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  static const std::unordered_map<std::string, Language> kMap = {
      {"py", Language::Python},
      {"c", Language::Cpp},     {"cc", Language::Cpp},  {"cpp", Language::Cpp},
      {"h", Language::Cpp},     {"hpp", Language::Cpp},
      {"java", Language::Java},
      {"cs", Language::CSharp}, {"csx", Language::CSharp},
      {"js", Language::JavaScript}, {"jss", Language::JavaScript},
      {"ts", Language::TypeScript}, {"tsx", Language::TypeScript},
  };
  auto it = kMap.find(ext);
  if (it == kMap.end()) return std::nullopt;
  return it->second;
}

namespace detail {

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline std::vector<std::string> split_on(std::string_view s, std::string_view delims) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (delims.find(c) != std::string_view::npos) {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace detail

// Token-boundary test-path rule: a path is a test file iff a directory
// segment or a filename token (split on _ - .) equals test/tests/spec, or
// the stem carries a camel-case "Test" suffix. Substrings inside a token
// ("contest") never match.
inline bool is_test_file(std::string_view path) {
  static const std::set<std::string> kWords = {"test", "tests", "spec"};
  auto segments = detail::split_on(path, "/\\");
  if (segments.empty()) return false;
  for (size_t i = 0; i + 1 < segments.size(); ++i) {
    if (kWords.count(detail::lower(segments[i]))) return true;
  }
  const std::string& file = segments.back();
  for (const auto& tok : detail::split_on(file, "_-.")) {
    if (kWords.count(detail::lower(tok))) return true;
  }
  auto dot = file.find_last_of('.');
  std::string stem = dot == std::string::npos ? file : file.substr(0, dot);
  if (stem.size() > 4 && stem.compare(stem.size() - 4, 4, "Test") == 0) return true;
  return false;
}

// ---------------------------------------------------------------------------
// Lexical scanning: classify every byte as code, comment, or string so the
// extractor and the cosmetic filter never trip over literals.
// ---------------------------------------------------------------------------

enum class CharClass { Code, Comment, Str };

// emit(c, cls) is called once per byte in order.
template <class Fn>
void scan_code(std::string_view s, Language lang, Fn&& emit) {
  const size_t n = s.size();
  size_t i = 0;
  if (lang == Language::Python) {
    while (i < n) {
      char c = s[i];
      if (c == '#') {
        while (i < n && s[i] != '\n') emit(s[i++], CharClass::Comment);
      } else if (c == '"' || c == '\'') {
        bool triple = i + 2 < n && s[i + 1] == c && s[i + 2] == c;
        if (triple) {
          emit(s[i], CharClass::Str); emit(s[i + 1], CharClass::Str); emit(s[i + 2], CharClass::Str);
          i += 3;
          while (i < n) {
            if (s[i] == '\\' && i + 1 < n) {
              emit(s[i], CharClass::Str); emit(s[i + 1], CharClass::Str);
              i += 2;
              continue;
            }
            if (s[i] == c && i + 2 < n && s[i + 1] == c && s[i + 2] == c) {
              emit(s[i], CharClass::Str); emit(s[i + 1], CharClass::Str); emit(s[i + 2], CharClass::Str);
              i += 3;
              break;
            }
            if (s[i] == c && i + 2 >= n) {
              // dangling short close near EOF; consume as string
              while (i < n) emit(s[i++], CharClass::Str);
              break;
            }
            emit(s[i++], CharClass::Str);
          }
        } else {
          emit(s[i++], CharClass::Str);
          while (i < n && s[i] != c && s[i] != '\n') {
            if (s[i] == '\\' && i + 1 < n) emit(s[i++], CharClass::Str);
            emit(s[i++], CharClass::Str);
          }
          if (i < n && s[i] == c) emit(s[i++], CharClass::Str);
        }
      } else {
        emit(s[i++], CharClass::Code);
      }
    }
    return;
  }
  const bool backtick = lang == Language::JavaScript || lang == Language::TypeScript;
  while (i < n) {
    char c = s[i];
    if (c == '/' && i + 1 < n && s[i + 1] == '/') {
      while (i < n && s[i] != '\n') emit(s[i++], CharClass::Comment);
    } else if (c == '/' && i + 1 < n && s[i + 1] == '*') {
      emit(s[i++], CharClass::Comment);
      emit(s[i++], CharClass::Comment);
      while (i < n) {
        if (s[i] == '*' && i + 1 < n && s[i + 1] == '/') {
          emit(s[i++], CharClass::Comment);
          emit(s[i++], CharClass::Comment);
          break;
        }
        emit(s[i++], CharClass::Comment);
      }
    } else if (c == '"' || c == '\'' || (backtick && c == '`')) {
      char quote = c;
      emit(s[i++], CharClass::Str);
      bool multiline = quote == '`';
      while (i < n && s[i] != quote && (multiline || s[i] != '\n')) {
        if (s[i] == '\\' && i + 1 < n) emit(s[i++], CharClass::Str);
        emit(s[i++], CharClass::Str);
      }
      if (i < n && s[i] == quote) emit(s[i++], CharClass::Str);
    } else {
      emit(s[i++], CharClass::Code);
    }
  }
}

// Comments and string payloads blanked to spaces (newlines kept), so brace
// matching and header analysis see pure structure.
inline std::string blank_noncode(std::string_view src, Language lang) {
  std::string out;
  out.reserve(src.size());
  scan_code(src, lang, [&](char c, CharClass cls) {
    if (c == '\n') {
      out.push_back('\n');
    } else {
      out.push_back(cls == CharClass::Code ? c : ' ');
    }
  });
  // Preprocessor / compiler directives are structure-free for extraction.
  if (lang == Language::Cpp || lang == Language::CSharp) {
    size_t pos = 0;
    bool continued = false;
    while (pos < out.size()) {
      size_t eol = out.find('\n', pos);
      if (eol == std::string::npos) eol = out.size();
      size_t first = out.find_first_not_of(" \t", pos);
      bool directive = continued || (first != std::string::npos && first < eol && out[first] == '#');
      if (directive) {
        continued = eol > pos && out[eol - 1] == '\\';
        for (size_t k = pos; k < eol; ++k) out[k] = ' ';
      } else {
        continued = false;
      }
      pos = eol + 1;
    }
  }
  return out;
}

// Comment-free text with whitespace runs collapsed to single spaces.
// Strings are preserved verbatim. Idempotent.
inline std::string normalize_code(std::string_view text, Language lang) {
  std::string stripped;
  stripped.reserve(text.size());
  scan_code(text, lang, [&](char c, CharClass cls) {
    stripped.push_back(cls == CharClass::Comment ? ' ' : c);
  });
  std::string out;
  out.reserve(stripped.size());
  bool in_ws = true;  // swallow leading whitespace
  for (char c : stripped) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      in_ws = true;
    } else {
      if (in_ws && !out.empty()) out.push_back(' ');
      in_ws = false;
      out.push_back(c);
    }
  }
  return out;
}

inline bool is_cosmetic_change(std::string_view before, std::string_view after,
                               Language lang) {
  return normalize_code(before, lang) == normalize_code(after, lang);
}

// ---------------------------------------------------------------------------
// Function extraction
// ---------------------------------------------------------------------------

struct FunctionSpan {
  int start_line = 0;  // 1-based, inclusive
  int end_line = 0;
  std::string text;  // verbatim slice of the source lines
  std::string name;  // best-effort identifier, used for before/after pairing
};

struct ExtractionResult {
  std::vector<FunctionSpan> functions;
  bool partially_parsed = false;
};

namespace detail {

inline bool ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '$';
}

struct HeaderInfo {
  bool is_function = false;
  std::string name;
  size_t first_nonspace = std::string_view::npos;
};

inline HeaderInfo analyze_header(std::string_view header, Language lang) {
  HeaderInfo info;
  info.first_nonspace = header.find_first_not_of(" \t\r\n");
  if (info.first_nonspace == std::string_view::npos) return info;
  size_t last = header.find_last_not_of(" \t\r\n");
  std::string_view h = header.substr(info.first_nonspace, last - info.first_nonspace + 1);

  const bool js_like = lang == Language::JavaScript || lang == Language::TypeScript;

  // Arrow function with block body: "... (args) => {"
  if (js_like && h.size() >= 2 && h.substr(h.size() - 2) == "=>") {
    info.is_function = true;
    size_t eq = h.find('=');
    std::string_view left = h.substr(0, eq);
    size_t e = left.find_last_not_of(" \t\r\n:");
    if (e != std::string_view::npos) {
      size_t b = e;
      while (b > 0 && ident_char(left[b - 1])) --b;
      if (ident_char(left[e])) info.name = std::string(left.substr(b, e - b + 1));
    }
    return info;
  }

  size_t rparen = h.find_last_of(')');
  if (rparen == std::string_view::npos) return info;

  // Tail after the parameter list: qualifiers, throws clauses, return type
  // annotations. Assignment or statement glue disqualifies.
  std::string_view tail = h.substr(rparen + 1);
  for (char c : tail) {
    if (c == '=' || c == ';' || c == '{' || c == '"' || c == ',') return info;
  }

  int depth = 0;
  size_t lparen = std::string_view::npos;
  for (size_t i = rparen + 1; i-- > 0;) {
    if (h[i] == ')') ++depth;
    if (h[i] == '(') {
      --depth;
      if (depth == 0) {
        lparen = i;
        break;
      }
    }
  }
  if (lparen == std::string_view::npos) return info;

  // Identifier directly before the parameter list.
  size_t e = lparen;
  while (e > 0 && std::isspace(static_cast<unsigned char>(h[e - 1]))) --e;
  size_t b = e;
  while (b > 0 && ident_char(h[b - 1])) --b;
  if (b == e) {
    // C++ operator overloads: symbols after the "operator" keyword.
    size_t sym_end = e;
    while (b > 0 && std::string_view("+-*/%^&|<>=!~[]").find(h[b - 1]) !=
                        std::string_view::npos)
      --b;
    size_t word_end = b;
    size_t word_begin = word_end;
    while (word_begin > 0 && ident_char(h[word_begin - 1])) --word_begin;
    if (lang == Language::Cpp && word_end > word_begin &&
        h.substr(word_begin, word_end - word_begin) == "operator") {
      info.name = std::string(h.substr(word_begin, sym_end - word_begin));
      info.is_function = true;
      return info;
    }
    return info;
  }
  std::string name(h.substr(b, e - b));
  if (b > 0 && h[b - 1] == '~') name.insert(name.begin(), '~');

  static const std::set<std::string> kControl = {
      "if",    "for",   "while",   "switch", "catch",        "return",
      "do",    "else",  "sizeof",  "using",  "lock",         "fixed",
      "foreach", "with", "typeof", "assert", "synchronized", "delete"};
  if (kControl.count(name)) return info;
  if (std::isdigit(static_cast<unsigned char>(name[0]))) return info;

  // "new Type() {" starts an anonymous class / object, not a function.
  {
    size_t p = b;
    while (p > 0 && std::isspace(static_cast<unsigned char>(h[p - 1]))) --p;
    size_t w = p;
    while (w > 0 && ident_char(h[w - 1])) --w;
    if (p > w && h.substr(w, p - w) == "new") return info;
  }

  // A depth-0 '=' in the part before the parameter list means assignment
  // or initialization, not a definition, unless it introduces a JS
  // function expression or belongs to C++ operator=.
  std::string_view head = h.substr(0, lparen);
  int d = 0;
  for (size_t i = 0; i < head.size(); ++i) {
    char c = head[i];
    if (c == '(' || c == '[' || c == '<') ++d;
    if (c == ')' || c == ']' || c == '>') --d;
    if (d != 0 || c != '=') continue;
    std::string_view rest = head.substr(i + 1);
    size_t r = rest.find_first_not_of(" \t\r\n");
    bool fn_expr = js_like && r != std::string_view::npos &&
                   (rest.substr(r).rfind("function", 0) == 0 ||
                    rest.substr(r).rfind("async", 0) == 0 || rest[r] == '(');
    bool op_eq = lang == Language::Cpp && i >= 8 && head.substr(i - 8, 8) == "operator";
    if (!fn_expr && !op_eq) return info;
  }

  info.name = std::move(name);
  info.is_function = true;
  return info;
}

// Byte offsets of the first character of every 1-based line.
inline std::vector<size_t> line_starts(std::string_view s) {
  std::vector<size_t> starts = {0};
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\n') starts.push_back(i + 1);
  }
  return starts;
}

inline std::string slice_lines(std::string_view src, const std::vector<size_t>& starts,
                               int first, int last) {
  size_t begin = starts[static_cast<size_t>(first - 1)];
  size_t end = static_cast<size_t>(last) < starts.size() ? starts[static_cast<size_t>(last)]
                                                         : src.size();
  while (end > begin && (src[end - 1] == '\n' || src[end - 1] == '\r')) --end;
  return std::string(src.substr(begin, end - begin));
}

inline ExtractionResult extract_brace_functions(std::string_view src, Language lang) {
  std::string cleaned = blank_noncode(src, lang);
  std::vector<size_t> starts = line_starts(src);
  std::vector<int> line_of(cleaned.size() + 1);
  {
    int line = 1;
    for (size_t i = 0; i < cleaned.size(); ++i) {
      line_of[i] = line;
      if (cleaned[i] == '\n') ++line;
    }
    line_of[cleaned.size()] = line;
  }

  ExtractionResult res;
  size_t chunk_start = 0;
  size_t i = 0;
  const size_t n = cleaned.size();
  while (i < n) {
    char c = cleaned[i];
    if (c == ';' || c == '}') {
      chunk_start = i + 1;
      ++i;
      continue;
    }
    if (c == '{') {
      std::string_view header(cleaned.data() + chunk_start, i - chunk_start);
      HeaderInfo hi = analyze_header(header, lang);
      if (hi.is_function) {
        int depth = 1;
        size_t j = i + 1;
        while (j < n && depth > 0) {
          if (cleaned[j] == '{') ++depth;
          else if (cleaned[j] == '}') --depth;
          ++j;
        }
        if (depth != 0) {
          res.partially_parsed = true;
          break;
        }
        FunctionSpan fs;
        fs.start_line = line_of[chunk_start + hi.first_nonspace];
        fs.end_line = line_of[j - 1];
        fs.text = slice_lines(src, starts, fs.start_line, fs.end_line);
        fs.name = hi.name;
        res.functions.push_back(std::move(fs));
        i = j;
        chunk_start = j;
        continue;
      }
      chunk_start = i + 1;
    }
    ++i;
  }
  return res;
}

inline ExtractionResult extract_python_functions(std::string_view src) {
  std::string cleaned = blank_noncode(src, Language::Python);
  std::vector<size_t> starts = line_starts(src);

  std::vector<std::string_view> lines;
  {
    std::string_view cv(cleaned);
    size_t pos = 0;
    while (pos <= cv.size()) {
      size_t eol = cv.find('\n', pos);
      if (eol == std::string_view::npos) {
        lines.push_back(cv.substr(pos));
        break;
      }
      lines.push_back(cv.substr(pos, eol - pos));
      pos = eol + 1;
    }
  }

  auto indent_of = [](std::string_view l) {
    size_t k = 0;
    while (k < l.size() && (l[k] == ' ' || l[k] == '\t')) ++k;
    return k;
  };
  auto blank = [&](std::string_view l) {
    return l.find_first_not_of(" \t\r") == std::string_view::npos;
  };

  ExtractionResult res;
  size_t i = 0;
  while (i < lines.size()) {
    std::string_view line = lines[i];
    size_t ind = indent_of(line);
    std::string_view body = line.substr(ind);
    bool is_def = body.rfind("def ", 0) == 0 || body.rfind("async def ", 0) == 0;
    if (!is_def) {
      ++i;
      continue;
    }
    size_t name_pos = body.rfind("async def ", 0) == 0 ? 10 : 4;
    std::string name;
    while (name_pos < body.size() && ident_char(body[name_pos]))
      name.push_back(body[name_pos++]);

    size_t end = i;  // last line of the block, 0-based
    size_t j = i + 1;
    while (j < lines.size()) {
      if (blank(lines[j])) {
        ++j;
        continue;
      }
      if (indent_of(lines[j]) <= ind) break;
      end = j;
      ++j;
    }
    FunctionSpan fs;
    fs.start_line = static_cast<int>(i) + 1;
    fs.end_line = static_cast<int>(end) + 1;
    fs.text = slice_lines(src, starts, fs.start_line, fs.end_line);
    fs.name = std::move(name);
    res.functions.push_back(std::move(fs));
    i = end + 1;
  }
  return res;
}

}  // namespace detail

// Heuristic signature + block extraction; literal- and comment-aware.
// Spans are non-overlapping and reproduce the source verbatim.
inline ExtractionResult extract_functions(std::string_view source, Language lang) {
  if (lang == Language::Python) return detail::extract_python_functions(source);
  return detail::extract_brace_functions(source, lang);
}

// ---------------------------------------------------------------------------
// Commit labeling
// ---------------------------------------------------------------------------

struct FileChange {
  std::string path;
  std::string before;
  std::string after;
  std::vector<int> changed_lines;  // 1-based, pre-fix coordinates
};

struct CommitRecord {
  std::string commit_id;
  std::string cve_id;
  std::vector<FileChange> files;

  void validate() const {
    if (commit_id.empty()) throw Error("commit with empty commit_id");
    for (const auto& f : files) {
      if (f.path.empty()) throw Error("commit " + commit_id + ": empty file path");
      int line_count = 1 + static_cast<int>(std::count(f.before.begin(), f.before.end(), '\n'));
      for (int ln : f.changed_lines) {
        if (ln < 1 || ln > line_count)
          throw Error("commit " + commit_id + ": changed line " + std::to_string(ln) +
                      " outside pre-fix text of " + f.path);
      }
    }
  }
};

// One labeled, filtered function. `language` holds the roster name so the
// training pipeline can also carry synthetic languages.
struct CodeFunction {
  std::string source;
  std::string language;
  bool vulnerable = false;
  int start_line = 0;
  int end_line = 0;
  std::string commit_id;
  std::string path;
};

// Labels the pre-fix functions of one commit. Test files and unclassified
// extensions contribute nothing; functions overlapping a changed line are
// vulnerable unless the change is cosmetic-only, everything else in a
// changed file is clean.
inline std::vector<CodeFunction> label_functions(const CommitRecord& commit,
                                                 std::vector<std::string>* log = nullptr) {
  auto note = [&](const std::string& msg) {
    if (log) log->push_back(msg);
  };
  std::vector<CodeFunction> out;
  for (const auto& file : commit.files) {
    auto lang = classify_language(file.path);
    if (!lang) {
      note(commit.commit_id + " " + file.path + ": extension not classified, skipped");
      continue;
    }
    if (is_test_file(file.path)) {
      note(commit.commit_id + " " + file.path + ": test file, skipped");
      continue;
    }
    ExtractionResult pre = extract_functions(file.before, *lang);
    if (pre.partially_parsed)
      note(commit.commit_id + " " + file.path + ": partially parsed");
    if (pre.functions.empty()) {
      note(commit.commit_id + " " + file.path + ": no recognizable functions");
      continue;
    }
    ExtractionResult post = extract_functions(file.after, *lang);

    // Pair k-th pre-function of a given name with the k-th post-function of
    // that name for the cosmetic check.
    std::map<std::string, std::vector<const FunctionSpan*>> post_by_name;
    for (const auto& f : post.functions) post_by_name[f.name].push_back(&f);
    std::map<std::string, size_t> pre_seen;

    for (const auto& fn : pre.functions) {
      size_t k = pre_seen[fn.name]++;
      bool overlaps = false;
      for (int ln : file.changed_lines) {
        if (fn.start_line <= ln && ln <= fn.end_line) {
          overlaps = true;
          break;
        }
      }
      if (overlaps) {
        const auto& candidates = post_by_name[fn.name];
        if (k < candidates.size() &&
            is_cosmetic_change(fn.text, candidates[k]->text, *lang)) {
          note(commit.commit_id + " " + file.path + ":" + std::to_string(fn.start_line) +
               ": cosmetic-only change, discarded");
          continue;
        }
      }
      if (normalize_code(fn.text, *lang).empty()) {
        note(commit.commit_id + " " + file.path + ":" + std::to_string(fn.start_line) +
             ": empty after normalization, discarded");
        continue;
      }
      CodeFunction cf;
      cf.source = fn.text;
      cf.language = language_name(*lang);
      cf.vulnerable = overlaps;
      cf.start_line = fn.start_line;
      cf.end_line = fn.end_line;
      cf.commit_id = commit.commit_id;
      cf.path = file.path;
      out.push_back(std::move(cf));
    }
  }
  return out;
}

// Keeps the earliest (commit_id, path, span) copy of records with the same
// normalized text and language. Input must already be in that order.
inline std::vector<CodeFunction> dedupe_functions(const std::vector<CodeFunction>& records) {
  std::vector<CodeFunction> out;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& r : records) {
    Language lang = Language::Cpp;
    for (Language l : {Language::Python, Language::Cpp, Language::Java, Language::CSharp,
                       Language::JavaScript, Language::TypeScript}) {
      if (r.language == language_name(l)) lang = l;
    }
    auto key = std::make_pair(r.language, normalize_code(r.source, lang));
    if (seen.insert(key).second) out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

struct DatasetSplit {
  std::vector<CodeFunction> train;
  std::vector<CodeFunction> validation;
  std::vector<CodeFunction> test;
  uint64_t seed = 0;
  std::array<double, 3> ratios = {8, 1, 1};
  // Record indices into the source dataset, per partition.
  std::array<std::vector<size_t>, 3> indices;
  std::vector<std::string> warnings;
};

// Largest-remainder apportionment: each count is within 1 of n*r_i/sum(r).
inline std::array<size_t, 3> apportion(size_t n, const std::array<double, 3>& ratios) {
  double total = ratios[0] + ratios[1] + ratios[2];
  if (!(total > 0)) throw Error("ratios must sum to a positive value");
  std::array<size_t, 3> counts{};
  std::array<double, 3> frac{};
  size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    double target = static_cast<double>(n) * ratios[i] / total;
    counts[i] = static_cast<size_t>(std::floor(target));
    frac[i] = target - std::floor(target);
    assigned += counts[i];
  }
  std::array<int, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return frac[a] > frac[b]; });
  for (size_t k = 0; assigned < n; ++k) {
    counts[order[k % 3]] += 1;
    ++assigned;
  }
  return counts;
}

// Deterministic stratified split per (language x label). Strata smaller
// than 3 go wholly to train with a warning.
inline DatasetSplit split_dataset(const std::vector<CodeFunction>& records,
                                  std::array<double, 3> ratios, uint64_t seed) {
  if (records.empty()) throw Error("split_dataset: no records");
  DatasetSplit split;
  split.seed = seed;
  split.ratios = ratios;

  std::map<std::pair<std::string, bool>, std::vector<size_t>> strata;
  for (size_t i = 0; i < records.size(); ++i)
    strata[{records[i].language, records[i].vulnerable}].push_back(i);

  for (auto& [key, idx] : strata) {
    if (idx.size() < 3) {
      split.warnings.push_back("stratum " + key.first + "/" +
                               (key.second ? "vulnerable" : "clean") + " has " +
                               std::to_string(idx.size()) +
                               " records; all assigned to train");
      for (size_t i : idx) split.indices[0].push_back(i);
      continue;
    }
    Rng rng(derive_seed(seed, "split:" + key.first + (key.second ? "/v" : "/c")));
    rng.shuffle(idx);
    auto counts = apportion(idx.size(), ratios);
    size_t pos = 0;
    for (int part = 0; part < 3; ++part) {
      for (size_t k = 0; k < counts[part]; ++k) split.indices[part].push_back(idx[pos++]);
    }
  }
  for (auto& part : split.indices) std::sort(part.begin(), part.end());
  for (size_t i : split.indices[0]) split.train.push_back(records[i]);
  for (size_t i : split.indices[1]) split.validation.push_back(records[i]);
  for (size_t i : split.indices[2]) split.test.push_back(records[i]);
  return split;
}

// ---------------------------------------------------------------------------
// External formats
// ---------------------------------------------------------------------------

inline CommitRecord parse_commit_json(const nlohmann::json& j) {
  CommitRecord rec;
  rec.commit_id = j.at("commit_id").get<std::string>();
  if (j.contains("cve_id") && !j.at("cve_id").is_null())
    rec.cve_id = j.at("cve_id").get<std::string>();
  for (const auto& f : j.at("files")) {
    FileChange fc;
    fc.path = f.at("path").get<std::string>();
    fc.before = f.at("before").get<std::string>();
    fc.after = f.at("after").get<std::string>();
    for (const auto& ln : f.at("changed_lines")) fc.changed_lines.push_back(ln.get<int>());
    rec.files.push_back(std::move(fc));
  }
  rec.validate();
  return rec;
}

struct CurationResult {
  std::vector<CodeFunction> records;
  std::vector<std::string> log;
};

// Reads every *.json commit archive under `dir`, labels, orders by
// (commit_id, path, span) and dedupes.
inline CurationResult curate_archive(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error("archive directory not found: " + dir);
  std::vector<std::string> paths;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json")
      paths.push_back(e.path().string());
  }
  if (paths.empty()) throw Error("archive directory has no commit files: " + dir);
  std::sort(paths.begin(), paths.end());

  CurationResult result;
  for (const auto& p : paths) {
    std::ifstream in(p);
    if (!in) throw Error("cannot read commit file: " + p);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const std::exception& e) {
      throw Error("invalid commit file " + p + ": " + e.what());
    }
    CommitRecord rec;
    try {
      rec = parse_commit_json(j);
    } catch (const std::exception& e) {
      throw Error("invalid commit file " + p + ": " + e.what());
    }
    auto funcs = label_functions(rec, &result.log);
    result.records.insert(result.records.end(), funcs.begin(), funcs.end());
  }
  std::stable_sort(result.records.begin(), result.records.end(),
                   [](const CodeFunction& a, const CodeFunction& b) {
                     return std::tie(a.commit_id, a.path, a.start_line, a.end_line) <
                            std::tie(b.commit_id, b.path, b.start_line, b.end_line);
                   });
  result.records = dedupe_functions(result.records);
  return result;
}

inline nlohmann::json function_to_json(const CodeFunction& r) {
  return nlohmann::json{{"source", r.source},
                        {"language", r.language},
                        {"label", r.vulnerable ? "vulnerable" : "clean"},
                        {"start_line", r.start_line},
                        {"end_line", r.end_line},
                        {"commit_id", r.commit_id},
                        {"path", r.path}};
}

inline CodeFunction function_from_json(const nlohmann::json& j) {
  CodeFunction r;
  r.source = j.at("source").get<std::string>();
  r.language = j.at("language").get<std::string>();
  std::string label = j.at("label").get<std::string>();
  if (label != "vulnerable" && label != "clean")
    throw Error("unknown label: " + label);
  r.vulnerable = label == "vulnerable";
  r.start_line = j.value("start_line", 0);
  r.end_line = j.value("end_line", 0);
  r.commit_id = j.value("commit_id", std::string());
  r.path = j.value("path", std::string());
  return r;
}

inline void write_dataset_jsonl(const std::vector<CodeFunction>& records,
                                const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write dataset: " + path);
  for (const auto& r : records) out << function_to_json(r).dump() << '\n';
}

inline std::vector<CodeFunction> read_dataset_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read dataset: " + path);
  std::vector<CodeFunction> out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(function_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw Error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline void write_split_manifest(const DatasetSplit& split, const std::string& path) {
  nlohmann::json j{{"seed", split.seed},
                   {"ratios", split.ratios},
                   {"train", split.indices[0]},
                   {"validation", split.indices[1]},
                   {"test", split.indices[2]},
                   {"warnings", split.warnings}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write split manifest: " + path);
  out << j.dump(2) << '\n';
}

// Rebuilds a DatasetSplit from the dataset records plus a manifest.
inline DatasetSplit read_split_manifest(const std::vector<CodeFunction>& records,
                                        const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read split manifest: " + path);
  nlohmann::json j;
  in >> j;
  DatasetSplit split;
  split.seed = j.at("seed").get<uint64_t>();
  auto r = j.at("ratios");
  split.ratios = {r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>()};
  const char* names[3] = {"train", "validation", "test"};
  for (int part = 0; part < 3; ++part) {
    for (const auto& idx : j.at(names[part])) {
      size_t i = idx.get<size_t>();
      if (i >= records.size()) throw Error("split manifest index out of range");
      split.indices[part].push_back(i);
    }
  }
  for (size_t i : split.indices[0]) split.train.push_back(records[i]);
  for (size_t i : split.indices[1]) split.validation.push_back(records[i]);
  for (size_t i : split.indices[2]) split.test.push_back(records[i]);
  return split;
}

// Table-style per-language tally: vulnerable, clean, percent vulnerable.
struct LanguageTally {
  std::string language;
  size_t vulnerable = 0;
  size_t clean = 0;
  double pct_vulnerable() const {
    size_t total = vulnerable + clean;
    return total == 0 ? 0.0 : 100.0 * static_cast<double>(vulnerable) /
                                  static_cast<double>(total);
  }
};

inline std::vector<LanguageTally> tally_by_language(const std::vector<CodeFunction>& records) {
  std::map<std::string, LanguageTally> m;
  for (const auto& r : records) {
    auto& t = m[r.language];
    t.language = r.language;
    if (r.vulnerable) ++t.vulnerable;
    else ++t.clean;
  }
  std::vector<LanguageTally> out;
  for (auto& [_, t] : m) out.push_back(t);
  return out;
}

}  // namespace mvd

#endif  // MVD_CORPUS_HPP_
