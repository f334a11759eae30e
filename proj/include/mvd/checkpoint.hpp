#ifndef MVD_CHECKPOINT_HPP_
#define MVD_CHECKPOINT_HPP_

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mvd/model.hpp"
#include "mvd/tokenizer.hpp"

namespace mvd {

// Trained model bundle: parameters, vocabulary, ordered class roster
// (index 0 is always "clean"), per-class training counts carried for
// later prior computation, and free-form metadata (best epoch, validation
// PR-AUC, extension manifest).
struct Checkpoint {
  ModelParams params;
  Vocab vocab;
  std::vector<std::string> roster;
  std::vector<int64_t> class_counts;
  std::map<std::string, std::string> metadata;

  bool binary_mode() const {
    return roster.size() == 2 && roster[1] == "vulnerable";
  }

  void validate() const {
    if (roster.empty() || roster[0] != "clean")
      throw Error("checkpoint: roster must start with the clean class");
    if (static_cast<int>(roster.size()) != params.config.num_classes)
      throw Error("checkpoint: roster size does not match head");
    if (class_counts.size() != roster.size())
      throw Error("checkpoint: class_counts size does not match roster");
    if (vocab.size() != params.config.vocab_size)
      throw Error("checkpoint: vocab size does not match config");
  }
};

namespace detail {

// All multi-byte values are little-endian on disk; parameter payloads are
// 32-bit floats written row-major.

inline void put_u32(std::ostream& out, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

inline void put_u64(std::ostream& out, uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

inline void put_f32(std::ostream& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

inline void put_f64(std::ostream& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

inline void put_str(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw Error("checkpoint: truncated file");
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 |
         uint32_t(b[3]) << 24;
}

inline uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw Error("checkpoint: truncated file");
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline float get_f32(std::istream& in) {
  uint32_t bits = get_u32(in);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline double get_f64(std::istream& in) {
  uint64_t bits = get_u64(in);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

inline std::string get_str(std::istream& in) {
  uint32_t n = get_u32(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw Error("checkpoint: truncated file");
  return s;
}

constexpr char kMagic[8] = {'M', 'V', 'D', 'C', 'K', 'P', 'T', '\x01'};

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  ckpt.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint: " + path);
  out.write(detail::kMagic, 8);
  detail::put_u32(out, 1);  // format version

  const ModelConfig& c = ckpt.params.config;
  detail::put_u32(out, static_cast<uint32_t>(c.vocab_size));
  detail::put_u32(out, static_cast<uint32_t>(c.max_len));
  detail::put_u32(out, static_cast<uint32_t>(c.hidden_dim));
  detail::put_u32(out, static_cast<uint32_t>(c.num_layers));
  detail::put_u32(out, static_cast<uint32_t>(c.num_heads));
  detail::put_u32(out, static_cast<uint32_t>(c.ffn_dim));
  detail::put_u32(out, static_cast<uint32_t>(c.num_classes));
  detail::put_f64(out, c.dropout_rate);
  detail::put_u64(out, c.seed);

  detail::put_u32(out, static_cast<uint32_t>(ckpt.vocab.size()));
  for (const auto& t : ckpt.vocab.tokens()) detail::put_str(out, t);

  detail::put_u32(out, static_cast<uint32_t>(ckpt.roster.size()));
  for (const auto& r : ckpt.roster) detail::put_str(out, r);
  for (int64_t n : ckpt.class_counts) detail::put_u64(out, static_cast<uint64_t>(n));

  detail::put_u32(out, static_cast<uint32_t>(ckpt.metadata.size()));
  for (const auto& [k, v] : ckpt.metadata) {
    detail::put_str(out, k);
    detail::put_str(out, v);
  }

  ModelParams& params = const_cast<ModelParams&>(ckpt.params);
  auto refs = array_refs(params);
  detail::put_u32(out, static_cast<uint32_t>(refs.size()));
  for (const auto& ref : refs) {
    detail::put_str(out, ref.name);
    detail::put_u32(out, static_cast<uint32_t>(ref.rows));
    detail::put_u32(out, static_cast<uint32_t>(ref.cols));
    // Column-major Eigen storage; emit row-major for a stable format.
    for (Eigen::Index r = 0; r < ref.rows; ++r)
      for (Eigen::Index cc = 0; cc < ref.cols; ++cc)
        detail::put_f32(out, static_cast<float>(ref.data[cc * ref.rows + r]));
  }
  if (!out) throw Error("write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, detail::kMagic, 8) != 0)
    throw Error("not a checkpoint file: " + path);
  uint32_t version = detail::get_u32(in);
  if (version != 1) throw Error("unsupported checkpoint version");

  ModelConfig c;
  c.vocab_size = static_cast<int>(detail::get_u32(in));
  c.max_len = static_cast<int>(detail::get_u32(in));
  c.hidden_dim = static_cast<int>(detail::get_u32(in));
  c.num_layers = static_cast<int>(detail::get_u32(in));
  c.num_heads = static_cast<int>(detail::get_u32(in));
  c.ffn_dim = static_cast<int>(detail::get_u32(in));
  c.num_classes = static_cast<int>(detail::get_u32(in));
  c.dropout_rate = detail::get_f64(in);
  c.seed = detail::get_u64(in);

  Checkpoint ckpt;
  uint32_t vocab_count = detail::get_u32(in);
  {
    std::stringstream ss;
    for (uint32_t i = 0; i < vocab_count; ++i) ss << detail::get_str(in) << '\n';
    ckpt.vocab = Vocab::load(ss);
  }

  uint32_t roster_count = detail::get_u32(in);
  for (uint32_t i = 0; i < roster_count; ++i) ckpt.roster.push_back(detail::get_str(in));
  for (uint32_t i = 0; i < roster_count; ++i)
    ckpt.class_counts.push_back(static_cast<int64_t>(detail::get_u64(in)));

  uint32_t meta_count = detail::get_u32(in);
  for (uint32_t i = 0; i < meta_count; ++i) {
    std::string k = detail::get_str(in);
    ckpt.metadata[k] = detail::get_str(in);
  }

  ckpt.params = init_params(c);
  auto refs = array_refs(ckpt.params);
  std::map<std::string, ArrayRef*> by_name;
  for (auto& r : refs) by_name[r.name] = &r;
  std::map<std::string, bool> filled;
  for (auto& r : refs) filled[r.name] = false;

  uint32_t array_count = detail::get_u32(in);
  for (uint32_t i = 0; i < array_count; ++i) {
    std::string name = detail::get_str(in);
    Eigen::Index rows = static_cast<Eigen::Index>(detail::get_u32(in));
    Eigen::Index cols = static_cast<Eigen::Index>(detail::get_u32(in));
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw Error("checkpoint: unexpected array '" + name + "'");
    ArrayRef* ref = it->second;
    if (ref->rows != rows || ref->cols != cols)
      throw Error("checkpoint: shape mismatch for '" + name + "'");
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index cc = 0; cc < cols; ++cc)
        ref->data[cc * rows + r] = static_cast<double>(detail::get_f32(in));
    filled[name] = true;
  }
  for (const auto& [name, ok] : filled) {
    if (!ok) throw Error("checkpoint: missing array '" + name + "'");
  }
  ckpt.validate();
  return ckpt;
}

}  // namespace mvd

#endif  // MVD_CHECKPOINT_HPP_
