#ifndef MVD_MODEL_HPP_
#define MVD_MODEL_HPP_

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mvd/common.hpp"
#include "mvd/tokenizer.hpp"

namespace mvd {

struct ModelConfig {
  int vocab_size = 0;
  int max_len = 256;
  int hidden_dim = 128;
  int num_layers = 2;
  int num_heads = 4;
  int ffn_dim = 256;
  double dropout_rate = 0.1;
  int num_classes = 2;  // n languages + 1 clean class
  uint64_t seed = 0;

  void validate() const {
    if (vocab_size <= 0) throw Error("config: vocab_size must be positive");
    if (max_len < 3) throw Error("config: max_len must be >= 3");
    if (hidden_dim <= 0 || num_heads <= 0 || hidden_dim % num_heads != 0)
      throw Error("config: hidden_dim must be divisible by num_heads");
    if (num_layers < 0) throw Error("config: num_layers must be >= 0");
    if (ffn_dim <= 0) throw Error("config: ffn_dim must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
      throw Error("config: dropout_rate must be in [0,1)");
    if (num_classes < 2) throw Error("config: num_classes must be >= 2");
  }

  int head_dim() const { return hidden_dim / num_heads; }
};

struct LayerParams {
  Mat wq, wk, wv, wo;  // hidden x hidden, applied as x * W^T + b
  Vec bq, bk, bv, bo;
  Vec ln1_gain, ln1_bias;
  Vec ln2_gain, ln2_bias;
  Mat w1;  // ffn_dim x hidden
  Vec b1;
  Mat w2;  // hidden x ffn_dim
  Vec b2;
};

struct ModelParams {
  ModelConfig config;
  Mat token_embedding;     // vocab_size x hidden
  Mat position_embedding;  // max_len x hidden
  std::vector<LayerParams> layers;
  Vec final_gain, final_bias;  // closing layer norm of the pre-LN stack
  Mat head_w;                  // num_classes x hidden
  Vec head_b;
};

// Named view over every learnable array; the optimizer, the checkpoint
// format and the gradient checker all enumerate parameters through this.
struct ArrayRef {
  std::string name;
  double* data;
  Eigen::Index rows;
  Eigen::Index cols;
  Eigen::Index size() const { return rows * cols; }
};

inline std::vector<ArrayRef> array_refs(ModelParams& p) {
  std::vector<ArrayRef> refs;
  auto add_mat = [&](const std::string& name, Mat& m) {
    refs.push_back({name, m.data(), m.rows(), m.cols()});
  };
  auto add_vec = [&](const std::string& name, Vec& v) {
    refs.push_back({name, v.data(), v.size(), 1});
  };
  add_mat("token_embedding", p.token_embedding);
  add_mat("position_embedding", p.position_embedding);
  for (size_t l = 0; l < p.layers.size(); ++l) {
    std::string pre = "layer" + std::to_string(l) + ".";
    LayerParams& lp = p.layers[l];
    add_mat(pre + "wq", lp.wq); add_vec(pre + "bq", lp.bq);
    add_mat(pre + "wk", lp.wk); add_vec(pre + "bk", lp.bk);
    add_mat(pre + "wv", lp.wv); add_vec(pre + "bv", lp.bv);
    add_mat(pre + "wo", lp.wo); add_vec(pre + "bo", lp.bo);
    add_vec(pre + "ln1_gain", lp.ln1_gain); add_vec(pre + "ln1_bias", lp.ln1_bias);
    add_vec(pre + "ln2_gain", lp.ln2_gain); add_vec(pre + "ln2_bias", lp.ln2_bias);
    add_mat(pre + "w1", lp.w1); add_vec(pre + "b1", lp.b1);
    add_mat(pre + "w2", lp.w2); add_vec(pre + "b2", lp.b2);
  }
  add_vec("final_gain", p.final_gain);
  add_vec("final_bias", p.final_bias);
  add_mat("head_w", p.head_w);
  add_vec("head_b", p.head_b);
  return refs;
}

// Seeded init: weights uniform in +-1/sqrt(fan_in), layer-norm gains 1,
// all biases and offsets 0, zero head bias.
inline ModelParams init_params(const ModelConfig& config) {
  config.validate();
  Rng rng(derive_seed(config.seed, "init"));
  auto fill = [&](Mat& m, Eigen::Index rows, Eigen::Index cols, double fan_in) {
    m.resize(rows, cols);
    double s = 1.0 / std::sqrt(fan_in);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-s, s);
  };
  const int d = config.hidden_dim;
  ModelParams p;
  p.config = config;
  fill(p.token_embedding, config.vocab_size, d, d);
  fill(p.position_embedding, config.max_len, d, d);
  p.layers.resize(static_cast<size_t>(config.num_layers));
  for (auto& lp : p.layers) {
    fill(lp.wq, d, d, d); lp.bq = Vec::Zero(d);
    fill(lp.wk, d, d, d); lp.bk = Vec::Zero(d);
    fill(lp.wv, d, d, d); lp.bv = Vec::Zero(d);
    fill(lp.wo, d, d, d); lp.bo = Vec::Zero(d);
    lp.ln1_gain = Vec::Ones(d); lp.ln1_bias = Vec::Zero(d);
    lp.ln2_gain = Vec::Ones(d); lp.ln2_bias = Vec::Zero(d);
    fill(lp.w1, config.ffn_dim, d, d); lp.b1 = Vec::Zero(config.ffn_dim);
    fill(lp.w2, d, config.ffn_dim, config.ffn_dim); lp.b2 = Vec::Zero(d);
  }
  p.final_gain = Vec::Ones(d);
  p.final_bias = Vec::Zero(d);
  fill(p.head_w, config.num_classes, d, d);
  p.head_b = Vec::Zero(config.num_classes);
  return p;
}

inline ModelParams zeros_like(const ModelParams& p) {
  ModelParams z = p;
  for (auto& ref : array_refs(z)) {
    for (Eigen::Index i = 0; i < ref.size(); ++i) ref.data[i] = 0.0;
  }
  return z;
}

// Grows the classification head by exactly one zero-initialized class.
// Old rows and biases are copied verbatim; the encoder is untouched.
inline ModelParams expand_head(const ModelParams& params, int new_class_count) {
  if (new_class_count != params.config.num_classes + 1)
    throw Error("expand_head: new class count must be num_classes + 1");
  ModelParams out = params;
  out.config.num_classes = new_class_count;
  out.head_w.conservativeResize(new_class_count, Eigen::NoChange);
  out.head_w.row(new_class_count - 1).setZero();
  out.head_b.conservativeResize(new_class_count);
  out.head_b[new_class_count - 1] = 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

namespace detail {

constexpr double kLnEps = 1e-5;

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

inline double gelu_grad(double x) {
  double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) + x * phi;
}

struct LnCache {
  Mat normed;   // x_hat
  Vec inv_std;  // per row
};

inline Mat layer_norm(const Mat& x, const Vec& gain, const Vec& bias, LnCache& cache) {
  const Eigen::Index rows = x.rows(), cols = x.cols();
  cache.normed.resize(rows, cols);
  cache.inv_std.resize(rows);
  Mat out(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    double mean = x.row(r).mean();
    double var = (x.row(r).array() - mean).square().mean();
    double inv = 1.0 / std::sqrt(var + kLnEps);
    cache.inv_std[r] = inv;
    cache.normed.row(r) = (x.row(r).array() - mean) * inv;
    out.row(r) = cache.normed.row(r).cwiseProduct(gain.transpose()) + bias.transpose();
  }
  return out;
}

inline Mat layer_norm_backward(const Mat& dout, const LnCache& cache, const Vec& gain,
                               Vec& dgain, Vec& dbias) {
  const Eigen::Index rows = dout.rows(), cols = dout.cols();
  Mat dx(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    dgain += dout.row(r).cwiseProduct(cache.normed.row(r)).transpose();
    dbias += dout.row(r).transpose();
    Eigen::RowVectorXd dxhat = dout.row(r).cwiseProduct(gain.transpose());
    double m1 = dxhat.mean();
    double m2 = dxhat.cwiseProduct(cache.normed.row(r)).mean();
    dx.row(r) =
        (cache.inv_std[r] * (dxhat.array() - m1 - cache.normed.row(r).array() * m2))
            .matrix();
  }
  return dx;
}

struct LayerCache {
  Mat x_in;
  LnCache ln1;
  Mat n1;
  Mat q, k, v;
  std::vector<Mat> attn;  // per head, L x L
  Mat context;            // concatenated heads
  Mat attn_drop_mask;     // empty when dropout off
  Mat x_mid;
  LnCache ln2;
  Mat n2;
  Mat h1;  // pre-activation
  Mat act;
  Mat ffn_drop_mask;
};

struct ExampleCache {
  std::vector<int> ids;
  int valid = 0;
  Mat emb_drop_mask;
  Mat x0;
  std::vector<LayerCache> layers;
  LnCache ln_final;
  Mat x_final_in;
};

}  // namespace detail

struct ForwardCache {
  std::vector<detail::ExampleCache> examples;
  bool training = false;
};

namespace detail {

inline Mat dropout_mask(Rng& rng, Eigen::Index rows, Eigen::Index cols, double rate) {
  Mat mask(rows, cols);
  double keep = 1.0 - rate;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      mask(r, c) = rng.next_double() < rate ? 0.0 : 1.0 / keep;
  return mask;
}

}  // namespace detail

// Encoder forward pass. Returns one logits row per example. Each example
// is computed on its true-length prefix, so pad positions never enter any
// computation and logits are exactly independent of pad length. Dropout
// fires only in training mode and draws from `dropout_rng`.
inline Mat forward(const ModelParams& params, const std::vector<TokenSequence>& batch,
                   bool training, Rng* dropout_rng = nullptr,
                   ForwardCache* cache = nullptr) {
  const ModelConfig& cfg = params.config;
  const int d = cfg.hidden_dim;
  const int heads = cfg.num_heads;
  const int dh = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool use_dropout = training && cfg.dropout_rate > 0.0;
  if (use_dropout && dropout_rng == nullptr)
    throw Error("forward: training with dropout requires an rng");

  Mat logits(static_cast<Eigen::Index>(batch.size()), cfg.num_classes);
  if (cache) {
    cache->examples.assign(batch.size(), {});
    cache->training = training;
  }

  for (size_t b = 0; b < batch.size(); ++b) {
    const TokenSequence& seq = batch[b];
    if (static_cast<int>(seq.ids.size()) != cfg.max_len)
      throw Error("forward: sequence length does not match config max_len");
    if (seq.true_length < 1 || seq.true_length > cfg.max_len)
      throw Error("forward: true_length outside [1, max_len]");
    const int len = seq.true_length;

    Mat x(len, d);
    for (int i = 0; i < len; ++i) {
      int id = seq.ids[static_cast<size_t>(i)];
      if (id < 0 || id >= cfg.vocab_size) throw Error("id out of range");
      x.row(i) = params.token_embedding.row(id) + params.position_embedding.row(i);
    }
    detail::ExampleCache* ex = nullptr;
    if (cache) {
      ex = &cache->examples[b];
      ex->ids = seq.ids;
      ex->valid = seq.true_length;
    }
    if (use_dropout) {
      Mat mask = detail::dropout_mask(*dropout_rng, len, d, cfg.dropout_rate);
      x = x.cwiseProduct(mask);
      if (ex) ex->emb_drop_mask = std::move(mask);
    }
    if (ex) {
      ex->x0 = x;
      ex->layers.resize(params.layers.size());
    }

    for (size_t l = 0; l < params.layers.size(); ++l) {
      const LayerParams& lp = params.layers[l];
      detail::LayerCache local;
      detail::LayerCache& lc = ex ? ex->layers[l] : local;
      lc.x_in = x;

      lc.n1 = detail::layer_norm(x, lp.ln1_gain, lp.ln1_bias, lc.ln1);
      lc.q = (lc.n1 * lp.wq.transpose()).rowwise() + lp.bq.transpose();
      lc.k = (lc.n1 * lp.wk.transpose()).rowwise() + lp.bk.transpose();
      lc.v = (lc.n1 * lp.wv.transpose()).rowwise() + lp.bv.transpose();

      lc.context.resize(len, d);
      lc.attn.assign(static_cast<size_t>(heads), Mat());
      for (int h = 0; h < heads; ++h) {
        auto qh = lc.q.middleCols(h * dh, dh);
        auto kh = lc.k.middleCols(h * dh, dh);
        auto vh = lc.v.middleCols(h * dh, dh);
        Mat scores = qh * kh.transpose() * scale;
        Mat a(len, len);
        for (int i = 0; i < len; ++i)
          a.row(i) = softmax(scores.row(i).transpose()).transpose();
        lc.attn[static_cast<size_t>(h)] = a;
        lc.context.middleCols(h * dh, dh) = a * vh;
      }
      Mat attn_out = (lc.context * lp.wo.transpose()).rowwise() + lp.bo.transpose();
      if (use_dropout) {
        lc.attn_drop_mask = detail::dropout_mask(*dropout_rng, len, d, cfg.dropout_rate);
        attn_out = attn_out.cwiseProduct(lc.attn_drop_mask);
      }
      x += attn_out;
      lc.x_mid = x;

      lc.n2 = detail::layer_norm(x, lp.ln2_gain, lp.ln2_bias, lc.ln2);
      lc.h1 = (lc.n2 * lp.w1.transpose()).rowwise() + lp.b1.transpose();
      lc.act = lc.h1.unaryExpr([](double v) { return detail::gelu(v); });
      Mat ffn_out = (lc.act * lp.w2.transpose()).rowwise() + lp.b2.transpose();
      if (use_dropout) {
        lc.ffn_drop_mask = detail::dropout_mask(*dropout_rng, len, d, cfg.dropout_rate);
        ffn_out = ffn_out.cwiseProduct(lc.ffn_drop_mask);
      }
      x += ffn_out;
    }

    detail::LnCache fin_local;
    detail::LnCache& fin = ex ? ex->ln_final : fin_local;
    if (ex) ex->x_final_in = x;
    Mat xf = detail::layer_norm(x, params.final_gain, params.final_bias, fin);
    Vec pooled = xf.row(0).transpose();  // <cls> position
    logits.row(static_cast<Eigen::Index>(b)) =
        (params.head_w * pooled + params.head_b).transpose();
  }
  return logits;
}

// Exact gradients of a scalar loss with respect to every parameter array,
// given the upstream gradient on the logits and the cache of the matching
// forward call.
inline ModelParams backward(const ModelParams& params, const ForwardCache& cache,
                            const Mat& dlogits) {
  const ModelConfig& cfg = params.config;
  const int d = cfg.hidden_dim;
  const int heads = cfg.num_heads;
  const int dh = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  if (dlogits.rows() != static_cast<Eigen::Index>(cache.examples.size()))
    throw Error("backward: dlogits batch does not match cache");

  ModelParams grads = zeros_like(params);

  for (size_t b = 0; b < cache.examples.size(); ++b) {
    const detail::ExampleCache& ex = cache.examples[b];
    const int len = ex.valid;
    Vec dlog = dlogits.row(static_cast<Eigen::Index>(b)).transpose();

    // Head: logits = head_w * pooled + head_b, pooled = xf.row(0).
    Mat xf_row0;
    {
      // Recompute xf.row(0) from cache (cheap, avoids storing xf).
      xf_row0 = ex.ln_final.normed.row(0).cwiseProduct(params.final_gain.transpose()) +
                params.final_bias.transpose();
    }
    grads.head_w += dlog * xf_row0;
    grads.head_b += dlog;

    Mat dxf = Mat::Zero(len, d);
    dxf.row(0) = (params.head_w.transpose() * dlog).transpose();

    Mat dx = detail::layer_norm_backward(dxf, ex.ln_final, params.final_gain,
                                         grads.final_gain, grads.final_bias);

    for (size_t li = params.layers.size(); li-- > 0;) {
      const LayerParams& lp = params.layers[li];
      LayerParams& lg = grads.layers[li];
      const detail::LayerCache& lc = ex.layers[li];

      // FFN block: x_out = x_mid + drop(w2(gelu(w1 n2 + b1)) + b2)
      Mat dffn_out = dx;
      if (lc.ffn_drop_mask.size() > 0) dffn_out = dffn_out.cwiseProduct(lc.ffn_drop_mask);
      lg.w2 += dffn_out.transpose() * lc.act;
      lg.b2 += dffn_out.colwise().sum().transpose();
      Mat dact = dffn_out * lp.w2;
      Mat dh1 =
          dact.cwiseProduct(lc.h1.unaryExpr([](double v) { return detail::gelu_grad(v); }));
      lg.w1 += dh1.transpose() * lc.n2;
      lg.b1 += dh1.colwise().sum().transpose();
      Mat dn2 = dh1 * lp.w1;
      Mat dx_mid =
          detail::layer_norm_backward(dn2, lc.ln2, lp.ln2_gain, lg.ln2_gain, lg.ln2_bias);
      dx_mid += dx;  // residual

      // Attention block: x_mid = x_in + drop(wo * context + bo)
      Mat dattn_out = dx_mid;
      if (lc.attn_drop_mask.size() > 0)
        dattn_out = dattn_out.cwiseProduct(lc.attn_drop_mask);
      lg.wo += dattn_out.transpose() * lc.context;
      lg.bo += dattn_out.colwise().sum().transpose();
      Mat dcontext = dattn_out * lp.wo;

      Mat dq = Mat::Zero(len, d), dk = Mat::Zero(len, d), dv = Mat::Zero(len, d);
      for (int h = 0; h < heads; ++h) {
        const Mat& a = lc.attn[static_cast<size_t>(h)];
        auto qh = lc.q.middleCols(h * dh, dh);
        auto kh = lc.k.middleCols(h * dh, dh);
        auto vh = lc.v.middleCols(h * dh, dh);
        Mat dch = dcontext.middleCols(h * dh, dh);
        Mat da = dch * vh.transpose();
        dv.middleCols(h * dh, dh) = a.transpose() * dch;
        // Row-wise softmax backward.
        Mat ds(len, len);
        for (int i = 0; i < len; ++i) {
          double dot = da.row(i).dot(a.row(i));
          ds.row(i) = a.row(i).cwiseProduct((da.row(i).array() - dot).matrix());
        }
        dq.middleCols(h * dh, dh) = ds * kh * scale;
        dk.middleCols(h * dh, dh) = ds.transpose() * qh * scale;
      }
      lg.wq += dq.transpose() * lc.n1;
      lg.bq += dq.colwise().sum().transpose();
      lg.wk += dk.transpose() * lc.n1;
      lg.bk += dk.colwise().sum().transpose();
      lg.wv += dv.transpose() * lc.n1;
      lg.bv += dv.colwise().sum().transpose();
      Mat dn1 = dq * lp.wq + dk * lp.wk + dv * lp.wv;
      Mat dx_in =
          detail::layer_norm_backward(dn1, lc.ln1, lp.ln1_gain, lg.ln1_gain, lg.ln1_bias);
      dx_in += dx_mid;  // residual
      dx = dx_in;
    }

    if (ex.emb_drop_mask.size() > 0) dx = dx.cwiseProduct(ex.emb_drop_mask);
    for (int i = 0; i < len; ++i) {
      grads.token_embedding.row(ex.ids[static_cast<size_t>(i)]) += dx.row(i);
      grads.position_embedding.row(i) += dx.row(i);
    }
  }
  return grads;
}

}  // namespace mvd

#endif  // MVD_MODEL_HPP_
