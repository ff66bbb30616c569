#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "modelizer/errors.hpp"
#include "modelizer/rng.hpp"
#include "modelizer/vocabulary.hpp"

namespace modelizer {

struct ModelConfig {
  std::size_t encoder_layers = 1;
  std::size_t decoder_layers = 1;
  std::size_t embedding_size = 64;
  std::size_t feedforward_size = 256;
  std::size_t attention_heads = 4;
  double dropout = 0.1;
  std::size_t context_window = 5000;

  void validate() const {
    if (encoder_layers == 0 || decoder_layers == 0) throw ConfigInvalid("layer counts must be >= 1");
    if (embedding_size == 0 || feedforward_size == 0 || attention_heads == 0)
      throw ConfigInvalid("embedding, feedforward and head counts must be >= 1");
    if (embedding_size % attention_heads != 0)
      throw ConfigInvalid("embedding size " + std::to_string(embedding_size) + " is not divisible by " +
                          std::to_string(attention_heads) + " heads");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigInvalid("dropout must lie in [0, 1)");
    if (context_window < 2) throw ConfigInvalid("context window must be >= 2");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// One training or evaluation pair of token ids without BOS/EOS. Trailing PAD
// ids are ignored, which is how padded batches stay neutral.
struct Sample {
  std::vector<int> src;
  std::vector<int> tgt;
};

using Dataset = std::vector<Sample>;

struct ParamInfo {
  std::string name;
  std::size_t offset;
  std::size_t rows;
  std::size_t cols;
};

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;
template <class T>
using ColVec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
// Flat parameter/gradient storage. Aligned so vectorized kernels take the
// same path on every allocation and results stay bit-reproducible.
template <class T>
using Buffer = std::vector<T, Eigen::aligned_allocator<T>>;

namespace nn {

inline constexpr double norm_eps = 1e-5;

struct LinearRef {
  std::size_t w = 0, b = 0, out = 0, in = 0;
};
struct NormRef {
  std::size_t g = 0, b = 0, dim = 0;
};
struct AttnRef {
  LinearRef in_proj, out_proj;
};
struct EncoderRef {
  AttnRef self;
  LinearRef ff1, ff2;
  NormRef n1, n2;
};
struct DecoderRef {
  AttnRef self, cross;
  LinearRef ff1, ff2;
  NormRef n1, n2, n3;
};

template <class T>
Mat<T> linear(const T* p, const LinearRef& l, const Mat<T>& x) {
  Eigen::Map<const Mat<T>> w(p + l.w, static_cast<Eigen::Index>(l.out), static_cast<Eigen::Index>(l.in));
  Eigen::Map<const RowVec<T>> b(p + l.b, static_cast<Eigen::Index>(l.out));
  Mat<T> y = x * w.transpose();
  y.rowwise() += b;
  return y;
}

template <class T>
Mat<T> linear_back(const T* p, T* g, const LinearRef& l, const Mat<T>& x, const Mat<T>& dy) {
  const auto out = static_cast<Eigen::Index>(l.out), in = static_cast<Eigen::Index>(l.in);
  Eigen::Map<const Mat<T>> w(p + l.w, out, in);
  Eigen::Map<Mat<T>> dw(g + l.w, out, in);
  Eigen::Map<RowVec<T>> db(g + l.b, out);
  dw.noalias() += dy.transpose() * x;
  db += dy.colwise().sum();
  return dy * w;
}

template <class T>
struct NormCache {
  Mat<T> xhat;
  ColVec<T> rstd;
};

template <class T>
Mat<T> layer_norm(const T* p, const NormRef& n, const Mat<T>& x, NormCache<T>& c) {
  const auto d = static_cast<Eigen::Index>(n.dim);
  Eigen::Map<const RowVec<T>> gamma(p + n.g, d), beta(p + n.b, d);
  const ColVec<T> mean = x.rowwise().mean();
  Mat<T> xc = x.colwise() - mean;
  const ColVec<T> var = xc.array().square().rowwise().mean();
  c.rstd = (var.array() + static_cast<T>(norm_eps)).rsqrt();
  c.xhat = xc.array().colwise() * c.rstd.array();
  Mat<T> y = c.xhat.array().rowwise() * gamma.array();
  y.rowwise() += beta;
  return y;
}

template <class T>
Mat<T> layer_norm_back(const T* p, T* g, const NormRef& n, const NormCache<T>& c, const Mat<T>& dy) {
  const auto d = static_cast<Eigen::Index>(n.dim);
  Eigen::Map<const RowVec<T>> gamma(p + n.g, d);
  Eigen::Map<RowVec<T>> dgamma(g + n.g, d), dbeta(g + n.b, d);
  dgamma += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  dbeta += dy.colwise().sum();
  const Mat<T> dxhat = dy.array().rowwise() * gamma.array();
  const ColVec<T> m1 = dxhat.rowwise().mean();
  const ColVec<T> m2 = (dxhat.array() * c.xhat.array()).rowwise().mean();
  Mat<T> dx = dxhat.colwise() - m1;
  dx -= (c.xhat.array().colwise() * m2.array()).matrix();
  return dx.array().colwise() * c.rstd.array();
}

// Inverted dropout; an empty mask means identity.
template <class T>
Mat<T> dropout(const Mat<T>& x, double rate, Rng* rng, Mat<T>& mask) {
  if (rng == nullptr || rate <= 0.0) {
    mask.resize(0, 0);
    return x;
  }
  mask.resize(x.rows(), x.cols());
  const T keep = static_cast<T>(1.0 / (1.0 - rate));
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng->uniform() < rate ? T(0) : keep;
  return x.cwiseProduct(mask);
}

template <class T>
Mat<T> dropout_back(const Mat<T>& mask, const Mat<T>& dy) {
  return mask.size() == 0 ? dy : Mat<T>(dy.cwiseProduct(mask));
}

template <class T>
struct AttnCache {
  Mat<T> q_in, kv_in, q, k, v, o;
  std::vector<Mat<T>> weights;  // one [Lq x Lk] matrix per head
};

template <class T>
Mat<T> attention(const T* p, const AttnRef& a, std::size_t heads, const Mat<T>& q_in, const Mat<T>& kv_in, bool causal,
                 AttnCache<T>& c) {
  const auto d = q_in.cols();
  const auto dh = d / static_cast<Eigen::Index>(heads);
  Eigen::Map<const Mat<T>> w(p + a.in_proj.w, 3 * d, d);
  Eigen::Map<const RowVec<T>> b(p + a.in_proj.b, 3 * d);
  c.q_in = q_in;
  c.kv_in = kv_in;
  c.q = q_in * w.topRows(d).transpose();
  c.q.rowwise() += b.segment(0, d);
  c.k = kv_in * w.middleRows(d, d).transpose();
  c.k.rowwise() += b.segment(d, d);
  c.v = kv_in * w.bottomRows(d).transpose();
  c.v.rowwise() += b.segment(2 * d, d);

  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  c.o.resize(q_in.rows(), d);
  c.weights.clear();
  for (std::size_t h = 0; h < heads; ++h) {
    const auto off = static_cast<Eigen::Index>(h) * dh;
    Mat<T> s = (c.q.middleCols(off, dh) * c.k.middleCols(off, dh).transpose()) * scale;
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      const Eigen::Index visible = causal ? std::min<Eigen::Index>(i + 1, s.cols()) : s.cols();
      const T mx = s.row(i).head(visible).maxCoeff();
      T sum = 0;
      for (Eigen::Index j = 0; j < s.cols(); ++j) {
        const T e = j < visible ? std::exp(s(i, j) - mx) : T(0);
        s(i, j) = e;
        sum += e;
      }
      s.row(i) /= sum;
    }
    c.o.middleCols(off, dh).noalias() = s * c.v.middleCols(off, dh);
    c.weights.push_back(std::move(s));
  }
  return linear(p, a.out_proj, c.o);
}

// Returns the gradient for the query input; the key/value input gradient is
// added to `dkv`.
template <class T>
Mat<T> attention_back(const T* p, T* g, const AttnRef& a, std::size_t heads, const AttnCache<T>& c, const Mat<T>& dy,
                      Mat<T>& dkv) {
  const auto d = c.q_in.cols();
  const auto dh = d / static_cast<Eigen::Index>(heads);
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  const Mat<T> d_o = linear_back(p, g, a.out_proj, c.o, dy);
  Mat<T> dq(c.q.rows(), d), dk(c.k.rows(), d), dv(c.v.rows(), d);
  for (std::size_t h = 0; h < heads; ++h) {
    const auto off = static_cast<Eigen::Index>(h) * dh;
    const Mat<T>& wts = c.weights[h];
    const Mat<T> doh = d_o.middleCols(off, dh);
    const Mat<T> dw = doh * c.v.middleCols(off, dh).transpose();
    dv.middleCols(off, dh).noalias() = wts.transpose() * doh;
    const ColVec<T> rs = (dw.array() * wts.array()).rowwise().sum();
    const Mat<T> ds = (wts.array() * (dw.colwise() - rs).array()).matrix() * scale;
    dq.middleCols(off, dh).noalias() = ds * c.k.middleCols(off, dh);
    dk.middleCols(off, dh).noalias() = ds.transpose() * c.q.middleCols(off, dh);
  }
  Eigen::Map<const Mat<T>> w(p + a.in_proj.w, 3 * d, d);
  Eigen::Map<Mat<T>> gw(g + a.in_proj.w, 3 * d, d);
  Eigen::Map<RowVec<T>> gb(g + a.in_proj.b, 3 * d);
  gw.topRows(d).noalias() += dq.transpose() * c.q_in;
  gw.middleRows(d, d).noalias() += dk.transpose() * c.kv_in;
  gw.bottomRows(d).noalias() += dv.transpose() * c.kv_in;
  gb.segment(0, d) += dq.colwise().sum();
  gb.segment(d, d) += dk.colwise().sum();
  gb.segment(2 * d, d) += dv.colwise().sum();
  dkv.noalias() += dk * w.middleRows(d, d);
  dkv.noalias() += dv * w.bottomRows(d);
  return dq * w.topRows(d);
}

template <class T>
struct FeedForwardCache {
  Mat<T> x, pre, hidden, mask;
};

template <class T>
Mat<T> feed_forward(const T* p, const LinearRef& l1, const LinearRef& l2, const Mat<T>& x, double rate, Rng* rng,
                    FeedForwardCache<T>& c) {
  c.x = x;
  c.pre = linear(p, l1, x);
  c.hidden = dropout(Mat<T>(c.pre.cwiseMax(T(0))), rate, rng, c.mask);
  return linear(p, l2, c.hidden);
}

template <class T>
Mat<T> feed_forward_back(const T* p, T* g, const LinearRef& l1, const LinearRef& l2, const FeedForwardCache<T>& c,
                         const Mat<T>& dy) {
  Mat<T> dh = dropout_back(c.mask, linear_back(p, g, l2, c.hidden, dy));
  dh = (c.pre.array() > T(0)).select(dh, T(0));
  return linear_back(p, g, l1, c.x, dh);
}

template <class T>
struct EncoderCache {
  AttnCache<T> self;
  Mat<T> m1, m2;
  NormCache<T> n1, n2;
  FeedForwardCache<T> ff;
};

template <class T>
struct DecoderCache {
  AttnCache<T> self, cross;
  Mat<T> m1, m2, m3;
  NormCache<T> n1, n2, n3;
  FeedForwardCache<T> ff;
};

}  // namespace nn

// Encoder-decoder transformer with post-norm layers. Parameters live in one
// flat buffer described by `registry()`; gradients go to a caller-owned buffer
// of the same size, so const member functions are safe to call concurrently.
template <class T>
class Seq2Seq {
 public:
  Seq2Seq(const ModelConfig& cfg, std::size_t src_vocab, std::size_t tgt_vocab)
      : cfg_(cfg), src_vocab_(src_vocab), tgt_vocab_(tgt_vocab) {
    cfg_.validate();
    if (src_vocab <= reserved_count || tgt_vocab <= reserved_count)
      throw ConfigInvalid("vocabularies must contain tokens beyond the reserved ones");
    build_layout();
    params_.assign(size_, T(0));
    build_positions();
  }

  const ModelConfig& config() const { return cfg_; }
  std::size_t src_vocab_size() const { return src_vocab_; }
  std::size_t tgt_vocab_size() const { return tgt_vocab_; }
  std::size_t param_count() const { return size_; }
  const std::vector<ParamInfo>& registry() const { return registry_; }
  Buffer<T>& params() { return params_; }
  const Buffer<T>& params() const { return params_; }

  // Weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases 0, norm gains 1.
  void initialize(std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x1417));
    for (const auto& info : registry_) {
      T* dst = params_.data() + info.offset;
      const std::size_t n = info.rows * info.cols;
      if (is_suffix(info.name, ".gamma")) {
        std::fill(dst, dst + n, T(1));
      } else if (info.rows == 1) {
        std::fill(dst, dst + n, T(0));
      } else {
        const double a = 1.0 / std::sqrt(static_cast<double>(info.cols));
        for (std::size_t i = 0; i < n; ++i) dst[i] = static_cast<T>(rng.uniform(-a, a));
      }
    }
  }

  template <class U>
  Seq2Seq<U> cast() const {
    Seq2Seq<U> out(cfg_, src_vocab_, tgt_vocab_);
    for (std::size_t i = 0; i < size_; ++i) out.params()[i] = static_cast<U>(params_[i]);
    return out;
  }

  // Encoder output for `src` (EOS is appended here).
  Mat<T> encode(const std::vector<int>& src) const {
    Pass pass;
    return encode_pass(with_eos(src), nullptr, pass);
  }

  // Logits [dec_in.size() x tgt_vocab] for a decoder input starting with BOS.
  Mat<T> decode_logits(const Mat<T>& memory, const std::vector<int>& dec_in) const {
    Pass pass;
    return decode_pass(memory, dec_in, nullptr, pass);
  }

  // Summed token cross-entropy of one sample, without dropout.
  double sample_loss(const Sample& s) const { return run(s, nullptr, T(0), nullptr, nullptr); }

  std::size_t label_count(const Sample& s) const { return trim(s.tgt).size() + 1; }

  // Summed cross-entropy; adds scale * gradient to `grad`. `dropout_rng`
  // enables dropout.
  double loss_and_grad(const Sample& s, T* grad, T scale, Rng* dropout_rng) const {
    return run(s, grad, scale, dropout_rng, nullptr);
  }

  // Every attention weight matrix of one forward pass: encoder self, then per
  // decoder layer self and cross, each split by head.
  std::vector<Mat<T>> attention_maps(const Sample& s) const {
    std::vector<Mat<T>> maps;
    run(s, nullptr, T(0), nullptr, &maps);
    return maps;
  }

  friend bool operator==(const Seq2Seq& a, const Seq2Seq& b) {
    return a.cfg_ == b.cfg_ && a.src_vocab_ == b.src_vocab_ && a.tgt_vocab_ == b.tgt_vocab_ && a.params_ == b.params_;
  }

 private:
  struct Pass {
    std::vector<int> enc_in, dec_in;
    Mat<T> enc_mask, dec_mask;
    std::vector<nn::EncoderCache<T>> enc;
    std::vector<nn::DecoderCache<T>> dec;
    nn::NormCache<T> enc_norm, dec_norm;
    Mat<T> dec_out;
  };

  static bool is_suffix(const std::string& s, const std::string& suf) {
    return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
  }

  static std::vector<int> trim(const std::vector<int>& v) {
    std::size_t n = v.size();
    while (n > 0 && v[n - 1] == pad_id) --n;
    return {v.begin(), v.begin() + static_cast<long>(n)};
  }

  static std::vector<int> with_eos(const std::vector<int>& src) {
    auto v = trim(src);
    v.push_back(eos_id);
    return v;
  }

  std::size_t add(const std::string& name, std::size_t rows, std::size_t cols) {
    registry_.push_back({name, size_, rows, cols});
    size_ += rows * cols;
    return registry_.back().offset;
  }

  nn::LinearRef add_linear(const std::string& name, std::size_t out, std::size_t in) {
    nn::LinearRef l;
    l.out = out;
    l.in = in;
    l.w = add(name + ".weight", out, in);
    l.b = add(name + ".bias", 1, out);
    return l;
  }

  nn::NormRef add_norm(const std::string& name) {
    const std::size_t d = cfg_.embedding_size;
    nn::NormRef n;
    n.dim = d;
    n.g = add(name + ".gamma", 1, d);
    n.b = add(name + ".beta", 1, d);
    return n;
  }

  nn::AttnRef add_attention(const std::string& name) {
    const std::size_t d = cfg_.embedding_size;
    return {add_linear(name + ".in_proj", 3 * d, d), add_linear(name + ".out_proj", d, d)};
  }

  void build_layout() {
    const std::size_t d = cfg_.embedding_size, ff = cfg_.feedforward_size;
    src_embed_ = add("src_embedding", src_vocab_, d);
    tgt_embed_ = add("tgt_embedding", tgt_vocab_, d);
    for (std::size_t i = 0; i < cfg_.encoder_layers; ++i) {
      const std::string p = "encoder." + std::to_string(i);
      nn::EncoderRef e;
      e.self = add_attention(p + ".self_attn");
      e.ff1 = add_linear(p + ".linear1", ff, d);
      e.ff2 = add_linear(p + ".linear2", d, ff);
      e.n1 = add_norm(p + ".norm1");
      e.n2 = add_norm(p + ".norm2");
      enc_.push_back(e);
    }
    enc_norm_ = add_norm("encoder.norm");
    for (std::size_t i = 0; i < cfg_.decoder_layers; ++i) {
      const std::string p = "decoder." + std::to_string(i);
      nn::DecoderRef e;
      e.self = add_attention(p + ".self_attn");
      e.cross = add_attention(p + ".cross_attn");
      e.ff1 = add_linear(p + ".linear1", ff, d);
      e.ff2 = add_linear(p + ".linear2", d, ff);
      e.n1 = add_norm(p + ".norm1");
      e.n2 = add_norm(p + ".norm2");
      e.n3 = add_norm(p + ".norm3");
      dec_.push_back(e);
    }
    dec_norm_ = add_norm("decoder.norm");
    generator_ = add_linear("generator", tgt_vocab_, d);
  }

  void build_positions() {
    const auto n = static_cast<Eigen::Index>(cfg_.context_window);
    const auto d = static_cast<Eigen::Index>(cfg_.embedding_size);
    positions_.resize(n, d);
    for (Eigen::Index pos = 0; pos < n; ++pos) {
      for (Eigen::Index i = 0; i < d; i += 2) {
        const double angle = static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d));
        positions_(pos, i) = static_cast<T>(std::sin(angle));
        if (i + 1 < d) positions_(pos, i + 1) = static_cast<T>(std::cos(angle));
      }
    }
  }

  Mat<T> embed(std::size_t table, std::size_t vocab, const std::vector<int>& ids) const {
    if (ids.size() > cfg_.context_window) throw SequenceTooLong(0, ids.size(), cfg_.context_window);
    const auto d = static_cast<Eigen::Index>(cfg_.embedding_size);
    const T scale = static_cast<T>(std::sqrt(static_cast<double>(cfg_.embedding_size)));
    Eigen::Map<const Mat<T>> e(params_.data() + table, static_cast<Eigen::Index>(vocab), d);
    Mat<T> x(static_cast<Eigen::Index>(ids.size()), d);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) throw Error("token id out of vocabulary range");
      x.row(static_cast<Eigen::Index>(i)) = e.row(ids[i]) * scale + positions_.row(static_cast<Eigen::Index>(i));
    }
    return x;
  }

  void embed_back(std::size_t table, std::size_t vocab, const std::vector<int>& ids, const Mat<T>& dx, T* g) const {
    const auto d = static_cast<Eigen::Index>(cfg_.embedding_size);
    const T scale = static_cast<T>(std::sqrt(static_cast<double>(cfg_.embedding_size)));
    Eigen::Map<Mat<T>> ge(g + table, static_cast<Eigen::Index>(vocab), d);
    for (std::size_t i = 0; i < ids.size(); ++i) ge.row(ids[i]) += dx.row(static_cast<Eigen::Index>(i)) * scale;
  }

  Mat<T> encode_pass(const std::vector<int>& enc_in, Rng* rng, Pass& pass) const {
    const T* p = params_.data();
    const double rate = cfg_.dropout;
    pass.enc_in = enc_in;
    Mat<T> x = nn::dropout(embed(src_embed_, src_vocab_, enc_in), rate, rng, pass.enc_mask);
    pass.enc.resize(enc_.size());
    for (std::size_t l = 0; l < enc_.size(); ++l) {
      const auto& r = enc_[l];
      auto& c = pass.enc[l];
      Mat<T> h = x + nn::dropout(nn::attention(p, r.self, cfg_.attention_heads, x, x, false, c.self), rate, rng, c.m1);
      const Mat<T> x1 = nn::layer_norm(p, r.n1, h, c.n1);
      h = x1 + nn::dropout(nn::feed_forward(p, r.ff1, r.ff2, x1, rate, rng, c.ff), rate, rng, c.m2);
      x = nn::layer_norm(p, r.n2, h, c.n2);
    }
    return nn::layer_norm(p, enc_norm_, x, pass.enc_norm);
  }

  Mat<T> decode_pass(const Mat<T>& memory, const std::vector<int>& dec_in, Rng* rng, Pass& pass) const {
    const T* p = params_.data();
    const double rate = cfg_.dropout;
    pass.dec_in = dec_in;
    Mat<T> y = nn::dropout(embed(tgt_embed_, tgt_vocab_, dec_in), rate, rng, pass.dec_mask);
    pass.dec.resize(dec_.size());
    for (std::size_t l = 0; l < dec_.size(); ++l) {
      const auto& r = dec_[l];
      auto& c = pass.dec[l];
      Mat<T> h = y + nn::dropout(nn::attention(p, r.self, cfg_.attention_heads, y, y, true, c.self), rate, rng, c.m1);
      const Mat<T> y1 = nn::layer_norm(p, r.n1, h, c.n1);
      h = y1 + nn::dropout(nn::attention(p, r.cross, cfg_.attention_heads, y1, memory, false, c.cross), rate, rng, c.m2);
      const Mat<T> y2 = nn::layer_norm(p, r.n2, h, c.n2);
      h = y2 + nn::dropout(nn::feed_forward(p, r.ff1, r.ff2, y2, rate, rng, c.ff), rate, rng, c.m3);
      y = nn::layer_norm(p, r.n3, h, c.n3);
    }
    pass.dec_out = nn::layer_norm(p, dec_norm_, y, pass.dec_norm);
    return nn::linear(p, generator_, pass.dec_out);
  }

  double run(const Sample& s, T* grad, T scale, Rng* rng, std::vector<Mat<T>>* maps) const {
    const std::vector<int> tgt = trim(s.tgt);
    std::vector<int> dec_in{bos_id};
    dec_in.insert(dec_in.end(), tgt.begin(), tgt.end());
    std::vector<int> labels = tgt;
    labels.push_back(eos_id);

    Pass pass;
    const Mat<T> memory = encode_pass(with_eos(s.src), rng, pass);
    const Mat<T> logits = decode_pass(memory, dec_in, rng, pass);

    if (maps != nullptr) {
      for (const auto& c : pass.enc) maps->insert(maps->end(), c.self.weights.begin(), c.self.weights.end());
      for (const auto& c : pass.dec) {
        maps->insert(maps->end(), c.self.weights.begin(), c.self.weights.end());
        maps->insert(maps->end(), c.cross.weights.begin(), c.cross.weights.end());
      }
    }

    double loss = 0;
    Mat<T> dlogits(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      const T mx = logits.row(i).maxCoeff();
      const RowVec<T> e = (logits.row(i).array() - mx).exp().matrix();
      const T sum = e.sum();
      const int y = labels[static_cast<std::size_t>(i)];
      loss += static_cast<double>(std::log(sum) + mx - logits(i, y));
      if (grad != nullptr) {
        dlogits.row(i) = e * (scale / sum);
        dlogits(i, y) -= scale;
      }
    }
    if (grad != nullptr) backward(pass, dlogits, grad);
    return loss;
  }

  void backward(const Pass& pass, const Mat<T>& dlogits, T* g) const {
    const T* p = params_.data();
    const std::size_t heads = cfg_.attention_heads;
    Mat<T> dy = nn::linear_back(p, g, generator_, pass.dec_out, dlogits);
    dy = nn::layer_norm_back(p, g, dec_norm_, pass.dec_norm, dy);
    Mat<T> dmem = Mat<T>::Zero(static_cast<Eigen::Index>(pass.enc_in.size()),
                               static_cast<Eigen::Index>(cfg_.embedding_size));
    for (std::size_t l = dec_.size(); l-- > 0;) {
      const auto& r = dec_[l];
      const auto& c = pass.dec[l];
      Mat<T> dh = nn::layer_norm_back(p, g, r.n3, c.n3, dy);
      Mat<T> dy2 = dh + nn::feed_forward_back(p, g, r.ff1, r.ff2, c.ff, nn::dropout_back(c.m3, dh));
      dh = nn::layer_norm_back(p, g, r.n2, c.n2, dy2);
      Mat<T> dy1 = dh + nn::attention_back(p, g, r.cross, heads, c.cross, nn::dropout_back(c.m2, dh), dmem);
      dh = nn::layer_norm_back(p, g, r.n1, c.n1, dy1);
      Mat<T> dself = Mat<T>::Zero(dh.rows(), dh.cols());
      dy = dh + nn::attention_back(p, g, r.self, heads, c.self, nn::dropout_back(c.m1, dh), dself);
      dy += dself;
    }
    embed_back(tgt_embed_, tgt_vocab_, pass.dec_in, nn::dropout_back(pass.dec_mask, dy), g);

    Mat<T> dx = nn::layer_norm_back(p, g, enc_norm_, pass.enc_norm, dmem);
    for (std::size_t l = enc_.size(); l-- > 0;) {
      const auto& r = enc_[l];
      const auto& c = pass.enc[l];
      Mat<T> dh = nn::layer_norm_back(p, g, r.n2, c.n2, dx);
      Mat<T> dx1 = dh + nn::feed_forward_back(p, g, r.ff1, r.ff2, c.ff, nn::dropout_back(c.m2, dh));
      dh = nn::layer_norm_back(p, g, r.n1, c.n1, dx1);
      Mat<T> dself = Mat<T>::Zero(dh.rows(), dh.cols());
      dx = dh + nn::attention_back(p, g, r.self, heads, c.self, nn::dropout_back(c.m1, dh), dself);
      dx += dself;
    }
    embed_back(src_embed_, src_vocab_, pass.enc_in, nn::dropout_back(pass.enc_mask, dx), g);
  }

  ModelConfig cfg_;
  std::size_t src_vocab_, tgt_vocab_;
  std::vector<ParamInfo> registry_;
  std::size_t size_ = 0;
  Buffer<T> params_;
  Mat<T> positions_;
  std::size_t src_embed_ = 0, tgt_embed_ = 0;
  std::vector<nn::EncoderRef> enc_;
  std::vector<nn::DecoderRef> dec_;
  nn::NormRef enc_norm_, dec_norm_;
  nn::LinearRef generator_;
};

using Model = Seq2Seq<float>;

inline Model init_model(const ModelConfig& cfg, std::size_t src_vocab, std::size_t tgt_vocab, std::uint64_t seed) {
  Model m(cfg, src_vocab, tgt_vocab);
  m.initialize(seed);
  return m;
}

inline Model init_model(const ModelConfig& cfg, const Vocabulary& src, const Vocabulary& tgt, std::uint64_t seed) {
  return init_model(cfg, src.size(), tgt.size(), seed);
}

}  // namespace modelizer
