#include "handseq/temporal_encoder.hpp"

#include <cmath>
#include <string>

#include "handseq/errors.hpp"
#include "handseq/rng.hpp"

namespace handseq {

namespace {

MatX layer_norm(const MatX& x) {
  MatX out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Scalar mean = x.row(r).mean();
    const Scalar var = (x.row(r).array() - mean).square().mean();
    out.row(r) = (x.row(r).array() - mean) / std::sqrt(var + 1e-5);
  }
  return out;
}

MatX softmax_rows(const MatX& scores) {
  MatX out(scores.rows(), scores.cols());
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    const Scalar peak = scores.row(r).maxCoeff();
    out.row(r) = (scores.row(r).array() - peak).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

void check_attention_dims(const MatX& query_in, const MatX& kv_in,
                          const AttentionWeights& w, int heads, const char* name) {
  if (w.wq.rows() != query_in.cols()) {
    throw ContractError(std::string(name) + ": query projection expects " +
                        std::to_string(w.wq.rows()) + " channels, got " +
                        std::to_string(query_in.cols()));
  }
  if (w.wk.rows() != kv_in.cols() || w.wv.rows() != kv_in.cols()) {
    throw ContractError(std::string(name) + ": key/value projection expects " +
                        std::to_string(w.wk.rows()) + " channels, got " +
                        std::to_string(kv_in.cols()));
  }
  if (w.wq.cols() != w.wk.cols() || w.wq.cols() != w.wv.cols()) {
    throw ContractError(std::string(name) + ": projection widths disagree");
  }
  if (heads < 1 || w.wq.cols() % heads != 0) {
    throw ContractError(std::string(name) + ": channel width " +
                        std::to_string(w.wq.cols()) + " not divisible by " +
                        std::to_string(heads) + " heads");
  }
}

// Scaled dot-product attention; heads partition the channel dimension and
// are concatenated without an output projection.
std::pair<MatX, std::vector<MatX>> attention(const MatX& query_in, const MatX& kv_in,
                                             const AttentionWeights& w, int heads,
                                             const char* name) {
  check_attention_dims(query_in, kv_in, w, heads, name);
  const MatX q = query_in * w.wq;
  const MatX k = kv_in * w.wk;
  const MatX v = kv_in * w.wv;
  const int dim = static_cast<int>(w.wq.cols()) / heads;
  const Scalar inv_sqrt = 1.0 / std::sqrt(static_cast<Scalar>(dim));

  MatX out(query_in.rows(), w.wq.cols());
  std::vector<MatX> maps;
  maps.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const MatX scores =
        q.middleCols(h * dim, dim) * k.middleCols(h * dim, dim).transpose() * inv_sqrt;
    MatX attn = softmax_rows(scores);
    out.middleCols(h * dim, dim) = attn * v.middleCols(h * dim, dim);
    maps.push_back(std::move(attn));
  }
  return {out, maps};
}

}  // namespace

MatX sinusoidal_positional_encoding(int length, int channels) {
  MatX pe = MatX::Zero(length, channels);
  for (int t = 0; t < length; ++t) {
    for (int i = 0; i < channels; i += 2) {
      const Scalar freq = std::pow(10000.0, -static_cast<Scalar>(i) / channels);
      pe(t, i) = std::sin(t * freq);
      if (i + 1 < channels) pe(t, i + 1) = std::cos(t * freq);
    }
  }
  return pe;
}

MhsaResult mhsa_forward(const MatX& right, const MatX& left, const AttentionWeights& weights,
                        int heads) {
  if (right.rows() != left.rows() || right.cols() != left.cols()) {
    throw ContractError("mhsa_forward: hand sequences must share T and C");
  }
  const Eigen::Index frames = right.rows();
  MatX cascade(2 * frames, right.cols());
  cascade.topRows(frames) = right;
  cascade.bottomRows(frames) = left;

  auto [out, maps] = attention(cascade, cascade, weights, heads, "mhsa_forward");
  MhsaResult result;
  result.right = out.topRows(frames);
  result.left = out.bottomRows(frames);
  result.attention = std::move(maps);
  return result;
}

MhcaResult mhca_forward(const MatX& hand_seq, const MatX& global_seq,
                        const AttentionWeights& weights, int heads) {
  if (hand_seq.rows() != global_seq.rows()) {
    throw ContractError("mhca_forward: hand and global sequences must share T");
  }
  auto [out, maps] = attention(hand_seq, global_seq, weights, heads, "mhca_forward");
  MhcaResult result;
  result.output = std::move(out);
  result.attention = std::move(maps);
  return result;
}

TemporalBlockResult temporal_block_forward(const MatX& right, const MatX& left,
                                           const MatX& global_seq,
                                           const TemporalBlockWeights& weights,
                                           bool positional_encoding) {
  if (weights.channels_out() >= weights.channels_in()) {
    throw ContractError("temporal block must reduce the channel width");
  }
  MatX r = right;
  MatX l = left;
  if (positional_encoding) {
    // Both halves share time indices 0..T-1, keeping the cascade symmetric
    // under a right/left swap.
    const MatX pe = sinusoidal_positional_encoding(static_cast<int>(r.rows()),
                                                   static_cast<int>(r.cols()));
    r += pe;
    l += pe;
  }

  TemporalBlockResult result;
  MhsaResult sa = mhsa_forward(layer_norm(r), layer_norm(l), weights.mhsa, weights.heads);
  const MatX sr = r + sa.right;
  const MatX sl = l + sa.left;
  result.maps.mhsa = std::move(sa.attention);

  MhcaResult ca_r = mhca_forward(layer_norm(sr), global_seq, weights.mhca_r, weights.heads);
  MhcaResult ca_l = mhca_forward(layer_norm(sl), global_seq, weights.mhca_l, weights.heads);
  const MatX hr = sr + ca_r.output;
  const MatX hl = sl + ca_l.output;
  result.maps.mhca_r = std::move(ca_r.attention);
  result.maps.mhca_l = std::move(ca_l.attention);

  if (weights.ff.w1.rows() != hr.cols() || weights.ff.w1.cols() != weights.ff.w2.rows()) {
    throw ContractError("feed-forward weight shapes do not chain");
  }
  const auto feed_forward = [&](const MatX& h) {
    return MatX((h * weights.ff.w1).cwiseMax(0.0) * weights.ff.w2);
  };
  result.right = feed_forward(hr);
  result.left = feed_forward(hl);
  return result;
}

EncoderResult encoder_forward(const MatX& right, const MatX& left, const MatX& global_1,
                              const MatX& global_2, const EncoderWeights& weights) {
  if (weights.blocks.size() != 2) {
    throw ContractError("encoder expects exactly two temporal blocks");
  }
  if (right.rows() != left.rows() || right.rows() != global_1.rows() ||
      right.rows() != global_2.rows()) {
    throw ContractError("encoder: all four sequences must share T");
  }

  EncoderResult result;
  TemporalBlockResult b1 = temporal_block_forward(right, left, global_1, weights.blocks[0],
                                                  weights.positional_encoding);
  result.maps.push_back(std::move(b1.maps));
  TemporalBlockResult b2 = temporal_block_forward(b1.right, b1.left, global_2,
                                                  weights.blocks[1],
                                                  weights.positional_encoding);
  result.maps.push_back(std::move(b2.maps));
  result.right = std::move(b2.right);
  result.left = std::move(b2.left);
  return result;
}

EncoderWeights make_encoder_weights(const std::vector<int>& channels,
                                    const std::vector<int>& global_channels, int heads,
                                    std::uint64_t seed) {
  if (channels.size() != 3) {
    throw ContractError("make_encoder_weights: expected three channel widths");
  }
  if (global_channels.size() != 2) {
    throw ContractError("make_encoder_weights: expected two global widths");
  }
  for (size_t i = 0; i + 1 < channels.size(); ++i) {
    if (channels[i + 1] >= channels[i]) {
      throw ContractError("channel widths must strictly decrease");
    }
  }

  Rng rng(seed ^ 0x656e636f64657277ull);
  const auto init = [&rng](int rows, int cols) {
    MatX m(rows, cols);
    const Scalar scale = 1.0 / std::sqrt(static_cast<Scalar>(rows));
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = scale * rng.normal();
    return m;
  };

  EncoderWeights weights;
  for (int b = 0; b < 2; ++b) {
    const int c_in = channels[static_cast<size_t>(b)];
    const int c_out = channels[static_cast<size_t>(b) + 1];
    const int c_g = global_channels[static_cast<size_t>(b)];
    if (c_in % heads != 0) {
      throw ContractError("channel width " + std::to_string(c_in) +
                          " not divisible by " + std::to_string(heads) + " heads");
    }
    TemporalBlockWeights block;
    block.heads = heads;
    block.mhsa = {init(c_in, c_in), init(c_in, c_in), init(c_in, c_in)};
    block.mhca_r = {init(c_in, c_in), init(c_g, c_in), init(c_g, c_in)};
    block.mhca_l = {init(c_in, c_in), init(c_g, c_in), init(c_g, c_in)};
    block.ff = {init(c_in, c_in), init(c_in, c_out)};
    weights.blocks.push_back(std::move(block));
  }
  return weights;
}

}  // namespace handseq
