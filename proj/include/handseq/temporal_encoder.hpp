#pragma once

#include <cstdint>
#include <vector>

#include "handseq/types.hpp"

namespace handseq {

enum class FeatureTag { kRight, kLeft, kGlobal1, kGlobal2 };

struct FeatureSequence {
  MatX data;  // T x C
  FeatureTag tag = FeatureTag::kRight;
};

// Per-head projections for one attention block; no biases, heads are
// concatenated without an output projection.
struct AttentionWeights {
  MatX wq;  // C   x C
  MatX wk;  // C_g x C
  MatX wv;  // C_g x C
};

struct FeedForwardWeights {
  MatX w1;  // C_in x C_in
  MatX w2;  // C_in x C_out, C_out < C_in
};

struct TemporalBlockWeights {
  int heads = 4;
  AttentionWeights mhsa;    // self-attention over the cascaded 2T sequence
  AttentionWeights mhca_r;  // cross-attention, right-hand queries
  AttentionWeights mhca_l;  // cross-attention, left-hand queries
  FeedForwardWeights ff;

  int channels_in() const { return static_cast<int>(mhsa.wq.rows()); }
  int channels_out() const { return static_cast<int>(ff.w2.cols()); }
};

struct EncoderWeights {
  std::vector<TemporalBlockWeights> blocks;  // two blocks
  bool positional_encoding = true;
};

// Seeded random init for toy dims; channel sequence must strictly decrease.
// global_channels[k] is the key/value width consumed by block k's MHCA.
EncoderWeights make_encoder_weights(const std::vector<int>& channels,
                                    const std::vector<int>& global_channels, int heads,
                                    std::uint64_t seed);

struct AttentionMaps {
  std::vector<MatX> mhsa;    // one 2T x 2T map per head
  std::vector<MatX> mhca_r;  // one T x T map per head
  std::vector<MatX> mhca_l;
};

struct MhsaResult {
  MatX right;  // T x C
  MatX left;   // T x C
  std::vector<MatX> attention;  // per head, 2T x 2T, rows sum to 1
};

// Cascades the two hand sequences along time, applies scaled-dot-product
// multi-head self-attention, splits the result back.
MhsaResult mhsa_forward(const MatX& right, const MatX& left, const AttentionWeights& weights,
                        int heads);

struct MhcaResult {
  MatX output;  // T x C
  std::vector<MatX> attention;  // per head, T x T_g
};

// Queries from the hand sequence, keys/values from the global sequence.
MhcaResult mhca_forward(const MatX& hand_seq, const MatX& global_seq,
                        const AttentionWeights& weights, int heads);

struct TemporalBlockResult {
  MatX right;  // T x C_out
  MatX left;   // T x C_out
  AttentionMaps maps;
};

// Pre-normalized MHSA and MHCA with residuals, then a shared feed-forward
// that reduces the channel width for the next block.
TemporalBlockResult temporal_block_forward(const MatX& right, const MatX& left,
                                           const MatX& global_seq,
                                           const TemporalBlockWeights& weights,
                                           bool positional_encoding);

struct EncoderResult {
  MatX right;  // T x C_last
  MatX left;
  std::vector<AttentionMaps> maps;  // per block
};

// Two stacked temporal blocks; block k consumes global_k.
EncoderResult encoder_forward(const MatX& right, const MatX& left, const MatX& global_1,
                              const MatX& global_2, const EncoderWeights& weights);

// Sinusoidal positional encoding, one row per time step.
MatX sinusoidal_positional_encoding(int length, int channels);

}  // namespace handseq
