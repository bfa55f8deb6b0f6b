#pragma once

#include "qsf/matrix.hpp"
#include "qsf/rng.hpp"

namespace qsf {

enum class Mode { Train, Eval };

// Linear projections producing Q, K, V, split column-wise across heads.
// No biases; the projections are plain matrices.
struct AttentionParams {
  Matrix wq, wk, wv;  // c x c
  int heads = 1;
  bool scale_enabled = true;
  // Scale logits by sqrt(c) instead of the per-head sqrt(c/heads).
  bool scale_full_dim = false;
  real dropout_rate = 0;

  int dim() const { return wq.rows; }
  real scale_divisor() const;
  static AttentionParams make(int c, int heads, bool scale_enabled);
  void validate() const;
};

struct LayerNormParams {
  Matrix gain;  // 1 x c
  Matrix bias;  // 1 x c
  real epsilon = real(1e-5);

  static LayerNormParams make(int c);
};

struct FfnParams {
  Matrix w1;  // c x c_hidden
  Matrix b1;  // 1 x c_hidden
  Matrix w2;  // c_hidden x c
  Matrix b2;  // 1 x c
};

struct MhaResult {
  Matrix output;    // n_q x c, heads concatenated
  Matrix affinity;  // n_q x n_k, mean over heads, row-stochastic
};

// Everything the backward pass of attention needs.
struct MhaDetail {
  Matrix q, k, v;                 // projected inputs, full width
  std::vector<Matrix> head_attn;  // per-head row-stochastic affinities
  real inv_scale = 1;
  int heads = 1;
  MhaResult result;
};

namespace kernels {

// (n x k) * (k x m). OpenMP over output rows; each cell is reduced
// serially, so results do not depend on the thread count.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

// Row-wise softmax with per-row max subtraction. Rejects non-finite
// input, naming the offending row.
Matrix softmax_rows(const Matrix& m);

// Per-row layer normalization with population variance.
Matrix layer_norm_rows(const Matrix& x, const LayerNormParams& p);
std::vector<real> layer_norm(const std::vector<real>& x, const LayerNormParams& p);

// out[i][j] = sum_k x[i][k] w[k][j] + b[j]; pass an empty bias to skip it.
Matrix linear(const Matrix& x, const Matrix& w, const Matrix& b);

Matrix relu(const Matrix& x);

Matrix ffn(const Matrix& x, const FfnParams& p);

MhaResult multi_head_attention(const Matrix& queries, const Matrix& keys, const Matrix& values,
                               const AttentionParams& p);
MhaDetail multi_head_attention_detail(const Matrix& queries, const Matrix& keys,
                                      const Matrix& values, const AttentionParams& p);

// Inverted dropout: train mode zeroes entries with probability `rate` and
// scales survivors by 1/(1-rate); eval mode is the exact identity.
Matrix dropout(const Matrix& x, real rate, Mode mode, RandomStream& rng);
// The {0, 1/(1-rate)} mask the train-mode path multiplies by.
Matrix dropout_mask(int rows, int cols, real rate, RandomStream& rng);

// Pairwise cosine similarity of rows: (na x c, nb x c) -> na x nb.
// Zero-norm rows get similarity 0.
Matrix cosine_rows(const Matrix& a, const Matrix& b);

// 3x3 same-padding convolution on a (H*W) x c_in position-major map.
// Weights are (9*c_in) x c_out, neighbor offsets row-major.
Matrix conv3x3(const Matrix& x, const Matrix& w, const Matrix& b, int H, int W);
Matrix im2col3x3(const Matrix& x, int H, int W);

// 2x2 max pooling; H and W must be even. argmax (input position index per
// output cell and channel) is written when requested.
Matrix maxpool2x2(const Matrix& x, int H, int W, std::vector<int>* argmax = nullptr);

// Nearest-neighbor spatial resize of a (H*W) x c map to H2 x W2.
Matrix resize_nearest(const Matrix& x, int H, int W, int H2, int W2);
std::vector<int> resize_nearest_index(int H, int W, int H2, int W2);

// Column means: (n x c) -> 1 x c.
Matrix mean_rows(const Matrix& x);

// Pool an n_q x n_s metric into n_q x C class scores. col_class maps each
// support column to a class index in [0, C). Ties break toward the lowest
// column index; argmax records the winning column per cell when max-pooling.
Matrix class_pool(const Matrix& m, const std::vector<int>& col_class, int num_classes,
                  bool use_max, std::vector<int>* argmax = nullptr);

// Mean over rows of -log softmax(logits)[label]. Optionally exposes the
// softmax for backward passes.
real softmax_xent_mean(const Matrix& logits, const std::vector<int>& labels,
                       Matrix* softmax_out = nullptr);

// -log(sum_pos e^m / sum_all e^m) over all entries, in log-sum-exp form.
// pos_mask entries are 1 for positive pairs, 0 otherwise; at least one
// positive is required. p_all / p_pos receive the two softmax tables used
// by the gradient.
real contrastive_log_ratio(const Matrix& m, const Matrix& pos_mask, Matrix* p_all = nullptr,
                           Matrix* p_pos = nullptr);

}  // namespace kernels
}  // namespace qsf
