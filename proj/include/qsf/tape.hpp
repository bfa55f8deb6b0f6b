#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "qsf/kernels.hpp"
#include "qsf/matrix.hpp"

namespace qsf {

// Reverse-mode tape over matrices. Each recorded operation keeps a
// recompute closure (same kernel code as the original forward, so a
// replay is bit-identical) and a backward closure that accumulates
// adjoints into its parents. Values are immutable once pushed; a tape
// is single-threaded during recording.
class Tape {
 public:
  struct Node {
    Matrix value;
    Matrix grad;  // empty until first touched by backward
    std::vector<int> parents;
    std::function<Matrix(const Tape&)> recompute;   // null for leaves
    std::function<void(Tape&, int)> backprop;       // null for leaves
    const char* tag = "";
  };

  int leaf(Matrix v, const char* tag = "leaf");

  const Matrix& val(int id) const { return nodes_[id].value; }
  Matrix& grad(int id);
  bool has_grad(int id) const { return nodes_[id].grad.size() > 0; }
  void accum(int id, const Matrix& g);
  size_t node_count() const { return nodes_.size(); }

  // ---- recorded operations ----
  int matmul(int a, int b);
  // bias = -1 to skip
  int linear(int x, int w, int bias);
  int add(int a, int b);
  int lincomb(int a, int b, real ca, real cb);
  int scale(int a, real s);
  int relu(int x);
  int layer_norm(int x, int gain, int bias, real eps);
  int softmax_rows(int x);
  // returns {output, mean affinity}
  std::pair<int, int> multi_head_attention(int xq, int xkv, int wq, int wk, int wv, int heads,
                                           bool scale_enabled, bool scale_full_dim);
  // elementwise product with a constant mask (dropout)
  int mul_mask(int x, Matrix mask);
  int mean_rows(int x);
  int concat_rows(const std::vector<int>& parts);
  int slice_rows(int x, int r0, int r1);
  int cosine_rows(int a, int b);
  // scalar sum of x * weights with constant weights
  int weighted_sum(int x, Matrix weights);
  // rows*cols scalar nodes -> one matrix, row-major
  int assemble_scalars(int rows, int cols, const std::vector<int>& ids);
  int class_pool(int m, std::vector<int> col_class, int num_classes, bool use_max);
  int softmax_xent_mean(int logits, std::vector<int> labels);
  int contrastive(int m, Matrix pos_mask);
  int conv3x3(int x, int w, int bias, int H, int W);
  int maxpool2x2(int x, int H, int W);
  int resize_nearest(int x, int H, int W, int H2, int W2);

  // Seeds the (1x1) root with gradient 1 and sweeps the tape in reverse.
  void backward(int root);

  struct ReplayResult {
    bool bit_exact = true;
    real max_diff = 0;
  };
  // Recomputes every non-leaf value from its parents and compares with the
  // recorded value.
  ReplayResult replay() const;

 private:
  int push(Matrix value, std::vector<int> parents, std::function<Matrix(const Tape&)> rec,
           std::function<void(Tape&, int)> back, const char* tag);
  std::vector<Node> nodes_;
};

}  // namespace qsf
