#include "qsf/kernels.hpp"

#include <cmath>

namespace qsf {

real AttentionParams::scale_divisor() const {
  if (!scale_enabled) return real(1);
  int c = dim();
  return std::sqrt(real(scale_full_dim ? c : c / heads));
}

AttentionParams AttentionParams::make(int c, int heads, bool scale_enabled) {
  AttentionParams p;
  p.wq = Matrix::zeros(c, c);
  p.wk = Matrix::zeros(c, c);
  p.wv = Matrix::zeros(c, c);
  p.heads = heads;
  p.scale_enabled = scale_enabled;
  p.validate();
  return p;
}

void AttentionParams::validate() const {
  if (heads < 1) throw ShapeError("attention: head count must be >= 1");
  if (dim() % heads != 0)
    throw ShapeError("attention: token width " + std::to_string(dim()) +
                     " not divisible by head count " + std::to_string(heads));
  if (dropout_rate < 0 || dropout_rate >= 1)
    throw ShapeError("attention: dropout rate must lie in [0,1)");
}

LayerNormParams LayerNormParams::make(int c) {
  LayerNormParams p;
  p.gain = Matrix::filled(1, c, real(1));
  p.bias = Matrix::zeros(1, c);
  return p;
}

namespace kernels {

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows)
    throw ShapeError("matmul: " + std::to_string(a.rows) + "x" + std::to_string(a.cols) + " * " +
                     std::to_string(b.rows) + "x" + std::to_string(b.cols));
  Matrix out(a.rows, b.cols);
  const long work = static_cast<long>(a.rows) * a.cols * b.cols;
#pragma omp parallel for if (work > 65536) schedule(static)
  for (int i = 0; i < a.rows; ++i) {
    const real* arow = &a.data[static_cast<size_t>(i) * a.cols];
    real* orow = &out.data[static_cast<size_t>(i) * b.cols];
    for (int k = 0; k < a.cols; ++k) {
      const real av = arow[k];
      if (av == real(0)) continue;
      const real* brow = &b.data[static_cast<size_t>(k) * b.cols];
      for (int j = 0; j < b.cols; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols, a.rows);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j) out(j, i) = a(i, j);
  return out;
}

Matrix softmax_rows(const Matrix& m) {
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j)
      if (!std::isfinite(m(i, j)))
        throw std::runtime_error("softmax_rows: non-finite entry in row " + std::to_string(i));
  Matrix out(m.rows, m.cols);
  for (int i = 0; i < m.rows; ++i) {
    real mx = m(i, 0);
    for (int j = 1; j < m.cols; ++j) mx = std::max(mx, m(i, j));
    real sum = 0;
    for (int j = 0; j < m.cols; ++j) {
      real e = std::exp(m(i, j) - mx);
      out(i, j) = e;
      sum += e;
    }
    for (int j = 0; j < m.cols; ++j) out(i, j) /= sum;
  }
  return out;
}

Matrix layer_norm_rows(const Matrix& x, const LayerNormParams& p) {
  if (x.cols != p.gain.cols || x.cols != p.bias.cols)
    throw ShapeError("layer_norm: parameter width mismatch");
  if (p.epsilon <= 0) throw std::runtime_error("layer_norm: epsilon must be positive");
  Matrix out(x.rows, x.cols);
  const int c = x.cols;
  for (int i = 0; i < x.rows; ++i) {
    real mean = 0;
    for (int j = 0; j < c; ++j) mean += x(i, j);
    mean /= c;
    real var = 0;
    for (int j = 0; j < c; ++j) {
      real d = x(i, j) - mean;
      var += d * d;
    }
    var /= c;
    real inv = real(1) / std::sqrt(var + p.epsilon);
    for (int j = 0; j < c; ++j) out(i, j) = (x(i, j) - mean) * inv * p.gain(0, j) + p.bias(0, j);
  }
  return out;
}

std::vector<real> layer_norm(const std::vector<real>& x, const LayerNormParams& p) {
  Matrix m(1, static_cast<int>(x.size()));
  m.data = x;
  return layer_norm_rows(m, p).data;
}

Matrix linear(const Matrix& x, const Matrix& w, const Matrix& b) {
  Matrix out = matmul(x, w);
  if (b.size() > 0) {
    if (b.cols != w.cols) throw ShapeError("linear: bias width mismatch");
    for (int i = 0; i < out.rows; ++i)
      for (int j = 0; j < out.cols; ++j) out(i, j) += b(0, j);
  }
  return out;
}

Matrix relu(const Matrix& x) {
  Matrix out = x;
  for (auto& v : out.data) v = v > real(0) ? v : real(0);
  return out;
}

Matrix ffn(const Matrix& x, const FfnParams& p) {
  return linear(relu(linear(x, p.w1, p.b1)), p.w2, p.b2);
}

MhaDetail multi_head_attention_detail(const Matrix& queries, const Matrix& keys,
                                      const Matrix& values, const AttentionParams& p) {
  p.validate();
  const int c = p.dim();
  if (queries.cols != c || keys.cols != c || values.cols != c)
    throw ShapeError("attention: token width mismatch");
  if (keys.rows != values.rows) throw ShapeError("attention: key/value count mismatch");
  const int H = p.heads;
  const int d = c / H;

  MhaDetail det;
  det.heads = H;
  det.inv_scale = real(1) / p.scale_divisor();
  det.q = matmul(queries, p.wq);
  det.k = matmul(keys, p.wk);
  det.v = matmul(values, p.wv);
  det.result.output = Matrix::zeros(queries.rows, c);
  det.result.affinity = Matrix::zeros(queries.rows, keys.rows);
  det.head_attn.reserve(H);
  for (int h = 0; h < H; ++h) {
    const int off = h * d;
    Matrix logits(queries.rows, keys.rows);
    for (int i = 0; i < queries.rows; ++i)
      for (int j = 0; j < keys.rows; ++j) {
        real s = 0;
        for (int t = 0; t < d; ++t) s += det.q(i, off + t) * det.k(j, off + t);
        logits(i, j) = s * det.inv_scale;
      }
    Matrix attn = softmax_rows(logits);
    for (int i = 0; i < queries.rows; ++i)
      for (int j = 0; j < keys.rows; ++j) {
        det.result.affinity(i, j) += attn(i, j) / H;
        for (int t = 0; t < d; ++t)
          det.result.output(i, off + t) += attn(i, j) * det.v(j, off + t);
      }
    det.head_attn.push_back(std::move(attn));
  }
  return det;
}

MhaResult multi_head_attention(const Matrix& queries, const Matrix& keys, const Matrix& values,
                               const AttentionParams& p) {
  return multi_head_attention_detail(queries, keys, values, p).result;
}

Matrix dropout_mask(int rows, int cols, real rate, RandomStream& rng) {
  Matrix mask(rows, cols);
  const real keep = real(1) / (real(1) - rate);
  for (auto& v : mask.data) v = rng.uniform() < rate ? real(0) : keep;
  return mask;
}

Matrix dropout(const Matrix& x, real rate, Mode mode, RandomStream& rng) {
  if (rate < 0 || rate >= 1) throw std::runtime_error("dropout: rate must lie in [0,1)");
  if (mode == Mode::Eval || rate == real(0)) return x;
  Matrix mask = dropout_mask(x.rows, x.cols, rate, rng);
  Matrix out = x;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= mask.data[i];
  return out;
}

Matrix cosine_rows(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols) throw ShapeError("cosine_rows: width mismatch");
  std::vector<real> na(a.rows), nb(b.rows);
  for (int i = 0; i < a.rows; ++i) {
    real s = 0;
    for (int j = 0; j < a.cols; ++j) s += a(i, j) * a(i, j);
    na[i] = std::sqrt(s);
  }
  for (int i = 0; i < b.rows; ++i) {
    real s = 0;
    for (int j = 0; j < b.cols; ++j) s += b(i, j) * b(i, j);
    nb[i] = std::sqrt(s);
  }
  Matrix out(a.rows, b.rows);
#pragma omp parallel for if (static_cast<long>(a.rows) * b.rows * a.cols > 65536) schedule(static)
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < b.rows; ++j) {
      if (na[i] == real(0) || nb[j] == real(0)) {
        out(i, j) = 0;
        continue;
      }
      real dot = 0;
      for (int t = 0; t < a.cols; ++t) dot += a(i, t) * b(j, t);
      out(i, j) = dot / (na[i] * nb[j]);
    }
  return out;
}

Matrix im2col3x3(const Matrix& x, int H, int W) {
  if (x.rows != H * W) throw ShapeError("im2col3x3: position count mismatch");
  const int c = x.cols;
  Matrix col(H * W, 9 * c);
#pragma omp parallel for if (static_cast<long>(H) * W * c > 16384) schedule(static)
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      const int p = i * W + j;
      int block = 0;
      for (int di = -1; di <= 1; ++di)
        for (int dj = -1; dj <= 1; ++dj, ++block) {
          const int ii = i + di, jj = j + dj;
          if (ii < 0 || ii >= H || jj < 0 || jj >= W) continue;
          const int q = ii * W + jj;
          for (int t = 0; t < c; ++t) col(p, block * c + t) = x(q, t);
        }
    }
  return col;
}

Matrix conv3x3(const Matrix& x, const Matrix& w, const Matrix& b, int H, int W) {
  if (w.rows != 9 * x.cols) throw ShapeError("conv3x3: weight shape mismatch");
  return linear(im2col3x3(x, H, W), w, b);
}

Matrix maxpool2x2(const Matrix& x, int H, int W, std::vector<int>* argmax) {
  if (H % 2 != 0 || W % 2 != 0) throw ShapeError("maxpool2x2: H and W must be even");
  if (x.rows != H * W) throw ShapeError("maxpool2x2: position count mismatch");
  const int c = x.cols;
  const int H2 = H / 2, W2 = W / 2;
  Matrix out(H2 * W2, c);
  if (argmax) argmax->assign(static_cast<size_t>(H2) * W2 * c, 0);
  for (int i = 0; i < H2; ++i)
    for (int j = 0; j < W2; ++j) {
      const int p = i * W2 + j;
      const int cand[4] = {(2 * i) * W + 2 * j, (2 * i) * W + 2 * j + 1, (2 * i + 1) * W + 2 * j,
                           (2 * i + 1) * W + 2 * j + 1};
      for (int t = 0; t < c; ++t) {
        real best = x(cand[0], t);
        int besti = cand[0];
        for (int s = 1; s < 4; ++s)
          if (x(cand[s], t) > best) {
            best = x(cand[s], t);
            besti = cand[s];
          }
        out(p, t) = best;
        if (argmax) (*argmax)[static_cast<size_t>(p) * c + t] = besti;
      }
    }
  return out;
}

std::vector<int> resize_nearest_index(int H, int W, int H2, int W2) {
  std::vector<int> idx(static_cast<size_t>(H2) * W2);
  for (int i = 0; i < H2; ++i)
    for (int j = 0; j < W2; ++j) {
      int si = i * H / H2;
      int sj = j * W / W2;
      idx[static_cast<size_t>(i) * W2 + j] = si * W + sj;
    }
  return idx;
}

Matrix resize_nearest(const Matrix& x, int H, int W, int H2, int W2) {
  if (x.rows != H * W) throw ShapeError("resize_nearest: position count mismatch");
  auto idx = resize_nearest_index(H, W, H2, W2);
  Matrix out(H2 * W2, x.cols);
  for (int p = 0; p < out.rows; ++p)
    for (int t = 0; t < x.cols; ++t) out(p, t) = x(idx[p], t);
  return out;
}

Matrix mean_rows(const Matrix& x) {
  Matrix out(1, x.cols);
  for (int i = 0; i < x.rows; ++i)
    for (int j = 0; j < x.cols; ++j) out(0, j) += x(i, j);
  for (int j = 0; j < x.cols; ++j) out(0, j) /= x.rows;
  return out;
}

Matrix class_pool(const Matrix& m, const std::vector<int>& col_class, int num_classes,
                  bool use_max, std::vector<int>* argmax) {
  if (static_cast<int>(col_class.size()) != m.cols)
    throw ShapeError("class_pool: column/class count mismatch");
  Matrix out(m.rows, num_classes);
  if (argmax) argmax->assign(static_cast<size_t>(m.rows) * num_classes, -1);
  std::vector<int> count(num_classes, 0);
  for (int cl : col_class) {
    if (cl < 0 || cl >= num_classes) throw ShapeError("class_pool: class index out of range");
    ++count[cl];
  }
  for (int cl = 0; cl < num_classes; ++cl)
    if (count[cl] == 0) throw ShapeError("class_pool: class with no support column");
  for (int i = 0; i < m.rows; ++i) {
    std::vector<bool> seen(num_classes, false);
    for (int j = 0; j < m.cols; ++j) {
      const int cl = col_class[j];
      if (use_max) {
        if (!seen[cl] || m(i, j) > out(i, cl)) {
          out(i, cl) = m(i, j);
          if (argmax) (*argmax)[static_cast<size_t>(i) * num_classes + cl] = j;
          seen[cl] = true;
        }
      } else {
        out(i, cl) += m(i, j) / count[cl];
      }
    }
  }
  return out;
}

real softmax_xent_mean(const Matrix& logits, const std::vector<int>& labels, Matrix* softmax_out) {
  if (static_cast<int>(labels.size()) != logits.rows)
    throw ShapeError("softmax_xent_mean: label count mismatch");
  Matrix p = softmax_rows(logits);
  real loss = 0;
  for (int i = 0; i < logits.rows; ++i) {
    const int y = labels[i];
    if (y < 0 || y >= logits.cols) throw ShapeError("softmax_xent_mean: label out of range");
    loss -= std::log(p(i, y));
  }
  loss /= logits.rows;
  if (softmax_out) *softmax_out = std::move(p);
  return loss;
}

real contrastive_log_ratio(const Matrix& m, const Matrix& pos_mask, Matrix* p_all, Matrix* p_pos) {
  if (!m.same_shape(pos_mask)) throw ShapeError("contrastive: mask shape mismatch");
  real mx = m.data.empty() ? real(0) : m.data[0];
  bool any_pos = false;
  for (size_t i = 0; i < m.data.size(); ++i) {
    mx = std::max(mx, m.data[i]);
    if (pos_mask.data[i] != real(0)) any_pos = true;
  }
  if (!any_pos) throw std::runtime_error("contrastive: episode has zero positive pairs");
  real sum_all = 0, sum_pos = 0;
  for (size_t i = 0; i < m.data.size(); ++i) {
    const real e = std::exp(m.data[i] - mx);
    sum_all += e;
    if (pos_mask.data[i] != real(0)) sum_pos += e;
  }
  if (p_all) {
    *p_all = m;
    for (size_t i = 0; i < m.data.size(); ++i)
      p_all->data[i] = std::exp(m.data[i] - mx) / sum_all;
  }
  if (p_pos) {
    *p_pos = Matrix::zeros(m.rows, m.cols);
    for (size_t i = 0; i < m.data.size(); ++i)
      if (pos_mask.data[i] != real(0)) p_pos->data[i] = std::exp(m.data[i] - mx) / sum_pos;
  }
  return std::log(sum_all) - std::log(sum_pos);
}

}  // namespace kernels
}  // namespace qsf
