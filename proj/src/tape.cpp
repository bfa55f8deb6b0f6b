#include "qsf/tape.hpp"

#include <cmath>
#include <memory>

namespace qsf {

namespace k = kernels;

int Tape::push(Matrix value, std::vector<int> parents, std::function<Matrix(const Tape&)> rec,
               std::function<void(Tape&, int)> back, const char* tag) {
  Node n;
  n.value = std::move(value);
  n.parents = std::move(parents);
  n.recompute = std::move(rec);
  n.backprop = std::move(back);
  n.tag = tag;
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::leaf(Matrix v, const char* tag) { return push(std::move(v), {}, nullptr, nullptr, tag); }

Matrix& Tape::grad(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Matrix::zeros(n.value.rows, n.value.cols);
  return n.grad;
}

void Tape::accum(int id, const Matrix& g) {
  Matrix& dst = grad(id);
  if (!dst.same_shape(g)) throw ShapeError("tape: gradient shape mismatch");
  for (size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += g.data[i];
}

int Tape::matmul(int a, int b) {
  Matrix v = k::matmul(val(a), val(b));
  return push(
      std::move(v), {a, b},
      [a, b](const Tape& t) { return k::matmul(t.val(a), t.val(b)); },
      [a, b](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        t.accum(a, k::matmul(g, k::transpose(t.val(b))));
        t.accum(b, k::matmul(k::transpose(t.val(a)), g));
      },
      "matmul");
}

int Tape::linear(int x, int w, int bias) {
  const Matrix empty;
  Matrix v = k::linear(val(x), val(w), bias >= 0 ? val(bias) : empty);
  std::vector<int> par = bias >= 0 ? std::vector<int>{x, w, bias} : std::vector<int>{x, w};
  return push(
      std::move(v), std::move(par),
      [x, w, bias](const Tape& t) {
        const Matrix empty2;
        return k::linear(t.val(x), t.val(w), bias >= 0 ? t.val(bias) : empty2);
      },
      [x, w, bias](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        t.accum(x, k::matmul(g, k::transpose(t.val(w))));
        t.accum(w, k::matmul(k::transpose(t.val(x)), g));
        if (bias >= 0) {
          Matrix db(1, g.cols);
          for (int i = 0; i < g.rows; ++i)
            for (int j = 0; j < g.cols; ++j) db(0, j) += g(i, j);
          t.accum(bias, db);
        }
      },
      "linear");
}

int Tape::add(int a, int b) { return lincomb(a, b, real(1), real(1)); }

int Tape::lincomb(int a, int b, real ca, real cb) {
  const Matrix& va = val(a);
  const Matrix& vb = val(b);
  if (!va.same_shape(vb)) throw ShapeError("tape lincomb: shape mismatch");
  auto compute = [a, b, ca, cb](const Tape& t) {
    Matrix out = t.val(a);
    const Matrix& y = t.val(b);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = ca * out.data[i] + cb * y.data[i];
    return out;
  };
  return push(
      compute(*this), {a, b}, compute,
      [a, b, ca, cb](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        Matrix ga = g, gb = g;
        for (auto& v : ga.data) v *= ca;
        for (auto& v : gb.data) v *= cb;
        t.accum(a, ga);
        t.accum(b, gb);
      },
      "lincomb");
}

int Tape::scale(int a, real s) {
  auto compute = [a, s](const Tape& t) {
    Matrix out = t.val(a);
    for (auto& v : out.data) v *= s;
    return out;
  };
  return push(
      compute(*this), {a}, compute,
      [a, s](Tape& t, int self) {
        Matrix g = t.grad(self);
        for (auto& v : g.data) v *= s;
        t.accum(a, g);
      },
      "scale");
}

int Tape::relu(int x) {
  return push(
      k::relu(val(x)), {x}, [x](const Tape& t) { return k::relu(t.val(x)); },
      [x](Tape& t, int self) {
        Matrix g = t.grad(self);
        const Matrix& v = t.val(x);
        for (size_t i = 0; i < g.data.size(); ++i)
          if (v.data[i] <= real(0)) g.data[i] = 0;
        t.accum(x, g);
      },
      "relu");
}

int Tape::layer_norm(int x, int gain, int bias, real eps) {
  auto compute = [x, gain, bias, eps](const Tape& t) {
    LayerNormParams p;
    p.gain = t.val(gain);
    p.bias = t.val(bias);
    p.epsilon = eps;
    return k::layer_norm_rows(t.val(x), p);
  };
  return push(
      compute(*this), {x, gain, bias}, compute,
      [x, gain, bias, eps](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        const Matrix& xv = t.val(x);
        const Matrix& gn = t.val(gain);
        const int c = xv.cols;
        Matrix dx(xv.rows, c), dgain(1, c), dbias(1, c);
        for (int i = 0; i < xv.rows; ++i) {
          real mean = 0;
          for (int j = 0; j < c; ++j) mean += xv(i, j);
          mean /= c;
          real var = 0;
          for (int j = 0; j < c; ++j) {
            real d = xv(i, j) - mean;
            var += d * d;
          }
          var /= c;
          const real inv = real(1) / std::sqrt(var + eps);
          real mean_dxhat = 0, mean_dxhat_xhat = 0;
          for (int j = 0; j < c; ++j) {
            const real xhat = (xv(i, j) - mean) * inv;
            const real dxhat = g(i, j) * gn(0, j);
            dgain(0, j) += g(i, j) * xhat;
            dbias(0, j) += g(i, j);
            mean_dxhat += dxhat;
            mean_dxhat_xhat += dxhat * xhat;
          }
          mean_dxhat /= c;
          mean_dxhat_xhat /= c;
          for (int j = 0; j < c; ++j) {
            const real xhat = (xv(i, j) - mean) * inv;
            const real dxhat = g(i, j) * gn(0, j);
            dx(i, j) = inv * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
          }
        }
        t.accum(x, dx);
        t.accum(gain, dgain);
        t.accum(bias, dbias);
      },
      "layer_norm");
}

int Tape::softmax_rows(int x) {
  return push(
      k::softmax_rows(val(x)), {x}, [x](const Tape& t) { return k::softmax_rows(t.val(x)); },
      [x](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        const Matrix& a = t.val(self);
        Matrix dx(a.rows, a.cols);
        for (int i = 0; i < a.rows; ++i) {
          real dot = 0;
          for (int j = 0; j < a.cols; ++j) dot += g(i, j) * a(i, j);
          for (int j = 0; j < a.cols; ++j) dx(i, j) = a(i, j) * (g(i, j) - dot);
        }
        t.accum(x, dx);
      },
      "softmax_rows");
}

namespace {

// Shared backward for both outputs of the fused attention op. g_out and
// g_aff may be null when the corresponding output received no gradient.
void mha_backprop(Tape& t, int xq, int xkv, int wq, int wk, int wv,
                  const std::shared_ptr<const MhaDetail>& s, const Matrix* g_out,
                  const Matrix* g_aff) {
  const int H = s->heads;
  const int c = s->q.cols;
  const int d = c / H;
  const int nq = s->q.rows;
  const int nk = s->k.rows;
  Matrix dq(nq, c), dk(nk, c), dv(nk, c);
  for (int h = 0; h < H; ++h) {
    const int off = h * d;
    const Matrix& A = s->head_attn[h];
    Matrix dA(nq, nk);
    if (g_out) {
      // dA += G_Oh V_h^T ; dV_h += A^T G_Oh
      for (int i = 0; i < nq; ++i)
        for (int j = 0; j < nk; ++j) {
          real acc = 0;
          for (int tt = 0; tt < d; ++tt) acc += (*g_out)(i, off + tt) * s->v(j, off + tt);
          dA(i, j) += acc;
        }
      for (int j = 0; j < nk; ++j)
        for (int tt = 0; tt < d; ++tt) {
          real acc = 0;
          for (int i = 0; i < nq; ++i) acc += A(i, j) * (*g_out)(i, off + tt);
          dv(j, off + tt) += acc;
        }
    }
    if (g_aff) {
      for (int i = 0; i < nq; ++i)
        for (int j = 0; j < nk; ++j) dA(i, j) += (*g_aff)(i, j) / H;
    }
    // softmax backward, then the scaled bilinear form
    for (int i = 0; i < nq; ++i) {
      real dot = 0;
      for (int j = 0; j < nk; ++j) dot += dA(i, j) * A(i, j);
      for (int j = 0; j < nk; ++j) {
        const real dz = A(i, j) * (dA(i, j) - dot) * s->inv_scale;
        for (int tt = 0; tt < d; ++tt) {
          dq(i, off + tt) += dz * s->k(j, off + tt);
          dk(j, off + tt) += dz * s->q(i, off + tt);
        }
      }
    }
  }
  t.accum(xq, k::matmul(dq, k::transpose(t.val(wq))));
  t.accum(wq, k::matmul(k::transpose(t.val(xq)), dq));
  t.accum(xkv, k::matmul(dk, k::transpose(t.val(wk))));
  t.accum(wk, k::matmul(k::transpose(t.val(xkv)), dk));
  t.accum(xkv, k::matmul(dv, k::transpose(t.val(wv))));
  t.accum(wv, k::matmul(k::transpose(t.val(xkv)), dv));
}

AttentionParams mha_params_from(const Tape& t, int wq, int wk, int wv, int heads,
                                bool scale_enabled, bool scale_full_dim) {
  AttentionParams p;
  p.wq = t.val(wq);
  p.wk = t.val(wk);
  p.wv = t.val(wv);
  p.heads = heads;
  p.scale_enabled = scale_enabled;
  p.scale_full_dim = scale_full_dim;
  return p;
}

}  // namespace

std::pair<int, int> Tape::multi_head_attention(int xq, int xkv, int wq, int wk, int wv, int heads,
                                               bool scale_enabled, bool scale_full_dim) {
  auto det = std::make_shared<const MhaDetail>(k::multi_head_attention_detail(
      val(xq), val(xkv), val(xkv),
      mha_params_from(*this, wq, wk, wv, heads, scale_enabled, scale_full_dim)));
  std::vector<int> par = {xq, xkv, wq, wk, wv};
  int out = push(
      det->result.output, par,
      [=](const Tape& t) {
        return k::multi_head_attention(
                   t.val(xq), t.val(xkv), t.val(xkv),
                   mha_params_from(t, wq, wk, wv, heads, scale_enabled, scale_full_dim))
            .output;
      },
      [=](Tape& t, int self) { mha_backprop(t, xq, xkv, wq, wk, wv, det, &t.grad(self), nullptr); },
      "mha_out");
  int aff = push(
      det->result.affinity, par,
      [=](const Tape& t) {
        return k::multi_head_attention(
                   t.val(xq), t.val(xkv), t.val(xkv),
                   mha_params_from(t, wq, wk, wv, heads, scale_enabled, scale_full_dim))
            .affinity;
      },
      [=](Tape& t, int self) { mha_backprop(t, xq, xkv, wq, wk, wv, det, nullptr, &t.grad(self)); },
      "mha_affinity");
  return {out, aff};
}

int Tape::mul_mask(int x, Matrix mask) {
  if (!val(x).same_shape(mask)) throw ShapeError("tape mul_mask: shape mismatch");
  auto m = std::make_shared<const Matrix>(std::move(mask));
  auto compute = [x, m](const Tape& t) {
    Matrix out = t.val(x);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= m->data[i];
    return out;
  };
  return push(
      compute(*this), {x}, compute,
      [x, m](Tape& t, int self) {
        Matrix g = t.grad(self);
        for (size_t i = 0; i < g.data.size(); ++i) g.data[i] *= m->data[i];
        t.accum(x, g);
      },
      "mul_mask");
}

int Tape::mean_rows(int x) {
  return push(
      k::mean_rows(val(x)), {x}, [x](const Tape& t) { return k::mean_rows(t.val(x)); },
      [x](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        const Matrix& v = t.val(x);
        Matrix dx(v.rows, v.cols);
        for (int i = 0; i < v.rows; ++i)
          for (int j = 0; j < v.cols; ++j) dx(i, j) = g(0, j) / v.rows;
        t.accum(x, dx);
      },
      "mean_rows");
}

int Tape::concat_rows(const std::vector<int>& parts) {
  if (parts.empty()) throw ShapeError("tape concat_rows: no parts");
  auto compute = [parts](const Tape& t) {
    int total = 0;
    const int c = t.val(parts[0]).cols;
    for (int id : parts) total += t.val(id).rows;
    Matrix out(total, c);
    int r = 0;
    for (int id : parts) {
      const Matrix& p = t.val(id);
      if (p.cols != c) throw ShapeError("tape concat_rows: width mismatch");
      for (int i = 0; i < p.rows; ++i)
        for (int j = 0; j < c; ++j) out(r + i, j) = p(i, j);
      r += p.rows;
    }
    return out;
  };
  return push(
      compute(*this), parts, compute,
      [parts](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        int r = 0;
        for (int id : parts) {
          const Matrix& p = t.val(id);
          Matrix gp(p.rows, p.cols);
          for (int i = 0; i < p.rows; ++i)
            for (int j = 0; j < p.cols; ++j) gp(i, j) = g(r + i, j);
          t.accum(id, gp);
          r += p.rows;
        }
      },
      "concat_rows");
}

int Tape::slice_rows(int x, int r0, int r1) {
  if (r0 < 0 || r1 > val(x).rows || r0 >= r1) throw ShapeError("tape slice_rows: bad range");
  auto compute = [x, r0, r1](const Tape& t) {
    const Matrix& v = t.val(x);
    Matrix out(r1 - r0, v.cols);
    for (int i = r0; i < r1; ++i)
      for (int j = 0; j < v.cols; ++j) out(i - r0, j) = v(i, j);
    return out;
  };
  return push(
      compute(*this), {x}, compute,
      [x, r0, r1](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        const Matrix& v = t.val(x);
        Matrix dx(v.rows, v.cols);
        for (int i = r0; i < r1; ++i)
          for (int j = 0; j < v.cols; ++j) dx(i, j) = g(i - r0, j);
        t.accum(x, dx);
      },
      "slice_rows");
}

int Tape::cosine_rows(int a, int b) {
  return push(
      k::cosine_rows(val(a), val(b)), {a, b},
      [a, b](const Tape& t) { return k::cosine_rows(t.val(a), t.val(b)); },
      [a, b](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        const Matrix& s = t.val(self);
        const Matrix& av = t.val(a);
        const Matrix& bv = t.val(b);
        const int c = av.cols;
        std::vector<real> na(av.rows), nb(bv.rows);
        for (int i = 0; i < av.rows; ++i) {
          real acc = 0;
          for (int j = 0; j < c; ++j) acc += av(i, j) * av(i, j);
          na[i] = std::sqrt(acc);
        }
        for (int i = 0; i < bv.rows; ++i) {
          real acc = 0;
          for (int j = 0; j < c; ++j) acc += bv(i, j) * bv(i, j);
          nb[i] = std::sqrt(acc);
        }
        Matrix da(av.rows, c), db(bv.rows, c);
        for (int i = 0; i < av.rows; ++i)
          for (int j = 0; j < bv.rows; ++j) {
            if (na[i] == real(0) || nb[j] == real(0)) continue;  // s = 0 by convention
            const real gij = g(i, j);
            if (gij == real(0)) continue;
            const real inv = real(1) / (na[i] * nb[j]);
            for (int tt = 0; tt < c; ++tt) {
              da(i, tt) += gij * (bv(j, tt) * inv - s(i, j) * av(i, tt) / (na[i] * na[i]));
              db(j, tt) += gij * (av(i, tt) * inv - s(i, j) * bv(j, tt) / (nb[j] * nb[j]));
            }
          }
        t.accum(a, da);
        t.accum(b, db);
      },
      "cosine_rows");
}

int Tape::weighted_sum(int x, Matrix weights) {
  if (!val(x).same_shape(weights)) throw ShapeError("tape weighted_sum: shape mismatch");
  auto w = std::make_shared<const Matrix>(std::move(weights));
  auto compute = [x, w](const Tape& t) {
    const Matrix& v = t.val(x);
    real acc = 0;
    for (size_t i = 0; i < v.data.size(); ++i) acc += v.data[i] * w->data[i];
    Matrix out(1, 1);
    out(0, 0) = acc;
    return out;
  };
  return push(
      compute(*this), {x}, compute,
      [x, w](Tape& t, int self) {
        const real g = t.grad(self)(0, 0);
        Matrix dx = *w;
        for (auto& v : dx.data) v *= g;
        t.accum(x, dx);
      },
      "weighted_sum");
}

int Tape::assemble_scalars(int rows, int cols, const std::vector<int>& ids) {
  if (static_cast<int>(ids.size()) != rows * cols)
    throw ShapeError("tape assemble_scalars: id count mismatch");
  auto compute = [rows, cols, ids](const Tape& t) {
    Matrix out(rows, cols);
    for (int i = 0; i < rows * cols; ++i) {
      const Matrix& v = t.val(ids[i]);
      if (v.rows != 1 || v.cols != 1) throw ShapeError("tape assemble_scalars: non-scalar part");
      out.data[i] = v(0, 0);
    }
    return out;
  };
  return push(
      compute(*this), ids, compute,
      [rows, cols, ids](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        for (int i = 0; i < rows * cols; ++i) {
          Matrix gi(1, 1);
          gi(0, 0) = g.data[i];
          t.accum(ids[i], gi);
        }
      },
      "assemble_scalars");
}

int Tape::class_pool(int m, std::vector<int> col_class, int num_classes, bool use_max) {
  auto cls = std::make_shared<const std::vector<int>>(std::move(col_class));
  auto argmax = std::make_shared<std::vector<int>>();
  Matrix v = k::class_pool(val(m), *cls, num_classes, use_max, use_max ? argmax.get() : nullptr);
  return push(
      std::move(v), {m},
      [m, cls, num_classes, use_max](const Tape& t) {
        return k::class_pool(t.val(m), *cls, num_classes, use_max, nullptr);
      },
      [m, cls, num_classes, use_max, argmax](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        const Matrix& mv = t.val(m);
        Matrix dm(mv.rows, mv.cols);
        if (use_max) {
          for (int i = 0; i < g.rows; ++i)
            for (int cl = 0; cl < num_classes; ++cl)
              dm(i, (*argmax)[static_cast<size_t>(i) * num_classes + cl]) += g(i, cl);
        } else {
          std::vector<int> count(num_classes, 0);
          for (int c : *cls) ++count[c];
          for (int i = 0; i < g.rows; ++i)
            for (int j = 0; j < mv.cols; ++j) dm(i, j) += g(i, (*cls)[j]) / count[(*cls)[j]];
        }
        t.accum(m, dm);
      },
      "class_pool");
}

int Tape::softmax_xent_mean(int logits, std::vector<int> labels) {
  auto lab = std::make_shared<const std::vector<int>>(std::move(labels));
  auto compute = [logits, lab](const Tape& t) {
    Matrix out(1, 1);
    out(0, 0) = k::softmax_xent_mean(t.val(logits), *lab, nullptr);
    return out;
  };
  return push(
      compute(*this), {logits}, compute,
      [logits, lab](Tape& t, int self) {
        const real g = t.grad(self)(0, 0);
        Matrix p;
        k::softmax_xent_mean(t.val(logits), *lab, &p);
        const int n = p.rows;
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < p.cols; ++j) p(i, j) *= g / n;
          p(i, (*lab)[i]) -= g / n;
        }
        t.accum(logits, p);
      },
      "softmax_xent_mean");
}

int Tape::contrastive(int m, Matrix pos_mask) {
  auto mask = std::make_shared<const Matrix>(std::move(pos_mask));
  auto compute = [m, mask](const Tape& t) {
    Matrix out(1, 1);
    out(0, 0) = k::contrastive_log_ratio(t.val(m), *mask, nullptr, nullptr);
    return out;
  };
  return push(
      compute(*this), {m}, compute,
      [m, mask](Tape& t, int self) {
        const real g = t.grad(self)(0, 0);
        Matrix p_all, p_pos;
        k::contrastive_log_ratio(t.val(m), *mask, &p_all, &p_pos);
        for (size_t i = 0; i < p_all.data.size(); ++i)
          p_all.data[i] = g * (p_all.data[i] - p_pos.data[i]);
        t.accum(m, p_all);
      },
      "contrastive");
}

int Tape::conv3x3(int x, int w, int bias, int H, int W) {
  auto compute = [x, w, bias, H, W](const Tape& t) {
    return k::conv3x3(t.val(x), t.val(w), t.val(bias), H, W);
  };
  return push(
      compute(*this), {x, w, bias}, compute,
      [x, w, bias, H, W](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        const Matrix& xv = t.val(x);
        const int cin = xv.cols;
        Matrix col = k::im2col3x3(xv, H, W);
        t.accum(w, k::matmul(k::transpose(col), g));
        Matrix db(1, g.cols);
        for (int i = 0; i < g.rows; ++i)
          for (int j = 0; j < g.cols; ++j) db(0, j) += g(i, j);
        t.accum(bias, db);
        Matrix dcol = k::matmul(g, k::transpose(t.val(w)));
        Matrix dx(xv.rows, cin);
        for (int i = 0; i < H; ++i)
          for (int j = 0; j < W; ++j) {
            const int p = i * W + j;
            int block = 0;
            for (int di = -1; di <= 1; ++di)
              for (int dj = -1; dj <= 1; ++dj, ++block) {
                const int ii = i + di, jj = j + dj;
                if (ii < 0 || ii >= H || jj < 0 || jj >= W) continue;
                const int q = ii * W + jj;
                for (int tt = 0; tt < cin; ++tt) dx(q, tt) += dcol(p, block * cin + tt);
              }
          }
        t.accum(x, dx);
      },
      "conv3x3");
}

int Tape::maxpool2x2(int x, int H, int W) {
  auto argmax = std::make_shared<std::vector<int>>();
  Matrix v = k::maxpool2x2(val(x), H, W, argmax.get());
  return push(
      std::move(v), {x},
      [x, H, W](const Tape& t) { return k::maxpool2x2(t.val(x), H, W, nullptr); },
      [x, argmax](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        const Matrix& xv = t.val(x);
        Matrix dx(xv.rows, xv.cols);
        for (int p = 0; p < g.rows; ++p)
          for (int tt = 0; tt < g.cols; ++tt)
            dx((*argmax)[static_cast<size_t>(p) * g.cols + tt], tt) += g(p, tt);
        t.accum(x, dx);
      },
      "maxpool2x2");
}

int Tape::resize_nearest(int x, int H, int W, int H2, int W2) {
  return push(
      k::resize_nearest(val(x), H, W, H2, W2), {x},
      [x, H, W, H2, W2](const Tape& t) { return k::resize_nearest(t.val(x), H, W, H2, W2); },
      [x, H, W, H2, W2](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        const Matrix& xv = t.val(x);
        auto idx = k::resize_nearest_index(H, W, H2, W2);
        Matrix dx(xv.rows, xv.cols);
        for (int p = 0; p < g.rows; ++p)
          for (int tt = 0; tt < g.cols; ++tt) dx(idx[p], tt) += g(p, tt);
        t.accum(x, dx);
      },
      "resize_nearest");
}

void Tape::backward(int root) {
  if (val(root).rows != 1 || val(root).cols != 1)
    throw ShapeError("tape backward: root must be scalar");
  grad(root)(0, 0) = real(1);
  for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0 || !n.backprop) continue;
    n.backprop(*this, id);
  }
}

Tape::ReplayResult Tape::replay() const {
  ReplayResult r;
  for (const Node& n : nodes_) {
    if (!n.recompute) continue;
    Matrix again = n.recompute(*this);
    if (!bit_equal(again, n.value)) {
      r.bit_exact = false;
      r.max_diff = std::max(r.max_diff, max_abs_diff(again, n.value));
    }
  }
  return r;
}

}  // namespace qsf
