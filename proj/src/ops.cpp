#include "cascalign/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "cascalign/errors.hpp"

namespace cascalign {

namespace {

using EMat = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<EMat>;
using CMap = Eigen::Map<const EMat>;

Tensor make_op(std::vector<int> shape, std::vector<real> data, std::vector<Tensor> parents,
               std::function<void(const std::vector<Tensor>&, const Tensor&)> backward) {
  bool rg = false;
  if (grad_enabled()) {
    for (const Tensor& p : parents) rg = rg || p.requires_grad();
  }
  std::shared_ptr<GradNode> node;
  if (rg) {
    node = std::make_shared<GradNode>();
    node->parents = std::move(parents);
    node->backward = std::move(backward);
  }
  return Tensor::op_output(std::move(shape), std::move(data), rg, std::move(node));
}

void require_rank(const Tensor& t, int rank, const char* op) {
  if (t.rank() != rank)
    throw DimensionError(std::string(op) + ": expected rank-" + std::to_string(rank) + " tensor");
}

void require_matrix_or_vector(const Tensor& t, const char* op) {
  if (t.rank() != 1 && t.rank() != 2)
    throw DimensionError(std::string(op) + ": expected rank-1 or rank-2 tensor");
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const int p = a.dim(0), q = a.dim(1), r = b.dim(1);
  if (b.dim(0) != q)
    throw DimensionError("matmul: inner dimensions disagree (" + std::to_string(q) + " vs " +
                         std::to_string(b.dim(0)) + ")");
  std::vector<real> out(static_cast<size_t>(p) * r);
  {
    CMap A(a.data(), p, q), B(b.data(), q, r);
    Map C(out.data(), p, r);
    C.noalias() = A * B;
  }
  return make_op({p, r}, std::move(out), {a, b},
                 [p, q, r](const std::vector<Tensor>& ps, const Tensor& o) {
                   CMap G(o.grad().data(), p, r);
                   if (ps[0].requires_grad()) {
                     Map dA(ps[0].grad_data(), p, q);
                     CMap B(ps[1].data(), q, r);
                     dA.noalias() += G * B.transpose();
                   }
                   if (ps[1].requires_grad()) {
                     Map dB(ps[1].grad_data(), q, r);
                     CMap A(ps[0].data(), p, q);
                     dB.noalias() += A.transpose() * G;
                   }
                 });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_nt");
  require_rank(b, 2, "matmul_nt");
  const int p = a.dim(0), q = a.dim(1), r = b.dim(0);
  if (b.dim(1) != q) throw DimensionError("matmul_nt: inner dimensions disagree");
  std::vector<real> out(static_cast<size_t>(p) * r);
  {
    CMap A(a.data(), p, q), B(b.data(), r, q);
    Map C(out.data(), p, r);
    C.noalias() = A * B.transpose();
  }
  return make_op({p, r}, std::move(out), {a, b},
                 [p, q, r](const std::vector<Tensor>& ps, const Tensor& o) {
                   CMap G(o.grad().data(), p, r);
                   if (ps[0].requires_grad()) {
                     Map dA(ps[0].grad_data(), p, q);
                     CMap B(ps[1].data(), r, q);
                     dA.noalias() += G * B;
                   }
                   if (ps[1].requires_grad()) {
                     Map dB(ps[1].grad_data(), r, q);
                     CMap A(ps[0].data(), p, q);
                     dB.noalias() += G.transpose() * A;
                   }
                 });
}

Tensor matvec(const Tensor& a, const Tensor& v) {
  require_rank(a, 2, "matvec");
  require_rank(v, 1, "matvec");
  const int p = a.dim(0), q = a.dim(1);
  if (v.dim(0) != q) throw DimensionError("matvec: width mismatch");
  std::vector<real> out(static_cast<size_t>(p));
  for (int i = 0; i < p; ++i) {
    real s = 0;
    const real* arow = a.data() + static_cast<size_t>(i) * q;
    for (int j = 0; j < q; ++j) s += arow[j] * v.at(static_cast<size_t>(j));
    out[static_cast<size_t>(i)] = s;
  }
  return make_op({p}, std::move(out), {a, v},
                 [p, q](const std::vector<Tensor>& ps, const Tensor& o) {
                   const real* g = o.grad().data();
                   if (ps[0].requires_grad()) {
                     real* da = ps[0].grad_data();
                     const real* vd = ps[1].data();
                     for (int i = 0; i < p; ++i)
                       for (int j = 0; j < q; ++j)
                         da[static_cast<size_t>(i) * q + j] += g[i] * vd[j];
                   }
                   if (ps[1].requires_grad()) {
                     real* dv = ps[1].grad_data();
                     const real* ad = ps[0].data();
                     for (int i = 0; i < p; ++i)
                       for (int j = 0; j < q; ++j)
                         dv[j] += g[i] * ad[static_cast<size_t>(i) * q + j];
                   }
                 });
}

Tensor dot(const Tensor& u, const Tensor& v) {
  require_rank(u, 1, "dot");
  require_rank(v, 1, "dot");
  if (u.dim(0) != v.dim(0)) throw DimensionError("dot: length mismatch");
  const int n = u.dim(0);
  real s = 0;
  for (int i = 0; i < n; ++i) s += u.at(static_cast<size_t>(i)) * v.at(static_cast<size_t>(i));
  return make_op({}, {s}, {u, v}, [n](const std::vector<Tensor>& ps, const Tensor& o) {
    const real g = o.grad()[0];
    if (ps[0].requires_grad()) {
      real* du = ps[0].grad_data();
      const real* vd = ps[1].data();
      for (int i = 0; i < n; ++i) du[i] += g * vd[i];
    }
    if (ps[1].requires_grad()) {
      real* dv = ps[1].grad_data();
      const real* ud = ps[0].data();
      for (int i = 0; i < n; ++i) dv[i] += g * ud[i];
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw DimensionError("add: shape mismatch");
  std::vector<real> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  return make_op(a.shape(), std::move(out), {a, b},
                 [](const std::vector<Tensor>& ps, const Tensor& o) {
                   const real* g = o.grad().data();
                   const size_t n = o.size();
                   for (int k = 0; k < 2; ++k) {
                     if (!ps[k].requires_grad()) continue;
                     real* d = ps[k].grad_data();
                     for (size_t i = 0; i < n; ++i) d[i] += g[i];
                   }
                 });
}

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
  require_rank(a, 2, "add_rowvec");
  require_rank(v, 1, "add_rowvec");
  const int p = a.dim(0), q = a.dim(1);
  if (v.dim(0) != q) throw DimensionError("add_rowvec: width mismatch");
  std::vector<real> out(a.size());
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < q; ++j)
      out[static_cast<size_t>(i) * q + j] = a.at(static_cast<size_t>(i) * q + j) + v.at(static_cast<size_t>(j));
  return make_op({p, q}, std::move(out), {a, v},
                 [p, q](const std::vector<Tensor>& ps, const Tensor& o) {
                   const real* g = o.grad().data();
                   if (ps[0].requires_grad()) {
                     real* da = ps[0].grad_data();
                     for (size_t i = 0; i < o.size(); ++i) da[i] += g[i];
                   }
                   if (ps[1].requires_grad()) {
                     real* dv = ps[1].grad_data();
                     for (int i = 0; i < p; ++i)
                       for (int j = 0; j < q; ++j) dv[j] += g[static_cast<size_t>(i) * q + j];
                   }
                 });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw DimensionError("mul: shape mismatch");
  std::vector<real> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  return make_op(a.shape(), std::move(out), {a, b},
                 [](const std::vector<Tensor>& ps, const Tensor& o) {
                   const real* g = o.grad().data();
                   const size_t n = o.size();
                   if (ps[0].requires_grad()) {
                     real* da = ps[0].grad_data();
                     const real* bd = ps[1].data();
                     for (size_t i = 0; i < n; ++i) da[i] += g[i] * bd[i];
                   }
                   if (ps[1].requires_grad()) {
                     real* db = ps[1].grad_data();
                     const real* ad = ps[0].data();
                     for (size_t i = 0; i < n; ++i) db[i] += g[i] * ad[i];
                   }
                 });
}

Tensor scale(const Tensor& a, real c) {
  std::vector<real> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * c;
  return make_op(a.shape(), std::move(out), {a},
                 [c](const std::vector<Tensor>& ps, const Tensor& o) {
                   if (!ps[0].requires_grad()) return;
                   real* da = ps[0].grad_data();
                   const real* g = o.grad().data();
                   for (size_t i = 0; i < o.size(); ++i) da[i] += g[i] * c;
                 });
}

Tensor add_scalar(const Tensor& a, real c) {
  std::vector<real> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + c;
  return make_op(a.shape(), std::move(out), {a},
                 [](const std::vector<Tensor>& ps, const Tensor& o) {
                   if (!ps[0].requires_grad()) return;
                   real* da = ps[0].grad_data();
                   const real* g = o.grad().data();
                   for (size_t i = 0; i < o.size(); ++i) da[i] += g[i];
                 });
}

Tensor sum(const Tensor& a) {
  real s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += a.at(i);
  return make_op({}, {s}, {a}, [](const std::vector<Tensor>& ps, const Tensor& o) {
    if (!ps[0].requires_grad()) return;
    const real g = o.grad()[0];
    real* da = ps[0].grad_data();
    for (size_t i = 0; i < ps[0].size(); ++i) da[i] += g;
  });
}

Tensor mean_rows(const Tensor& a) {
  require_rank(a, 2, "mean_rows");
  const int p = a.dim(0), q = a.dim(1);
  if (p == 0) throw DimensionError("mean_rows: empty sequence");
  std::vector<real> out(static_cast<size_t>(q), real(0));
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < q; ++j) out[static_cast<size_t>(j)] += a.at(static_cast<size_t>(i) * q + j);
  for (int j = 0; j < q; ++j) out[static_cast<size_t>(j)] /= static_cast<real>(p);
  return make_op({q}, std::move(out), {a},
                 [p, q](const std::vector<Tensor>& ps, const Tensor& o) {
                   if (!ps[0].requires_grad()) return;
                   real* da = ps[0].grad_data();
                   const real* g = o.grad().data();
                   const real inv = real(1) / static_cast<real>(p);
                   for (int i = 0; i < p; ++i)
                     for (int j = 0; j < q; ++j) da[static_cast<size_t>(i) * q + j] += g[j] * inv;
                 });
}

Tensor row(const Tensor& a, int r) {
  require_rank(a, 2, "row");
  const int p = a.dim(0), q = a.dim(1);
  if (r < 0 || r >= p) throw DimensionError("row: index out of range");
  std::vector<real> out(a.data() + static_cast<size_t>(r) * q, a.data() + static_cast<size_t>(r + 1) * q);
  return make_op({q}, std::move(out), {a},
                 [r, q](const std::vector<Tensor>& ps, const Tensor& o) {
                   if (!ps[0].requires_grad()) return;
                   real* da = ps[0].grad_data() + static_cast<size_t>(r) * q;
                   const real* g = o.grad().data();
                   for (int j = 0; j < q; ++j) da[j] += g[j];
                 });
}

Tensor slice_rows(const Tensor& a, int r0, int count) {
  require_rank(a, 2, "slice_rows");
  const int p = a.dim(0), q = a.dim(1);
  if (r0 < 0 || count < 0 || r0 + count > p) throw DimensionError("slice_rows: range out of bounds");
  std::vector<real> out(a.data() + static_cast<size_t>(r0) * q,
                        a.data() + static_cast<size_t>(r0 + count) * q);
  return make_op({count, q}, std::move(out), {a},
                 [r0, q](const std::vector<Tensor>& ps, const Tensor& o) {
                   if (!ps[0].requires_grad()) return;
                   real* da = ps[0].grad_data() + static_cast<size_t>(r0) * q;
                   const real* g = o.grad().data();
                   for (size_t i = 0; i < o.size(); ++i) da[i] += g[i];
                 });
}

Tensor slice_cols(const Tensor& a, int c0, int count) {
  require_rank(a, 2, "slice_cols");
  const int p = a.dim(0), q = a.dim(1);
  if (c0 < 0 || count < 0 || c0 + count > q) throw DimensionError("slice_cols: range out of bounds");
  std::vector<real> out(static_cast<size_t>(p) * count);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < count; ++j)
      out[static_cast<size_t>(i) * count + j] = a.at(static_cast<size_t>(i) * q + c0 + j);
  return make_op({p, count}, std::move(out), {a},
                 [p, q, c0, count](const std::vector<Tensor>& ps, const Tensor& o) {
                   if (!ps[0].requires_grad()) return;
                   real* da = ps[0].grad_data();
                   const real* g = o.grad().data();
                   for (int i = 0; i < p; ++i)
                     for (int j = 0; j < count; ++j)
                       da[static_cast<size_t>(i) * q + c0 + j] += g[static_cast<size_t>(i) * count + j];
                 });
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "concat_rows");
  require_rank(b, 2, "concat_rows");
  if (a.dim(1) != b.dim(1)) throw DimensionError("concat_rows: width mismatch");
  const int pa = a.dim(0), pb = b.dim(0), q = a.dim(1);
  std::vector<real> out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.data(), a.data() + a.size());
  out.insert(out.end(), b.data(), b.data() + b.size());
  return make_op({pa + pb, q}, std::move(out), {a, b},
                 [pa, q](const std::vector<Tensor>& ps, const Tensor& o) {
                   const real* g = o.grad().data();
                   if (ps[0].requires_grad()) {
                     real* da = ps[0].grad_data();
                     for (size_t i = 0; i < ps[0].size(); ++i) da[i] += g[i];
                   }
                   if (ps[1].requires_grad()) {
                     real* db = ps[1].grad_data();
                     const real* gb = g + static_cast<size_t>(pa) * q;
                     for (size_t i = 0; i < ps[1].size(); ++i) db[i] += gb[i];
                   }
                 });
}

Tensor concat_rows_multi(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows_multi: empty input");
  const int q = parts[0].dim(1);
  int rows = 0;
  for (const Tensor& p : parts) {
    require_rank(p, 2, "concat_rows_multi");
    if (p.dim(1) != q) throw DimensionError("concat_rows_multi: width mismatch");
    rows += p.dim(0);
  }
  std::vector<real> out;
  out.reserve(static_cast<size_t>(rows) * q);
  for (const Tensor& p : parts) out.insert(out.end(), p.data(), p.data() + p.size());
  return make_op({rows, q}, std::move(out), parts,
                 [](const std::vector<Tensor>& ps, const Tensor& o) {
                   const real* g = o.grad().data();
                   size_t offset = 0;
                   for (const Tensor& p : ps) {
                     if (p.requires_grad()) {
                       real* d = p.grad_data();
                       for (size_t i = 0; i < p.size(); ++i) d[i] += g[offset + i];
                     }
                     offset += p.size();
                   }
                 });
}

Tensor attention_block_diag(const Tensor& q, const Tensor& k, const Tensor& v,
                            const std::vector<int>& boundaries, int heads, real scale) {
  require_rank(q, 2, "attention_block_diag");
  const int rows = q.dim(0), d = q.dim(1);
  if (k.shape() != q.shape() || v.shape() != q.shape())
    throw DimensionError("attention_block_diag: q/k/v shapes disagree");
  if (heads < 1 || d % heads != 0)
    throw DimensionError("attention_block_diag: width not divisible by heads");
  if (boundaries.size() < 2 || boundaries.front() != 0 || boundaries.back() != rows)
    throw DimensionError("attention_block_diag: bad boundaries");
  for (size_t b = 1; b < boundaries.size(); ++b) {
    if (boundaries[b] <= boundaries[b - 1])
      throw DimensionError("attention_block_diag: boundaries must increase");
  }
  const int hd = d / heads;

  // probs laid out as: per block, per head, t×t row-major
  std::vector<real> probs;
  {
    size_t total = 0;
    for (size_t b = 1; b < boundaries.size(); ++b) {
      const size_t t = static_cast<size_t>(boundaries[b] - boundaries[b - 1]);
      total += static_cast<size_t>(heads) * t * t;
    }
    probs.reserve(total);
  }
  std::vector<real> out(static_cast<size_t>(rows) * d, real(0));

  for (size_t b = 1; b < boundaries.size(); ++b) {
    const int r0 = boundaries[b - 1];
    const int t = boundaries[b] - r0;
    for (int h = 0; h < heads; ++h) {
      const int c0 = h * hd;
      // scores and softmax for this block/head
      std::vector<real> p(static_cast<size_t>(t) * t);
      for (int a = 0; a < t; ++a) {
        const real* qa = q.data() + static_cast<size_t>(r0 + a) * d + c0;
        real row_max = 0;
        for (int bb = 0; bb < t; ++bb) {
          const real* kb = k.data() + static_cast<size_t>(r0 + bb) * d + c0;
          real s = 0;
          for (int c = 0; c < hd; ++c) s += qa[c] * kb[c];
          s *= scale;
          p[static_cast<size_t>(a) * t + bb] = s;
          if (bb == 0 || s > row_max) row_max = s;
        }
        real z = 0;
        for (int bb = 0; bb < t; ++bb) {
          real& e = p[static_cast<size_t>(a) * t + bb];
          e = std::exp(e - row_max);
          z += e;
        }
        for (int bb = 0; bb < t; ++bb) p[static_cast<size_t>(a) * t + bb] /= z;
        // context row
        real* out_row = out.data() + static_cast<size_t>(r0 + a) * d + c0;
        for (int bb = 0; bb < t; ++bb) {
          const real w = p[static_cast<size_t>(a) * t + bb];
          const real* vb = v.data() + static_cast<size_t>(r0 + bb) * d + c0;
          for (int c = 0; c < hd; ++c) out_row[c] += w * vb[c];
        }
      }
      probs.insert(probs.end(), p.begin(), p.end());
    }
  }

  return make_op(
      {rows, d}, std::move(out), {q, k, v},
      [boundaries, heads, hd, d, scale, probs = std::move(probs)](const std::vector<Tensor>& ps,
                                                                  const Tensor& o) {
        const real* g = o.grad().data();
        const bool need_q = ps[0].requires_grad();
        const bool need_k = ps[1].requires_grad();
        const bool need_v = ps[2].requires_grad();
        size_t probs_off = 0;
        std::vector<real> dp, ds;
        for (size_t b = 1; b < boundaries.size(); ++b) {
          const int r0 = boundaries[b - 1];
          const int t = boundaries[b] - r0;
          for (int h = 0; h < heads; ++h) {
            const int c0 = h * hd;
            const real* p = probs.data() + probs_off;
            probs_off += static_cast<size_t>(t) * t;
            dp.assign(static_cast<size_t>(t) * t, real(0));
            // dP = dC · Vᵀ ; dV += Pᵀ · dC
            for (int a = 0; a < t; ++a) {
              const real* grow = g + static_cast<size_t>(r0 + a) * d + c0;
              for (int bb = 0; bb < t; ++bb) {
                const real* vb = ps[2].data() + static_cast<size_t>(r0 + bb) * d + c0;
                real s = 0;
                for (int c = 0; c < hd; ++c) s += grow[c] * vb[c];
                dp[static_cast<size_t>(a) * t + bb] = s;
              }
            }
            if (need_v) {
              for (int bb = 0; bb < t; ++bb) {
                real* dvb = ps[2].grad_data() + static_cast<size_t>(r0 + bb) * d + c0;
                for (int a = 0; a < t; ++a) {
                  const real w = p[static_cast<size_t>(a) * t + bb];
                  const real* grow = g + static_cast<size_t>(r0 + a) * d + c0;
                  for (int c = 0; c < hd; ++c) dvb[c] += w * grow[c];
                }
              }
            }
            if (!need_q && !need_k) continue;
            // softmax backward: dS = P ∘ (dP − rowsum(dP ∘ P))
            ds.assign(static_cast<size_t>(t) * t, real(0));
            for (int a = 0; a < t; ++a) {
              real inner = 0;
              for (int bb = 0; bb < t; ++bb)
                inner += dp[static_cast<size_t>(a) * t + bb] * p[static_cast<size_t>(a) * t + bb];
              for (int bb = 0; bb < t; ++bb)
                ds[static_cast<size_t>(a) * t + bb] =
                    p[static_cast<size_t>(a) * t + bb] *
                    (dp[static_cast<size_t>(a) * t + bb] - inner);
            }
            // dQ += dS·K·scale ; dK += dSᵀ·Q·scale
            if (need_q) {
              for (int a = 0; a < t; ++a) {
                real* dqa = ps[0].grad_data() + static_cast<size_t>(r0 + a) * d + c0;
                for (int bb = 0; bb < t; ++bb) {
                  const real w = ds[static_cast<size_t>(a) * t + bb] * scale;
                  const real* kb = ps[1].data() + static_cast<size_t>(r0 + bb) * d + c0;
                  for (int c = 0; c < hd; ++c) dqa[c] += w * kb[c];
                }
              }
            }
            if (need_k) {
              for (int bb = 0; bb < t; ++bb) {
                real* dkb = ps[1].grad_data() + static_cast<size_t>(r0 + bb) * d + c0;
                for (int a = 0; a < t; ++a) {
                  const real w = ds[static_cast<size_t>(a) * t + bb] * scale;
                  const real* qa = ps[0].data() + static_cast<size_t>(r0 + a) * d + c0;
                  for (int c = 0; c < hd; ++c) dkb[c] += w * qa[c];
                }
              }
            }
          }
        }
      });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "concat_cols");
  require_rank(b, 2, "concat_cols");
  if (a.dim(0) != b.dim(0)) throw DimensionError("concat_cols: height mismatch");
  const int p = a.dim(0), qa = a.dim(1), qb = b.dim(1);
  std::vector<real> out(static_cast<size_t>(p) * (qa + qb));
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < qa; ++j)
      out[static_cast<size_t>(i) * (qa + qb) + j] = a.at(static_cast<size_t>(i) * qa + j);
    for (int j = 0; j < qb; ++j)
      out[static_cast<size_t>(i) * (qa + qb) + qa + j] = b.at(static_cast<size_t>(i) * qb + j);
  }
  return make_op({p, qa + qb}, std::move(out), {a, b},
                 [p, qa, qb](const std::vector<Tensor>& ps, const Tensor& o) {
                   const real* g = o.grad().data();
                   const int q = qa + qb;
                   if (ps[0].requires_grad()) {
                     real* da = ps[0].grad_data();
                     for (int i = 0; i < p; ++i)
                       for (int j = 0; j < qa; ++j)
                         da[static_cast<size_t>(i) * qa + j] += g[static_cast<size_t>(i) * q + j];
                   }
                   if (ps[1].requires_grad()) {
                     real* db = ps[1].grad_data();
                     for (int i = 0; i < p; ++i)
                       for (int j = 0; j < qb; ++j)
                         db[static_cast<size_t>(i) * qb + j] += g[static_cast<size_t>(i) * q + qa + j];
                   }
                 });
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw DimensionError("stack_rows: empty input");
  const int q = rows[0].dim(0);
  for (const Tensor& r : rows) {
    require_rank(r, 1, "stack_rows");
    if (r.dim(0) != q) throw DimensionError("stack_rows: width mismatch");
  }
  const int k = static_cast<int>(rows.size());
  std::vector<real> out(static_cast<size_t>(k) * q);
  for (int i = 0; i < k; ++i)
    std::copy(rows[static_cast<size_t>(i)].data(), rows[static_cast<size_t>(i)].data() + q,
              out.begin() + static_cast<size_t>(i) * q);
  return make_op({k, q}, std::move(out), rows,
                 [q](const std::vector<Tensor>& ps, const Tensor& o) {
                   const real* g = o.grad().data();
                   for (size_t i = 0; i < ps.size(); ++i) {
                     if (!ps[i].requires_grad()) continue;
                     real* d = ps[i].grad_data();
                     const real* gi = g + i * static_cast<size_t>(q);
                     for (int j = 0; j < q; ++j) d[j] += gi[j];
                   }
                 });
}

Tensor stack_scalars(const std::vector<Tensor>& items) {
  if (items.empty()) throw DimensionError("stack_scalars: empty input");
  const int k = static_cast<int>(items.size());
  std::vector<real> out(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) {
    if (items[static_cast<size_t>(i)].size() != 1)
      throw DimensionError("stack_scalars: inputs must be scalars");
    out[static_cast<size_t>(i)] = items[static_cast<size_t>(i)].at(0);
  }
  return make_op({k}, std::move(out), items,
                 [](const std::vector<Tensor>& ps, const Tensor& o) {
                   const real* g = o.grad().data();
                   for (size_t i = 0; i < ps.size(); ++i) {
                     if (ps[i].requires_grad()) ps[i].grad_data()[0] += g[i];
                   }
                 });
}

Tensor softmax_rows(const Tensor& a) {
  require_matrix_or_vector(a, "softmax_rows");
  const int p = a.rows(), q = a.cols();
  std::vector<real> out(a.size());
  for (int i = 0; i < p; ++i) {
    const real* x = a.data() + static_cast<size_t>(i) * q;
    real* y = out.data() + static_cast<size_t>(i) * q;
    real m = x[0];
    for (int j = 1; j < q; ++j) m = std::max(m, x[j]);
    real s = 0;
    for (int j = 0; j < q; ++j) {
      y[j] = std::exp(x[j] - m);
      s += y[j];
    }
    for (int j = 0; j < q; ++j) y[j] /= s;
  }
  return make_op(a.shape(), std::move(out), {a},
                 [p, q](const std::vector<Tensor>& ps, const Tensor& o) {
                   if (!ps[0].requires_grad()) return;
                   real* da = ps[0].grad_data();
                   const real* g = o.grad().data();
                   const real* y = o.data();
                   for (int i = 0; i < p; ++i) {
                     const size_t off = static_cast<size_t>(i) * q;
                     real inner = 0;
                     for (int j = 0; j < q; ++j) inner += g[off + j] * y[off + j];
                     for (int j = 0; j < q; ++j) da[off + j] += y[off + j] * (g[off + j] - inner);
                   }
                 });
}

Tensor layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta, real eps) {
  require_rank(a, 2, "layer_norm");
  require_rank(gamma, 1, "layer_norm");
  require_rank(beta, 1, "layer_norm");
  const int p = a.dim(0), q = a.dim(1);
  if (gamma.dim(0) != q || beta.dim(0) != q) throw DimensionError("layer_norm: width mismatch");
  std::vector<real> out(a.size());
  std::vector<real> xhat(a.size());
  std::vector<real> inv_std(static_cast<size_t>(p));
  for (int i = 0; i < p; ++i) {
    const real* x = a.data() + static_cast<size_t>(i) * q;
    real mu = 0;
    for (int j = 0; j < q; ++j) mu += x[j];
    mu /= static_cast<real>(q);
    real var = 0;
    for (int j = 0; j < q; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= static_cast<real>(q);
    const real istd = real(1) / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(i)] = istd;
    for (int j = 0; j < q; ++j) {
      const size_t idx = static_cast<size_t>(i) * q + j;
      xhat[idx] = (x[j] - mu) * istd;
      out[idx] = gamma.at(static_cast<size_t>(j)) * xhat[idx] + beta.at(static_cast<size_t>(j));
    }
  }
  return make_op({p, q}, std::move(out), {a, gamma, beta},
                 [p, q, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                     const std::vector<Tensor>& ps, const Tensor& o) {
                   const real* g = o.grad().data();
                   if (ps[1].requires_grad()) {
                     real* dgamma = ps[1].grad_data();
                     for (int i = 0; i < p; ++i)
                       for (int j = 0; j < q; ++j)
                         dgamma[j] += g[static_cast<size_t>(i) * q + j] * xhat[static_cast<size_t>(i) * q + j];
                   }
                   if (ps[2].requires_grad()) {
                     real* dbeta = ps[2].grad_data();
                     for (int i = 0; i < p; ++i)
                       for (int j = 0; j < q; ++j) dbeta[j] += g[static_cast<size_t>(i) * q + j];
                   }
                   if (ps[0].requires_grad()) {
                     real* da = ps[0].grad_data();
                     const real* gam = ps[1].data();
                     for (int i = 0; i < p; ++i) {
                       const size_t off = static_cast<size_t>(i) * q;
                       real sum_dxhat = 0, sum_dxhat_xhat = 0;
                       for (int j = 0; j < q; ++j) {
                         const real dxh = g[off + j] * gam[j];
                         sum_dxhat += dxh;
                         sum_dxhat_xhat += dxh * xhat[off + j];
                       }
                       const real istd = inv_std[static_cast<size_t>(i)];
                       for (int j = 0; j < q; ++j) {
                         const real dxh = g[off + j] * gam[j];
                         da[off + j] += istd * (dxh - (sum_dxhat + xhat[off + j] * sum_dxhat_xhat) /
                                                          static_cast<real>(q));
                       }
                     }
                   }
                 });
}

Tensor gelu(const Tensor& a) {
  constexpr real inv_sqrt2 = real(0.7071067811865475244);
  const real inv_sqrt2pi = real(1) / std::sqrt(real(2) * static_cast<real>(std::numbers::pi));
  std::vector<real> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) {
    const real x = a.at(i);
    out[i] = real(0.5) * x * (real(1) + std::erf(x * inv_sqrt2));
  }
  return make_op(a.shape(), std::move(out), {a},
                 [inv_sqrt2pi](const std::vector<Tensor>& ps, const Tensor& o) {
                   if (!ps[0].requires_grad()) return;
                   real* da = ps[0].grad_data();
                   const real* g = o.grad().data();
                   const real* x = ps[0].data();
                   for (size_t i = 0; i < o.size(); ++i) {
                     const real cdf = real(0.5) * (real(1) + std::erf(x[i] * inv_sqrt2));
                     const real pdf = inv_sqrt2pi * std::exp(real(-0.5) * x[i] * x[i]);
                     da[i] += g[i] * (cdf + x[i] * pdf);
                   }
                 });
}

Tensor max_dot(const Tensor& video_tokens, const Tensor& token_emb) {
  require_rank(video_tokens, 2, "max_dot");
  require_rank(token_emb, 1, "max_dot");
  const int m = video_tokens.dim(0), d = video_tokens.dim(1);
  if (m == 0) throw DimensionError("max_dot: empty token sequence");
  if (token_emb.dim(0) != d) throw DimensionError("max_dot: width mismatch");
  int argmax = 0;
  real best = 0;
  for (int i = 0; i < m; ++i) {
    real s = 0;
    const real* vrow = video_tokens.data() + static_cast<size_t>(i) * d;
    for (int j = 0; j < d; ++j) s += vrow[j] * token_emb.at(static_cast<size_t>(j));
    if (i == 0 || s > best) {
      best = s;
      argmax = i;
    }
  }
  return make_op({}, {best}, {video_tokens, token_emb},
                 [argmax, d](const std::vector<Tensor>& ps, const Tensor& o) {
                   const real g = o.grad()[0];
                   const real* vrow = ps[0].data() + static_cast<size_t>(argmax) * d;
                   const real* y = ps[1].data();
                   if (ps[0].requires_grad()) {
                     real* dv = ps[0].grad_data() + static_cast<size_t>(argmax) * d;
                     for (int j = 0; j < d; ++j) dv[j] += g * y[j];
                   }
                   if (ps[1].requires_grad()) {
                     real* dy = ps[1].grad_data();
                     for (int j = 0; j < d; ++j) dy[j] += g * vrow[j];
                   }
                 });
}

Tensor nce_from_scores(const Tensor& scores, int pos, real tau) {
  require_rank(scores, 1, "nce_from_scores");
  const int n = scores.dim(0);
  if (n < 2) throw DimensionError("nce_from_scores: need at least two candidates");
  if (pos < 0 || pos >= n) throw DimensionError("nce_from_scores: positive index out of range");
  if (!(tau > 0)) throw ConfigError("nce_from_scores: temperature must be positive");
  std::vector<real> probs(static_cast<size_t>(n));
  real m = scores.at(0) / tau;
  for (int i = 1; i < n; ++i) m = std::max(m, scores.at(static_cast<size_t>(i)) / tau);
  real z = 0;
  for (int i = 0; i < n; ++i) {
    probs[static_cast<size_t>(i)] = std::exp(scores.at(static_cast<size_t>(i)) / tau - m);
    z += probs[static_cast<size_t>(i)];
  }
  for (int i = 0; i < n; ++i) probs[static_cast<size_t>(i)] /= z;
  const real value = m + std::log(z) - scores.at(static_cast<size_t>(pos)) / tau;
  return make_op({}, {value}, {scores},
                 [pos, tau, probs = std::move(probs)](const std::vector<Tensor>& ps, const Tensor& o) {
                   if (!ps[0].requires_grad()) return;
                   const real g = o.grad()[0];
                   real* ds = ps[0].grad_data();
                   for (size_t i = 0; i < probs.size(); ++i) {
                     real v = probs[i];
                     if (static_cast<int>(i) == pos) v -= real(1);
                     ds[i] += g * v / tau;
                   }
                 });
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
  require_rank(table, 2, "gather_rows");
  const int v = table.dim(0), d = table.dim(1);
  for (int id : ids) {
    if (id < 0 || id >= v) throw VocabError("gather_rows: row id " + std::to_string(id) + " out of range");
  }
  const int n = static_cast<int>(ids.size());
  std::vector<real> out(static_cast<size_t>(n) * d);
  for (int i = 0; i < n; ++i)
    std::copy(table.data() + static_cast<size_t>(ids[static_cast<size_t>(i)]) * d,
              table.data() + static_cast<size_t>(ids[static_cast<size_t>(i)] + 1) * d,
              out.begin() + static_cast<size_t>(i) * d);
  return make_op({n, d}, std::move(out), {table},
                 [ids, d](const std::vector<Tensor>& ps, const Tensor& o) {
                   if (!ps[0].requires_grad()) return;
                   real* dt = ps[0].grad_data();
                   const real* g = o.grad().data();
                   for (size_t i = 0; i < ids.size(); ++i) {
                     real* drow = dt + static_cast<size_t>(ids[i]) * d;
                     const real* gi = g + i * static_cast<size_t>(d);
                     for (int j = 0; j < d; ++j) drow[j] += gi[j];
                   }
                 });
}

real grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params, real eps) {
  if (!(eps > 0)) throw ConfigError("grad_check: eps must be positive");
  std::vector<Tensor> ps = params;
  for (const Tensor& p : ps) p.zero_grad();
  Tensor out = f();
  if (out.size() != 1) throw DimensionError("grad_check: objective must be scalar");
  if (!std::isfinite(static_cast<double>(out.item())))
    throw NumericError("grad_check: non-finite objective value");
  out.backward();

  auto eval = [&f]() {
    NoGradGuard guard;
    const real v = f().item();
    if (!std::isfinite(static_cast<double>(v)))
      throw NumericError("grad_check: non-finite objective during probing");
    return v;
  };

  // The denominator compares against the magnitudes of the two gradients:
  // central differences resolve at best ulp(f)/(2 eps) in absolute terms, so a
  // per-element denominator would turn correctly-matching near-zero
  // coordinates into spurious O(1e-3) errors.
  std::vector<std::vector<real>> analytic, numeric;
  real analytic_mag = 0, numeric_mag = 0;
  for (Tensor& p : ps) {
    analytic.push_back(p.grad());
    std::vector<real> n(p.size());
    real* data = p.mutable_data();
    for (size_t i = 0; i < p.size(); ++i) {
      const real orig = data[i];
      data[i] = orig + eps;
      const real fp = eval();
      data[i] = orig - eps;
      const real fm = eval();
      data[i] = orig;
      n[i] = (fp - fm) / (2 * eps);
      analytic_mag = std::max(analytic_mag, std::abs(analytic.back()[i]));
      numeric_mag = std::max(numeric_mag, std::abs(n[i]));
    }
    numeric.push_back(std::move(n));
  }
  const real denom = std::max({analytic_mag, numeric_mag, real(1e-8)});
  real max_err = 0;
  for (size_t t = 0; t < analytic.size(); ++t)
    for (size_t i = 0; i < analytic[t].size(); ++i)
      max_err = std::max(max_err, std::abs(analytic[t][i] - numeric[t][i]) / denom);
  return max_err;
}

}  // namespace cascalign
