#pragma once

#include <functional>
#include <vector>

#include "cascalign/tensor.hpp"

namespace cascalign {

// Forward ops with analytic backward rules. Shape violations throw
// DimensionError. All ops are deterministic and single-threaded.

// [p×q]·[q×r] -> [p×r]
Tensor matmul(const Tensor& a, const Tensor& b);
// a·bᵀ for [p×q]·[r×q] -> [p×r]
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// [p×q]·[q] -> [p]
Tensor matvec(const Tensor& a, const Tensor& v);
Tensor dot(const Tensor& u, const Tensor& v);

Tensor add(const Tensor& a, const Tensor& b);
// Adds v to every row of a.
Tensor add_rowvec(const Tensor& a, const Tensor& v);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, real c);
Tensor add_scalar(const Tensor& a, real c);

Tensor sum(const Tensor& a);
Tensor mean_rows(const Tensor& a);

Tensor row(const Tensor& a, int r);
Tensor slice_rows(const Tensor& a, int r0, int count);
Tensor slice_cols(const Tensor& a, int c0, int count);
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor concat_rows_multi(const std::vector<Tensor>& parts);
Tensor concat_cols(const Tensor& a, const Tensor& b);
// Stacks k vectors of width q into [k×q].
Tensor stack_rows(const std::vector<Tensor>& rows);
// Stacks k scalars into [k].
Tensor stack_scalars(const std::vector<Tensor>& items);

// Row-wise softmax with max subtraction; rows sum to 1.
Tensor softmax_rows(const Tensor& a);

// Multi-head scaled dot-product attention over independent row blocks of one
// stacked sequence tensor. boundaries holds the start offset of each block
// plus the total row count; attention never crosses block edges.
Tensor attention_block_diag(const Tensor& q, const Tensor& k, const Tensor& v,
                            const std::vector<int>& boundaries, int heads, real scale);
Tensor layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta,
                  real eps = real(1e-5));
// Exact (erf-based) GELU.
Tensor gelu(const Tensor& a);

// max_r (v_r · y) over the rows of v [m×d]; ties resolve to the lowest row.
Tensor max_dot(const Tensor& video_tokens, const Tensor& token_emb);

// -log softmax(scores/tau)[pos]: one NCE term over a candidate score vector.
Tensor nce_from_scores(const Tensor& scores, int pos, real tau);

// Rows of an embedding matrix [V×d] by index; backward scatters.
Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);

// Maximum relative error between reverse-mode and central finite-difference
// gradients of f over every element of params, with denominator
// max(|analytic|, |numeric|, 1e-8). f is re-evaluated per probe; it must be a
// pure function of the params. Non-finite f throws NumericError.
real grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                real eps = real(1e-5));

}  // namespace cascalign
