#pragma once

#include <stdexcept>
#include <string>

#include "hazsmooth/types.hpp"

namespace hazsmooth {

// Kernels for tensor-product regression on grid data.  With marginal bases
// Bu (n_u x c_u) and Bs (n_s x c_s), the full design matrix would be
// Kron(Bs, Bu), of size (n_u n_s) x (c_u c_s).  None of the kernels below
// materialises it; the largest intermediate is c_u^2 x c_s^2.
//
// Layout conventions used throughout:
//   * vec() stacks matrix columns (column-major), so the coefficient vector
//     alpha = vec(A) with A of size c_u x c_s, and the tensor-basis column
//     index is m*c_u + l for marginal columns (l, m).
//   * Grid arrays (counts, exposures, weights) are n_u x n_s matrices.

namespace detail {

inline void check_grid_dims(const Matrix& Bu, const Matrix& Bs, const Matrix& W,
                            const char* name) {
  if (W.rows() != Bu.rows() || W.cols() != Bs.rows())
    throw std::invalid_argument(std::string(name) + ": grid array is " +
                                std::to_string(W.rows()) + "x" + std::to_string(W.cols()) +
                                " but bases have " + std::to_string(Bu.rows()) + " and " +
                                std::to_string(Bs.rows()) + " rows");
}

}  // namespace detail

// Row-wise tensor square of a basis: column l*c + m holds B_l .* B_m.
// Rows multiply out to (degree+1)^2 nonzero entries, so the result stays
// manageable even for fine grids.
inline Matrix row_tensor(const Matrix& B) {
  const Eigen::Index n = B.rows();
  const Eigen::Index c = B.cols();
  Matrix phi(n, c * c);
  for (Eigen::Index l = 0; l < c; ++l)
    for (Eigen::Index m = 0; m < c; ++m)
      phi.col(l * c + m) = B.col(l).cwiseProduct(B.col(m));
  return phi;
}

// Weighted inner product B' diag(vec W) B of the tensor basis, computed as a
// rearrangement of RowTensor(Bu)' * W * RowTensor(Bs).
inline Matrix inner_product_2d(const Matrix& Bu, const Matrix& Bs, const Matrix& W) {
  detail::check_grid_dims(Bu, Bs, W, "inner_product_2d");
  const Eigen::Index cu = Bu.cols();
  const Eigen::Index cs = Bs.cols();

  const Matrix phi_u = row_tensor(Bu);                    // n_u x c_u^2
  const Matrix phi_s = row_tensor(Bs);                    // n_s x c_s^2
  const Matrix t = phi_u.transpose() * (W * phi_s);       // c_u^2 x c_s^2

  // t[(la,lb), (ma,mb)] = sum_jk Bu_la Bu_lb W_jk Bs_ma Bs_mb, which is the
  // ((ma,la), (mb,lb)) entry of the tensor-basis inner product.
  Matrix g(cu * cs, cu * cs);
  for (Eigen::Index ma = 0; ma < cs; ++ma)
    for (Eigen::Index la = 0; la < cu; ++la)
      for (Eigen::Index mb = 0; mb < cs; ++mb)
        for (Eigen::Index lb = 0; lb < cu; ++lb)
          g(ma * cu + la, mb * cu + lb) = t(la * cu + lb, ma * cs + mb);
  return g;
}

// Working-response right-hand side B' (W eta + y - mu) evaluated without the
// tensor basis: the grid form is vec(Bu' ((Y - M) + M .* E) Bs).
inline Vector rhs_2d(const Matrix& Bu, const Matrix& Bs, const Matrix& Y, const Matrix& M,
                     const Matrix& E) {
  detail::check_grid_dims(Bu, Bs, Y, "rhs_2d");
  detail::check_grid_dims(Bu, Bs, M, "rhs_2d");
  detail::check_grid_dims(Bu, Bs, E, "rhs_2d");
  const Matrix core = (Y - M) + M.cwiseProduct(E);
  const Matrix v = Bu.transpose() * core * Bs;  // c_u x c_s
  return Eigen::Map<const Vector>(v.data(), v.size());
}

// Linear predictor on the grid: Eta = Bu A Bs'.
inline Matrix linear_predictor_2d(const Matrix& Bu, const Matrix& A, const Matrix& Bs) {
  if (A.rows() != Bu.cols() || A.cols() != Bs.cols())
    throw std::invalid_argument("linear_predictor_2d: coefficient array is " +
                                std::to_string(A.rows()) + "x" + std::to_string(A.cols()) +
                                " but bases have " + std::to_string(Bu.cols()) + " and " +
                                std::to_string(Bs.cols()) + " columns");
  return Bu * A * Bs.transpose();
}

// Pointwise variance of the linear predictor on the grid, diag(B V B')
// reshaped to n_u x n_s, where V is the (c_u c_s)^2 coefficient covariance.
inline Matrix variance_diag_2d(const Matrix& Bu, const Matrix& Bs, const Matrix& V) {
  const Eigen::Index cu = Bu.cols();
  const Eigen::Index cs = Bs.cols();
  if (V.rows() != cu * cs || V.cols() != cu * cs)
    throw std::invalid_argument("variance_diag_2d: covariance must be " +
                                std::to_string(cu * cs) + " square, got " +
                                std::to_string(V.rows()) + "x" + std::to_string(V.cols()));

  // Redimension V so that the quadratic form factorises over the two margins:
  // S[(la,lb), (ma,mb)] = V[(ma,la), (mb,lb)].
  Matrix s(cu * cu, cs * cs);
  for (Eigen::Index la = 0; la < cu; ++la)
    for (Eigen::Index lb = 0; lb < cu; ++lb)
      for (Eigen::Index ma = 0; ma < cs; ++ma)
        for (Eigen::Index mb = 0; mb < cs; ++mb)
          s(la * cu + lb, ma * cs + mb) = V(ma * cu + la, mb * cu + lb);

  return row_tensor(Bu) * s * row_tensor(Bs).transpose();  // n_u x n_s
}

// Dense Kronecker product, small-matrix use only (penalties, reference code).
inline Matrix kron(const Matrix& A, const Matrix& B) {
  Matrix out(A.rows() * B.rows(), A.cols() * B.cols());
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < A.cols(); ++j)
      out.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
  return out;
}

}  // namespace hazsmooth
