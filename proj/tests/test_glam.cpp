#include <catch2/catch_amalgamated.hpp>

#include "test_support.hpp"

using namespace hazsmooth;
using testsupport::random_matrix;

namespace {

// Dense reference: the full tensor design with column-major cell order.
Matrix dense_design(const Matrix& Bu, const Matrix& Bs) { return kron(Bs, Bu); }

}  // namespace

TEST_CASE("row tensor columns multiply basis pairs", "[glam]") {
  Matrix B(2, 2);
  B << 1, 2, 3, 4;
  const Matrix phi = row_tensor(B);
  REQUIRE(phi.cols() == 4);
  // column l*c+m = B_l .* B_m
  CHECK(phi(0, 0) == 1.0);   // B0*B0
  CHECK(phi(0, 1) == 2.0);   // B0*B1
  CHECK(phi(0, 2) == 2.0);   // B1*B0
  CHECK(phi(0, 3) == 4.0);   // B1*B1
  CHECK(phi(1, 0) == 9.0);
  CHECK(phi(1, 3) == 16.0);
}

TEST_CASE("weighted inner product matches the dense design", "[glam]") {
  CounterRng rng(5, 0);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix Bu = random_matrix(7, 4, rng, -1.0, 1.0);
    const Matrix Bs = random_matrix(6, 3, rng, -1.0, 1.0);
    const Matrix W = random_matrix(7, 6, rng, 0.0, 2.0);

    const Matrix got = inner_product_2d(Bu, Bs, W);
    const Matrix B = dense_design(Bu, Bs);
    const Vector w = Eigen::Map<const Vector>(W.data(), W.size());
    const Matrix expect = B.transpose() * w.asDiagonal() * B;
    CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("working right-hand side matches the dense design", "[glam]") {
  CounterRng rng(6, 0);
  const Matrix Bu = random_matrix(8, 5, rng, -1.0, 1.0);
  const Matrix Bs = random_matrix(7, 4, rng, -1.0, 1.0);
  const Matrix Y = random_matrix(8, 7, rng, 0.0, 5.0);
  const Matrix M = random_matrix(8, 7, rng, 0.1, 4.0);
  const Matrix E = random_matrix(8, 7, rng, -2.0, 2.0);

  const Vector got = rhs_2d(Bu, Bs, Y, M, E);
  const Matrix B = dense_design(Bu, Bs);
  const Vector y = Eigen::Map<const Vector>(Y.data(), Y.size());
  const Vector m = Eigen::Map<const Vector>(M.data(), M.size());
  const Vector e = Eigen::Map<const Vector>(E.data(), E.size());
  const Vector expect = B.transpose() * (m.cwiseProduct(e) + y - m);
  CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("linear predictor matches the dense design", "[glam]") {
  CounterRng rng(7, 0);
  const Matrix Bu = random_matrix(9, 5, rng, -1.0, 1.0);
  const Matrix Bs = random_matrix(4, 3, rng, -1.0, 1.0);
  const Matrix A = random_matrix(5, 3, rng, -2.0, 2.0);

  const Matrix got = linear_predictor_2d(Bu, A, Bs);
  const Matrix B = dense_design(Bu, Bs);
  const Vector alpha = Eigen::Map<const Vector>(A.data(), A.size());
  const Vector expect = B * alpha;
  CHECK((Eigen::Map<const Vector>(got.data(), got.size()) - expect).cwiseAbs().maxCoeff() <
        1e-12);
}

TEST_CASE("variance diagonal matches the dense design", "[glam]") {
  CounterRng rng(8, 0);
  const Matrix Bu = random_matrix(6, 4, rng, -1.0, 1.0);
  const Matrix Bs = random_matrix(5, 3, rng, -1.0, 1.0);
  Matrix Q = random_matrix(12, 12, rng, -1.0, 1.0);
  const Matrix V = Q.transpose() * Q + 0.1 * Matrix::Identity(12, 12);

  const Matrix got = variance_diag_2d(Bu, Bs, V);
  const Matrix B = dense_design(Bu, Bs);
  const Vector expect_diag = ((B * V).cwiseProduct(B)).rowwise().sum();
  const Matrix expect = Eigen::Map<const Matrix>(expect_diag.data(), 6, 5);
  CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("inner product output is symmetric and positive semidefinite", "[glam]") {
  CounterRng rng(9, 0);
  for (int trial = 0; trial < 3; ++trial) {
    const Matrix Bu = random_matrix(10, 5, rng, -1.0, 1.0);
    const Matrix Bs = random_matrix(9, 4, rng, -1.0, 1.0);
    const Matrix W = random_matrix(10, 9, rng, 0.0, 3.0);
    const Matrix g = inner_product_2d(Bu, Bs, W);

    CHECK((g - g.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(g);
    CHECK(eig.eigenvalues().minCoeff() > -1e-8 * g.trace());
  }
}

TEST_CASE("grid kernels verify dimensions", "[glam]") {
  const Matrix Bu = Matrix::Ones(4, 3);
  const Matrix Bs = Matrix::Ones(5, 2);
  const Matrix W = Matrix::Ones(4, 4);  // wrong: needs 4 x 5
  CHECK_THROWS_AS(inner_product_2d(Bu, Bs, W), std::invalid_argument);
  CHECK_THROWS_AS(rhs_2d(Bu, Bs, W, W, W), std::invalid_argument);
  CHECK_THROWS_AS(linear_predictor_2d(Bu, Matrix::Ones(2, 2), Bs), std::invalid_argument);
  CHECK_THROWS_AS(variance_diag_2d(Bu, Bs, Matrix::Ones(5, 5)), std::invalid_argument);
}

TEST_CASE("kronecker helper basics", "[glam]") {
  Matrix A(2, 2), B(1, 2);
  A << 1, 2, 3, 4;
  B << 5, 6;
  const Matrix K = kron(A, B);
  REQUIRE(K.rows() == 2);
  REQUIRE(K.cols() == 4);
  CHECK(K(0, 0) == 5.0);
  CHECK(K(0, 1) == 6.0);
  CHECK(K(0, 2) == 10.0);
  CHECK(K(1, 3) == 24.0);
}
