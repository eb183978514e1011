#include "support.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <atomic>
#include <random>

using namespace testing_support;

namespace {

// 1D Laplacian plus a shift, n x n.
template <class S>
SparseMatrix<S> tridiagonal(Index n, S diag, S off)
{
    std::vector<Eigen::Triplet<S>> t;
    for (Index i = 0; i < n; ++i) {
        t.emplace_back(int(i), int(i), diag);
        if (i + 1 < n) {
            t.emplace_back(int(i), int(i + 1), off);
            t.emplace_back(int(i + 1), int(i), off);
        }
    }
    SparseMatrix<S> a(n, n);
    a.setFromTriplets(t.begin(), t.end());
    return a;
}

template <class S>
Matrix<S> random_matrix(Index rows, Index cols, unsigned seed)
{
    std::mt19937 gen(seed);
    std::normal_distribution<double> nd;
    Matrix<S> m(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i) {
            if constexpr (is_complex_v<S>)
                m(i, j) = S(nd(gen), nd(gen));
            else
                m(i, j) = nd(gen);
        }
    return m;
}

} // namespace

TEST(Numerics, RealFactorizationSolves)
{
    const auto a = tridiagonal<double>(50, 2.5, -1.0);
    const SparseFactorization<double> f(a);
    const Vector<double> b = Vector<double>::LinSpaced(50, -1, 1);
    const Vector<double> x = f.solve_vector(b);
    EXPECT_LT((a * x - b).norm(), 1e-12 * b.norm());
    EXPECT_EQ(f.size(), 50);
}

TEST(Numerics, ComplexSymmetricFactorizationSolves)
{
    const auto a = tridiagonal<Complex>(40, Complex(1.5, 0.3), Complex(-1.0, 0.0));
    const SparseFactorization<Complex> f(a);
    const Matrix<Complex> b = random_matrix<Complex>(40, 3, 5);
    const Matrix<Complex> x = f.solve(b);
    EXPECT_LT((a * x - b).norm(), 1e-12 * b.norm());
}

TEST(Numerics, SingularMatrixReportsSolverError)
{
    SparseMatrix<double> a(3, 3);
    a.insert(0, 0) = 1.0;
    a.insert(2, 2) = 1.0;
    EXPECT_THROW(SparseFactorization<double>{a}, SolverError);
    SparseMatrix<Complex> c(3, 3);
    c.insert(0, 0) = 1.0;
    c.insert(1, 1) = 1.0;
    try {
        SparseFactorization<Complex> f(c);
        FAIL() << "expected SolverError";
    } catch (const SolverError& err) {
        EXPECT_NE(std::string(err.what()).find("LU"), std::string::npos);
    }
}

TEST(Numerics, EmptyFactorization)
{
    const SparseFactorization<double> f(SparseMatrix<double>(0, 0));
    EXPECT_EQ(f.solve(Matrix<double>(0, 2)).cols(), 2);
}

TEST(Numerics, Submatrix)
{
    const auto a = tridiagonal<double>(6, 4.0, -1.0);
    const auto s = submatrix(a, {1, 2, 4}, {2, 3});
    const Matrix<double> d(s);
    EXPECT_EQ(d.rows(), 3);
    EXPECT_EQ(d.cols(), 2);
    EXPECT_EQ(d(0, 0), -1.0);
    EXPECT_EQ(d(1, 0), 4.0);
    EXPECT_EQ(d(1, 1), -1.0);
    EXPECT_EQ(d(2, 0), 0.0);
    EXPECT_EQ(d(2, 1), -1.0);
}

TEST(Numerics, SolveSparseHonoursConstraints)
{
    SparseSystem<double> sys{tridiagonal<double>(10, 2.0, -1.0), std::vector<bool>(10, false)};
    sys.constrained[0] = sys.constrained[9] = true;
    Matrix<double> b = Matrix<double>::Constant(10, 1, 1.0);
    const Matrix<double> direct = solve_sparse(sys, b);
    EXPECT_EQ(direct(0, 0), 0.0);
    EXPECT_EQ(direct(9, 0), 0.0);
    // Discrete -u'' = 1 (scaled) has a parabolic solution: u_i = i (9 - i) / 2.
    for (int i = 1; i < 9; ++i)
        EXPECT_NEAR(direct(i, 0), i * (9 - i) / 2.0, 1e-12);
    SolveOptions it;
    it.kind = SolverKind::iterative;
    it.tolerance = 1e-14;
    EXPECT_LT((solve_sparse(sys, b, it) - direct).norm(), 1e-9);
}

TEST(Numerics, ComplexIterativeMatchesDirect)
{
    SparseSystem<Complex> sys{tridiagonal<Complex>(30, Complex(3.0, 1.0), Complex(-1.0)),
                              std::vector<bool>(30, false)};
    const Matrix<Complex> b = random_matrix<Complex>(30, 1, 9);
    SolveOptions it;
    it.kind = SolverKind::iterative;
    it.tolerance = 1e-14;
    EXPECT_LT((solve_sparse(sys, b, it) - solve_sparse(sys, b)).norm(), 1e-9);
}

TEST(Numerics, SmallestSingularValueMatchesSvd)
{
    const auto a = tridiagonal<double>(30, 2.0 - 0.05, -1.0); // indefinite shift of the Laplacian
    const double est = smallest_singular_value(SparseFactorization<double>(a), 60);
    Eigen::JacobiSVD<Matrix<double>> svd{Matrix<double>(a)};
    EXPECT_NEAR(est, svd.singularValues().minCoeff(), 1e-6 * svd.singularValues().maxCoeff());

    const auto c = tridiagonal<Complex>(30, Complex(1.9, 0.2), Complex(-1.0));
    const double estc = smallest_singular_value(SparseFactorization<Complex>(c), 60);
    Eigen::JacobiSVD<Matrix<Complex>> svdc{Matrix<Complex>(c)};
    EXPECT_NEAR(estc, svdc.singularValues().minCoeff(), 1e-4 * svdc.singularValues().minCoeff());
}

template <class S>
void check_generalized_eig(unsigned seed)
{
    const Index n = 8;
    const Matrix<S> x = random_matrix<S>(n, n, seed);
    const Matrix<S> y = random_matrix<S>(n, n, seed + 1);
    const Matrix<S> a = x * x.adjoint();
    const Matrix<S> b = y * y.adjoint() + Matrix<S>::Identity(n, n);
    const auto pairs = generalized_hermitian_eig(a, b, 5);

    // Brute force: eigenvalues of B^{-1} A, sorted descending.
    const Matrix<S> c = b.lu().solve(a);
    Eigen::ComplexEigenSolver<Matrix<Complex>> es(c.template cast<Complex>());
    std::vector<double> ref;
    for (Index k = 0; k < n; ++k)
        ref.push_back(es.eigenvalues()[k].real());
    std::sort(ref.rbegin(), ref.rend());
    ASSERT_EQ(pairs.values.size(), 5);
    for (Index k = 0; k < 5; ++k) {
        EXPECT_NEAR(pairs.values[k], ref[std::size_t(k)], 1e-8 * ref.front());
        if (k > 0)
            EXPECT_LE(pairs.values[k], pairs.values[k - 1]);
    }
    const Matrix<S> gram = pairs.vectors.adjoint() * b * pairs.vectors;
    EXPECT_LT((gram - Matrix<S>::Identity(5, 5)).norm(), 1e-8);
    const Matrix<S> resid = a * pairs.vectors - b * pairs.vectors * pairs.values.template cast<S>().asDiagonal();
    EXPECT_LT(resid.norm(), 1e-8 * a.norm());
}

TEST(Numerics, GeneralizedEigMatchesBruteForceReal) { check_generalized_eig<double>(1); }
TEST(Numerics, GeneralizedEigMatchesBruteForceComplex) { check_generalized_eig<Complex>(3); }

TEST(Numerics, GeneralizedEigBadlyScaledMass)
{
    // Rows scaled by 1e6 leave the eigenvalues of B^{-1} A unchanged under D A D, D B D.
    const Index n = 6;
    const Matrix<double> x = random_matrix<double>(n, n, 7);
    const Matrix<double> a0 = x * x.transpose();
    const Matrix<double> b0 = Matrix<double>(Vector<double>::LinSpaced(n, 1.0, 2.0).asDiagonal());
    Vector<double> d = Vector<double>::Ones(n);
    d.head(3).setConstant(1e6);
    const Matrix<double> a = d.asDiagonal() * a0 * d.asDiagonal();
    const Matrix<double> b = d.asDiagonal() * b0 * d.asDiagonal();
    const auto ref = generalized_hermitian_eig(a0, b0, 3);
    const auto got = generalized_hermitian_eig(a, b, 3);
    for (Index k = 0; k < 3; ++k)
        EXPECT_NEAR(got.values[k], ref.values[k], 1e-8 * ref.values[0]);
}

TEST(Numerics, GeneralizedEigDropsNullDirectionsOfMass)
{
    Matrix<double> b = Matrix<double>::Identity(4, 4);
    b(1, 1) = 1.0;
    b.block(2, 2, 2, 2) << 1.0, 1.0, 1.0, 1.0; // rank 3
    const Matrix<double> a = Matrix<double>(Vector<double>::LinSpaced(4, 1.0, 4.0).asDiagonal());
    const auto pairs = generalized_hermitian_eig(a, b, 4);
    EXPECT_EQ(pairs.values.size(), 3);
    const Matrix<double> gram = pairs.vectors.transpose() * b * pairs.vectors;
    EXPECT_LT((gram - Matrix<double>::Identity(3, 3)).norm(), 1e-10);
}

TEST(Numerics, GeneralizedEigArguments)
{
    const Matrix<double> a = Matrix<double>::Identity(3, 3);
    EXPECT_THROW(generalized_hermitian_eig(a, a, 4), std::invalid_argument);
    EXPECT_THROW(generalized_hermitian_eig(a, Matrix<double>(Matrix<double>::Identity(2, 2)), 1), std::invalid_argument);
    EXPECT_EQ(generalized_hermitian_eig(a, a, 0).vectors.cols(), 0);
}

TEST(Numerics, FixSignsMakesLargestEntryPositive)
{
    Matrix<Complex> v(2, 1);
    v << Complex(0.1, 0.0), Complex(0.0, -2.0);
    fix_signs(v);
    EXPECT_NEAR(v(1, 0).real(), 2.0, 1e-15);
    EXPECT_NEAR(v(1, 0).imag(), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(v(0, 0)), 0.1, 1e-15);
}

TEST(Numerics, ParallelForVisitsEachIndexOnce)
{
    for (int threads : {1, 2, 5}) {
        std::vector<std::atomic<int>> hits(100);
        parallel_for(100, threads, [&](Index i) { ++hits[std::size_t(i)]; });
        for (auto& h : hits)
            EXPECT_EQ(h.load(), 1);
    }
}

TEST(Numerics, ParallelForRethrowsLowestFailure)
{
    for (int threads : {1, 4}) {
        try {
            parallel_for(50, threads, [](Index i) {
                if (i == 7 || i == 31)
                    throw std::runtime_error("fail " + std::to_string(i));
            });
            FAIL() << "expected an exception";
        } catch (const std::runtime_error& err) {
            EXPECT_STREQ(err.what(), "fail 7");
        }
    }
}
