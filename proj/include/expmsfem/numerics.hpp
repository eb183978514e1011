#pragma once

// Linear-algebra kernels: sparse direct/iterative solves, dense Hermitian
// generalized eigenproblems and a deterministic parallel loop.

#include "expmsfem/mesh.hpp"

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <atomic>
#include <cmath>
#include <complex>
#include <exception>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

namespace expmsfem {

template <class S>
using Vector = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <class S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using SparseMatrix = Eigen::SparseMatrix<S>;
using RealSparse = SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

template <class S>
inline constexpr bool is_complex_v = false;
template <class T>
inline constexpr bool is_complex_v<std::complex<T>> = true;

/// Factorization or solve failure. pivot() is the offending index when known.
class SolverError : public std::runtime_error {
public:
    explicit SolverError(const std::string& what, std::optional<Index> pivot = std::nullopt)
        : std::runtime_error(what), pivot_(pivot)
    {
    }
    std::optional<Index> pivot() const { return pivot_; }

private:
    std::optional<Index> pivot_;
};

/// Direct factorization of a symmetric (real) or complex-symmetric sparse
/// matrix: LDL^T with AMD ordering for real scalars, supernodal LU with
/// COLAMD ordering for complex ones. Immutable once built; concurrent
/// solve() calls are safe.
template <class S>
class SparseFactorization {
    using Solver = std::conditional_t<is_complex_v<S>,
                                      Eigen::SparseLU<SparseMatrix<S>, Eigen::COLAMDOrdering<int>>,
                                      Eigen::SimplicialLDLT<SparseMatrix<S>, Eigen::Lower, Eigen::AMDOrdering<int>>>;

public:
    SparseFactorization() = default;

    explicit SparseFactorization(const SparseMatrix<S>& a) : n_(a.rows()), solver_(std::make_unique<Solver>())
    {
        if (a.rows() != a.cols())
            throw std::invalid_argument("factorization needs a square matrix");
        if (n_ == 0)
            return;
        if constexpr (is_complex_v<S>) {
            SparseMatrix<S> m = a;
            m.makeCompressed();
            solver_->analyzePattern(m);
            solver_->factorize(m);
            if (solver_->info() != Eigen::Success) {
                const std::string msg = solver_->lastErrorMessage();
                std::optional<Index> pivot;
                const auto pos = msg.find_last_of(' ');
                if (pos != std::string::npos && pos + 1 < msg.size()) {
                    try {
                        pivot = Index(std::stoll(msg.substr(pos + 1)));
                    } catch (const std::exception&) {
                    }
                }
                throw SolverError("sparse LU failed: " + msg, pivot);
            }
        } else {
            solver_->compute(a);
            if (solver_->info() != Eigen::Success) {
                std::optional<Index> pivot;
                const auto& d = solver_->vectorD();
                for (Index k = 0; k < d.size(); ++k)
                    if (d[k] == 0.0) {
                        pivot = solver_->permutationPinv().indices()[k];
                        break;
                    }
                throw SolverError("sparse LDLT failed: zero pivot", pivot);
            }
        }
    }

    Index size() const { return n_; }

    template <class Rhs>
    Matrix<S> solve(const Rhs& b) const
    {
        if (b.rows() != n_)
            throw std::invalid_argument("right-hand side has wrong length");
        if (n_ == 0)
            return Matrix<S>(0, b.cols());
        Matrix<S> x = solver_->solve(Matrix<S>(b));
        return x;
    }

    Vector<S> solve_vector(const Vector<S>& b) const { return solve(b).col(0); }

private:
    Index n_ = 0;
    std::unique_ptr<Solver> solver_;
};

/// A linear system over the full node set with constrained (eliminated) DOFs.
template <class S>
struct SparseSystem {
    SparseMatrix<S> matrix;
    std::vector<bool> constrained;

    Index size() const { return matrix.rows(); }

    std::vector<Index> free_dofs() const
    {
        std::vector<Index> out;
        for (Index i = 0; i < size(); ++i)
            if (!constrained[std::size_t(i)])
                out.push_back(i);
        return out;
    }
};

/// Rows/columns `rows` x `cols` of a sparse matrix.
template <class S>
SparseMatrix<S> submatrix(const SparseMatrix<S>& a, const std::vector<Index>& rows, const std::vector<Index>& cols)
{
    std::vector<Index> row_map(std::size_t(a.rows()), -1);
    for (std::size_t k = 0; k < rows.size(); ++k)
        row_map[std::size_t(rows[k])] = Index(k);
    std::vector<Eigen::Triplet<S>> trips;
    for (std::size_t c = 0; c < cols.size(); ++c)
        for (typename SparseMatrix<S>::InnerIterator it(a, cols[c]); it; ++it) {
            const Index r = row_map[std::size_t(it.row())];
            if (r >= 0)
                trips.emplace_back(int(r), int(c), it.value());
        }
    SparseMatrix<S> out(Index(rows.size()), Index(cols.size()));
    out.setFromTriplets(trips.begin(), trips.end());
    return out;
}

enum class SolverKind { direct, iterative };

struct SolveOptions {
    SolverKind kind = SolverKind::direct;
    double tolerance = 1e-10;
    int max_iterations = 20000;
};

/// Solves sys x = b column by column on the unconstrained DOFs; constrained
/// entries of x are zero. b has one column per right-hand side.
template <class S>
Matrix<S> solve_sparse(const SparseSystem<S>& sys, const Matrix<S>& b, const SolveOptions& opts = {})
{
    if (b.rows() != sys.size())
        throw std::invalid_argument("right-hand side length does not match the system");
    const auto dofs = sys.free_dofs();
    const SparseMatrix<S> a = submatrix(sys.matrix, dofs, dofs);
    Matrix<S> rhs(Index(dofs.size()), b.cols());
    for (std::size_t k = 0; k < dofs.size(); ++k)
        rhs.row(Index(k)) = b.row(dofs[k]);

    Matrix<S> x;
    if (opts.kind == SolverKind::direct) {
        x = SparseFactorization<S>(a).solve(rhs);
    } else {
        x.resize(rhs.rows(), rhs.cols());
        auto run = [&](auto& solver) {
            solver.setTolerance(opts.tolerance);
            solver.setMaxIterations(opts.max_iterations);
            solver.compute(a);
            for (Index c = 0; c < rhs.cols(); ++c) {
                x.col(c) = solver.solve(rhs.col(c));
                if (solver.info() != Eigen::Success)
                    throw SolverError("iterative solve did not converge (column " + std::to_string(c) + ")");
            }
        };
        if constexpr (is_complex_v<S>) {
            Eigen::BiCGSTAB<SparseMatrix<S>, Eigen::IncompleteLUT<S>> solver;
            run(solver);
        } else {
            Eigen::ConjugateGradient<SparseMatrix<S>, Eigen::Lower | Eigen::Upper> solver;
            run(solver);
        }
    }
    Matrix<S> out = Matrix<S>::Zero(sys.size(), b.cols());
    for (std::size_t k = 0; k < dofs.size(); ++k)
        out.row(dofs[k]) = x.row(Index(k));
    return out;
}

/// Estimate of the smallest singular value of a symmetric or
/// complex-symmetric matrix from its factorization (inverse iteration on
/// A^H A, using A^{-H} y = conj(A^{-1} conj(y))).
template <class S>
double smallest_singular_value(const SparseFactorization<S>& fact, int iterations = 30)
{
    const Index n = fact.size();
    if (n == 0)
        return 0.0;
    Vector<S> x(n);
    for (Index i = 0; i < n; ++i)
        x[i] = S(1.0 + 0.5 * std::sin(0.7 * double(i)));
    x.normalize();
    double growth = 0.0;
    for (int it = 0; it < iterations; ++it) {
        const Vector<S> y = fact.solve_vector(x);
        Vector<S> z = fact.solve_vector(Vector<S>(y.conjugate())).conjugate();
        growth = z.norm();
        if (!(growth > 0.0) || !std::isfinite(growth))
            return 0.0;
        x = z / growth;
    }
    return 1.0 / std::sqrt(growth);
}

/// Top eigenpairs of A v = lambda B v with lambda descending.
template <class S>
struct EigenPairs {
    Eigen::VectorXd values;
    Matrix<S> vectors; // B-orthonormal columns
};

/// Rotates each column so that its largest-magnitude entry (first one on
/// ties) is real and positive.
template <class S>
void fix_signs(Matrix<S>& vectors)
{
    for (Index c = 0; c < vectors.cols(); ++c) {
        Index best = 0;
        double mag = -1.0;
        for (Index r = 0; r < vectors.rows(); ++r) {
            const double m = std::abs(vectors(r, c));
            if (m > mag * (1.0 + 1e-12)) {
                mag = m;
                best = r;
            }
        }
        if (mag <= 0.0)
            continue;
        const S z = vectors(best, c);
        vectors.col(c) *= S(std::abs(z)) / z;
    }
}

/// Generalized Hermitian eigenproblem A v = lambda B v for the `count`
/// largest eigenvalues, with B positive semidefinite. B is Jacobi-scaled and
/// whitened through its own eigendecomposition; directions with scaled
/// eigenvalue at or below 1e-13 times the largest are dropped, so fewer than
/// `count` pairs come back when B is numerically rank deficient.
template <class S>
EigenPairs<S> generalized_hermitian_eig(const Matrix<S>& a, const Matrix<S>& b, Index count)
{
    const Index n = a.rows();
    if (a.cols() != n || b.rows() != n || b.cols() != n)
        throw std::invalid_argument("generalized eigenproblem needs square matrices of equal size");
    if (count < 0 || count > n)
        throw std::invalid_argument("requested " + std::to_string(count) + " eigenpairs of a size-" +
                                    std::to_string(n) + " problem");
    EigenPairs<S> out;
    if (n == 0 || count == 0) {
        out.values.resize(0);
        out.vectors.resize(n, 0);
        return out;
    }
    Vector<double> d(n);
    for (Index i = 0; i < n; ++i) {
        const double bii = std::real(b(i, i));
        if (!(bii > 0.0))
            throw SolverError("mass Gram matrix has a non-positive diagonal entry");
        d[i] = 1.0 / std::sqrt(bii);
    }
    const auto scale = d.cast<S>().asDiagonal();
    Matrix<S> bs = scale * (0.5 * (b + b.adjoint())) * scale;
    Eigen::SelfAdjointEigenSolver<Matrix<S>> eb(bs);
    if (eb.info() != Eigen::Success)
        throw SolverError("Hermitian eigensolver did not converge");
    const double top = eb.eigenvalues()[n - 1];
    Index rank = 0;
    for (Index k = 0; k < n; ++k)
        rank += eb.eigenvalues()[k] > 1e-13 * top ? 1 : 0;
    if (rank == 0)
        throw SolverError("mass Gram matrix is numerically zero");
    // W = D Q_r Lambda_r^{-1/2}, so that W^H B W = I.
    Matrix<S> w = eb.eigenvectors().rightCols(rank);
    for (Index k = 0; k < rank; ++k)
        w.col(k) /= S(std::sqrt(eb.eigenvalues()[n - rank + k]));
    w = scale * w;
    Matrix<S> c = w.adjoint() * (0.5 * (a + a.adjoint())) * w;
    c = 0.5 * (c + c.adjoint()).eval();
    Eigen::SelfAdjointEigenSolver<Matrix<S>> es(c);
    if (es.info() != Eigen::Success)
        throw SolverError("Hermitian eigensolver did not converge");
    const Index kept = std::min(count, rank);
    out.values.resize(kept);
    Matrix<S> y(rank, kept);
    for (Index k = 0; k < kept; ++k) {
        out.values[k] = es.eigenvalues()[rank - 1 - k];
        y.col(k) = es.eigenvectors().col(rank - 1 - k);
    }
    out.vectors = w * y;
    fix_signs(out.vectors);
    return out;
}

/// Runs body(i) for i in [0, n) on up to `threads` workers. Each index is
/// processed exactly once; if any call throws, the exception of the lowest
/// failing index is rethrown after all workers finish.
template <class Body>
void parallel_for(Index n, int threads, Body&& body)
{
    if (n <= 0)
        return;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
    auto guarded = [&](Index i) {
        try {
            body(i);
        } catch (...) {
            errors[std::size_t(i)] = std::current_exception();
        }
    };
    if (threads <= 1 || n == 1) {
        for (Index i = 0; i < n; ++i)
            guarded(i);
    } else {
        std::atomic<Index> next{0};
        std::vector<std::jthread> pool;
        const int workers = int(std::min<Index>(threads, n));
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (Index i = next++; i < n; i = next++)
                    guarded(i);
            });
    }
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
}

} // namespace expmsfem
