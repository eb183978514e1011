#pragma once

// Offline multiscale space S, the effective coarse equation and error
// metrics against the fine reference.

#include "expmsfem/fem.hpp"
#include "expmsfem/localops.hpp"
#include "expmsfem/numerics.hpp"
#include "expmsfem/spectral.hpp"

#include <chrono>
#include <cmath>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace expmsfem {

/// Coarse matrices up to this size are factorized densely.
inline constexpr Index dense_coarse_limit = 5000;

template <class S>
class CoarseSolver {
    using DenseReal = Eigen::LDLT<Matrix<double>>;
    using DenseComplex = Eigen::PartialPivLU<Matrix<S>>;
    using Dense = std::conditional_t<is_complex_v<S>, DenseComplex, DenseReal>;

public:
    CoarseSolver() = default;

    explicit CoarseSolver(const SparseMatrix<S>& k) : n_(k.rows())
    {
        if (n_ <= dense_coarse_limit) {
            Dense d{Matrix<S>(k)};
            if constexpr (!is_complex_v<S>) {
                if (d.info() != Eigen::Success || !d.isPositive())
                    throw SolverError("coarse LDLT failed: matrix is not positive definite");
            } else {
                const double rc = d.rcond();
                if (!(rc > 1e-15))
                    throw SolverError("coarse LU failed: matrix is numerically singular (rcond " +
                                      std::to_string(rc) + ")");
            }
            dense_ = std::make_shared<const Dense>(std::move(d));
        } else {
            sparse_ = std::make_shared<const SparseFactorization<S>>(k);
        }
    }

    bool dense() const { return dense_ != nullptr; }
    Index size() const { return n_; }

    Vector<S> solve(const Vector<S>& r) const
    {
        if (r.size() != n_)
            throw std::invalid_argument("coarse right-hand side has wrong length");
        if (n_ == 0)
            return Vector<S>(0);
        if (dense_)
            return dense_->solve(r);
        return sparse_->solve_vector(r);
    }

private:
    Index n_ = 0;
    std::shared_ptr<const Dense> dense_;
    std::shared_ptr<const SparseFactorization<S>> sparse_;
};

struct OfflineOptions {
    int threads = 1;
    GramRoute route = GramRoute::automatic;
    bool conjugate_enrich = false;
    bool online_operator = true; // build the per-edge responses for u^n
};

/// Per-edge offline data kept for reporting and truncation.
template <class S>
struct EdgeOffline {
    Index edge = 0;
    std::vector<double> singular_values; // all values above the floor
    Index count = 0;                      // edge functions built (before truncation)
};

template <class S>
class OfflineSpace {
public:
    const AssembledProblem<S>& problem() const { return *prob_; }
    const TwoLevelMesh& mesh() const { return prob_->mesh(); }

    Index m() const { return m_; }
    Index dim() const { return basis_.cols(); }
    Index node_functions() const { return nodes_; }
    bool conjugate_enriched() const { return conj_; }

    /// Fine x dim(S) synthesis map, columns ordered psi_i, then v_{e,j} by edge.
    const SparseMatrix<S>& basis() const { return basis_; }
    /// K_S[p][q] = a(phi_q, phi_p).
    const SparseMatrix<S>& stiffness() const { return stiffness_; }
    const CoarseSolver<S>& coarse_solver() const { return coarse_; }
    const std::vector<EdgeOffline<S>>& edges() const { return *edges_; }
    const ElementSolvers<S>& element_solvers() const { return *solvers_; }
    bool has_online_operator() const { return online_ != nullptr; }
    const OnlineOperator<S>& online_operator() const
    {
        if (!online_)
            throw std::logic_error("offline space was built without the online operator");
        return *online_;
    }
    /// Wall time of the offline stage that produced this space.
    double offline_seconds() const { return offline_seconds_; }

    Vector<S> basis_function(Index p) const { return Vector<S>(basis_.col(p)); }

    /// Nested subspace with min(m, count_e) edge functions per edge.
    OfflineSpace truncated(Index m) const
    {
        if (m < 0)
            throw std::invalid_argument("m must be >= 0");
        if (m > m_)
            throw std::invalid_argument("cannot truncate an m = " + std::to_string(m_) + " space to m = " +
                                        std::to_string(m));
        std::vector<Index> keep;
        for (Index p = 0; p < dim(); ++p)
            if (p < nodes_ || column_index_[std::size_t(p)] < m)
                keep.push_back(p);
        OfflineSpace out = *this;
        out.m_ = m;
        std::vector<Eigen::Triplet<S>> trips;
        for (std::size_t k = 0; k < keep.size(); ++k)
            for (typename SparseMatrix<S>::InnerIterator it(basis_, keep[k]); it; ++it)
                trips.emplace_back(int(it.row()), int(k), it.value());
        out.basis_.resize(basis_.rows(), Index(keep.size()));
        out.basis_.setFromTriplets(trips.begin(), trips.end());
        out.column_index_.clear();
        for (Index p : keep)
            out.column_index_.push_back(column_index_[std::size_t(p)]);
        out.stiffness_ = submatrix(stiffness_, keep, keep);
        out.coarse_ = CoarseSolver<S>(out.stiffness_);
        return out;
    }

    template <class T>
    friend OfflineSpace<T> build_offline(const AssembledProblem<T>& prob, Index m, const OfflineOptions& opts);

private:
    OfflineSpace() = default;

    const AssembledProblem<S>* prob_ = nullptr;
    Index m_ = 0;
    Index nodes_ = 0;
    bool conj_ = false;
    SparseMatrix<S> basis_;
    std::vector<Index> column_index_; // singular index j per column (-1 for psi_i)
    SparseMatrix<S> stiffness_;
    CoarseSolver<S> coarse_;
    std::shared_ptr<const ElementSolvers<S>> solvers_;
    std::shared_ptr<const OnlineOperator<S>> online_;
    std::shared_ptr<const std::vector<EdgeOffline<S>>> edges_;
    double offline_seconds_ = 0.0;
};

namespace detail {

/// Edge functions on their local support.
template <class S>
struct LocalColumns {
    std::vector<Index> nodes;
    Matrix<S> values;           // nodes x columns
    std::vector<Index> indices; // singular index per column
};

/// Modified Gram-Schmidt in the energy inner product; columns whose
/// remainder falls to 1e-8 of their original norm are dropped.
template <class S>
void energy_orthonormalize(const SparseMatrix<S>& energy, LocalColumns<S>& cols)
{
    Matrix<S> q(cols.values.rows(), 0);
    Matrix<S> eq(cols.values.rows(), 0);
    std::vector<Index> indices;
    for (Index c = 0; c < cols.values.cols(); ++c) {
        Vector<S> v = cols.values.col(c);
        const double before = std::sqrt(std::max(0.0, std::real(v.dot(energy * v))));
        if (!(before > 0.0))
            continue;
        for (Index k = 0; k < q.cols(); ++k)
            v -= q.col(k) * eq.col(k).dot(v);
        const Vector<S> ev = energy * v;
        const double after = std::sqrt(std::max(0.0, std::real(v.dot(ev))));
        if (!(after > 1e-8 * before))
            continue;
        q.conservativeResize(Eigen::NoChange, q.cols() + 1);
        eq.conservativeResize(Eigen::NoChange, eq.cols() + 1);
        q.col(q.cols() - 1) = v / S(after);
        eq.col(eq.cols() - 1) = ev / S(after);
        indices.push_back(cols.indices[std::size_t(c)]);
    }
    cols.values = std::move(q);
    cols.indices = std::move(indices);
}

} // namespace detail

/// Offline stage: nodal MsFEM basis, spectral edge basis with up to m
/// functions per edge, coarse stiffness and its factorization. Independent
/// of the right-hand side.
template <class S>
OfflineSpace<S> build_offline(const AssembledProblem<S>& prob, Index m, const OfflineOptions& opts = {})
{
    if (m < 0)
        throw std::invalid_argument("m must be >= 0");
    if (opts.conjugate_enrich && !is_complex_v<S>)
        throw std::invalid_argument("conjugate_enrich applies to complex problems only");
    const auto t0 = std::chrono::steady_clock::now();
    const TwoLevelMesh& mesh = prob.mesh();
    const Index fine = mesh.fine_node_count();

    OfflineSpace<S> out;
    out.prob_ = &prob;
    out.m_ = m;
    out.conj_ = opts.conjugate_enrich;
    out.solvers_ = std::make_shared<const ElementSolvers<S>>(prob, opts.threads);
    const SparseMatrix<S> psi = msfem_basis(*out.solvers_, opts.threads);
    out.nodes_ = psi.cols();

    const auto& edges = mesh.active_edges();
    const std::size_t ne = edges.size();
    std::vector<EdgeOffline<S>> info(ne);
    std::vector<detail::LocalColumns<S>> functions(ne);
    std::vector<EdgeResponse<S>> responses(opts.online_operator ? ne : 0);
    parallel_for(Index(ne), opts.threads, [&](Index k) {
        const Index e = edges[std::size_t(k)];
        try {
            const HarmonicSpace<S> space = build_harmonic_space(prob, e, opts.route);
            const EdgeExtension<S> ext = out.solvers_->edge_extension(e);
            const Index image_dim = std::min<Index>(space.dim(), mesh.refine() - 1);
            const EdgeBasis<S> eb = edge_singular_basis(prob, space, ext, std::min(m, image_dim));
            auto& inf = info[std::size_t(k)];
            inf.edge = e;
            inf.singular_values = eb.singular_values;
            detail::LocalColumns<S> cols;
            cols.nodes = ext.nodes;
            const Matrix<S> local = ext.values * eb.edge_data;
            if (opts.conjugate_enrich) {
                cols.values.resize(local.rows(), 2 * local.cols());
                for (Index j = 0; j < local.cols(); ++j) {
                    cols.values.col(2 * j) = local.col(j);
                    cols.values.col(2 * j + 1) = local.col(j).conjugate();
                    cols.indices.insert(cols.indices.end(), {j, j});
                }
                const SparseMatrix<S> energy = submatrix(prob.energy_matrix(), ext.nodes, ext.nodes).template cast<S>();
                detail::energy_orthonormalize(energy, cols);
            } else {
                cols.values = local;
                for (Index j = 0; j < local.cols(); ++j)
                    cols.indices.push_back(j);
            }
            inf.count = eb.count();
            functions[std::size_t(k)] = std::move(cols);
            if (opts.online_operator)
                responses[std::size_t(k)] = edge_response(mesh, space.patch, e);
        } catch (const PatchError&) {
            throw;
        } catch (const std::exception& err) {
            throw std::runtime_error("edge " + std::to_string(e) + ": " + err.what());
        }
    });

    std::vector<Eigen::Triplet<S>> trips;
    trips.reserve(std::size_t(psi.nonZeros()));
    for (Index c = 0; c < psi.cols(); ++c)
        for (typename SparseMatrix<S>::InnerIterator it(psi, c); it; ++it)
            trips.emplace_back(int(it.row()), int(c), it.value());
    out.column_index_.assign(std::size_t(psi.cols()), -1);
    Index col = psi.cols();
    for (const auto& cols : functions)
        for (Index j = 0; j < cols.values.cols(); ++j) {
            for (std::size_t k = 0; k < cols.nodes.size(); ++k) {
                const S v = cols.values(Index(k), j);
                if (v != S(0))
                    trips.emplace_back(int(cols.nodes[k]), int(col), v);
            }
            out.column_index_.push_back(cols.indices[std::size_t(j)]);
            ++col;
        }
    out.basis_.resize(fine, col);
    out.basis_.setFromTriplets(trips.begin(), trips.end());
    out.basis_.makeCompressed();

    const SparseMatrix<S> kphi = prob.system() * out.basis_;
    out.stiffness_ = SparseMatrix<S>(out.basis_.adjoint()) * kphi;
    out.stiffness_.makeCompressed();
    out.coarse_ = CoarseSolver<S>(out.stiffness_);

    if (opts.online_operator)
        out.online_ = std::make_shared<const OnlineOperator<S>>(out.solvers_, std::move(responses));
    out.edges_ = std::make_shared<const std::vector<EdgeOffline<S>>>(std::move(info));
    out.offline_seconds_ = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

/// Coarse coefficients of u_S from a(u_S, v) = (f, v) - a(u^n, v) for all v in S.
/// Passing no u_n is the u^n = 0 variant.
template <class S>
Vector<S> solve_effective(const OfflineSpace<S>& off, const Vector<S>& load,
                          const std::optional<Vector<S>>& u_n = std::nullopt)
{
    const AssembledProblem<S>& prob = off.problem();
    check_length(prob, load);
    Vector<S> rhs = load;
    if (u_n) {
        check_length(prob, *u_n);
        rhs -= prob.system() * *u_n;
    }
    const Vector<S> r = off.basis().adjoint() * rhs;
    return off.coarse_solver().solve(r);
}

/// u_sol = sum_p c_p phi_p + u^n.
template <class S>
Vector<S> reconstruct(const OfflineSpace<S>& off, const Vector<S>& coeffs,
                      const std::optional<Vector<S>>& u_n = std::nullopt)
{
    if (coeffs.size() != off.dim())
        throw std::invalid_argument("coefficient vector has length " + std::to_string(coeffs.size()) +
                                    ", expected " + std::to_string(off.dim()));
    Vector<S> u = off.basis() * coeffs;
    if (u_n) {
        check_length(off.problem(), *u_n);
        u += *u_n;
    }
    return u;
}

struct SolveReport {
    std::string scenario;
    double H = 0.0;
    double h = 0.0;
    Index m = 0;
    Index dim = 0;
    double e_l2 = 0.0;
    double e_h = 0.0;
    double t_offline = 0.0;
    double t_online = 0.0;
    double t_coarse = 0.0;
};

template <class S>
SolveReport evaluate_errors(const AssembledProblem<S>& prob, const Vector<S>& u_sol, const Vector<S>& u_ref)
{
    check_length(prob, u_sol);
    check_length(prob, u_ref);
    const double ref_l2 = l2_norm(prob, u_ref), ref_h = energy_norm(prob, u_ref);
    if (!(ref_l2 > 0.0) || !(ref_h > 0.0))
        throw std::invalid_argument("reference solution has zero norm");
    const Vector<S> diff = u_ref - u_sol;
    SolveReport rep;
    rep.scenario = prob.spec().scenario;
    rep.H = prob.mesh().H();
    rep.h = prob.mesh().h();
    rep.e_l2 = l2_norm(prob, diff) / ref_l2;
    rep.e_h = energy_norm(prob, diff) / ref_h;
    return rep;
}

/// Full online query: u^n (optional), coarse solve and reconstruction.
template <class S>
struct OnlineResult {
    Vector<S> u;
    Vector<S> coeffs;
    double t_online = 0.0;
    double t_coarse = 0.0;
};

template <class S>
OnlineResult<S> solve_online(const OfflineSpace<S>& off, const Vector<S>& load, bool with_online_part, int threads = 1)
{
    using clock = std::chrono::steady_clock;
    OnlineResult<S> res;
    std::optional<Vector<S>> u_n;
    const auto t0 = clock::now();
    if (with_online_part)
        u_n = off.online_operator().apply(load, threads);
    const auto t1 = clock::now();
    res.coeffs = solve_effective(off, load, u_n);
    res.u = reconstruct(off, res.coeffs, u_n);
    const auto t2 = clock::now();
    res.t_online = std::chrono::duration<double>(t1 - t0).count();
    res.t_coarse = std::chrono::duration<double>(t2 - t1).count();
    return res;
}

} // namespace expmsfem
