#pragma once

// Localized operators: element and oversampling patches, harmonic/bubble
// splitting, the skeleton harmonic extension Q, nodal edge interpolation,
// edge restriction R_e, the nodal MsFEM basis and the online part.
//
// Skeleton data ("edge values") are stored as full fine-grid vectors that
// vanish off the skeleton, so every operator here maps fine vectors to
// fine vectors.

#include "expmsfem/fem.hpp"
#include "expmsfem/mesh.hpp"
#include "expmsfem/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace expmsfem {

class PatchError : public std::runtime_error {
public:
    PatchError(const std::string& label, const std::string& what)
        : std::runtime_error("patch " + label + ": " + what), label_(label)
    {
    }
    const std::string& label() const { return label_; }

private:
    std::string label_;
};

/// element: the whole element boundary except Gamma1 carries data, so the
///          element problem is Dirichlet everywhere (Gamma2 sides are
///          skeleton edges).
/// oversampling: nodes whose fine neighbourhood lies inside the patch are
///          free (Gamma2 sides keep the Robin condition); other non-Gamma1
///          boundary nodes carry data.
enum class PatchKind { element, oversampling };

template <class S>
class LocalPatch {
public:
    LocalPatch(const AssembledProblem<S>& prob, std::vector<Index> elements, PatchKind kind, std::string label)
        : elements_(std::move(elements)), kind_(kind), label_(std::move(label))
    {
        const TwoLevelMesh& mesh = prob.mesh();
        std::sort(elements_.begin(), elements_.end());
        for (Index T : elements_) {
            auto cells = mesh.element_cells(T);
            cells_.insert(cells_.end(), cells.begin(), cells.end());
        }
        std::sort(cells_.begin(), cells_.end());
        for (Index c : cells_)
            for (Index n : mesh.cell_nodes(c))
                nodes_.push_back(n);
        std::sort(nodes_.begin(), nodes_.end());
        nodes_.erase(std::unique(nodes_.begin(), nodes_.end()), nodes_.end());

        const int N = mesh.fine_cells(), r = mesh.refine();
        auto in_patch = [&](int ci, int cj) {
            const Index T = mesh.element(ci / r, cj / r);
            return std::binary_search(elements_.begin(), elements_.end(), T);
        };
        for (Index n : nodes_) {
            if (mesh.is_dirichlet(n))
                continue;
            auto [i, j] = mesh.fine_node_position(n);
            bool inside = true;
            if (kind_ == PatchKind::element) {
                inside = i % r != 0 && j % r != 0;
            } else {
                for (int cj = j - 1; cj <= j; ++cj)
                    for (int ci = i - 1; ci <= i; ++ci)
                        if (ci >= 0 && ci < N && cj >= 0 && cj < N && !in_patch(ci, cj))
                            inside = false;
            }
            (inside ? free_ : data_).push_back(n);
        }

        kff_ = submatrix(prob.system(), free_, free_);
        kfd_ = submatrix(prob.system(), free_, data_);
        try {
            fact_ = std::make_shared<SparseFactorization<S>>(kff_);
        } catch (const SolverError& err) {
            throw PatchError(label_, std::string("singular local system: ") + err.what());
        }
        if (prob.indefinite() && !free_.empty()) {
            double norm = 0.0;
            for (Index k = 0; k < kff_.outerSize(); ++k) {
                double col = 0.0;
                for (typename SparseMatrix<S>::InnerIterator it(kff_, k); it; ++it)
                    col += std::abs(it.value());
                norm = std::max(norm, col);
            }
            sigma_min_ = smallest_singular_value(*fact_);
            if (!(sigma_min_ > 1e-8 * norm))
                throw PatchError(label_, "patch not elliptic; reduce H");
        }
    }

    PatchKind kind() const { return kind_; }
    const std::string& label() const { return label_; }
    const std::vector<Index>& elements() const { return elements_; }
    const std::vector<Index>& cells() const { return cells_; }
    const std::vector<Index>& nodes() const { return nodes_; }
    const std::vector<Index>& free_nodes() const { return free_; }
    const std::vector<Index>& data_nodes() const { return data_; }
    const SparseMatrix<S>& free_matrix() const { return kff_; }
    const SparseMatrix<S>& coupling_matrix() const { return kfd_; }
    const SparseFactorization<S>& factorization() const { return *fact_; }
    /// Smallest singular value estimate; only computed for indefinite problems.
    double sigma_min() const { return sigma_min_; }

    Index data_index(Index node) const { return find(data_, node); }
    Index free_index(Index node) const { return find(free_, node); }

    /// Free-node values of the discrete harmonic extension of data values
    /// (one column per data set, rows ordered like data_nodes()).
    Matrix<S> extend(const Matrix<S>& data_values) const
    {
        if (data_values.rows() != Index(data_.size()))
            throw std::invalid_argument("patch " + label_ + ": data vector has wrong length");
        const Matrix<S> rhs = -(kfd_ * data_values);
        return fact_->solve(rhs);
    }

    /// Free-node values of the local solve with right-hand side taken from
    /// a global load vector and zero data.
    Vector<S> bubble(const Vector<S>& load) const
    {
        Vector<S> rhs(Index(free_.size()));
        for (std::size_t k = 0; k < free_.size(); ++k)
            rhs[Index(k)] = load[free_[k]];
        return fact_->solve_vector(rhs);
    }

    Vector<S> gather_data(const Vector<S>& fine) const
    {
        Vector<S> out(Index(data_.size()));
        for (std::size_t k = 0; k < data_.size(); ++k)
            out[Index(k)] = fine[data_[k]];
        return out;
    }

    /// Writes patch values (free + data) into a fine vector.
    void scatter(const Vector<S>& free_values, const Vector<S>& data_values, Vector<S>& fine) const
    {
        for (std::size_t k = 0; k < free_.size(); ++k)
            fine[free_[k]] = free_values[Index(k)];
        for (std::size_t k = 0; k < data_.size(); ++k)
            fine[data_[k]] = data_values[Index(k)];
    }

private:
    static Index find(const std::vector<Index>& v, Index node)
    {
        auto it = std::lower_bound(v.begin(), v.end(), node);
        return it != v.end() && *it == node ? Index(it - v.begin()) : -1;
    }

    std::vector<Index> elements_;
    PatchKind kind_;
    std::string label_;
    std::vector<Index> cells_;
    std::vector<Index> nodes_;
    std::vector<Index> free_;
    std::vector<Index> data_;
    SparseMatrix<S> kff_;
    SparseMatrix<S> kfd_;
    std::shared_ptr<const SparseFactorization<S>> fact_;
    double sigma_min_ = 0.0;
};

template <class S>
LocalPatch<S> element_patch(const AssembledProblem<S>& prob, Index T)
{
    return LocalPatch<S>(prob, {T}, PatchKind::element, "element " + std::to_string(T));
}

template <class S>
LocalPatch<S> oversampling_patch(const AssembledProblem<S>& prob, Index e)
{
    return LocalPatch<S>(prob, prob.mesh().oversampling_domain(e), PatchKind::oversampling,
                         "omega_e " + std::to_string(e));
}

// ---- skeleton data -------------------------------------------------------

/// u restricted to the skeleton (zero elsewhere, zero on Gamma1).
template <class S>
Vector<S> skeleton_trace(const TwoLevelMesh& mesh, const Vector<S>& u)
{
    Vector<S> out = Vector<S>::Zero(mesh.fine_node_count());
    for (Index n = 0; n < mesh.fine_node_count(); ++n)
        if (mesh.is_skeleton_node(n))
            out[n] = u[n];
    return out;
}

/// I_H: edgewise-linear interpolation of the coarse-node values of skel.
template <class S>
Vector<S> nodal_interpolation(const TwoLevelMesh& mesh, const Vector<S>& skel)
{
    if (skel.size() != mesh.fine_node_count())
        throw std::invalid_argument("skeleton vector has wrong length");
    Vector<S> out = Vector<S>::Zero(mesh.fine_node_count());
    const int r = mesh.refine();
    for (Index e : mesh.active_edges()) {
        const auto trace = mesh.edge_trace_nodes(e);
        const S a = trace.front().dirichlet ? S(0) : skel[trace.front().node];
        const S b = trace.back().dirichlet ? S(0) : skel[trace.back().node];
        for (int k = 0; k <= r; ++k) {
            if (trace[std::size_t(k)].dirichlet)
                continue;
            const double t = double(k) / r;
            out[trace[std::size_t(k)].node] = (1.0 - t) * a + t * b;
        }
    }
    return out;
}

/// R_e: trace of u on the interior nodes of e minus the linear interpolant
/// of its endpoint values, zero-extended to the skeleton.
template <class S>
Vector<S> edge_restriction(const TwoLevelMesh& mesh, const Vector<S>& u, Index e)
{
    if (u.size() != mesh.fine_node_count())
        throw std::invalid_argument("fine vector has wrong length");
    Vector<S> out = Vector<S>::Zero(mesh.fine_node_count());
    const auto trace = mesh.edge_trace_nodes(e);
    const int r = mesh.refine();
    const S a = trace.front().dirichlet ? S(0) : u[trace.front().node];
    const S b = trace.back().dirichlet ? S(0) : u[trace.back().node];
    for (int k = 1; k < r; ++k) {
        const double t = double(k) / r;
        out[trace[std::size_t(k)].node] = u[trace[std::size_t(k)].node] - ((1.0 - t) * a + t * b);
    }
    return out;
}

/// R_e as a (refine-1) x free-node matrix in the coordinates of `patch`.
template <class S>
SparseMatrix<S> restriction_matrix(const TwoLevelMesh& mesh, const LocalPatch<S>& patch, Index e)
{
    const auto trace = mesh.edge_trace_nodes(e);
    const int r = mesh.refine();
    std::vector<Eigen::Triplet<S>> trips;
    auto add = [&](int row, const TraceNode& tn, double w) {
        if (tn.dirichlet || w == 0.0)
            return;
        const Index col = patch.free_index(tn.node);
        if (col < 0)
            throw PatchError(patch.label(), "edge node is not a free patch node");
        trips.emplace_back(row, int(col), S(w));
    };
    for (int k = 1; k < r; ++k) {
        const double t = double(k) / r;
        add(k - 1, trace[std::size_t(k)], 1.0);
        add(k - 1, trace.front(), -(1.0 - t));
        add(k - 1, trace.back(), -t);
    }
    SparseMatrix<S> out(r - 1, Index(patch.free_nodes().size()));
    out.setFromTriplets(trips.begin(), trips.end());
    return out;
}

/// Harmonic extension of unit data on the interior nodes of e into the
/// elements adjacent to e. Rows are indexed by `nodes` (the support: the
/// element interiors plus the interior nodes of e), columns by k = 1..r-1.
template <class S>
struct EdgeExtension {
    Index edge = 0;
    std::vector<Index> nodes;
    Matrix<S> values;

    Vector<S> synthesize(const Vector<S>& edge_data, Index fine_size) const
    {
        Vector<S> out = Vector<S>::Zero(fine_size);
        const Vector<S> local = values * edge_data;
        for (std::size_t k = 0; k < nodes.size(); ++k)
            out[nodes[k]] = local[Index(k)];
        return out;
    }
};

/// Element-local solvers for all coarse elements: Q_{E_H}, bubbles, nodal
/// basis. Immutable after construction.
template <class S>
class ElementSolvers {
public:
    ElementSolvers(const AssembledProblem<S>& prob, int threads = 1) : prob_(&prob)
    {
        const Index count = prob.mesh().element_count();
        std::vector<std::unique_ptr<LocalPatch<S>>> tmp(static_cast<std::size_t>(count));
        parallel_for(count, threads,
                     [&](Index T) { tmp[std::size_t(T)] = std::make_unique<LocalPatch<S>>(element_patch(prob, T)); });
        patches_.reserve(std::size_t(count));
        for (auto& p : tmp)
            patches_.push_back(std::move(*p));
    }

    const AssembledProblem<S>& problem() const { return *prob_; }
    const TwoLevelMesh& mesh() const { return prob_->mesh(); }
    const LocalPatch<S>& patch(Index T) const { return patches_[std::size_t(T)]; }

    /// Q_{E_H}: element-wise harmonic extension of skeleton data.
    Vector<S> harmonic_extension(const Vector<S>& skel, int threads = 1) const
    {
        if (skel.size() != mesh().fine_node_count())
            throw std::invalid_argument("skeleton vector has wrong length");
        Vector<S> out = skeleton_trace(mesh(), skel);
        parallel_for(Index(patches_.size()), threads, [&](Index T) {
            const auto& p = patch(T);
            const Vector<S> g = p.gather_data(skel);
            if (g.size() == 0 || g.isZero(0.0))
                return;
            const Vector<S> inner = p.extend(g).col(0);
            for (std::size_t k = 0; k < p.free_nodes().size(); ++k)
                out[p.free_nodes()[k]] = inner[Index(k)];
        });
        return out;
    }

    /// Global bubble part: element bubbles with zero skeleton trace.
    Vector<S> bubble(const Vector<S>& load, int threads = 1) const
    {
        Vector<S> out = Vector<S>::Zero(mesh().fine_node_count());
        parallel_for(Index(patches_.size()), threads, [&](Index T) {
            const auto& p = patch(T);
            const Vector<S> inner = p.bubble(load);
            for (std::size_t k = 0; k < p.free_nodes().size(); ++k)
                out[p.free_nodes()[k]] = inner[Index(k)];
        });
        return out;
    }

    /// Extension of unit data on each interior node of e.
    EdgeExtension<S> edge_extension(Index e) const
    {
        const auto& ed = mesh().edge(e);
        const auto trace = mesh().edge_trace_nodes(e);
        const int r = mesh().refine();
        EdgeExtension<S> ext;
        ext.edge = e;
        for (int k = 1; k < r; ++k)
            ext.nodes.push_back(trace[std::size_t(k)].node);
        std::vector<Matrix<S>> blocks;
        for (Index T : ed.elements) {
            const auto& p = patch(T);
            Matrix<S> unit = Matrix<S>::Zero(Index(p.data_nodes().size()), r - 1);
            for (int k = 1; k < r; ++k) {
                const Index d = p.data_index(trace[std::size_t(k)].node);
                if (d < 0)
                    throw PatchError(p.label(), "edge node is not an element data node");
                unit(d, k - 1) = S(1);
            }
            blocks.push_back(p.extend(unit));
            ext.nodes.insert(ext.nodes.end(), p.free_nodes().begin(), p.free_nodes().end());
        }
        ext.values = Matrix<S>::Zero(Index(ext.nodes.size()), r - 1);
        ext.values.topRows(r - 1).setIdentity();
        Index row = r - 1;
        for (const auto& b : blocks) {
            ext.values.middleRows(row, b.rows()) = b;
            row += b.rows();
        }
        return ext;
    }

    /// psi_i = Q(edgewise-linear tent of coarse node x), as a fine vector.
    Vector<S> nodal_basis_function(Index x) const
    {
        const TwoLevelMesh& m = mesh();
        if (!m.coarse_node_active(x))
            throw std::invalid_argument("coarse node " + std::to_string(x) + " is not active");
        Vector<S> tent = Vector<S>::Zero(m.fine_node_count());
        const int r = m.refine();
        for (Index e : m.active_edges()) {
            const auto& ed = m.edge(e);
            if (ed.nodes[0] != x && ed.nodes[1] != x)
                continue;
            const auto trace = m.edge_trace_nodes(e);
            for (int k = 0; k <= r; ++k) {
                if (trace[std::size_t(k)].dirichlet)
                    continue;
                const double t = double(k) / r;
                tent[trace[std::size_t(k)].node] = S(ed.nodes[0] == x ? 1.0 - t : t);
            }
        }
        Vector<S> out = tent;
        for (Index T : m.node_elements(x)) {
            const auto& p = patch(T);
            const Vector<S> inner = p.extend(p.gather_data(tent)).col(0);
            for (std::size_t k = 0; k < p.free_nodes().size(); ++k)
                out[p.free_nodes()[k]] = inner[Index(k)];
        }
        return out;
    }

private:
    const AssembledProblem<S>* prob_;
    std::vector<LocalPatch<S>> patches_;
};

/// Sparse fine x (#active nodes) matrix whose columns are the MsFEM nodal
/// basis functions, ordered like mesh.active_nodes().
template <class S>
SparseMatrix<S> msfem_basis(const ElementSolvers<S>& solvers, int threads = 1)
{
    const TwoLevelMesh& m = solvers.mesh();
    const auto& nodes = m.active_nodes();
    std::vector<std::vector<Eigen::Triplet<S>>> cols(nodes.size());
    parallel_for(Index(nodes.size()), threads, [&](Index k) {
        const Vector<S> psi = solvers.nodal_basis_function(nodes[std::size_t(k)]);
        for (Index n = 0; n < psi.size(); ++n)
            if (psi[n] != S(0))
                cols[std::size_t(k)].emplace_back(int(n), int(k), psi[n]);
    });
    std::vector<Eigen::Triplet<S>> trips;
    for (auto& c : cols)
        trips.insert(trips.end(), c.begin(), c.end());
    SparseMatrix<S> out(m.fine_node_count(), Index(nodes.size()));
    out.setFromTriplets(trips.begin(), trips.end());
    return out;
}

template <class S>
SparseMatrix<S> msfem_basis(const AssembledProblem<S>& prob, int threads = 1)
{
    return msfem_basis(ElementSolvers<S>(prob, threads), threads);
}

/// Linear map from a global load vector to R_e applied to the oversampling
/// bubble: edge_residual = response^T * load[free_nodes]. The local matrix
/// is (complex-)symmetric, so response = K_ff^{-1} R_e^T.
template <class S>
struct EdgeResponse {
    Index edge = 0;
    std::vector<Index> free_nodes;
    Matrix<S> response;
};

template <class S>
EdgeResponse<S> edge_response(const TwoLevelMesh& mesh, const LocalPatch<S>& patch, Index e)
{
    EdgeResponse<S> out;
    out.edge = e;
    out.free_nodes = patch.free_nodes();
    const SparseMatrix<S> rt = restriction_matrix(mesh, patch, e).transpose();
    out.response = patch.factorization().solve(Matrix<S>(rt));
    return out;
}

/// u^n = u^b + sum_e Q R_e u^b_{omega_e}, evaluated with cached element
/// factorizations and per-edge responses.
template <class S>
class OnlineOperator {
public:
    OnlineOperator(std::shared_ptr<const ElementSolvers<S>> solvers, std::vector<EdgeResponse<S>> responses)
        : solvers_(std::move(solvers)), responses_(std::move(responses))
    {
    }

    const ElementSolvers<S>& solvers() const { return *solvers_; }

    /// Skeleton data sum_e R_e u^b_{omega_e}.
    Vector<S> edge_residuals(const Vector<S>& load) const
    {
        const TwoLevelMesh& m = solvers_->mesh();
        Vector<S> skel = Vector<S>::Zero(m.fine_node_count());
        const int r = m.refine();
        for (const auto& resp : responses_) {
            Vector<S> local(Index(resp.free_nodes.size()));
            for (std::size_t k = 0; k < resp.free_nodes.size(); ++k)
                local[Index(k)] = load[resp.free_nodes[k]];
            const Vector<S> g = resp.response.transpose() * local;
            const auto trace = m.edge_trace_nodes(resp.edge);
            for (int k = 1; k < r; ++k)
                skel[trace[std::size_t(k)].node] += g[k - 1];
        }
        return skel;
    }

    Vector<S> apply(const Vector<S>& load, int threads = 1) const
    {
        if (load.size() != solvers_->mesh().fine_node_count())
            throw std::invalid_argument("load vector has wrong length");
        return solvers_->bubble(load, threads) + solvers_->harmonic_extension(edge_residuals(load), threads);
    }

private:
    std::shared_ptr<const ElementSolvers<S>> solvers_;
    std::vector<EdgeResponse<S>> responses_;
};

template <class S>
std::vector<EdgeResponse<S>> build_edge_responses(const AssembledProblem<S>& prob, int threads = 1)
{
    const auto& edges = prob.mesh().active_edges();
    std::vector<EdgeResponse<S>> out(edges.size());
    parallel_for(Index(edges.size()), threads, [&](Index k) {
        const Index e = edges[std::size_t(k)];
        out[std::size_t(k)] = edge_response(prob.mesh(), oversampling_patch(prob, e), e);
    });
    return out;
}

/// Standalone online part for a load vector.
template <class S>
Vector<S> online_part(const AssembledProblem<S>& prob, const Vector<S>& load, int threads = 1)
{
    auto solvers = std::make_shared<const ElementSolvers<S>>(prob, threads);
    OnlineOperator<S> op(solvers, build_edge_responses(prob, threads));
    return op.apply(load, threads);
}

} // namespace expmsfem
