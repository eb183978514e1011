#pragma once

// Spectral edge basis: the local harmonic space U(omega_e), the operator
// Q R_e on it and its leading left singular vectors.

#include "expmsfem/localops.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace expmsfem {

/// How the energy Gram of U(omega_e) is formed.
///   direct: Phi^H E Phi with the patch-local energy matrix E.
///   schur:  E_dd + E_df X, valid when E equals the system matrix on the
///           free rows (V >= 0 and no Robin term).
///   automatic: schur when the problem is definite, direct otherwise.
enum class GramRoute { automatic, direct, schur };

/// Discrete A,V-harmonic functions on omega_e, one per data node of the
/// patch. Member k has data e_k and free values extension.col(k).
template <class S>
struct HarmonicSpace {
    Index edge = 0;
    LocalPatch<S> patch;
    Matrix<S> extension; // free x data
    Matrix<S> gram;      // data x data, energy inner products on omega_e

    Index dim() const { return Index(patch.data_nodes().size()); }

    /// Member k as a fine-grid vector.
    Vector<S> member(Index k, Index fine_size) const
    {
        Vector<S> out = Vector<S>::Zero(fine_size);
        Vector<S> data = Vector<S>::Zero(dim());
        data[k] = S(1);
        patch.scatter(extension.col(k), data, out);
        return out;
    }
};

template <class S>
HarmonicSpace<S> build_harmonic_space(const AssembledProblem<S>& prob, Index e, GramRoute route = GramRoute::automatic)
{
    LocalPatch<S> patch = oversampling_patch(prob, e);
    const Index nd = Index(patch.data_nodes().size());
    const Index nf = Index(patch.free_nodes().size());
    Matrix<S> x = patch.extend(Matrix<S>::Identity(nd, nd));

    // Patch-local energy matrix, nodes ordered data first then free.
    std::vector<Index> order = patch.data_nodes();
    order.insert(order.end(), patch.free_nodes().begin(), patch.free_nodes().end());
    const SparseMatrix<S> energy = prob.local_energy(patch.cells(), order).template cast<S>();
    const SparseMatrix<S> edd = energy.topLeftCorner(nd, nd);
    const SparseMatrix<S> edf = energy.topRightCorner(nd, nf);

    if (route == GramRoute::automatic)
        route = prob.indefinite() ? GramRoute::direct : GramRoute::schur;
    if (route == GramRoute::schur && prob.indefinite())
        throw std::invalid_argument("Schur-complement Gram needs a definite problem");

    Matrix<S> gram;
    if (route == GramRoute::schur) {
        gram = Matrix<S>(edd) + edf * x;
    } else {
        // The energy matrix is real symmetric, so E_fd = E_df^H.
        const SparseMatrix<S> eff = energy.bottomRightCorner(nf, nf);
        const Matrix<S> edfx = edf * x;
        const Matrix<S> effx = eff * x;
        gram = Matrix<S>(edd) + edfx + edfx.adjoint() + x.adjoint() * effx;
    }
    gram = (0.5 * (gram + gram.adjoint())).eval();
    return HarmonicSpace<S>{e, std::move(patch), std::move(x), std::move(gram)};
}

/// Left singular vectors of Q R_e : U(omega_e) -> H(Omega), stored by their
/// edge data (values on the r-1 interior nodes of e); the fine function is
/// extension.synthesize(edge_data.col(j)).
template <class S>
struct EdgeBasis {
    Index edge = 0;
    std::vector<double> singular_values; // every value above the floor, descending
    Matrix<S> edge_data;                 // (r-1) x count, H(Omega)-orthonormal extensions
    Index count() const { return edge_data.cols(); }
};

inline constexpr double singular_value_floor = 1e-13;

/// Top-m left singular vectors. Singular values at or below
/// 1e-13 * lambda_1 are never returned, so count() may be smaller than m.
template <class S>
EdgeBasis<S> edge_singular_basis(const AssembledProblem<S>& prob, const HarmonicSpace<S>& space,
                                 const EdgeExtension<S>& ext, Index m)
{
    const TwoLevelMesh& mesh = prob.mesh();
    const Index e = space.edge;
    if (ext.edge != e)
        throw std::invalid_argument("edge extension belongs to a different edge");
    if (m < 0)
        throw std::invalid_argument("number of edge basis functions must be >= 0");
    const Index image_dim = std::min<Index>(space.dim(), mesh.refine() - 1);
    if (m > image_dim)
        throw std::invalid_argument("m = " + std::to_string(m) + " exceeds the image dimension " +
                                    std::to_string(image_dim) + " of edge " + std::to_string(e));

    const SparseMatrix<S> rmat = restriction_matrix(mesh, space.patch, e);
    const Matrix<S> b = rmat * space.extension; // (r-1) x data

    const SparseMatrix<S> energy = submatrix(prob.energy_matrix(), ext.nodes, ext.nodes).template cast<S>();
    Matrix<S> gram_edge = ext.values.adjoint() * (energy * ext.values);
    gram_edge = (0.5 * (gram_edge + gram_edge.adjoint())).eval();
    const Matrix<S> numerator = b.adjoint() * gram_edge * b;

    EdgeBasis<S> out;
    out.edge = e;
    out.edge_data.resize(mesh.refine() - 1, 0);
    if (image_dim == 0)
        return out;
    auto pairs = generalized_hermitian_eig(numerator, space.gram, image_dim);
    std::vector<double> sv;
    for (Index k = 0; k < pairs.values.size(); ++k)
        sv.push_back(std::sqrt(std::max(0.0, pairs.values[k])));
    const double top = sv.empty() ? 0.0 : sv.front();
    Index keep = 0;
    for (double s : sv) {
        if (!(s > singular_value_floor * top) || top == 0.0)
            break;
        out.singular_values.push_back(s);
        ++keep;
    }
    const Index count = std::min(m, keep);
    out.edge_data.resize(mesh.refine() - 1, count);
    for (Index j = 0; j < count; ++j)
        out.edge_data.col(j) = b * pairs.vectors.col(j) / S(out.singular_values[std::size_t(j)]);
    return out;
}

/// Least-squares fit of log(lambda_m) = log C - b m^{1/3}.
struct DecayReport {
    std::vector<double> values;
    double b = 0.0;
    double log_c = 0.0;
    double residual = 0.0; // root-mean-square of the log residuals
    double r2 = 1.0;
};

inline DecayReport decay_report(const std::vector<double>& values, std::optional<std::size_t> max_count = std::nullopt)
{
    DecayReport rep;
    if (values.empty())
        throw std::invalid_argument("decay report needs at least 3 singular values above the floor");
    const double top = values.front();
    for (double v : values) {
        if (!(v > singular_value_floor * top))
            break;
        if (max_count && rep.values.size() >= *max_count)
            break;
        rep.values.push_back(v);
    }
    const std::size_t n = rep.values.size();
    if (n < 3)
        throw std::invalid_argument("decay report needs at least 3 singular values above the floor");
    double sx = 0, sy = 0;
    std::vector<double> xs(n), ys(n);
    for (std::size_t k = 0; k < n; ++k) {
        xs[k] = std::cbrt(double(k + 1));
        ys[k] = std::log(rep.values[k]);
        sx += xs[k];
        sy += ys[k];
    }
    const double mx = sx / double(n), my = sy / double(n);
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t k = 0; k < n; ++k) {
        sxx += (xs[k] - mx) * (xs[k] - mx);
        sxy += (xs[k] - mx) * (ys[k] - my);
        syy += (ys[k] - my) * (ys[k] - my);
    }
    const double slope = sxy / sxx;
    rep.b = -slope;
    rep.log_c = my - slope * mx;
    double ss = 0;
    for (std::size_t k = 0; k < n; ++k) {
        const double d = ys[k] - (rep.log_c + slope * xs[k]);
        ss += d * d;
    }
    rep.residual = std::sqrt(ss / double(n));
    rep.r2 = syy > 0.0 ? 1.0 - ss / syy : 1.0;
    return rep;
}

} // namespace expmsfem
