#pragma once

// Fine-grid Q1 discretization of
//   a(u, v) = (A grad u, grad v) + (V u, v) - (beta u, v)_{Gamma2}.
// Complex problems use the sesquilinear convention a(u, v) = v^H K u.

#include "expmsfem/coeffs.hpp"
#include "expmsfem/mesh.hpp"
#include "expmsfem/numerics.hpp"

#include <array>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace expmsfem {

namespace q1 {

// Reference Q1 stiffness for -Laplace on a square cell (h-independent in 2D),
// nodes counter-clockwise from the bottom-left corner.
inline constexpr double stiffness[4][4] = {{4.0 / 6, -1.0 / 6, -2.0 / 6, -1.0 / 6},
                                           {-1.0 / 6, 4.0 / 6, -1.0 / 6, -2.0 / 6},
                                           {-2.0 / 6, -1.0 / 6, 4.0 / 6, -1.0 / 6},
                                           {-1.0 / 6, -2.0 / 6, -1.0 / 6, 4.0 / 6}};

// Reference mass, to be scaled by h^2.
inline constexpr double mass[4][4] = {{4.0 / 36, 2.0 / 36, 1.0 / 36, 2.0 / 36},
                                      {2.0 / 36, 4.0 / 36, 2.0 / 36, 1.0 / 36},
                                      {1.0 / 36, 2.0 / 36, 4.0 / 36, 2.0 / 36},
                                      {2.0 / 36, 1.0 / 36, 2.0 / 36, 4.0 / 36}};

} // namespace q1

/// Coefficients sampled once: A and V at fine-cell centres, beta at the
/// midpoints of boundary segments (zero off Robin segments).
struct CellCoefficients {
    std::vector<double> A;
    std::vector<double> V;
    std::vector<std::complex<double>> beta;
};

inline CellCoefficients sample_coefficients(const TwoLevelMesh& mesh, const ProblemSpec& spec)
{
    CellCoefficients c;
    const Index cells = mesh.fine_cell_count();
    c.A.resize(std::size_t(cells));
    c.V.resize(std::size_t(cells));
    for (Index k = 0; k < cells; ++k) {
        const Point p = mesh.cell_center(k);
        c.A[std::size_t(k)] = spec.A(p);
        c.V[std::size_t(k)] = spec.V ? spec.V(p) : 0.0;
        if (!(c.A[std::size_t(k)] > 0.0) || !std::isfinite(c.A[std::size_t(k)]))
            throw std::invalid_argument("coefficient A must be positive and finite");
    }
    const auto& segs = mesh.boundary_segments();
    c.beta.assign(segs.size(), 0.0);
    for (std::size_t s = 0; s < segs.size(); ++s)
        if (segs[s].kind == SegmentKind::robin && spec.beta)
            c.beta[s] = spec.beta(segs[s].midpoint);
    return c;
}

template <class S>
class AssembledProblem {
public:
    AssembledProblem(TwoLevelMesh mesh, const ProblemSpec& spec) : mesh_(std::move(mesh)), spec_(spec)
    {
        if (spec.layout != mesh_.layout())
            throw std::invalid_argument("problem boundary layout does not match the mesh");
        const bool want_complex = spec.scalar_kind == ScalarKind::complex;
        if (want_complex != is_complex_v<S>)
            throw std::invalid_argument(std::string("scalar-kind mismatch: problem '") + spec.scenario + "' is " +
                                        (want_complex ? "complex" : "real"));
        coeffs_ = sample_coefficients(mesh_, spec);
        if constexpr (!is_complex_v<S>) {
            for (double v : coeffs_.V)
                if (v < 0.0)
                    throw std::invalid_argument("real problems need V >= 0");
            for (auto b : coeffs_.beta)
                if (b != 0.0)
                    throw std::invalid_argument("real problems need beta = 0");
        }
        assemble();
    }

    const TwoLevelMesh& mesh() const { return mesh_; }
    const ProblemSpec& spec() const { return spec_; }
    const CellCoefficients& coefficients() const { return coeffs_; }

    /// K = K_A + M_V - B_beta over all fine nodes (Dirichlet rows included).
    const SparseMatrix<S>& system() const { return system_; }
    const RealSparse& stiffness() const { return stiffness_; }
    const RealSparse& mass() const { return mass_; }
    const RealSparse& mass_V() const { return mass_v_; }
    /// (A grad, grad) + (|V| ., .): the Gram matrix of the energy norm.
    const RealSparse& energy_matrix() const { return energy_; }

    /// True when the local operators can lose definiteness (V < 0 or beta != 0).
    bool indefinite() const { return indefinite_; }

    const std::vector<Index>& free_nodes() const { return free_; }
    SparseSystem<S> sparse_system() const
    {
        SparseSystem<S> sys{system_, std::vector<bool>(std::size_t(mesh_.fine_node_count()), false)};
        for (Index n = 0; n < mesh_.fine_node_count(); ++n)
            sys.constrained[std::size_t(n)] = mesh_.is_dirichlet(n);
        return sys;
    }

    /// Load vector (f, phi_p) by 2x2 Gauss quadrature per cell; zero on Gamma1.
    Vector<S> load(const ScalarField& f) const
    {
        static const double g = 0.5 / std::sqrt(3.0);
        const double hh = mesh_.h();
        Vector<S> out = Vector<S>::Zero(mesh_.fine_node_count());
        for (Index c = 0; c < mesh_.fine_cell_count(); ++c) {
            const Point ctr = mesh_.cell_center(c);
            const auto nodes = mesh_.cell_nodes(c);
            for (double sx : {-g, g})
                for (double sy : {-g, g}) {
                    const double fx = f({ctr.x + sx * hh, ctr.y + sy * hh}) * hh * hh / 4.0;
                    const double xi = 0.5 + sx, eta = 0.5 + sy;
                    const double phi[4] = {(1 - xi) * (1 - eta), xi * (1 - eta), xi * eta, (1 - xi) * eta};
                    for (int a = 0; a < 4; ++a)
                        out[nodes[std::size_t(a)]] += S(fx * phi[a]);
                }
        }
        for (Index n = 0; n < mesh_.fine_node_count(); ++n)
            if (mesh_.is_dirichlet(n))
                out[n] = S(0);
        return out;
    }

    Vector<S> load() const { return load(spec_.f); }

    /// Energy Gram matrix assembled over `cells` only, indexed by `nodes`.
    RealSparse local_energy(const std::vector<Index>& cells, const std::vector<Index>& nodes) const
    {
        std::vector<Index> local(std::size_t(mesh_.fine_node_count()), -1);
        for (std::size_t k = 0; k < nodes.size(); ++k)
            local[std::size_t(nodes[k])] = Index(k);
        const double h2 = mesh_.h() * mesh_.h();
        std::vector<Triplet> trips;
        trips.reserve(cells.size() * 16);
        for (Index c : cells) {
            const auto cn = mesh_.cell_nodes(c);
            const double a = coeffs_.A[std::size_t(c)], v = std::abs(coeffs_.V[std::size_t(c)]);
            // Gamma1 nodes carry zero values and may be left out of `nodes`.
            Index lc[4];
            for (int r = 0; r < 4; ++r) {
                lc[r] = local[std::size_t(cn[std::size_t(r)])];
                if (lc[r] < 0 && !mesh_.is_dirichlet(cn[std::size_t(r)]))
                    throw std::logic_error("local_energy: cell node missing from node list");
            }
            for (int r = 0; r < 4; ++r)
                for (int s = 0; s < 4; ++s)
                    if (lc[r] >= 0 && lc[s] >= 0)
                        trips.emplace_back(int(lc[r]), int(lc[s]), a * q1::stiffness[r][s] + v * h2 * q1::mass[r][s]);
        }
        RealSparse out(Index(nodes.size()), Index(nodes.size()));
        out.setFromTriplets(trips.begin(), trips.end());
        return out;
    }

private:
    void assemble()
    {
        const Index n = mesh_.fine_node_count();
        const double h2 = mesh_.h() * mesh_.h();
        std::vector<Triplet> ka, m, mv, mav;
        const std::size_t cells = std::size_t(mesh_.fine_cell_count());
        ka.reserve(cells * 16);
        m.reserve(cells * 16);
        mv.reserve(cells * 16);
        mav.reserve(cells * 16);
        for (Index c = 0; c < mesh_.fine_cell_count(); ++c) {
            const auto cn = mesh_.cell_nodes(c);
            const double a = coeffs_.A[std::size_t(c)], v = coeffs_.V[std::size_t(c)];
            if (v < 0.0)
                indefinite_ = true;
            for (int r = 0; r < 4; ++r)
                for (int s = 0; s < 4; ++s) {
                    const int i = int(cn[std::size_t(r)]), j = int(cn[std::size_t(s)]);
                    ka.emplace_back(i, j, a * q1::stiffness[r][s]);
                    m.emplace_back(i, j, h2 * q1::mass[r][s]);
                    if (v != 0.0) {
                        mv.emplace_back(i, j, v * h2 * q1::mass[r][s]);
                        mav.emplace_back(i, j, std::abs(v) * h2 * q1::mass[r][s]);
                    }
                }
        }
        stiffness_.resize(n, n);
        stiffness_.setFromTriplets(ka.begin(), ka.end());
        mass_.resize(n, n);
        mass_.setFromTriplets(m.begin(), m.end());
        mass_v_.resize(n, n);
        mass_v_.setFromTriplets(mv.begin(), mv.end());
        RealSparse mabs(n, n);
        mabs.setFromTriplets(mav.begin(), mav.end());
        energy_ = stiffness_ + mabs;

        // Lumped Robin term on Gamma2 segments.
        std::vector<Eigen::Triplet<S>> bt;
        const auto& segs = mesh_.boundary_segments();
        for (std::size_t s = 0; s < segs.size(); ++s) {
            const auto b = coeffs_.beta[s];
            if (b == 0.0)
                continue;
            indefinite_ = true;
            S w;
            if constexpr (is_complex_v<S>)
                w = b * (mesh_.h() / 2.0);
            else
                w = b.real() * (mesh_.h() / 2.0);
            bt.emplace_back(int(segs[s].node_a), int(segs[s].node_a), w);
            bt.emplace_back(int(segs[s].node_b), int(segs[s].node_b), w);
        }
        SparseMatrix<S> boundary(n, n);
        boundary.setFromTriplets(bt.begin(), bt.end());
        system_ = (stiffness_ + mass_v_).template cast<S>() - boundary;
        system_.makeCompressed();

        for (Index k = 0; k < n; ++k)
            if (!mesh_.is_dirichlet(k))
                free_.push_back(k);
    }

    TwoLevelMesh mesh_;
    ProblemSpec spec_;
    CellCoefficients coeffs_;
    RealSparse stiffness_, mass_, mass_v_, energy_;
    SparseMatrix<S> system_;
    std::vector<Index> free_;
    bool indefinite_ = false;
};

template <class S>
AssembledProblem<S> assemble(const TwoLevelMesh& mesh, const ProblemSpec& spec)
{
    return AssembledProblem<S>(mesh, spec);
}

/// Fine Galerkin solution for the load vector `rhs` (Dirichlet entries ignored).
template <class S>
Vector<S> solve_reference(const AssembledProblem<S>& prob, const Vector<S>& rhs, const SolveOptions& opts = {})
{
    if (rhs.size() != prob.mesh().fine_node_count())
        throw std::invalid_argument("load vector has wrong length");
    return solve_sparse(prob.sparse_system(), Matrix<S>(rhs), opts).col(0);
}

template <class S>
void check_length(const AssembledProblem<S>& prob, const Vector<S>& w)
{
    if (w.size() != prob.mesh().fine_node_count())
        throw std::invalid_argument("fine function has length " + std::to_string(w.size()) + ", expected " +
                                    std::to_string(prob.mesh().fine_node_count()));
}

/// a(u, v) = v^H K u.
template <class S>
S bilinear(const AssembledProblem<S>& prob, const Vector<S>& u, const Vector<S>& v)
{
    check_length(prob, u);
    check_length(prob, v);
    return v.dot(prob.system() * u);
}

/// sqrt((A grad w, grad w) + |(V w, w)|); the Gamma2 term is not part of it.
template <class S>
double energy_norm(const AssembledProblem<S>& prob, const Vector<S>& w)
{
    check_length(prob, w);
    const Vector<S> kw = prob.stiffness().template cast<S>() * w;
    const Vector<S> mw = prob.mass_V().template cast<S>() * w;
    const double grad = std::real(w.dot(kw));
    return std::sqrt(std::max(0.0, grad + std::abs(w.dot(mw))));
}

template <class S>
double l2_norm(const AssembledProblem<S>& prob, const Vector<S>& w)
{
    check_length(prob, w);
    const Vector<S> mw = prob.mass().template cast<S>() * w;
    return std::sqrt(std::max(0.0, std::real(w.dot(mw))));
}

} // namespace expmsfem
