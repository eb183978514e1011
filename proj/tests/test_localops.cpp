#include "support.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace testing_support;

namespace {

template <class S>
void check_splitting(const ProblemSpec& spec, int nc, int refine)
{
    const TwoLevelMesh mesh(nc, refine, spec.layout);
    const AssembledProblem<S> p(mesh, spec);
    const Vector<S> load = p.load();
    const Vector<S> u = solve_reference(p, load);
    const ElementSolvers<S> es(p);
    const Vector<S> uh = es.harmonic_extension(skeleton_trace(mesh, u));
    const Vector<S> ub = es.bubble(load);
    EXPECT_LE(energy_norm(p, Vector<S>(u - uh - ub)), 1e-10 * energy_norm(p, u));
    // The bubble vanishes on the skeleton.
    for (Index n = 0; n < mesh.fine_node_count(); ++n)
        if (mesh.is_skeleton_node(n))
            EXPECT_EQ(ub[n], S(0));
}

} // namespace

TEST(LocalOps, SplittingIdentityReal) { check_splitting<double>(make_scenario("periodic"), 4, 6); }

TEST(LocalOps, SplittingIdentityComplex)
{
    check_splitting<Complex>(make_scenario("helmholtz_rough", helmholtz_params(4)), 4, 6);
}

TEST(LocalOps, InterpolationResidualVanishesAtCoarseNodes)
{
    const TwoLevelMesh mesh(4, 5, BoundaryLayout::mixed);
    Vector<double> u(mesh.fine_node_count());
    for (Index n = 0; n < u.size(); ++n) {
        const Point q = mesh.node_point(n);
        u[n] = mesh.is_dirichlet(n) ? 0.0 : std::sin(3 * q.x) * std::exp(q.y) + q.x * q.y;
    }
    const Vector<double> skel = skeleton_trace(mesh, u);
    const Vector<double> iu = nodal_interpolation(mesh, skel);
    for (Index x : mesh.active_nodes())
        EXPECT_EQ(skel[mesh.coarse_node_fine_id(x)] - iu[mesh.coarse_node_fine_id(x)], 0.0);
    EXPECT_EQ((nodal_interpolation(mesh, iu) - iu).norm(), 0.0);
    // Off the skeleton I_H is zero.
    for (Index n = 0; n < u.size(); ++n)
        if (!mesh.is_skeleton_node(n))
            EXPECT_EQ(iu[n], 0.0);
}

TEST(LocalOps, EdgeRestrictionIsNodalResidual)
{
    const TwoLevelMesh mesh(3, 4, BoundaryLayout::all_dirichlet);
    Vector<double> u = Vector<double>::Random(mesh.fine_node_count());
    for (Index n = 0; n < u.size(); ++n)
        if (mesh.is_dirichlet(n))
            u[n] = 0.0;
    const Vector<double> skel = skeleton_trace(mesh, u);
    const Vector<double> resid = skel - nodal_interpolation(mesh, skel);
    Vector<double> sum = Vector<double>::Zero(u.size());
    for (Index e : mesh.active_edges()) {
        const Vector<double> r = edge_restriction(mesh, u, e);
        const auto trace = mesh.edge_trace_nodes(e);
        EXPECT_EQ(r[trace.front().node], 0.0);
        EXPECT_EQ(r[trace.back().node], 0.0);
        sum += r;
    }
    EXPECT_LT((sum - resid).norm(), 1e-14);
}

TEST(LocalOps, RestrictionMatrixMatchesEdgeRestriction)
{
    const TwoLevelMesh mesh(3, 4, BoundaryLayout::mixed);
    const AssembledProblem<Complex> p(mesh, make_scenario("helmholtz_rough", helmholtz_params(2)));
    const Index e = mesh.active_edges()[5];
    const LocalPatch<Complex> patch = oversampling_patch(p, e);
    Vector<Complex> free = Vector<Complex>::Random(Index(patch.free_nodes().size()));
    Vector<Complex> fine = Vector<Complex>::Zero(mesh.fine_node_count());
    patch.scatter(free, Vector<Complex>::Zero(Index(patch.data_nodes().size())), fine);
    const Vector<Complex> r = restriction_matrix(mesh, patch, e) * free;
    const Vector<Complex> full = edge_restriction(mesh, fine, e);
    const auto trace = mesh.edge_trace_nodes(e);
    for (int k = 1; k < mesh.refine(); ++k)
        EXPECT_LT(std::abs(r[k - 1] - full[trace[std::size_t(k)].node]), 1e-14);
}

TEST(LocalOps, PartitionOfUnity)
{
    ProblemSpec s = make_scenario("periodic");
    const TwoLevelMesh mesh(4, 6, BoundaryLayout::all_dirichlet);
    const AssembledProblem<double> p(mesh, s);
    const SparseMatrix<double> psi = msfem_basis(p);
    const Vector<double> sum = psi * Vector<double>::Ones(psi.cols());
    for (Index T = 0; T < mesh.element_count(); ++T) {
        if (mesh.element_touches_dirichlet(T))
            continue;
        for (Index c : mesh.element_cells(T))
            for (Index n : mesh.cell_nodes(c))
                EXPECT_NEAR(sum[n], 1.0, 1e-9);
    }
}

TEST(LocalOps, NodalBasisIsKronecker)
{
    const TwoLevelMesh mesh(3, 4, BoundaryLayout::mixed);
    const AssembledProblem<double> p(mesh, custom_spec(1.0, 0.0, 1.0, BoundaryLayout::mixed));
    const SparseMatrix<double> psi = msfem_basis(p);
    const auto& nodes = mesh.active_nodes();
    ASSERT_EQ(psi.cols(), Index(nodes.size()));
    for (std::size_t a = 0; a < nodes.size(); ++a)
        for (std::size_t b = 0; b < nodes.size(); ++b)
            EXPECT_EQ(psi.coeff(mesh.coarse_node_fine_id(nodes[b]), Index(a)), a == b ? 1.0 : 0.0);
    for (Index n = 0; n < mesh.fine_node_count(); ++n)
        if (mesh.is_dirichlet(n))
            for (Index a = 0; a < psi.cols(); ++a)
                EXPECT_EQ(psi.coeff(n, a), 0.0);
}

TEST(LocalOps, EdgeExtensionIsElementHarmonic)
{
    const TwoLevelMesh mesh(3, 5, BoundaryLayout::all_dirichlet);
    const AssembledProblem<double> p(mesh, make_scenario("periodic"));
    const ElementSolvers<double> es(p);
    const Index e = mesh.active_edges()[3];
    const EdgeExtension<double> ext = es.edge_extension(e);
    const Vector<double> data = Vector<double>::LinSpaced(mesh.refine() - 1, 1.0, 2.0);
    const Vector<double> v = ext.synthesize(data, mesh.fine_node_count());
    // Same as the harmonic extension of the skeleton data.
    Vector<double> skel = Vector<double>::Zero(mesh.fine_node_count());
    const auto trace = mesh.edge_trace_nodes(e);
    for (int k = 1; k < mesh.refine(); ++k)
        skel[trace[std::size_t(k)].node] = data[k - 1];
    EXPECT_LT((es.harmonic_extension(skel) - v).norm(), 1e-12 * v.norm());
}

TEST(LocalOps, OnlinePartMatchesDirectPatchSolves)
{
    const TwoLevelMesh mesh(4, 4, BoundaryLayout::mixed);
    const AssembledProblem<Complex> p(mesh, make_scenario("helmholtz_rough", helmholtz_params(3)));
    const Vector<Complex> load = p.load();
    const Vector<Complex> un = online_part(p, load);

    // Independent path: oversampling bubbles, R_e, then Q.
    const ElementSolvers<Complex> es(p);
    Vector<Complex> skel = Vector<Complex>::Zero(mesh.fine_node_count());
    for (Index e : mesh.active_edges()) {
        const LocalPatch<Complex> patch = oversampling_patch(p, e);
        Vector<Complex> fine = Vector<Complex>::Zero(mesh.fine_node_count());
        patch.scatter(patch.bubble(load), Vector<Complex>::Zero(Index(patch.data_nodes().size())), fine);
        skel += edge_restriction(mesh, fine, e);
    }
    const Vector<Complex> ref = es.bubble(load) + es.harmonic_extension(skel);
    EXPECT_LT((un - ref).norm(), 1e-10 * ref.norm());
}

TEST(LocalOps, OnlinePartIsLocalInTheRightHandSide)
{
    const int nc = 6;
    const TwoLevelMesh mesh(nc, 3, BoundaryLayout::all_dirichlet);
    const AssembledProblem<double> p(mesh, make_scenario("periodic"));
    auto solvers = std::make_shared<const ElementSolvers<double>>(p);
    const OnlineOperator<double> op(solvers, build_edge_responses(p));
    const Index T0 = mesh.element(1, 1);
    Vector<double> delta = Vector<double>::Zero(mesh.fine_node_count());
    for (Index c : mesh.element_cells(T0))
        for (Index n : mesh.cell_nodes(c))
            if (!mesh.is_dirichlet(n))
                delta[n] = 1.0;
    const Vector<double> change = op.apply(delta);
    // Edges whose patch contains T0, and the elements next to those edges.
    std::set<Index> reach{T0};
    for (Index e : mesh.active_edges()) {
        const auto dom = mesh.oversampling_domain(e);
        if (std::binary_search(dom.begin(), dom.end(), T0))
            for (Index T : mesh.edge(e).elements)
                reach.insert(T);
    }
    EXPECT_GT(change.norm(), 0.0);
    for (Index T = 0; T < mesh.element_count(); ++T) {
        if (reach.count(T))
            continue;
        for (Index c : mesh.element_cells(T))
            for (Index n : mesh.cell_nodes(c)) {
                bool shared = false;
                for (Index U : reach)
                    for (Index c2 : mesh.element_cells(U))
                        for (Index n2 : mesh.cell_nodes(c2))
                            shared = shared || n2 == n;
                if (!shared)
                    EXPECT_EQ(change[n], 0.0);
            }
    }
}

TEST(LocalOps, PatchClassification)
{
    const TwoLevelMesh mesh(4, 4, BoundaryLayout::mixed);
    const AssembledProblem<double> p(mesh, custom_spec(1.0, 0.0, 1.0, BoundaryLayout::mixed));
    const Index e = mesh.active_edges()[0];
    const LocalPatch<double> patch = oversampling_patch(p, e);
    std::set<Index> all(patch.nodes().begin(), patch.nodes().end());
    for (Index n : patch.free_nodes())
        EXPECT_FALSE(mesh.is_dirichlet(n));
    for (Index n : patch.data_nodes())
        EXPECT_FALSE(mesh.is_dirichlet(n));
    EXPECT_EQ(patch.free_nodes().size() + patch.data_nodes().size() +
                  std::count_if(all.begin(), all.end(), [&](Index n) { return mesh.is_dirichlet(n); }),
              all.size());
    // The element patch has only strictly interior free nodes.
    const LocalPatch<double> el = element_patch(p, mesh.element(0, 3));
    EXPECT_EQ(el.free_nodes().size(), std::size_t(3 * 3));
}

TEST(LocalOps, ElementSolversAreThreadIndependent)
{
    const TwoLevelMesh mesh(4, 4, BoundaryLayout::all_dirichlet);
    const AssembledProblem<double> p(mesh, make_scenario("periodic"));
    const SparseMatrix<double> a = msfem_basis(p, 1), b = msfem_basis(p, 3);
    EXPECT_EQ(Matrix<double>(a - b).cwiseAbs().maxCoeff(), 0.0);
}
