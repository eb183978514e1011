#pragma once

// Two-level tensor-product quadrilateral mesh of the unit square.
//
// The coarse partition has nc x nc square elements of size H = 1/nc; every
// coarse element is split into refine x refine bilinear fine cells, so the
// fine grid has N = nc * refine cells per side and h = H / refine.
//
// Indexing is row-major by position everywhere:
//   fine node  (i, j), 0 <= i,j <= N        -> j * (N + 1) + i
//   fine cell  (i, j), 0 <= i,j <  N        -> j * N + i
//   coarse node (I, J), 0 <= I,J <= nc      -> J * (nc + 1) + I
//   coarse element (I, J), 0 <= I,J < nc    -> J * nc + I
//   coarse edges: all horizontal edges first (y = J*H, x in [I*H, (I+1)*H],
//   id = J * nc + I), then all vertical edges (x = I*H, y in [J*H, (J+1)*H],
//   id = nc * (nc + 1) + J * (nc + 1) + I).

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace expmsfem {

using Index = std::ptrdiff_t;

struct Point {
    double x = 0.0;
    double y = 0.0;
};

/// Which parts of the boundary carry which condition.
///   all_dirichlet: u = 0 on the whole boundary.
///   mixed: Dirichlet on y = 0, Neumann on y = 1, Robin on x = 0 and x = 1.
///          Corners touching y = 0 are Dirichlet.
enum class BoundaryLayout { all_dirichlet, mixed };

inline BoundaryLayout parse_layout(std::string_view tag)
{
    if (tag == "all_dirichlet" || tag == "dirichlet")
        return BoundaryLayout::all_dirichlet;
    if (tag == "mixed")
        return BoundaryLayout::mixed;
    throw std::invalid_argument("unknown boundary layout '" + std::string(tag) +
                                "' (expected all_dirichlet or mixed)");
}

inline std::string_view to_string(BoundaryLayout layout)
{
    return layout == BoundaryLayout::mixed ? "mixed" : "all_dirichlet";
}

enum class NodeKind : std::uint8_t { interior, dirichlet, gamma2 };
enum class SegmentKind : std::uint8_t { dirichlet, neumann, robin };
enum class Orientation : std::uint8_t { horizontal, vertical };

/// One fine boundary segment (a fine-cell side lying on the boundary).
struct BoundarySegment {
    Index node_a = 0;
    Index node_b = 0;
    SegmentKind kind = SegmentKind::dirichlet;
    Point midpoint;
};

struct CoarseEdge {
    Index id = 0;
    Orientation orientation = Orientation::horizontal;
    int i = 0; // anchor position, see file comment
    int j = 0;
    std::array<Index, 2> nodes{};       // coarse node ids, coordinate order
    std::vector<Index> elements;        // adjacent coarse elements (1 or 2)
    bool on_boundary = false;
    bool active = false;                // interior, or lying on Gamma2
};

/// A fine node along a coarse edge.
struct TraceNode {
    Index node = 0;
    bool endpoint = false;
    bool dirichlet = false;
};

class TwoLevelMesh {
public:
    TwoLevelMesh(int nc, int refine, BoundaryLayout layout, int oversampling_layers = 1)
        : nc_(nc), refine_(refine), n_(nc * refine), layout_(layout), layers_(oversampling_layers)
    {
        if (nc < 2)
            throw std::invalid_argument("coarse cells per side must be >= 2, got " + std::to_string(nc));
        if (refine < 2)
            throw std::invalid_argument("refinement per coarse cell must be >= 2, got " +
                                        std::to_string(refine));
        if (oversampling_layers < 1)
            throw std::invalid_argument("oversampling layers must be >= 1");
        classify_fine_nodes();
        build_boundary_segments();
        build_coarse_entities();
    }

    int coarse_cells() const { return nc_; }
    int refine() const { return refine_; }
    int fine_cells() const { return n_; }
    int oversampling_layers() const { return layers_; }
    BoundaryLayout layout() const { return layout_; }
    double H() const { return 1.0 / nc_; }
    double h() const { return 1.0 / n_; }

    // ---- fine grid ----------------------------------------------------------

    Index fine_node_count() const { return Index(n_ + 1) * (n_ + 1); }
    Index fine_cell_count() const { return Index(n_) * n_; }
    Index fine_node(int i, int j) const { return Index(j) * (n_ + 1) + i; }
    Index fine_cell(int i, int j) const { return Index(j) * n_ + i; }
    std::array<int, 2> fine_node_position(Index node) const
    {
        return {int(node % (n_ + 1)), int(node / (n_ + 1))};
    }
    Point node_point(Index node) const
    {
        auto [i, j] = fine_node_position(node);
        return {double(i) / n_, double(j) / n_};
    }
    Point cell_center(Index cell) const
    {
        const int i = int(cell % n_), j = int(cell / n_);
        return {(i + 0.5) / n_, (j + 0.5) / n_};
    }
    /// Counter-clockwise corner nodes of a fine cell, starting bottom-left.
    std::array<Index, 4> cell_nodes(Index cell) const
    {
        const int i = int(cell % n_), j = int(cell / n_);
        return {fine_node(i, j), fine_node(i + 1, j), fine_node(i + 1, j + 1), fine_node(i, j + 1)};
    }
    NodeKind node_kind(Index node) const { return node_kind_[std::size_t(node)]; }
    bool is_dirichlet(Index node) const { return node_kind(node) == NodeKind::dirichlet; }
    const std::vector<BoundarySegment>& boundary_segments() const { return segments_; }

    /// Fine nodes lying on a coarse grid line and not on Gamma1.
    bool is_skeleton_node(Index node) const
    {
        auto [i, j] = fine_node_position(node);
        return (i % refine_ == 0 || j % refine_ == 0) && !is_dirichlet(node);
    }

    // ---- coarse entities ----------------------------------------------------

    Index element_count() const { return Index(nc_) * nc_; }
    Index element(int I, int J) const { return Index(J) * nc_ + I; }
    std::array<int, 2> element_position(Index T) const { return {int(T % nc_), int(T / nc_)}; }

    /// Fine cells of a coarse element, row-major.
    std::vector<Index> element_cells(Index T) const
    {
        auto [I, J] = element_position(T);
        std::vector<Index> cells;
        cells.reserve(std::size_t(refine_) * refine_);
        for (int j = J * refine_; j < (J + 1) * refine_; ++j)
            for (int i = I * refine_; i < (I + 1) * refine_; ++i)
                cells.push_back(fine_cell(i, j));
        return cells;
    }

    /// True if the closure of the element meets Gamma1 in more than nothing.
    bool element_touches_dirichlet(Index T) const
    {
        auto [I, J] = element_position(T);
        for (int j = J * refine_; j <= (J + 1) * refine_; ++j)
            for (int i = I * refine_; i <= (I + 1) * refine_; ++i)
                if (is_dirichlet(fine_node(i, j)))
                    return true;
        return false;
    }

    Index coarse_node_count() const { return Index(nc_ + 1) * (nc_ + 1); }
    Index coarse_node(int I, int J) const { return Index(J) * (nc_ + 1) + I; }
    Index coarse_node_fine_id(Index x) const
    {
        const int I = int(x % (nc_ + 1)), J = int(x / (nc_ + 1));
        return fine_node(I * refine_, J * refine_);
    }
    bool coarse_node_active(Index x) const { return !is_dirichlet(coarse_node_fine_id(x)); }
    const std::vector<Index>& active_nodes() const { return active_nodes_; }

    /// Coarse elements having x as a corner.
    std::vector<Index> node_elements(Index x) const
    {
        const int I = int(x % (nc_ + 1)), J = int(x / (nc_ + 1));
        std::vector<Index> out;
        for (int dj = -1; dj <= 0; ++dj)
            for (int di = -1; di <= 0; ++di) {
                const int a = I + di, b = J + dj;
                if (a >= 0 && a < nc_ && b >= 0 && b < nc_)
                    out.push_back(element(a, b));
            }
        return out;
    }

    Index edge_count() const { return Index(edges_.size()); }
    const CoarseEdge& edge(Index e) const
    {
        if (e < 0 || e >= edge_count())
            throw std::out_of_range("unknown coarse edge id " + std::to_string(e));
        return edges_[std::size_t(e)];
    }
    const std::vector<CoarseEdge>& edges() const { return edges_; }
    const std::vector<Index>& active_edges() const { return active_edges_; }
    Index interior_edge_count() const
    {
        return std::count_if(edges_.begin(), edges_.end(), [](const CoarseEdge& e) { return !e.on_boundary; });
    }

    /// Fine nodes along e in coordinate order; refine + 1 entries.
    std::vector<TraceNode> edge_trace_nodes(Index e) const
    {
        const CoarseEdge& ed = edge(e);
        std::vector<TraceNode> out;
        out.reserve(std::size_t(refine_) + 1);
        for (int k = 0; k <= refine_; ++k) {
            const Index node = ed.orientation == Orientation::horizontal
                                   ? fine_node(ed.i * refine_ + k, ed.j * refine_)
                                   : fine_node(ed.i * refine_, ed.j * refine_ + k);
            out.push_back({node, k == 0 || k == refine_, is_dirichlet(node)});
        }
        return out;
    }

    /// Union of coarse elements whose closure meets e, grown by further
    /// layers of neighbours when oversampling_layers > 1; clipped to the
    /// domain. Sorted by element id.
    std::vector<Index> oversampling_domain(Index e) const
    {
        const CoarseEdge& ed = edge(e);
        if (!ed.active)
            throw std::invalid_argument("edge " + std::to_string(e) + " is not an active skeleton edge");
        int i0, i1, j0, j1;
        const int L = layers_;
        if (ed.orientation == Orientation::horizontal) {
            i0 = ed.i - L; i1 = ed.i + L;
            j0 = ed.j - L; j1 = ed.j - 1 + L;
        } else {
            i0 = ed.i - L; i1 = ed.i - 1 + L;
            j0 = ed.j - L; j1 = ed.j + L;
        }
        i0 = std::max(i0, 0); j0 = std::max(j0, 0);
        i1 = std::min(i1, nc_ - 1); j1 = std::min(j1, nc_ - 1);
        std::vector<Index> out;
        for (int J = j0; J <= j1; ++J)
            for (int I = i0; I <= i1; ++I)
                out.push_back(element(I, J));
        return out;
    }

private:
    void classify_fine_nodes()
    {
        node_kind_.assign(std::size_t(fine_node_count()), NodeKind::interior);
        for (int j = 0; j <= n_; ++j)
            for (int i = 0; i <= n_; ++i) {
                const bool bottom = j == 0, top = j == n_, left = i == 0, right = i == n_;
                if (!(bottom || top || left || right))
                    continue;
                NodeKind kind = NodeKind::dirichlet;
                if (layout_ == BoundaryLayout::mixed && !bottom)
                    kind = NodeKind::gamma2;
                node_kind_[std::size_t(fine_node(i, j))] = kind;
            }
    }

    SegmentKind side_kind(int side) const // 0 bottom, 1 right, 2 top, 3 left
    {
        if (layout_ == BoundaryLayout::all_dirichlet || side == 0)
            return SegmentKind::dirichlet;
        return side == 2 ? SegmentKind::neumann : SegmentKind::robin;
    }

    void build_boundary_segments()
    {
        const double hh = h();
        for (int k = 0; k < n_; ++k) {
            segments_.push_back({fine_node(k, 0), fine_node(k + 1, 0), side_kind(0), {(k + 0.5) * hh, 0.0}});
            segments_.push_back({fine_node(n_, k), fine_node(n_, k + 1), side_kind(1), {1.0, (k + 0.5) * hh}});
            segments_.push_back({fine_node(k, n_), fine_node(k + 1, n_), side_kind(2), {(k + 0.5) * hh, 1.0}});
            segments_.push_back({fine_node(0, k), fine_node(0, k + 1), side_kind(3), {0.0, (k + 0.5) * hh}});
        }
    }

    void build_coarse_entities()
    {
        for (Index x = 0; x < coarse_node_count(); ++x)
            if (coarse_node_active(x))
                active_nodes_.push_back(x);

        auto add_edge = [&](Orientation o, int I, int J) {
            CoarseEdge ed;
            ed.id = Index(edges_.size());
            ed.orientation = o;
            ed.i = I;
            ed.j = J;
            if (o == Orientation::horizontal) {
                ed.nodes = {coarse_node(I, J), coarse_node(I + 1, J)};
                ed.on_boundary = J == 0 || J == nc_;
                if (J > 0) ed.elements.push_back(element(I, J - 1));
                if (J < nc_) ed.elements.push_back(element(I, J));
            } else {
                ed.nodes = {coarse_node(I, J), coarse_node(I, J + 1)};
                ed.on_boundary = I == 0 || I == nc_;
                if (I > 0) ed.elements.push_back(element(I - 1, J));
                if (I < nc_) ed.elements.push_back(element(I, J));
            }
            // An edge is inactive iff it lies on Gamma1; its midpoint node
            // decides since the whole side shares one condition.
            const Index mid = o == Orientation::horizontal ? fine_node(I * refine_ + refine_ / 2, J * refine_)
                                                           : fine_node(I * refine_, J * refine_ + refine_ / 2);
            ed.active = !ed.on_boundary || node_kind(mid) == NodeKind::gamma2;
            if (ed.active)
                active_edges_.push_back(ed.id);
            edges_.push_back(std::move(ed));
        };
        for (int J = 0; J <= nc_; ++J)
            for (int I = 0; I < nc_; ++I)
                add_edge(Orientation::horizontal, I, J);
        for (int J = 0; J < nc_; ++J)
            for (int I = 0; I <= nc_; ++I)
                add_edge(Orientation::vertical, I, J);
    }

    int nc_;
    int refine_;
    int n_;
    BoundaryLayout layout_;
    int layers_;
    std::vector<NodeKind> node_kind_;
    std::vector<BoundarySegment> segments_;
    std::vector<CoarseEdge> edges_;
    std::vector<Index> active_edges_;
    std::vector<Index> active_nodes_;
};

} // namespace expmsfem
