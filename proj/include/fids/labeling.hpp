#pragma once

#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "fids/geometry.hpp"

namespace fids {

// Labels are corner indices 0..k-1 of K^<M> (identity seed bijection).
struct GoodLabeling {
    int order = 0;
    int extra_levels = 0; // R: the labeled region is K^<order+R>
    std::vector<int> rotation; // per M-cell of the region: index j of the rotation R_j
    std::shared_ptr<const LatticeGraph> region; // lattice with mesh = order
    std::vector<int> labels; // per vertex of `region`

    int label(int v) const { return labels[v]; }
};

struct NoGLP {
    std::string witness;
    VertexId vertex;
    std::int64_t cell_a = -1, cell_b = -1;
};

using LabelingResult = std::variant<GoodLabeling, NoGLP>;

// Constraint propagation over cell adjacency. cell_vertices[u][c] is the vertex
// at corner c of cell u; cell 0 is seeded with rotation 0. Returns rotations, or
// the first conflicting (vertex, cell, cell) triple in `conflict`.
struct PropagationConflict {
    int vertex = -1, cell_a = -1, cell_b = -1;
};
std::vector<int> propagate_rotations(int k, const std::vector<std::vector<int>>& cell_vertices,
                                     int num_vertices, PropagationConflict* conflict);

// `region` must have mesh level <= M and level >= M+1.
LabelingResult find_good_labeling(std::shared_ptr<const LatticeGraph> region, int M);

class FoldingMap {
public:
    FoldingMap(std::shared_ptr<const FractalSpec> spec, GoodLabeling labeling);

    int order() const { return m_order; }
    int extra_levels() const { return m_R; }
    const FractalSpec& spec() const { return *m_spec; }
    const GoodLabeling& labeling() const { return m_lab; }
    // rotation index of the M-cell with the given index (prefix word)
    int rotation_of(std::int64_t mcell) const;

    // pi_M(x) as a vertex of `target`, a lattice of K^<M>
    int project(const LatticeGraph& target, const VertexId& x) const;
    // the same, returned as an id at the mesh of x
    VertexId project_id(const LatticeGraph& target, const VertexId& x) const;
    // pi_{Delta}(x): the point of M-cell `mcell` with the same image as x
    int project_to_cell(const LatticeGraph& region, std::int64_t mcell, const VertexId& x) const;
    // all preimages of y (vertex of a K^<M> lattice) inside `region`, with
    // their rank in the region lattice
    std::vector<std::pair<int, int>> preimages(const LatticeGraph& region,
                                               const VertexId& y) const;

private:
    // image node (not canonical) at the mesh of x
    Node image_node(const VertexId& x, int& mesh) const;

    std::shared_ptr<const FractalSpec> m_spec;
    GoodLabeling m_lab;
    int m_order, m_R;
};

// Labels K^<M+R> and wraps the result; throws MissingFolding if there is no GLP.
std::shared_ptr<const FoldingMap> make_folding(std::shared_ptr<const FractalSpec> spec, int M,
                                               int R = 2);

} // namespace fids
