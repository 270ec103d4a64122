#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace fids {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

struct Similitude {
    double scale = 0.5; // contraction ratio 1/L
    Mat2 rotation = Mat2::Identity();
    Vec2 translation = Vec2::Zero();
};

// Gluing of two level-1 cells: corner ci of cell i coincides with corner cj of cell j.
struct Glue {
    int i, ci, j, cj;
};

struct FractalSpec {
    std::string name;
    int N = 0;
    double L = 0;
    int k = 0;
    std::vector<Vec2> nu;
    Mat2 U = Mat2::Identity();
    double d = 0;
    int r0 = 0;
    double tau = 0;
    std::string tau_source; // "registry" or "config"

    // essential fixed points, counter-clockwise, corners[0] is the origin
    std::vector<Vec2> corners;
    std::vector<int> fixing_map; // fixing_map[c]: the map fixing corners[c]
    std::vector<Glue> glue;
    // rot_perm[j][i]: rotation by 2*pi*j/k about the centroid sends cell i to
    // cell rot_perm[j][i], with corner c going to corner c+j.
    std::vector<std::vector<int>> rot_perm;
    // spectral decimation map R(x) = sum coef[i] x^i of the pre-renormalization
    // Neumann operator, when known (gasket: 5x - x^2)
    std::vector<double> decimation;
    double c0 = 0; // max over computed M of #V_0^<M> / L^{Md}
    int c0_levels = 0;

    Vec2 apply(int i, const Vec2& x) const { return U * x / L + nu[i]; }
    double walk_dim() const; // log tau / log L
    nlohmann::json to_json() const;
    std::string hash() const;
};

struct SpecOptions {
    std::string name;
    std::optional<double> tau;
    std::optional<double> hausdorff_dim; // checked when supplied
    std::vector<double> decimation;
};

std::shared_ptr<const FractalSpec> build_spec(const std::vector<Similitude>& maps,
                                              const SpecOptions& opts = {});
std::shared_ptr<const FractalSpec> preset_spec(const std::string& name);
std::vector<std::string> preset_names();
// similitudes from a JSON list [{scale, rotation:[[a,b],[c,d]], translation:[x,y]}]
std::vector<Similitude> similitudes_from_json(const nlohmann::json& j);

// Node = cell * k + corner. A cell is a word of `depth` letters stored as a
// base-N integer, most significant digit first; prepending letter 1 (digit 0)
// leaves the integer unchanged, which is how K^<M> sits inside K^<M+1>.
using Node = std::int64_t;

// Lattice-independent identity of a point of V_level^<inf>: the canonical node
// among the level-`level` cells containing it.
struct VertexId {
    int level = 0;
    Node node = 0;
    bool operator==(const VertexId& o) const { return level == o.level && node == o.node; }
    bool operator<(const VertexId& o) const
    {
        return level != o.level ? level < o.level : node < o.node;
    }
};

std::int64_t ipow(std::int64_t b, int e);
// digit r (0 = most significant) of a word of given depth
int word_digit(const FractalSpec& s, std::int64_t cell, int depth, int r);
// cell reached from `cell` by appending `reps` copies of letter `letter`
std::int64_t extend_word(const FractalSpec& s, std::int64_t cell, int letter, int reps);
std::string word_string(const FractalSpec& s, std::int64_t cell, int depth);

// Cap on k*N^n for lattice enumeration.
void set_size_cap(std::int64_t nodes);
std::int64_t size_cap();

class LatticeGraph {
public:
    LatticeGraph(std::shared_ptr<const FractalSpec> spec, int M, int n);

    const FractalSpec& spec() const { return *m_spec; }
    std::shared_ptr<const FractalSpec> spec_ptr() const { return m_spec; }
    int level() const { return m_M; }
    int depth() const { return m_n; }
    int mesh() const { return m_M - m_n; }
    std::int64_t num_cells() const { return m_cells; }
    int num_vertices() const { return static_cast<int>(m_vertex_node.size()); }

    int vertex_of(std::int64_t cell, int corner) const;
    int vertex_of_node(Node node) const;
    Node node(int v) const { return m_vertex_node[v]; }
    VertexId id(int v) const { return {mesh(), m_vertex_node[v]}; }
    // vertex index of a point given at this or any coarser mesh
    int find(const VertexId& x) const;
    std::optional<int> try_find(const VertexId& x) const;

    int rank(int v) const { return m_inc_off[v + 1] - m_inc_off[v]; }
    // nodes (cell*k+corner) of the depth-n cells containing v
    std::vector<Node> incidences(int v) const;
    const Node* inc_begin(int v) const { return m_inc.data() + m_inc_off[v]; }
    const Node* inc_end(int v) const { return m_inc.data() + m_inc_off[v + 1]; }
    // neighbours with multiplicity (one entry per common cell)
    const int* nbr_begin(int v) const { return m_nbr.data() + m_nbr_off[v]; }
    const int* nbr_end(int v) const { return m_nbr.data() + m_nbr_off[v + 1]; }
    int degree(int v) const { return m_nbr_off[v + 1] - m_nbr_off[v]; }
    std::vector<std::pair<int, int>> edges() const; // unique pairs i<j

    const Vec2& coord(int v) const { return m_coords[v]; }
    // the k outer corners V_M^<M>, in corner order
    std::vector<int> outer_corners() const;
    // true if v lies in the sub-complex K^<lvl> (lvl <= M)
    bool in_subcomplex(int v, int lvl) const;
    std::string address(int v) const;

    nlohmann::json to_json() const;

private:
    std::shared_ptr<const FractalSpec> m_spec;
    int m_M, m_n;
    std::int64_t m_cells;
    std::vector<int> m_node_vertex;
    std::vector<Node> m_vertex_node;
    std::vector<int> m_inc_off;
    std::vector<Node> m_inc;
    std::vector<int> m_nbr_off;
    std::vector<int> m_nbr;
    std::vector<Vec2> m_coords;
};

std::shared_ptr<const LatticeGraph> enumerate_lattice(std::shared_ptr<const FractalSpec> spec,
                                                      int M, int n);

// d_M(x,y) on the enumerated region; M may range from the lattice mesh up to
// the lattice level.
int graph_distance(const LatticeGraph& g, int M, int x, int y);
// number of M-complexes meeting at v. The region must contain every such
// complex: pass a lattice one level above the complex of interest, or the
// call throws OutOfLattice for non-origin outer corners.
int rank_of(const LatticeGraph& g, int M, int v);

// #V_0^<M>
std::int64_t vertex_count(std::shared_ptr<const FractalSpec> spec, int M);

} // namespace fids
