#include "fids/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <set>
#include <sstream>

#include "fids/errors.hpp"
#include "fids/hash.hpp"

namespace fids {

namespace {

constexpr double kTol = 1e-9;

std::int64_t g_size_cap = 20'000'000;

bool near(const Vec2& a, const Vec2& b, double scale = 1.0)
{
    return (a - b).norm() <= kTol * std::max(1.0, scale);
}

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

// separating-axis test for two convex polygons; true if the interiors overlap
bool interiors_overlap(const std::vector<Vec2>& a, const std::vector<Vec2>& b)
{
    auto separated_by_edges_of = [](const std::vector<Vec2>& p, const std::vector<Vec2>& q) {
        for (std::size_t e = 0; e < p.size(); ++e) {
            Vec2 d = p[(e + 1) % p.size()] - p[e];
            Vec2 axis(-d.y(), d.x());
            double pmin = 1e300, pmax = -1e300, qmin = 1e300, qmax = -1e300;
            for (auto& v : p) { pmin = std::min(pmin, axis.dot(v)); pmax = std::max(pmax, axis.dot(v)); }
            for (auto& v : q) { qmin = std::min(qmin, axis.dot(v)); qmax = std::max(qmax, axis.dot(v)); }
            double eps = kTol * std::max(1.0, axis.norm());
            if (pmax <= qmin + eps || qmax <= pmin + eps)
                return true;
        }
        return false;
    };
    return !(separated_by_edges_of(a, b) || separated_by_edges_of(b, a));
}

bool inside_convex(const std::vector<Vec2>& poly, const Vec2& x)
{
    // poly is counter-clockwise
    for (std::size_t e = 0; e < poly.size(); ++e) {
        Vec2 d = poly[(e + 1) % poly.size()] - poly[e];
        if (cross(d, x - poly[e]) < -kTol * std::max(1.0, d.norm()))
            return false;
    }
    return true;
}

struct Registered {
    std::string name;
    std::vector<Vec2> nu;
    double L;
    double tau;
    std::vector<double> decimation;
};

std::vector<Registered> registry()
{
    const double s3 = std::sqrt(3.0);
    return {
        {"gasket", {{0, 0}, {0.5, 0}, {0.25, s3 / 4}}, 2.0, 5.0, {0.0, 5.0, -1.0}},
        {"vicsek",
         {{0, 0}, {2.0 / 3, 0}, {2.0 / 3, 2.0 / 3}, {0, 2.0 / 3}, {1.0 / 3, 1.0 / 3}},
         3.0,
         15.0,
         {}},
    };
}

std::vector<Similitude> maps_of(const Registered& r)
{
    std::vector<Similitude> out;
    for (auto& v : r.nu)
        out.push_back({1.0 / r.L, Mat2::Identity(), v});
    return out;
}

struct UnionFind {
    std::vector<Node> parent;
    explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), Node{0}); }
    Node find(Node x)
    {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }
    // the smaller root wins, so roots are the least node of their class
    void unite(Node a, Node b)
    {
        a = find(a);
        b = find(b);
        if (a == b)
            return;
        if (a < b)
            parent[b] = a;
        else
            parent[a] = b;
    }
};

} // namespace

void set_size_cap(std::int64_t nodes) { g_size_cap = nodes; }
std::int64_t size_cap() { return g_size_cap; }

std::int64_t ipow(std::int64_t b, int e)
{
    std::int64_t r = 1;
    for (int i = 0; i < e; ++i)
        r *= b;
    return r;
}

int word_digit(const FractalSpec& s, std::int64_t cell, int depth, int r)
{
    return static_cast<int>((cell / ipow(s.N, depth - 1 - r)) % s.N);
}

std::int64_t extend_word(const FractalSpec& s, std::int64_t cell, int letter, int reps)
{
    for (int r = 0; r < reps; ++r)
        cell = cell * s.N + letter;
    return cell;
}

std::string word_string(const FractalSpec& s, std::int64_t cell, int depth)
{
    std::string out;
    for (int r = 0; r < depth; ++r) {
        if (r)
            out += '.';
        out += std::to_string(word_digit(s, cell, depth, r) + 1);
    }
    return out;
}

double FractalSpec::walk_dim() const { return std::log(tau) / std::log(L); }

nlohmann::json FractalSpec::to_json() const
{
    nlohmann::json maps = nlohmann::json::array();
    for (auto& v : nu)
        maps.push_back({v.x(), v.y()});
    return {{"name", name},         {"N", N},
            {"L", L},               {"k", k},
            {"translations", maps}, {"rotation", {{U(0, 0), U(0, 1)}, {U(1, 0), U(1, 1)}}},
            {"d", d},               {"r0", r0},
            {"tau", tau},           {"tau_source", tau_source},
            {"C0", c0},             {"decimation", decimation}};
}

std::string FractalSpec::hash() const
{
    std::ostringstream os;
    os.precision(17);
    os << N << ' ' << L << ' ' << tau;
    for (auto& v : nu)
        os << ' ' << v.x() << ' ' << v.y();
    for (int i = 0; i < 4; ++i)
        os << ' ' << U(i / 2, i % 2);
    return sha256_hex(os.str()).substr(0, 16);
}

std::vector<Similitude> similitudes_from_json(const nlohmann::json& j)
{
    if (!j.is_array())
        throw ConfigError("similitudes must be a list");
    std::vector<Similitude> out;
    for (auto& m : j) {
        Similitude s;
        s.scale = m.at("scale").get<double>();
        auto t = m.at("translation");
        if (!t.is_array() || t.size() != 2)
            throw NotPlanar("translation must have 2 components");
        s.translation = Vec2(t[0].get<double>(), t[1].get<double>());
        if (m.contains("rotation")) {
            auto r = m["rotation"];
            if (!r.is_array() || r.size() != 2 || r[0].size() != 2 || r[1].size() != 2)
                throw NotPlanar("rotation must be 2x2");
            s.rotation << r[0][0].get<double>(), r[0][1].get<double>(), r[1][0].get<double>(),
                r[1][1].get<double>();
        }
        out.push_back(s);
    }
    return out;
}

std::vector<std::string> preset_names()
{
    std::vector<std::string> out;
    for (auto& r : registry())
        out.push_back(r.name);
    return out;
}

std::shared_ptr<const FractalSpec> preset_spec(const std::string& name)
{
    for (auto& r : registry())
        if (r.name == name) {
            SpecOptions o;
            o.name = name;
            return build_spec(maps_of(r), o);
        }
    throw ConfigError("unknown preset '" + name + "'");
}

std::shared_ptr<const FractalSpec> build_spec(const std::vector<Similitude>& maps,
                                              const SpecOptions& opts)
{
    auto spec = std::make_shared<FractalSpec>();
    FractalSpec& s = *spec;
    s.N = static_cast<int>(maps.size());
    if (s.N < 2)
        throw AxiomViolation("N>=2");
    const double r = maps[0].scale;
    if (!(r > 0 && r < 1))
        throw AxiomViolation("contraction");
    s.L = 1.0 / r;
    s.U = maps[0].rotation;
    for (auto& m : maps) {
        if (std::abs(m.scale - r) > 1e-12)
            throw AxiomViolation("common-scale");
        if ((m.rotation - s.U).norm() > 1e-12)
            throw AxiomViolation("common-rotation");
        s.nu.push_back(m.translation);
    }
    if ((s.U.transpose() * s.U - Mat2::Identity()).norm() > 1e-9)
        throw AxiomViolation("rotation-orthogonal");
    if ((s.U - Mat2::Identity()).norm() > 1e-12)
        throw AxiomViolation("rotation-part: only U = identity is supported");
    if (s.nu[0].norm() > 1e-12)
        throw AxiomViolation("nu_1 = 0");
    s.d = std::log(static_cast<double>(s.N)) / std::log(s.L);
    if (opts.hausdorff_dim && std::abs(*opts.hausdorff_dim - s.d) > 1e-12)
        throw AxiomViolation("hausdorff-dimension");

    // fixed points x_i = nu_i / (1 - 1/L)
    std::vector<Vec2> fixed;
    for (auto& v : s.nu)
        fixed.push_back(v / (1.0 - 1.0 / s.L));
    double scale = 0;
    for (auto& f : fixed)
        scale = std::max(scale, f.norm());

    std::vector<int> essential;
    for (int a = 0; a < s.N; ++a) {
        bool ess = false;
        for (int i = 0; i < s.N && !ess; ++i)
            for (int j = 0; j < s.N && !ess; ++j) {
                if (i == j)
                    continue;
                for (int b = 0; b < s.N && !ess; ++b)
                    if (b != a && near(s.apply(i, fixed[a]), s.apply(j, fixed[b]), scale))
                        ess = true;
            }
        if (ess)
            essential.push_back(a);
    }
    s.k = static_cast<int>(essential.size());
    if (s.k < 3)
        throw AxiomViolation("k>=3");
    if (std::find(essential.begin(), essential.end(), 0) == essential.end())
        throw AxiomViolation("origin-corner: fixed point of the first map must be essential");

    Vec2 g = Vec2::Zero();
    for (int a : essential)
        g += fixed[a];
    g /= s.k;
    const double rad = (fixed[0] - g).norm();
    for (int a : essential)
        if (std::abs((fixed[a] - g).norm() - rad) > kTol * std::max(1.0, rad))
            throw AxiomViolation("regular-polygon");
    // counter-clockwise from the origin
    const double base = std::atan2(fixed[0].y() - g.y(), fixed[0].x() - g.x());
    std::vector<std::pair<double, int>> by_angle;
    for (int a : essential) {
        double ang = std::atan2(fixed[a].y() - g.y(), fixed[a].x() - g.x()) - base;
        while (ang < -1e-12)
            ang += 2 * M_PI;
        by_angle.push_back({ang, a});
    }
    std::sort(by_angle.begin(), by_angle.end());
    for (int c = 0; c < s.k; ++c) {
        double want = 2 * M_PI * c / s.k;
        if (std::abs(by_angle[c].first - want) > 1e-9)
            throw AxiomViolation("regular-polygon");
        s.corners.push_back(fixed[by_angle[c].second]);
        s.fixing_map.push_back(by_angle[c].second);
    }

    auto cell_corners = [&](int i) {
        std::vector<Vec2> out;
        for (auto& p : s.corners)
            out.push_back(s.apply(i, p));
        return out;
    };

    // level-1 gluing
    for (int i = 0; i < s.N; ++i)
        for (int j = i + 1; j < s.N; ++j)
            for (int ci = 0; ci < s.k; ++ci)
                for (int cj = 0; cj < s.k; ++cj)
                    if (near(s.apply(i, s.corners[ci]), s.apply(j, s.corners[cj]), scale))
                        s.glue.push_back({i, ci, j, cj});

    // connectivity of the level-1 cell graph
    {
        std::vector<std::vector<int>> adj(s.N);
        for (auto& gl : s.glue) {
            adj[gl.i].push_back(gl.j);
            adj[gl.j].push_back(gl.i);
        }
        std::vector<char> seen(s.N, 0);
        std::deque<int> q{0};
        seen[0] = 1;
        while (!q.empty()) {
            int c = q.front();
            q.pop_front();
            for (int o : adj[c])
                if (!seen[o]) {
                    seen[o] = 1;
                    q.push_back(o);
                }
        }
        if (std::count(seen.begin(), seen.end(), 1) != s.N)
            throw AxiomViolation("connectivity");
    }

    // nesting proxy: cells touch only at shared corners, and in at most one
    for (int i = 0; i < s.N; ++i)
        for (int j = 0; j < s.N; ++j) {
            if (i == j)
                continue;
            auto pi = cell_corners(i), pj = cell_corners(j);
            int shared = 0;
            for (auto& q : pj) {
                bool is_shared = false;
                for (auto& p : pi)
                    if (near(p, q, scale))
                        is_shared = true;
                if (is_shared)
                    ++shared;
                else if (inside_convex(pi, q))
                    throw AxiomViolation("nesting");
            }
            if (shared > 1)
                throw AxiomViolation("nesting");
        }

    // open set condition proxy at depth 2
    {
        std::vector<std::vector<Vec2>> polys;
        for (int i = 0; i < s.N; ++i)
            for (int j = 0; j < s.N; ++j) {
                std::vector<Vec2> p;
                for (auto& c : s.corners)
                    p.push_back(s.apply(i, s.apply(j, c)));
                polys.push_back(p);
            }
        for (std::size_t a = 0; a < polys.size(); ++a)
            for (std::size_t b = a + 1; b < polys.size(); ++b)
                if (interiors_overlap(polys[a], polys[b]))
                    throw AxiomViolation("open-set");
    }

    auto same_cell_set = [&](const std::vector<Vec2>& pts, int& which) {
        for (int j = 0; j < s.N; ++j) {
            auto pj = cell_corners(j);
            bool all = true;
            for (auto& p : pts) {
                bool hit = false;
                for (auto& q : pj)
                    if (near(p, q, scale))
                        hit = true;
                all = all && hit;
            }
            if (all) {
                which = j;
                return true;
            }
        }
        return false;
    };

    // symmetry: reflections in perpendicular bisectors of corner pairs
    for (int a = 0; a < s.k; ++a)
        for (int b = a + 1; b < s.k; ++b) {
            Vec2 u = (s.corners[b] - s.corners[a]).normalized();
            Vec2 m = 0.5 * (s.corners[a] + s.corners[b]);
            for (int i = 0; i < s.N; ++i) {
                std::vector<Vec2> img;
                for (auto& p : cell_corners(i))
                    img.push_back(p - 2 * (p - m).dot(u) * u);
                int which;
                if (!same_cell_set(img, which))
                    throw AxiomViolation("symmetry");
            }
        }

    // rotation permutations
    s.rot_perm.assign(s.k, std::vector<int>(s.N, -1));
    for (int j = 0; j < s.k; ++j) {
        double th = 2 * M_PI * j / s.k;
        Mat2 R;
        R << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
        for (int i = 0; i < s.N; ++i) {
            for (int t = 0; t < s.N; ++t) {
                bool ok = true;
                for (int c = 0; c < s.k && ok; ++c) {
                    Vec2 lhs = R * (s.apply(i, s.corners[c]) - g) + g;
                    ok = near(lhs, s.apply(t, s.corners[(c + j) % s.k]), scale);
                }
                if (ok) {
                    s.rot_perm[j][i] = t;
                    break;
                }
            }
            if (s.rot_perm[j][i] < 0)
                throw AxiomViolation("rotation-symmetry");
        }
    }

    s.name = opts.name;
    s.decimation = opts.decimation;
    if (opts.tau) {
        s.tau = *opts.tau;
        s.tau_source = "config";
    }
    for (auto& reg : registry()) {
        if (reg.L != s.L || reg.nu.size() != s.nu.size())
            continue;
        bool same = true;
        for (std::size_t i = 0; i < reg.nu.size(); ++i)
            same = same && near(reg.nu[i], s.nu[i]);
        if (!same)
            continue;
        if (s.name.empty())
            s.name = reg.name;
        if (!opts.tau) {
            s.tau = reg.tau;
            s.tau_source = "registry";
        }
        if (s.decimation.empty() && s.tau == reg.tau)
            s.decimation = reg.decimation;
    }
    if (!(s.tau > 1))
        throw ConfigError("time scale tau is not in the registry for this IFS; supply it in the config");
    if (s.name.empty())
        s.name = "custom";

    // r_0: brute force over V_0^<3>, ranks read in the ring K^<4>
    {
        auto frozen = std::make_shared<const FractalSpec>(s);
        LatticeGraph ring(frozen, 4, 4);
        const std::int64_t inner = ipow(s.N, 3);
        int r0 = 0;
        for (int v = 0; v < ring.num_vertices(); ++v)
            if (ring.node(v) / s.k < inner)
                r0 = std::max(r0, ring.rank(v));
        s.r0 = r0;
        if (s.k == 3 ? (r0 < 2 || r0 > 3) : r0 != 2)
            throw AxiomViolation("rank bound");
    }
    // C_0 from the vertex counts that fit under the cap
    {
        auto frozen = std::make_shared<const FractalSpec>(s);
        double c0 = 0;
        int M = 0;
        for (; M <= 5 && s.k * ipow(s.N, M) <= std::min<std::int64_t>(g_size_cap, 2'000'000); ++M) {
            LatticeGraph g(frozen, M, M);
            c0 = std::max(c0, g.num_vertices() / std::pow(s.L, M * s.d));
        }
        s.c0 = c0;
        s.c0_levels = M;
    }
    return spec;
}

// ---------------------------------------------------------------------------

LatticeGraph::LatticeGraph(std::shared_ptr<const FractalSpec> spec, int M, int n)
    : m_spec(std::move(spec)), m_M(M), m_n(n)
{
    const FractalSpec& s = *m_spec;
    if (n < 0 || M < 0)
        throw DomainError("lattice needs M >= 0 and n >= 0");
    if (static_cast<double>(s.k) * std::pow(static_cast<double>(s.N), n) >
        static_cast<double>(g_size_cap))
        throw SizeLimit("k*N^n = " + std::to_string(s.k * std::pow(double(s.N), n)) +
                        " exceeds the cap " + std::to_string(g_size_cap) +
                        "; lower n or raise caps.nodes");
    m_cells = ipow(s.N, n);
    const int k = s.k;
    const std::int64_t nodes = m_cells * k;
    UnionFind uf(static_cast<std::size_t>(nodes));

    for (int m = 0; m < n; ++m) {
        const int rest = n - m - 1;
        const std::int64_t prefixes = ipow(s.N, m);
        for (std::int64_t p = 0; p < prefixes; ++p)
            for (auto& gl : s.glue) {
                std::int64_t ca = extend_word(s, p * s.N + gl.i, s.fixing_map[gl.ci], rest);
                std::int64_t cb = extend_word(s, p * s.N + gl.j, s.fixing_map[gl.cj], rest);
                uf.unite(ca * k + gl.ci, cb * k + gl.cj);
            }
    }

    m_node_vertex.assign(static_cast<std::size_t>(nodes), -1);
    for (Node x = 0; x < nodes; ++x) {
        Node root = uf.find(x);
        if (root == x) {
            m_node_vertex[x] = static_cast<int>(m_vertex_node.size());
            m_vertex_node.push_back(x);
        }
    }
    std::vector<int> count(m_vertex_node.size(), 0);
    for (Node x = 0; x < nodes; ++x) {
        int v = m_node_vertex[uf.find(x)];
        m_node_vertex[x] = v;
        ++count[v];
    }
    m_inc_off.assign(m_vertex_node.size() + 1, 0);
    for (std::size_t v = 0; v < count.size(); ++v)
        m_inc_off[v + 1] = m_inc_off[v] + count[v];
    m_inc.resize(static_cast<std::size_t>(nodes));
    {
        std::vector<int> fill(m_inc_off.begin(), m_inc_off.end() - 1);
        for (Node x = 0; x < nodes; ++x)
            m_inc[fill[m_node_vertex[x]]++] = x;
    }

    // neighbours: corners of a common cell, one entry per cell
    std::vector<int> deg(m_vertex_node.size(), 0);
    for (std::size_t v = 0; v < count.size(); ++v)
        deg[v] = count[v] * (k - 1);
    m_nbr_off.assign(m_vertex_node.size() + 1, 0);
    for (std::size_t v = 0; v < deg.size(); ++v)
        m_nbr_off[v + 1] = m_nbr_off[v] + deg[v];
    m_nbr.resize(m_nbr_off.back());
    {
        std::vector<int> fill(m_nbr_off.begin(), m_nbr_off.end() - 1);
        for (std::int64_t c = 0; c < m_cells; ++c)
            for (int a = 0; a < k; ++a) {
                int va = m_node_vertex[c * k + a];
                for (int b = 0; b < k; ++b)
                    if (a != b)
                        m_nbr[fill[va]++] = m_node_vertex[c * k + b];
            }
        for (std::size_t v = 0; v < deg.size(); ++v)
            std::sort(m_nbr.begin() + m_nbr_off[v], m_nbr.begin() + m_nbr_off[v + 1]);
    }

    const double scale = std::pow(s.L, M);
    m_coords.resize(m_vertex_node.size());
    for (std::size_t v = 0; v < m_vertex_node.size(); ++v) {
        Node x = m_vertex_node[v];
        std::int64_t cell = x / k;
        Vec2 p = s.corners[x % k];
        for (int r = n - 1; r >= 0; --r)
            p = s.apply(word_digit(s, cell, n, r), p);
        m_coords[v] = p * scale;
    }
}

int LatticeGraph::vertex_of(std::int64_t cell, int corner) const
{
    if (cell < 0 || cell >= m_cells || corner < 0 || corner >= m_spec->k)
        throw OutOfLattice("cell " + std::to_string(cell) + " not in the region");
    return m_node_vertex[cell * m_spec->k + corner];
}

int LatticeGraph::vertex_of_node(Node node) const
{
    return vertex_of(node / m_spec->k, static_cast<int>(node % m_spec->k));
}

std::optional<int> LatticeGraph::try_find(const VertexId& x) const
{
    const FractalSpec& s = *m_spec;
    if (x.level < mesh())
        return std::nullopt;
    std::int64_t cell = x.node / s.k;
    int corner = static_cast<int>(x.node % s.k);
    cell = extend_word(s, cell, s.fixing_map[corner], x.level - mesh());
    if (cell < 0 || cell >= m_cells)
        return std::nullopt;
    return m_node_vertex[cell * s.k + corner];
}

int LatticeGraph::find(const VertexId& x) const
{
    auto v = try_find(x);
    if (!v)
        throw OutOfLattice("vertex (level " + std::to_string(x.level) + ", node " +
                           std::to_string(x.node) + ") is outside the lattice (M=" +
                           std::to_string(m_M) + ", n=" + std::to_string(m_n) + ")");
    return *v;
}

std::vector<Node> LatticeGraph::incidences(int v) const
{
    return {inc_begin(v), inc_end(v)};
}

std::vector<std::pair<int, int>> LatticeGraph::edges() const
{
    std::vector<std::pair<int, int>> out;
    for (int v = 0; v < num_vertices(); ++v) {
        int last = -1;
        for (auto it = nbr_begin(v); it != nbr_end(v); ++it)
            if (*it > v && *it != last) {
                out.push_back({v, *it});
                last = *it;
            }
    }
    return out;
}

std::vector<int> LatticeGraph::outer_corners() const
{
    std::vector<int> out;
    for (int c = 0; c < m_spec->k; ++c)
        out.push_back(vertex_of(extend_word(*m_spec, 0, m_spec->fixing_map[c], m_n), c));
    return out;
}

bool LatticeGraph::in_subcomplex(int v, int lvl) const
{
    if (lvl >= m_M)
        return true;
    const std::int64_t bound = ipow(m_spec->N, m_n - (m_M - lvl));
    for (auto it = inc_begin(v); it != inc_end(v); ++it)
        if (*it / m_spec->k < bound)
            return true;
    return false;
}

std::string LatticeGraph::address(int v) const
{
    Node x = m_vertex_node[v];
    return word_string(*m_spec, x / m_spec->k, m_n) + ":" + std::to_string(x % m_spec->k + 1);
}

nlohmann::json LatticeGraph::to_json() const
{
    nlohmann::json verts = nlohmann::json::array();
    for (int v = 0; v < num_vertices(); ++v)
        verts.push_back({{"id", address(v)},
                         {"x", m_coords[v].x()},
                         {"y", m_coords[v].y()},
                         {"rank", rank(v)}});
    nlohmann::json edges_j = nlohmann::json::array();
    for (auto& e : edges())
        edges_j.push_back({e.first, e.second});
    nlohmann::json cells = nlohmann::json::array();
    for (std::int64_t c = 0; c < m_cells; ++c)
        cells.push_back(word_string(*m_spec, c, m_n));
    return {{"spec", m_spec->to_json()}, {"M", m_M},         {"n", m_n},
            {"vertices", verts},         {"edges", edges_j}, {"cells", cells}};
}

std::shared_ptr<const LatticeGraph> enumerate_lattice(std::shared_ptr<const FractalSpec> spec,
                                                      int M, int n)
{
    return std::make_shared<const LatticeGraph>(std::move(spec), M, n);
}

namespace {

// level-M cells containing v, as prefixes of its depth-n cells
std::vector<std::int64_t> mcells_of(const LatticeGraph& g, int M, int v)
{
    const FractalSpec& s = g.spec();
    if (M < g.mesh() || M > g.level())
        throw OutOfLattice("level " + std::to_string(M) + " is not representable in the lattice");
    const std::int64_t div = ipow(s.N, M - g.mesh());
    std::vector<std::int64_t> out;
    for (auto it = g.inc_begin(v); it != g.inc_end(v); ++it)
        out.push_back(*it / s.k / div);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

} // namespace

int graph_distance(const LatticeGraph& g, int M, int x, int y)
{
    if (x < 0 || y < 0 || x >= g.num_vertices() || y >= g.num_vertices())
        throw OutOfLattice("vertex index out of range");
    if (x == y)
        return 0;
    auto cx = mcells_of(g, M, x);
    auto cy = mcells_of(g, M, y);
    std::set<std::int64_t> target(cy.begin(), cy.end());
    for (auto c : cx)
        if (target.count(c))
            return 1;
    // BFS over the graph of M-cells, adjacency through shared vertices
    const FractalSpec& s = g.spec();
    const std::int64_t ncell = ipow(s.N, g.level() - M);
    std::vector<std::vector<std::int64_t>> adj(static_cast<std::size_t>(ncell));
    for (int v = 0; v < g.num_vertices(); ++v) {
        auto cs = mcells_of(g, M, v);
        for (std::size_t a = 0; a < cs.size(); ++a)
            for (std::size_t b = 0; b < cs.size(); ++b)
                if (a != b)
                    adj[cs[a]].push_back(cs[b]);
    }
    std::vector<int> dist(static_cast<std::size_t>(ncell), -1);
    std::deque<std::int64_t> q;
    for (auto c : cx) {
        dist[c] = 0;
        q.push_back(c);
    }
    while (!q.empty()) {
        auto c = q.front();
        q.pop_front();
        if (target.count(c))
            return dist[c] + 1;
        for (auto o : adj[c])
            if (dist[o] < 0) {
                dist[o] = dist[c] + 1;
                q.push_back(o);
            }
    }
    throw OutOfLattice("no chain of complexes inside the region");
}

int rank_of(const LatticeGraph& g, int M, int v)
{
    if (v < 0 || v >= g.num_vertices())
        throw OutOfLattice("vertex index out of range");
    const FractalSpec& s = g.spec();
    auto outer = g.outer_corners();
    for (int c = 1; c < s.k; ++c)
        if (outer[c] == v && M < g.level())
            throw OutOfLattice("outer corner of the region: complexes beyond it are not materialized");
    // v must be an M-vertex: a corner of each containing M-cell
    const int below = M - g.mesh();
    for (auto it = g.inc_begin(v); it != g.inc_end(v); ++it) {
        std::int64_t cell = *it / s.k;
        int corner = static_cast<int>(*it % s.k);
        for (int r = 0; r < below; ++r)
            if (cell % s.N != s.fixing_map[corner])
                throw DomainError("vertex is not in V_M");
            else
                cell /= s.N;
    }
    return static_cast<int>(mcells_of(g, M, v).size());
}

std::int64_t vertex_count(std::shared_ptr<const FractalSpec> spec, int M)
{
    return LatticeGraph(std::move(spec), M, M).num_vertices();
}

} // namespace fids
