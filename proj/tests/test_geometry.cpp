#include <doctest.h>

#include <cmath>
#include <deque>
#include <map>
#include <random>
#include <set>

#include "fids/errors.hpp"
#include "fids/geometry.hpp"

using namespace fids;

namespace {

// independent counter: K^<M+1> is three copies of K^<M> glued at three points
std::int64_t gasket_count_recursive(int M)
{
    return M == 0 ? 3 : 3 * gasket_count_recursive(M - 1) - 3;
}

// brute-force cell geometry from coordinates only
struct GeoCell {
    std::vector<Vec2> corners;
};

std::vector<GeoCell> geometric_cells(const FractalSpec& s, int M, int n)
{
    std::vector<GeoCell> cells{{s.corners}};
    for (int r = 0; r < n; ++r) {
        std::vector<GeoCell> next;
        for (auto& c : cells)
            for (int i = 0; i < s.N; ++i) {
                GeoCell sub;
                for (auto& p : s.corners) {
                    // affine map of the parent cell: p -> parent origin + p * size
                    Vec2 q = c.corners[0] + (s.nu[i] + p / s.L) * ((c.corners[1] - c.corners[0]).norm() /
                                                                   (s.corners[1] - s.corners[0]).norm());
                    sub.corners.push_back(q);
                }
                next.push_back(sub);
            }
        cells = next;
    }
    for (auto& c : cells)
        for (auto& p : c.corners)
            p *= std::pow(s.L, M);
    return cells;
}

int geometric_distance(const std::vector<GeoCell>& cells, const Vec2& x, const Vec2& y)
{
    auto has = [](const GeoCell& c, const Vec2& p) {
        for (auto& q : c.corners)
            if ((q - p).norm() < 1e-7)
                return true;
        return false;
    };
    if ((x - y).norm() < 1e-7)
        return 0;
    std::vector<int> dist(cells.size(), -1);
    std::deque<int> q;
    for (std::size_t i = 0; i < cells.size(); ++i)
        if (has(cells[i], x)) {
            dist[i] = 1;
            q.push_back(static_cast<int>(i));
        }
    while (!q.empty()) {
        int c = q.front();
        q.pop_front();
        if (has(cells[c], y))
            return dist[c];
        for (std::size_t o = 0; o < cells.size(); ++o) {
            if (dist[o] >= 0)
                continue;
            bool touch = false;
            for (auto& p : cells[c].corners)
                touch = touch || has(cells[o], p);
            if (touch) {
                dist[o] = dist[c] + 1;
                q.push_back(static_cast<int>(o));
            }
        }
    }
    return -1;
}

} // namespace

TEST_CASE("gasket spec constants")
{
    auto g = preset_spec("gasket");
    CHECK(g->N == 3);
    CHECK(g->L == 2.0);
    CHECK(g->k == 3);
    CHECK(g->d == doctest::Approx(std::log(3.0) / std::log(2.0)).epsilon(1e-12));
    CHECK(g->d == doctest::Approx(1.5849625).epsilon(1e-7));
    CHECK(g->r0 == 2);
    CHECK(g->tau == 5.0);
    CHECK(g->walk_dim() == doctest::Approx(2.321928).epsilon(1e-6));
    CHECK(g->corners[0].norm() < 1e-15);
}

TEST_CASE("two-map IFS has k = 2")
{
    std::vector<Similitude> maps{{0.5, Mat2::Identity(), Vec2(0, 0)}, {0.5, Mat2::Identity(), Vec2(0.5, 0)}};
    try {
        build_spec(maps);
        FAIL("expected AxiomViolation");
    } catch (const AxiomViolation& e) {
        CHECK(std::string(e.what()).find("k>=3") != std::string::npos);
    }
}

TEST_CASE("overlapping gasket-like IFS is rejected")
{
    const double s3 = std::sqrt(3.0);
    std::vector<Similitude> maps{{2.0 / 3, Mat2::Identity(), Vec2(0, 0)},
                                 {2.0 / 3, Mat2::Identity(), Vec2(1.0 / 3, 0)},
                                 {2.0 / 3, Mat2::Identity(), Vec2(1.0 / 6, s3 / 6)}};
    CHECK_THROWS_AS(build_spec(maps), AxiomViolation);
}

TEST_CASE("rotated maps are refused")
{
    const double s3 = std::sqrt(3.0);
    Mat2 R;
    R << -1, 0, 0, -1;
    std::vector<Similitude> maps{{0.5, R, Vec2(0, 0)}, {0.5, R, Vec2(0.5, 0)}, {0.5, R, Vec2(0.25, s3 / 4)}};
    CHECK_THROWS_AS(build_spec(maps), AxiomViolation);
}

TEST_CASE("non-planar input")
{
    auto j = nlohmann::json::parse(R"([{"scale":0.5,"translation":[0,0,0]}])");
    CHECK_THROWS_AS(similitudes_from_json(j), NotPlanar);
}

TEST_CASE("vicsek preset")
{
    auto v = preset_spec("vicsek");
    CHECK(v->k == 4);
    CHECK(v->N == 5);
    CHECK(v->r0 == 2);
    CHECK(v->tau == 15.0);
}

TEST_CASE("small gasket lattices")
{
    auto g = preset_spec("gasket");
    auto l00 = enumerate_lattice(g, 0, 0);
    CHECK(l00->num_vertices() == 3);
    CHECK(l00->edges().size() == 3);
    auto l01 = enumerate_lattice(g, 0, 1);
    CHECK(l01->num_vertices() == 6);
    CHECK(l01->edges().size() == 9);
    CHECK(enumerate_lattice(g, 2, 2)->num_vertices() == 15);
}

TEST_CASE("vertex counts match the recursive oracle")
{
    auto g = preset_spec("gasket");
    for (int M = 0; M <= 6; ++M) {
        auto l = enumerate_lattice(g, M, M);
        CHECK(l->num_vertices() == gasket_count_recursive(M));
        CHECK(l->num_vertices() == (ipow(3, M + 1) + 3) / 2);
        // sandwich L^{Md} <= #V <= C_0 L^{Md}
        double vol = std::pow(g->L, M * g->d);
        CHECK(l->num_vertices() >= vol - 1e-9);
        CHECK(l->num_vertices() <= g->c0 * vol + 1e-9);
        CHECK(l->num_cells() == ipow(3, M));
    }
}

TEST_CASE("degree law and edge count")
{
    for (auto name : {"gasket", "vicsek"}) {
        auto s = preset_spec(name);
        auto l = enumerate_lattice(s, 1, 3);
        std::int64_t deg_sum = 0;
        for (int v = 0; v < l->num_vertices(); ++v) {
            CHECK(l->degree(v) == (s->k - 1) * l->rank(v));
            CHECK(l->rank(v) <= s->r0);
            deg_sum += l->degree(v);
        }
        CHECK(deg_sum == l->num_cells() * s->k * (s->k - 1));
    }
}

TEST_CASE("vertex ordering is canonical and deterministic")
{
    auto g = preset_spec("gasket");
    auto a = enumerate_lattice(g, 1, 4)->to_json().dump();
    auto b = enumerate_lattice(g, 1, 4)->to_json().dump();
    CHECK(a == b);
    auto l = enumerate_lattice(g, 1, 4);
    for (int v = 1; v < l->num_vertices(); ++v)
        CHECK(l->node(v - 1) < l->node(v));
    // the canonical node is the least containing (cell, corner)
    for (int v = 0; v < l->num_vertices(); ++v)
        CHECK(l->node(v) == l->incidences(v).front());
    // distinct vertices sit at distinct points, shared corners merge
    std::set<std::pair<long, long>> pts;
    for (int v = 0; v < l->num_vertices(); ++v)
        pts.insert({std::lround(l->coord(v).x() * 1e6), std::lround(l->coord(v).y() * 1e6)});
    CHECK(pts.size() == static_cast<std::size_t>(l->num_vertices()));
}

TEST_CASE("vertex ids are stable under blow-up")
{
    auto g = preset_spec("gasket");
    auto small = enumerate_lattice(g, 2, 3);
    auto big = enumerate_lattice(g, 3, 4);
    for (int v = 0; v < small->num_vertices(); ++v) {
        int w = big->find(small->id(v));
        CHECK(big->node(w) == small->node(v));
        CHECK((big->coord(w) - small->coord(v)).norm() < 1e-12);
    }
    // coarse ids resolve in a finer lattice at the same point
    auto fine = enumerate_lattice(g, 2, 5);
    for (int v = 0; v < small->num_vertices(); ++v)
        CHECK((fine->coord(fine->find(small->id(v))) - small->coord(v)).norm() < 1e-12);
}

TEST_CASE("graph distance")
{
    auto g = preset_spec("gasket");
    auto l = enumerate_lattice(g, 1, 1);
    auto c = l->outer_corners();
    CHECK(graph_distance(*l, 0, c[0], c[0]) == 0);
    CHECK(graph_distance(*l, 0, c[0], c[1]) == 2);
    CHECK(graph_distance(*l, 1, c[0], c[1]) == 1);
    // corners of one 0-cell
    int a = l->vertex_of(0, 0), b = l->vertex_of(0, 2);
    CHECK(graph_distance(*l, 0, a, b) == 1);
}

TEST_CASE("graph distance agrees with coordinate BFS and is a metric")
{
    auto g = preset_spec("gasket");
    auto l = enumerate_lattice(g, 3, 4);
    std::mt19937 rng(7);
    std::uniform_int_distribution<int> pick(0, l->num_vertices() - 1);
    for (int M : {-1, 0, 1, 2}) {
        auto cells = geometric_cells(*g, 3, 3 - M);
        for (int t = 0; t < 60; ++t) {
            int x = pick(rng), y = pick(rng);
            int d = graph_distance(*l, M, x, y);
            // the coordinate oracle handles points that are corners of level-M cells
            bool corner_x = false, corner_y = false;
            for (auto& c : cells)
                for (auto& p : c.corners) {
                    corner_x = corner_x || (p - l->coord(x)).norm() < 1e-7;
                    corner_y = corner_y || (p - l->coord(y)).norm() < 1e-7;
                }
            if (corner_x && corner_y) {
                CHECK(d == geometric_distance(cells, l->coord(x), l->coord(y)));
            }
            CHECK(d == graph_distance(*l, M, y, x));
            CHECK((d == 0) == (x == y));
        }
    }
    int fails = 0;
    for (int t = 0; t < 10000; ++t) {
        int x = pick(rng), y = pick(rng), z = pick(rng);
        if (graph_distance(*l, 0, x, z) > graph_distance(*l, 0, x, y) + graph_distance(*l, 0, y, z))
            ++fails;
    }
    CHECK(fails == 0);
}

TEST_CASE("ranks")
{
    auto g = preset_spec("gasket");
    auto ring = enumerate_lattice(g, 2, 2);
    // origin corner of K^<1>
    CHECK(rank_of(*ring, 1, ring->outer_corners()[0]) == 1);
    // inner junctions of level 1
    auto l1 = enumerate_lattice(g, 1, 1);
    int junctions = 0;
    for (int v = 0; v < l1->num_vertices(); ++v) {
        if (l1->rank(v) == 2) {
            ++junctions;
            CHECK(rank_of(*ring, 0, ring->find(l1->id(v))) == 2);
        }
    }
    CHECK(junctions == 3);
    // non-origin outer corners are not resolvable without the ring
    CHECK_THROWS_AS(rank_of(*l1, 0, l1->outer_corners()[1]), OutOfLattice);
    // max over V_0^<3> read in K^<4>
    auto big = enumerate_lattice(g, 4, 4);
    int mx = 0;
    for (int v = 0; v < big->num_vertices(); ++v)
        if (big->in_subcomplex(v, 3))
            mx = std::max(mx, rank_of(*big, 0, v));
    CHECK(mx == 2);
}

TEST_CASE("size cap")
{
    auto g = preset_spec("gasket");
    auto old = size_cap();
    set_size_cap(100);
    CHECK_THROWS_AS(enumerate_lattice(g, 0, 5), SizeLimit);
    set_size_cap(old);
}

TEST_CASE("lattice export fields")
{
    auto g = preset_spec("gasket");
    auto j = enumerate_lattice(g, 0, 1)->to_json();
    CHECK(j["vertices"].size() == 6);
    CHECK(j["edges"].size() == 9);
    CHECK(j["cells"].size() == 3);
    CHECK(j["vertices"][0]["id"] == "1:1");
    CHECK(j["vertices"][0].contains("rank"));
}
