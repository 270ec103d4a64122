#include "fids/labeling.hpp"

#include <algorithm>
#include <deque>

#include "fids/errors.hpp"

namespace fids {

std::vector<int> propagate_rotations(int k, const std::vector<std::vector<int>>& cell_vertices,
                                     int num_vertices, PropagationConflict* conflict)
{
    const int ncell = static_cast<int>(cell_vertices.size());
    std::vector<std::vector<std::pair<int, int>>> at(num_vertices);
    for (int u = 0; u < ncell; ++u)
        for (int c = 0; c < k; ++c)
            at[cell_vertices[u][c]].push_back({u, c});

    std::vector<int> rot(ncell, -1);
    std::vector<int> label(num_vertices, -1);
    std::vector<int> label_from(num_vertices, -1);
    rot[0] = 0;
    std::deque<int> queue{0};
    while (!queue.empty()) {
        int u = queue.front();
        queue.pop_front();
        for (int c = 0; c < k; ++c) {
            int v = cell_vertices[u][c];
            int lab = (c + rot[u]) % k;
            if (label[v] < 0) {
                label[v] = lab;
                label_from[v] = u;
            } else if (label[v] != lab) {
                if (conflict)
                    *conflict = {v, label_from[v], u};
                return {};
            }
            for (auto [o, co] : at[v])
                if (rot[o] < 0) {
                    rot[o] = ((lab - co) % k + k) % k;
                    queue.push_back(o);
                }
        }
    }
    if (std::find(rot.begin(), rot.end(), -1) != rot.end()) {
        if (conflict)
            *conflict = {-1, -1, -1};
        return {};
    }
    return rot;
}

LabelingResult find_good_labeling(std::shared_ptr<const LatticeGraph> region, int M)
{
    const FractalSpec& s = region->spec();
    const int R = region->level() - M;
    const int below = M - region->mesh();
    if (R < 1 || below < 0)
        throw OutOfLattice("labeling of order " + std::to_string(M) +
                           " needs a region of level >= M+1 and mesh <= M");
    const std::int64_t ncell = ipow(s.N, R);
    std::vector<std::vector<int>> cell_vertices(ncell, std::vector<int>(s.k));
    for (std::int64_t u = 0; u < ncell; ++u)
        for (int c = 0; c < s.k; ++c)
            cell_vertices[u][c] = region->vertex_of(extend_word(s, u, s.fixing_map[c], below), c);

    PropagationConflict conflict;
    auto rot = propagate_rotations(s.k, cell_vertices, region->num_vertices(), &conflict);
    if (rot.empty()) {
        NoGLP bad;
        if (conflict.vertex < 0) {
            bad.witness = "cell graph is disconnected";
        } else {
            bad.vertex = region->id(conflict.vertex);
            bad.cell_a = conflict.cell_a;
            bad.cell_b = conflict.cell_b;
            bad.witness = "junction " + region->address(conflict.vertex) +
                          " gets different labels from cells " + word_string(s, conflict.cell_a, R) +
                          " and " + word_string(s, conflict.cell_b, R);
        }
        return bad;
    }
    GoodLabeling lab;
    lab.order = M;
    lab.extra_levels = R;
    lab.rotation = rot;
    lab.region = region;
    lab.labels.assign(region->num_vertices(), -1);
    for (std::int64_t u = 0; u < ncell; ++u)
        for (int c = 0; c < s.k; ++c)
            lab.labels[cell_vertices[u][c]] = (c + rot[u]) % s.k;
    return lab;
}

FoldingMap::FoldingMap(std::shared_ptr<const FractalSpec> spec, GoodLabeling labeling)
    : m_spec(std::move(spec)), m_lab(std::move(labeling)), m_order(m_lab.order),
      m_R(m_lab.extra_levels)
{
}

int FoldingMap::rotation_of(std::int64_t mcell) const
{
    if (mcell < 0 || mcell >= static_cast<std::int64_t>(m_lab.rotation.size()))
        throw OutOfLattice("complex " + std::to_string(mcell) + " lies outside the labeled region K^<" +
                           std::to_string(m_order + m_R) + ">");
    return m_lab.rotation[mcell];
}

Node FoldingMap::image_node(const VertexId& x, int& mesh) const
{
    const FractalSpec& s = *m_spec;
    std::int64_t cell = x.node / s.k;
    int corner = static_cast<int>(x.node % s.k);
    mesh = x.level;
    if (mesh > m_order) {
        cell = extend_word(s, cell, s.fixing_map[corner], mesh - m_order);
        mesh = m_order;
    }
    const int len = m_order - mesh;
    const std::int64_t span = ipow(s.N, len);
    const int j = rotation_of(cell / span);
    std::int64_t w = cell % span, img = 0;
    for (int r = 0; r < len; ++r)
        img = img * s.N + s.rot_perm[j][word_digit(s, w, len, r)];
    return img * s.k + (corner + j) % s.k;
}

int FoldingMap::project(const LatticeGraph& target, const VertexId& x) const
{
    if (target.level() != m_order)
        throw OutOfLattice("projection target must be a lattice of K^<" + std::to_string(m_order) + ">");
    int mesh;
    Node img = image_node(x, mesh);
    return target.find({mesh, img});
}

VertexId FoldingMap::project_id(const LatticeGraph& target, const VertexId& x) const
{
    return target.id(project(target, x));
}

int FoldingMap::project_to_cell(const LatticeGraph& region, std::int64_t mcell,
                                const VertexId& x) const
{
    const FractalSpec& s = *m_spec;
    int mesh;
    Node img = image_node(x, mesh);
    const int len = m_order - mesh;
    const int j = rotation_of(mcell);
    // inverse rotation index
    const int jinv = (s.k - j) % s.k;
    std::int64_t w = img / s.k, pre = 0;
    for (int r = 0; r < len; ++r)
        pre = pre * s.N + s.rot_perm[jinv][word_digit(s, w, len, r)];
    int corner = static_cast<int>((img % s.k - j + s.k) % s.k);
    std::int64_t cell = mcell * ipow(s.N, len) + pre;
    return region.find({mesh, cell * s.k + corner});
}

std::vector<std::pair<int, int>> FoldingMap::preimages(const LatticeGraph& region,
                                                       const VertexId& y) const
{
    const FractalSpec& s = *m_spec;
    const int R = region.level() - m_order;
    if (R < 0)
        throw OutOfLattice("region below the folding order");
    std::vector<int> found;
    for (std::int64_t u = 0; u < ipow(s.N, R); ++u)
        found.push_back(project_to_cell(region, u, y));
    std::sort(found.begin(), found.end());
    found.erase(std::unique(found.begin(), found.end()), found.end());
    std::vector<std::pair<int, int>> out;
    for (int v : found)
        out.push_back({v, region.rank(v)});
    return out;
}

std::shared_ptr<const FoldingMap> make_folding(std::shared_ptr<const FractalSpec> spec, int M, int R)
{
    auto region = enumerate_lattice(spec, M + R, R);
    auto res = find_good_labeling(region, M);
    if (auto* bad = std::get_if<NoGLP>(&res))
        throw MissingFolding("no good labeling of order " + std::to_string(M) + ": " + bad->witness);
    return std::make_shared<const FoldingMap>(spec, std::get<GoodLabeling>(std::move(res)));
}

} // namespace fids
