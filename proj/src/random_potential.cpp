#include "fids/random_potential.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "fids/errors.hpp"
#include "fids/rng.hpp"

namespace fids {

namespace {

int common_prefix(std::int64_t a, std::int64_t b, int n, const std::vector<std::int64_t>& pw)
{
    int p = 0;
    while (p < n && a / pw[n - 1 - p] == b / pw[n - 1 - p])
        ++p;
    return p;
}

std::vector<std::int64_t> powers(int N, int n)
{
    std::vector<std::int64_t> pw(std::max(n, 1) + 1, 1);
    for (std::size_t i = 1; i < pw.size(); ++i)
        pw[i] = pw[i - 1] * N;
    return pw;
}

// sum_{m >= from} k (N-1) N^{m-1} b^m: bound on W over 0-cells first met at level m
double level_tail(const FractalSpec& s, double b, int from)
{
    if (b <= 0)
        return 0;
    const double q = s.N * b;
    if (q >= 1)
        return std::numeric_limits<double>::infinity();
    return s.k * (s.N - 1.0) / s.N * std::pow(q, from) / (1 - q);
}

} // namespace

int common_level(const LatticeGraph& g, int x, int v)
{
    const FractalSpec& s = g.spec();
    const int n = g.depth();
    auto pw = powers(s.N, n);
    int best = 0;
    for (auto a = g.inc_begin(x); a != g.inc_end(x); ++a)
        for (auto b = g.inc_begin(v); b != g.inc_end(v); ++b)
            best = std::max(best, common_prefix(*a / s.k, *b / s.k, n, pw));
    return g.level() - best;
}

int containment_level(const LatticeGraph& g, int x, int v)
{
    return std::max(0, common_level(g, x, v));
}

bool in_V0(const FractalSpec& s, const VertexId& x)
{
    if (x.level >= 0)
        return true;
    std::int64_t cell = x.node / s.k;
    const int letter = s.fixing_map[x.node % s.k];
    for (int r = 0; r < -x.level; ++r, cell /= s.N)
        if (cell % s.N != letter)
            return false;
    return true;
}

// ---------------------------------------------------------------- profiles

SingleSiteProfile SingleSiteProfile::hierarchical(double c, bool zero_at_vertices)
{
    SingleSiteProfile p;
    p.kind = Kind::Hierarchical;
    p.c = c;
    p.zero_at_vertices = zero_at_vertices;
    return p;
}

SingleSiteProfile SingleSiteProfile::gasket_4pow()
{
    SingleSiteProfile p;
    p.kind = Kind::Gasket4Pow;
    return p;
}

SingleSiteProfile SingleSiteProfile::finite_range(int M0, std::vector<double> table)
{
    SingleSiteProfile p;
    p.kind = Kind::FiniteRange;
    p.M0 = M0;
    if (table.empty())
        table.assign(M0 + 1, 1.0);
    p.table = std::move(table);
    return p;
}

double SingleSiteProfile::value(int f, bool x_in_V0, int N) const
{
    switch (kind) {
    case Kind::Hierarchical:
        if (zero_at_vertices && x_in_V0)
            return 0;
        return f < static_cast<int>(table.size()) ? table[f] : std::pow(N, -c * f);
    case Kind::Gasket4Pow:
        return std::pow(4.0, -f);
    case Kind::FiniteRange:
        return f <= M0 ? table[f] : 0.0;
    case Kind::User:
        if (zero_at_vertices && x_in_V0)
            return 0;
        return f < static_cast<int>(table.size()) ? table[f] : std::pow(tail_decay, f);
    }
    return 0;
}

double SingleSiteProfile::decay(int N) const
{
    switch (kind) {
    case Kind::Hierarchical:
        return std::pow(N, -c);
    case Kind::Gasket4Pow:
        return 0.25;
    case Kind::FiniteRange:
        return 0;
    case Kind::User:
        return tail_decay;
    }
    return 0;
}

std::string SingleSiteProfile::name() const
{
    switch (kind) {
    case Kind::Hierarchical:
        return "hierarchical";
    case Kind::Gasket4Pow:
        return "gasket_4pow";
    case Kind::FiniteRange:
        return "finite_range";
    case Kind::User:
        return "user";
    }
    return "?";
}

nlohmann::json SingleSiteProfile::to_json() const
{
    nlohmann::json j{{"kind", name()}};
    if (kind == Kind::Hierarchical)
        j["c"] = c;
    if (!table.empty())
        j["table"] = table;
    if (kind == Kind::Hierarchical || kind == Kind::User)
        j["zero_at_vertices"] = zero_at_vertices;
    if (kind == Kind::FiniteRange)
        j["M0"] = M0;
    if (kind == Kind::User)
        j["tail_decay"] = tail_decay;
    if (A0)
        j["A0"] = *A0;
    if (m1)
        j["m1"] = *m1;
    return j;
}

SingleSiteProfile SingleSiteProfile::from_json(const nlohmann::json& j)
{
    const std::string kind = j.value("kind", "gasket_4pow");
    SingleSiteProfile p;
    if (kind == "hierarchical") {
        p = hierarchical(j.value("c", 2.0), j.value("zero_at_vertices", false));
        p.table = j.value("table", std::vector<double>{});
    } else if (kind == "gasket_4pow") {
        p = gasket_4pow();
    } else if (kind == "finite_range") {
        p = finite_range(j.at("M0").get<int>(), j.value("table", std::vector<double>{}));
    } else if (kind == "user") {
        p.kind = Kind::User;
        p.table = j.at("table").get<std::vector<double>>();
        p.tail_decay = j.value("tail_decay", 0.0);
        p.zero_at_vertices = j.value("zero_at_vertices", false);
    } else {
        throw ConfigError("unknown profile kind '" + kind + "'");
    }
    if (j.contains("A0"))
        p.A0 = j.at("A0").get<double>();
    if (j.contains("m1"))
        p.m1 = j.at("m1").get<int>();
    return p;
}

void SingleSiteProfile::validate(int N) const
{
    for (double t : table)
        if (!(t >= 0))
            throw ConfigError("profile table must be nonnegative");
    if (kind == Kind::Hierarchical) {
        if (!(c > 1))
            throw ConfigError("hierarchical profile needs c > 1");
        for (std::size_t m = 0; m < table.size(); ++m) {
            if (table[m] > std::pow(N, -c * m) * (1 + 1e-12))
                throw ConfigError("hierarchical table exceeds N^{-cm} at m = " + std::to_string(m));
            if (m > 0 && table[m] > table[m - 1])
                throw ConfigError("hierarchical table must be nonincreasing");
        }
    }
    if (kind == Kind::FiniteRange && (M0 < 0 || static_cast<int>(table.size()) != M0 + 1))
        throw ConfigError("finite_range profile needs M0 >= 0 and M0 + 1 table entries");
    if (kind == Kind::User && !(tail_decay >= 0))
        throw ConfigError("user profile needs tail_decay >= 0");
    if (m1 && *m1 >= 0)
        throw ConfigError("m1 must be a negative integer");
    if (A0 && !(*A0 > 0))
        throw ConfigError("A0 must be positive");
}

double eval_profile(const SingleSiteProfile& W, const LatticeGraph& g, int x, int v)
{
    if (!in_V0(g.spec(), g.id(v)))
        throw OutOfLattice("profile site must be a 0-level vertex");
    return W.value(containment_level(g, x, v), in_V0(g.spec(), g.id(x)), g.spec().N);
}

// ---------------------------------------------------------------- laws

DisorderLaw DisorderLaw::bernoulli(double p0, double a)
{
    DisorderLaw l;
    l.kind = Kind::Bernoulli;
    l.p0 = p0;
    l.a = a;
    return l;
}

DisorderLaw DisorderLaw::uniform(double b)
{
    DisorderLaw l;
    l.kind = Kind::Uniform;
    l.b = b;
    return l;
}

DisorderLaw DisorderLaw::exponential(double rate)
{
    DisorderLaw l;
    l.kind = Kind::Exponential;
    l.rate = rate;
    return l;
}

DisorderLaw DisorderLaw::user(std::vector<std::pair<double, double>> cdf)
{
    DisorderLaw l;
    l.kind = Kind::User;
    std::sort(cdf.begin(), cdf.end());
    if (cdf.empty() || cdf.front().first < 0 || std::abs(cdf.back().second - 1) > 1e-12)
        throw ConfigError("user CDF must start at x >= 0 and end at F = 1");
    for (std::size_t i = 1; i < cdf.size(); ++i)
        if (cdf[i].second < cdf[i - 1].second)
            throw ConfigError("user CDF must be nondecreasing");
    l.cdf_table = std::move(cdf);
    return l;
}

double DisorderLaw::sample(std::mt19937_64& g) const
{
    const double u = uniform01(g);
    switch (kind) {
    case Kind::Bernoulli:
        return u < p0 ? 0.0 : a;
    case Kind::Uniform:
        return b * u;
    case Kind::Exponential:
        return -std::log1p(-u) / rate;
    case Kind::User: {
        const auto& t = cdf_table;
        if (u <= t[0].second)
            return t[0].first;
        for (std::size_t i = 1; i < t.size(); ++i)
            if (u <= t[i].second) {
                double df = t[i].second - t[i - 1].second;
                return t[i - 1].first + (t[i].first - t[i - 1].first) * (u - t[i - 1].second) / df;
            }
        return t.back().first;
    }
    }
    return 0;
}

double DisorderLaw::cdf(double x) const
{
    if (x < 0)
        return 0;
    switch (kind) {
    case Kind::Bernoulli:
        return x < a ? p0 : 1.0;
    case Kind::Uniform:
        return std::min(1.0, x / b);
    case Kind::Exponential:
        return -std::expm1(-rate * x);
    case Kind::User: {
        const auto& t = cdf_table;
        if (x < t[0].first)
            return 0;
        for (std::size_t i = 1; i < t.size(); ++i)
            if (x < t[i].first)
                return t[i - 1].second +
                       (t[i].second - t[i - 1].second) * (x - t[i - 1].first) / (t[i].first - t[i - 1].first);
        return 1;
    }
    }
    return 1;
}

double DisorderLaw::mean() const
{
    switch (kind) {
    case Kind::Bernoulli:
        return (1 - p0) * a;
    case Kind::Uniform:
        return b / 2;
    case Kind::Exponential:
        return 1 / rate;
    case Kind::User: {
        // integral of 1 - F, exact on linear pieces
        const auto& t = cdf_table;
        double m = t[0].first;
        for (std::size_t i = 1; i < t.size(); ++i)
            m += (t[i].first - t[i - 1].first) * (1 - 0.5 * (t[i].second + t[i - 1].second));
        return m;
    }
    }
    return 0;
}

double DisorderLaw::variance() const
{
    switch (kind) {
    case Kind::Bernoulli:
        return p0 * (1 - p0) * a * a;
    case Kind::Uniform:
        return b * b / 12;
    case Kind::Exponential:
        return 1 / (rate * rate);
    case Kind::User: {
        // E X^2 = int 2x (1 - F), midpoint rule on each piece
        const auto& t = cdf_table;
        double m2 = t[0].first * t[0].first;
        for (std::size_t i = 1; i < t.size(); ++i) {
            const int sub = 64;
            double h = (t[i].first - t[i - 1].first) / sub;
            for (int s = 0; s < sub; ++s) {
                double x = t[i - 1].first + (s + 0.5) * h;
                m2 += 2 * x * (1 - cdf(x)) * h;
            }
        }
        double mu = mean();
        return m2 - mu * mu;
    }
    }
    return 0;
}

double DisorderLaw::sup() const
{
    switch (kind) {
    case Kind::Bernoulli:
        return p0 < 1 ? a : 0.0;
    case Kind::Uniform:
        return b;
    case Kind::Exponential:
        return std::numeric_limits<double>::infinity();
    case Kind::User:
        return cdf_table.back().first;
    }
    return 0;
}

bool DisorderLaw::nondegenerate() const { return variance() > 0; }

bool DisorderLaw::check_Q1() const
{
    if (kind == Kind::Bernoulli && !(a >= 0 && p0 >= 0 && p0 <= 1))
        return false;
    if (kind == Kind::Uniform && !(b > 0))
        return false;
    if (kind == Kind::Exponential && !(rate > 0))
        return false;
    return nondegenerate() && std::isfinite(mean());
}

bool DisorderLaw::check_Q2(double lambda0, int points) const
{
    if (!(lambda0 > 0))
        return false;
    auto max_jump = [&](int n) {
        double worst = 0, prev = cdf(lambda0 / n);
        for (int i = 2; i <= n; ++i) {
            double f = cdf(lambda0 * i / n);
            worst = std::max(worst, f - prev);
            prev = f;
        }
        return worst;
    };
    for (int i = 1; i <= points; ++i)
        if (!(cdf(lambda0 * i / points) > 0))
            return false;
    if (!(cdf(lambda0 / (100.0 * points)) > 0))
        return false;
    // a jump survives refinement, a continuous increment halves
    return max_jump(2 * points) <= 0.75 * max_jump(points) + 1e-12;
}

std::string DisorderLaw::name() const
{
    switch (kind) {
    case Kind::Bernoulli:
        return "bernoulli";
    case Kind::Uniform:
        return "uniform";
    case Kind::Exponential:
        return "exponential";
    case Kind::User:
        return "user";
    }
    return "?";
}

nlohmann::json DisorderLaw::to_json() const
{
    nlohmann::json j{{"kind", name()}};
    switch (kind) {
    case Kind::Bernoulli:
        j["p0"] = p0;
        j["a"] = a;
        break;
    case Kind::Uniform:
        j["b"] = b;
        break;
    case Kind::Exponential:
        j["rate"] = rate;
        break;
    case Kind::User:
        j["cdf"] = cdf_table;
        break;
    }
    return j;
}

DisorderLaw DisorderLaw::from_json(const nlohmann::json& j)
{
    const std::string kind = j.value("kind", "bernoulli");
    if (kind == "bernoulli")
        return bernoulli(j.value("p0", 0.5), j.value("a", 1.0));
    if (kind == "uniform")
        return uniform(j.value("b", 1.0));
    if (kind == "exponential")
        return exponential(j.value("rate", 1.0));
    if (kind == "user")
        return user(j.at("cdf").get<std::vector<std::pair<double, double>>>());
    throw ConfigError("unknown disorder law '" + kind + "'");
}

// ---------------------------------------------------------------- samples

double DisorderSample::at(const VertexId& v) const { return xi[sites->find(v)]; }

std::string DisorderSample::to_csv() const
{
    std::ostringstream os;
    os.precision(17);
    os << "vertex_id,xi\n";
    for (int v = 0; v < sites->num_vertices(); ++v)
        os << sites->address(v) << "," << xi[v] << "\n";
    return os.str();
}

DisorderSample sample_disorder(const DisorderLaw& law, std::shared_ptr<const LatticeGraph> sites,
                               std::uint64_t seed)
{
    if (sites->mesh() != 0)
        throw ConfigError("disorder lives on a 0-level lattice");
    DisorderSample s;
    s.seed = seed;
    s.sites = sites;
    s.xi.resize(sites->num_vertices());
    for (int v = 0; v < sites->num_vertices(); ++v) {
        auto g = stream(seed, static_cast<std::uint64_t>(sites->node(v)), 0x78);
        s.xi[v] = law.sample(g);
    }
    return s;
}

std::string to_string(FieldMode m) { return m == FieldMode::Free ? "free" : "periodized"; }

// ---------------------------------------------------------------- fields

PotentialKernel build_kernel(std::shared_ptr<const FractalSpec> spec, int M, int n,
                             const SingleSiteProfile& W)
{
    if (n < M)
        throw ConfigError("potential needs a lattice at mesh <= 0 (n >= M)");
    W.validate(spec->N);
    PotentialKernel k;
    k.M = M;
    k.n = n;
    k.profile = W;
    k.lattice = enumerate_lattice(spec, M, n);
    k.sites = enumerate_lattice(spec, M + 1, M + 1);
    auto common = enumerate_lattice(spec, M + 1, n + 1);
    const int nx = k.lattice->num_vertices(), ns = k.sites->num_vertices();
    std::vector<int> gs(ns);
    for (int s = 0; s < ns; ++s)
        gs[s] = common->find(k.sites->id(s));
    std::vector<Eigen::Triplet<double>> trip;
    for (int x = 0; x < nx; ++x) {
        const int gx = common->find(k.lattice->id(x));
        const bool v0 = in_V0(*spec, k.lattice->id(x));
        for (int s = 0; s < ns; ++s) {
            double w = W.value(containment_level(*common, gx, gs[s]), v0, spec->N);
            if (w != 0)
                trip.emplace_back(x, s, w);
        }
    }
    k.W.resize(nx, ns);
    k.W.setFromTriplets(trip.begin(), trip.end());

    auto fold = make_folding(spec, M, 1);
    auto base = enumerate_lattice(spec, M, M);
    k.image.resize(ns);
    for (int s = 0; s < ns; ++s)
        k.image[s] = k.sites->find(base->id(fold->project(*base, k.sites->id(s))));

    if (W.finite() && W.M0 <= M + 1) {
        k.exact = true;
        k.tail_coeff = 0;
    } else {
        k.tail_coeff = level_tail(*spec, W.decay(spec->N), M + 2);
    }
    return k;
}

Eigen::VectorXd potential_field(const PotentialKernel& k, const DisorderSample& xi, FieldMode mode,
                                double* tail_bound)
{
    if (xi.sites->level() != k.sites->level())
        throw ConfigError("disorder sample does not cover V_0 of K^<M+1>");
    const int ns = k.sites->num_vertices();
    Eigen::VectorXd x(ns);
    double sup = 0;
    for (int s = 0; s < ns; ++s) {
        x[s] = mode == FieldMode::Free ? xi.xi[s] : xi.xi[k.image[s]];
        sup = std::max(sup, x[s]);
    }
    if (tail_bound)
        *tail_bound = k.tail_coeff == 0 ? 0.0 : sup * k.tail_coeff;
    return k.W * x;
}

double field_value(const PotentialKernel& k, const DisorderSample& xi, int x, FieldMode mode)
{
    double v = 0;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(k.W, x); it; ++it)
        v += it.value() * (mode == FieldMode::Free ? xi.xi[it.col()] : xi.xi[k.image[it.col()]]);
    return v;
}

double field_value_region(const SingleSiteProfile& W, const LatticeGraph& region_fine,
                          const VertexId& x, const std::vector<std::pair<VertexId, double>>& sites)
{
    const int gx = region_fine.find(x);
    const bool v0 = in_V0(region_fine.spec(), x);
    double v = 0;
    for (auto& [site, xi] : sites)
        v += xi * W.value(containment_level(region_fine, gx, region_fine.find(site)), v0,
                          region_fine.spec().N);
    return v;
}

// ---------------------------------------------------------------- (W) proxies

nlohmann::json WReport::to_json() const
{
    nlohmann::json j{{"Mmax", Mmax},
                     {"W1", {{"pass", w1}, {"partial_sums", w1_partial_sums}, {"increment_ratio", w1_ratio}}},
                     {"W2",
                      {{"pass", w2},
                       {"equality_everywhere", w2_equality},
                       {"strict_points", w2_strict},
                       {"max_violation", w2_max_violation},
                       {"witness", w2_witness}}},
                     {"W3", {{"pass", w3}, {"terms", w3_terms}, {"rate", w3_rate}, {"partial_sum", w3_partial_sum}}}};
    j["W4"] = w4 ? nlohmann::json(*w4) : nlohmann::json("not claimed");
    j["W5"] = w5 ? nlohmann::json(*w5) : nlohmann::json("not claimed");
    if (!w5_witness.empty())
        j["W5_witness"] = w5_witness;
    return j;
}

namespace {

double geometric_ratio(const std::vector<double>& v, int last)
{
    // mean log ratio over the last `last` consecutive positive pairs
    double acc = 0;
    int cnt = 0;
    for (int i = static_cast<int>(v.size()) - 1; i >= 1 && cnt < last; --i) {
        if (v[i - 1] <= 0)
            break;
        if (v[i] <= 0)
            return 0;
        acc += std::log(v[i] / v[i - 1]);
        ++cnt;
    }
    return cnt ? std::exp(acc / cnt) : 0.0;
}

} // namespace

WReport verify_W_conditions(std::shared_ptr<const FractalSpec> spec, const SingleSiteProfile& W,
                            int Mmax)
{
    const FractalSpec& s = *spec;
    W.validate(s.N);
    WReport rep;
    rep.Mmax = Mmax;

    // (W1): a_v = max over x in K^<m-2> (mesh -1) for the 0-level vertices first met in K^<m>
    {
        double total = 0;
        std::vector<double> incr;
        for (int m = 0; m <= Mmax + 2; ++m) {
            auto G = enumerate_lattice(spec, m, m + 1);
            const int xl = std::max(m - 2, 0);
            std::vector<int> xs, vs;
            for (int v = 0; v < G->num_vertices(); ++v) {
                if (G->in_subcomplex(v, xl))
                    xs.push_back(v);
                if (in_V0(s, G->id(v)) && (m == 0 || !G->in_subcomplex(v, m - 1)))
                    vs.push_back(v);
            }
            double add = 0;
            for (int v : vs) {
                double av = 0;
                for (int x : xs)
                    av = std::max(av, eval_profile(W, *G, x, v));
                add += av;
            }
            total += add;
            incr.push_back(add);
            rep.w1_partial_sums.push_back(total);
        }
        rep.w1_ratio = geometric_ratio(incr, 3);
        rep.w1 = rep.w1_ratio < 1 - 1e-9 && std::isfinite(total);
    }

    // (W2): x over K^<M+1> at mesh -1; both sides share every site outside K^<M+2>
    {
        rep.w2 = true;
        rep.w2_equality = true;
        for (int M = 0; M <= Mmax; ++M) {
            auto G = enumerate_lattice(spec, M + 2, M + 3);
            auto X = enumerate_lattice(spec, M + 1, M + 2);
            auto target = enumerate_lattice(spec, M, M + 1);
            auto base = enumerate_lattice(spec, M, M);
            auto region = enumerate_lattice(spec, M + 2, M + 2);
            auto fold = make_folding(spec, M, 2);
            std::vector<std::vector<int>> pre(base->num_vertices());
            for (int y = 0; y < base->num_vertices(); ++y)
                for (auto [v, r] : fold->preimages(*region, base->id(y)))
                    pre[y].push_back(G->find(region->id(v)));
            for (int x = 0; x < X->num_vertices(); ++x) {
                const int gx = G->find(X->id(x));
                const int gp = G->find(target->id(fold->project(*target, X->id(x))));
                for (int y = 0; y < base->num_vertices(); ++y) {
                    double lhs = 0, rhs = 0;
                    for (int v : pre[y]) {
                        lhs += eval_profile(W, *G, gp, v);
                        rhs += eval_profile(W, *G, gx, v);
                    }
                    const double tol = 1e-12 * std::max(1.0, std::abs(rhs));
                    if (lhs - rhs > tol) {
                        if (lhs - rhs > rep.w2_max_violation) {
                            rep.w2_max_violation = lhs - rhs;
                            rep.w2_witness = "M=" + std::to_string(M) + " x=" + X->address(x) +
                                             " v=" + base->address(y);
                        }
                        rep.w2 = false;
                        rep.w2_equality = false;
                    } else if (rhs - lhs > tol) {
                        ++rep.w2_strict;
                        rep.w2_equality = false;
                    }
                }
            }
        }
    }

    // (W3): sup over x in K^<1> of the sum outside C_q(x), q = floor(M/4)
    {
        const int Q = 3;
        const double b = W.decay(s.N);
        for (int q = 0; q <= Q; ++q) {
            const int T = q + 3;
            auto G = enumerate_lattice(spec, T, T + 1);
            std::vector<int> vs;
            for (int v = 0; v < G->num_vertices(); ++v)
                if (in_V0(s, G->id(v)))
                    vs.push_back(v);
            double sup = 0;
            for (int x = 0; x < G->num_vertices(); ++x) {
                if (!G->in_subcomplex(x, 1))
                    continue;
                double sum = 0;
                for (int v : vs)
                    if (containment_level(*G, x, v) > q)
                        sum += eval_profile(W, *G, x, v);
                sup = std::max(sup, sum);
            }
            if (!(W.finite() && W.M0 <= T))
                sup += level_tail(s, b, T + 1);
            rep.w3_terms.push_back(sup);
        }
        rep.w3_rate = geometric_ratio(rep.w3_terms, Q);
        for (int M = 1; M <= 4 * Q + 3; ++M)
            rep.w3_partial_sum += rep.w3_terms[M / 4];
        rep.w3 = std::isfinite(rep.w3_partial_sum) && rep.w3_rate < 1 - 1e-9;
    }

    if (W.finite()) {
        // zero beyond range on the (W3) grid, and a bounded integral over C_{M0}(v)
        bool ok = true;
        auto G = enumerate_lattice(spec, W.M0 + 2, W.M0 + 3);
        for (int x = 0; x < G->num_vertices() && ok; ++x)
            for (int v = 0; v < G->num_vertices(); ++v)
                if (in_V0(s, G->id(v)) && containment_level(*G, x, v) > W.M0 &&
                    eval_profile(W, *G, x, v) != 0) {
                    ok = false;
                    break;
                }
        rep.w4 = ok;
    }
    if (W.A0 && W.m1) {
        bool ok = true;
        auto G = enumerate_lattice(spec, 1, 2 - *W.m1);
        for (int x = 0; x < G->num_vertices() && ok; ++x)
            for (int v = 0; v < G->num_vertices(); ++v)
                if (in_V0(s, G->id(v)) && common_level(*G, x, v) <= *W.m1 &&
                    !(eval_profile(W, *G, x, v) > *W.A0)) {
                    ok = false;
                    rep.w5_witness = "x=" + G->address(x) + " v=" + G->address(v);
                    break;
                }
        rep.w5 = ok;
    }
    return rep;
}

} // namespace fids
