#include "fids/subordination.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>

#include "fids/errors.hpp"

namespace fids {

BernsteinFunction BernsteinFunction::identity() { return {}; }

BernsteinFunction BernsteinFunction::stable(double a)
{
    BernsteinFunction f;
    f.kind = Kind::Stable;
    f.exponent = a;
    return f;
}

BernsteinFunction BernsteinFunction::relativistic(double a, double m)
{
    BernsteinFunction f;
    f.kind = Kind::Relativistic;
    f.exponent = a;
    f.mass = m;
    return f;
}

BernsteinFunction BernsteinFunction::log1p()
{
    BernsteinFunction f;
    f.kind = Kind::Log1p;
    return f;
}

BernsteinFunction BernsteinFunction::user(std::vector<std::pair<double, double>> table)
{
    BernsteinFunction f;
    f.kind = Kind::User;
    std::sort(table.begin(), table.end());
    if (table.empty() || table.front().first != 0.0)
        table.insert(table.begin(), {0.0, 0.0});
    f.table = std::move(table);
    return f;
}

double BernsteinFunction::operator()(double x) const { return eval_phi(*this, x); }

double eval_phi(const BernsteinFunction& phi, double x)
{
    if (!(x >= 0))
        throw DomainError("phi evaluated at negative argument " + std::to_string(x));
    using K = BernsteinFunction::Kind;
    switch (phi.kind) {
    case K::Identity:
        return x;
    case K::Stable:
        return std::pow(x, phi.exponent);
    case K::Relativistic:
        return std::pow(x + std::pow(phi.mass, 1 / phi.exponent), phi.exponent) - phi.mass;
    case K::Log1p:
        return std::log1p(x);
    case K::User: {
        const auto& t = phi.table;
        if (t.size() == 1)
            return t[0].second;
        auto it = std::upper_bound(t.begin(), t.end(), std::make_pair(x, std::numeric_limits<double>::infinity()));
        std::size_t i = it == t.end() ? t.size() - 1 : static_cast<std::size_t>(it - t.begin());
        i = std::max<std::size_t>(i, 1);
        const auto& [x0, y0] = t[i - 1];
        const auto& [x1, y1] = t[i];
        return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
    }
    }
    return x;
}

std::string BernsteinFunction::name() const
{
    switch (kind) {
    case Kind::Identity:
        return "identity";
    case Kind::Stable:
        return "stable";
    case Kind::Relativistic:
        return "relativistic";
    case Kind::Log1p:
        return "log1p";
    case Kind::User:
        return "user";
    }
    return "?";
}

nlohmann::json BernsteinFunction::to_json() const
{
    nlohmann::json j{{"kind", name()}};
    if (kind == Kind::Stable || kind == Kind::Relativistic)
        j["exponent"] = exponent;
    if (kind == Kind::Relativistic)
        j["mass"] = mass;
    if (kind == Kind::User)
        j["table"] = table;
    if (drift != 0)
        j["drift"] = drift;
    if (!levy.empty())
        j["levy"] = levy;
    return j;
}

BernsteinFunction BernsteinFunction::from_json(const nlohmann::json& j)
{
    const std::string kind = j.value("kind", "identity");
    BernsteinFunction f;
    if (kind == "identity")
        f = identity();
    else if (kind == "stable")
        f = stable(j.at("exponent").get<double>());
    else if (kind == "relativistic")
        f = relativistic(j.at("exponent").get<double>(), j.at("mass").get<double>());
    else if (kind == "log1p")
        f = log1p();
    else if (kind == "user")
        f = user(j.at("table").get<std::vector<std::pair<double, double>>>());
    else
        throw ConfigError("unknown phi kind '" + kind + "'");
    f.drift = j.value("drift", 0.0);
    f.levy = j.value("levy", "");
    f.validate();
    return f;
}

void BernsteinFunction::validate() const
{
    if ((kind == Kind::Stable || kind == Kind::Relativistic) && !(exponent > 0 && exponent <= 1))
        throw ConfigError("phi exponent must lie in (0, 1], got " + std::to_string(exponent));
    if (kind == Kind::Relativistic && !(mass > 0))
        throw ConfigError("relativistic mass must be positive");
    if (std::abs(eval_phi(*this, 0.0)) > 1e-12)
        throw ConfigError("phi(0+) must vanish");
    // 10^3 points, uniform on [0, top] so the slope test is a plain second difference
    double top = kind == Kind::User && table.size() > 1 ? table.back().first * 1.5 : 100.0;
    const int n = 1000;
    const double h = top / (n - 1);
    double prev = eval_phi(*this, 0.0), prev_slope = std::numeric_limits<double>::infinity();
    for (int i = 1; i < n; ++i) {
        double y = eval_phi(*this, i * h);
        double slope = (y - prev) / h;
        const double tol = 1e-10 * std::max(1.0, std::abs(slope));
        if (slope < -tol)
            throw ConfigError(name() + " phi is not nondecreasing near " + std::to_string(i * h));
        if (slope > prev_slope + tol)
            throw ConfigError(name() + " phi is not concave near " + std::to_string(i * h));
        prev = y;
        prev_slope = slope;
    }
}

nlohmann::json AssumptionBReport::to_json() const
{
    return {{"d_w", d_w},         {"exponent", exponent}, {"alpha", alpha},     {"C1", C1},
            {"C2", C2},           {"lambda0", lambda0},   {"lambda_hi", lambda_hi},
            {"log_growth", log_growth}, {"grid_points", grid_points}};
}

AssumptionBReport check_assumption_B(const BernsteinFunction& phi, double d_w, const BGrid& grid)
{
    if (!(grid.fit_lo > 0 && grid.lambda0 > grid.fit_lo && grid.points >= 10))
        throw ConfigError("assumption (B) grid must be positive and nonempty");
    AssumptionBReport rep;
    rep.d_w = d_w;
    rep.lambda0 = grid.lambda0;
    rep.lambda_hi = grid.lambda_hi;
    rep.grid_points = grid.points;

    // slope of log phi against log lambda near 0
    const int nf = 50;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int i = 0; i < nf; ++i) {
        double x = std::log(grid.fit_lo) + std::log(grid.fit_span) * i / (nf - 1);
        double p = eval_phi(phi, std::exp(x));
        if (!(p > 0))
            throw ViolatesB("phi vanishes at " + std::to_string(std::exp(x)) + ", no power lower bound");
        double y = std::log(p);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    double s = (nf * sxy - sx * sy) / (nf * sxx - sx * sx);
    if (s > 1 && s < 1 + 1e-6)
        s = 1;
    if (!(s > 0 && s <= 1))
        throw ViolatesB("fitted exponent " + std::to_string(s) + " outside (0, 1]");
    rep.exponent = s;
    rep.alpha = s * d_w;

    rep.C1 = std::numeric_limits<double>::infinity();
    rep.C2 = 0;
    for (int i = 0; i < grid.points; ++i) {
        double x = std::exp(std::log(grid.fit_lo) + (std::log(grid.lambda0) - std::log(grid.fit_lo)) * i /
                                                        (grid.points - 1));
        double r = eval_phi(phi, x) / std::pow(x, s);
        rep.C1 = std::min(rep.C1, r);
        rep.C2 = std::max(rep.C2, r);
    }
    if (!(rep.C1 > 0 && std::isfinite(rep.C2)))
        throw ViolatesB("no two-sided power bound on (0, lambda0]");

    // phi / log must keep increasing on the high range
    const int ng = 200;
    double last = -std::numeric_limits<double>::infinity();
    rep.log_growth = true;
    for (int i = 0; i < ng; ++i) {
        double x = std::exp(std::log(grid.lambda_hi) +
                            (std::log(grid.growth_top) - std::log(grid.lambda_hi)) * i / (ng - 1));
        double r = eval_phi(phi, x) / std::log(x);
        if (r <= last * (1 + 1e-9)) {
            rep.log_growth = false;
            break;
        }
        last = r;
    }
    if (!rep.log_growth)
        throw ViolatesB("phi(lambda)/log(lambda) is not increasing beyond " + std::to_string(grid.lambda_hi));
    return rep;
}

Eigen::MatrixXd phi_of_operator(const SpectrumBundle& sb, const BernsteinFunction& phi)
{
    Eigen::VectorXd f(sb.size());
    for (int i = 0; i < sb.size(); ++i)
        f[i] = eval_phi(phi, std::max(0.0, sb.mu[i]));
    Eigen::MatrixXd S = sb.symmetric_vectors();
    return S * f.asDiagonal() * S.transpose();
}

Eigen::MatrixXd schrodinger_matrix(const SpectrumBundle& sb, const BernsteinFunction& phi,
                                   const Eigen::VectorXd& V)
{
    if (V.size() != sb.size())
        throw ConfigError("potential has " + std::to_string(V.size()) + " entries, operator " +
                          std::to_string(sb.size()));
    for (int i = 0; i < V.size(); ++i)
        if (!(V[i] >= 0))
            throw NegativePotential("V = " + std::to_string(V[i]) + " at row " + std::to_string(i));
    Eigen::MatrixXd H = phi_of_operator(sb, phi);
    H.diagonal() += V;
    return 0.5 * (H + H.transpose());
}

Eigen::VectorXd symmetric_eigenvalues(const Eigen::MatrixXd& H)
{
    if (H.rows() == 0)
        return Eigen::VectorXd();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
        throw ConvergenceFailure("dense eigensolver did not converge");
    return es.eigenvalues();
}

} // namespace fids
