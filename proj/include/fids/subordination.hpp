#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <string>
#include <utility>
#include <vector>

#include "fids/discrete_operator.hpp"

namespace fids {

// Laplace exponent of a subordinator. Stable: lambda^a. Relativistic:
// (lambda + m^{1/a})^a - m with a = theta/d_w. Log1p is shipped as a
// Bernstein function that fails the growth condition. User: monotone table,
// linear in between, last slope beyond.
struct BernsteinFunction {
    enum class Kind { Identity, Stable, Relativistic, Log1p, User };
    Kind kind = Kind::Identity;
    double exponent = 1;  // stable / relativistic exponent
    double mass = 0;      // relativistic m
    std::vector<std::pair<double, double>> table;
    double drift = 0;     // metadata
    std::string levy;     // metadata

    static BernsteinFunction identity();
    static BernsteinFunction stable(double a);
    static BernsteinFunction relativistic(double a, double m);
    static BernsteinFunction log1p();
    static BernsteinFunction user(std::vector<std::pair<double, double>> table);

    double operator()(double lambda) const;
    std::string name() const;
    nlohmann::json to_json() const;
    static BernsteinFunction from_json(const nlohmann::json& j);
    // phi(0+) = 0, nondecreasing and concave on a 10^3 point grid; ConfigError otherwise
    void validate() const;
};

double eval_phi(const BernsteinFunction& phi, double lambda);

struct BGrid {
    double lambda0 = 1;
    double fit_lo = 1e-8;   // log-log fit on [fit_lo, fit_lo * fit_span]
    double fit_span = 100;
    int points = 1000;
    double lambda_hi = 1e6; // growth check on [lambda_hi, growth_top]
    double growth_top = 1e15;
};

struct AssumptionBReport {
    double d_w = 0;
    double exponent = 0;  // alpha / d_w
    double alpha = 0;
    double C1 = 0, C2 = 0;
    double lambda0 = 1;
    double lambda_hi = 0;
    bool log_growth = false;
    int grid_points = 0;
    nlohmann::json to_json() const;
};

// ViolatesB when no (alpha, C_1, C_2) fits or phi / log grows too slowly
AssumptionBReport check_assumption_B(const BernsteinFunction& phi, double d_w, const BGrid& grid = {});

// phi(-L) in the orthonormal coordinates W^{1/2} psi
Eigen::MatrixXd phi_of_operator(const SpectrumBundle& sb, const BernsteinFunction& phi);

// Symmetric form W^{1/2} H W^{-1/2} of H = phi(-L) + V; V indexed like sb.vertices
Eigen::MatrixXd schrodinger_matrix(const SpectrumBundle& sb, const BernsteinFunction& phi,
                                   const Eigen::VectorXd& V);

// ascending eigenvalues of a symmetric matrix
Eigen::VectorXd symmetric_eigenvalues(const Eigen::MatrixXd& H);

} // namespace fids
