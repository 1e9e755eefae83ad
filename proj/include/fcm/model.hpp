#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "fcm/errors.hpp"

namespace fcm {

/** A system of m coupled parabolic equations on (0,T) x (0,L) with
 *  homogeneous Dirichlet boundary data,
 *
 *      dy/dt = div(D grad y) + G . grad y + A y + r,
 *
 *  where D = diag(d_1..d_m) with each d_p a symmetric n x n matrix,
 *  G collects the constant first-order coupling vectors g_{pk} and
 *  A the constant zero-order couplings a_{pk}.  Controls enter through
 *  r = 1_omega B u on the first c equations only.
 */
struct CoupledSystem {
    int m = 2;  ///< number of equations
    int n = 1;  ///< spatial dimension
    int c = 2;  ///< number of actuated equations, 1 <= c <= m

    std::vector<Eigen::MatrixXd> D;               ///< m diffusion matrices, n x n
    std::vector<std::vector<Eigen::VectorXd>> G;  ///< G[p][k] in R^n
    Eigen::MatrixXd A;                            ///< m x m zero-order couplings

    double T = 1.0;       ///< time horizon
    double L = 1.0;       ///< domain is (0, L) when n == 1
    double omega_a = 0.3; ///< control region (omega_a, omega_b)
    double omega_b = 0.7;

    /// Scalar diffusion coefficient of equation p (n == 1 convenience).
    double d(int p) const { return D[static_cast<size_t>(p)](0, 0); }
    /// First component of g_{pk} (n == 1 convenience).
    double g(int p, int k) const { return G[static_cast<size_t>(p)][static_cast<size_t>(k)](0); }
    double a(int p, int k) const { return A(p, k); }
};

/// Builds an m x m x n coupling tensor filled with zeros.
inline std::vector<std::vector<Eigen::VectorXd>> zero_couplings(int m, int n) {
    return std::vector<std::vector<Eigen::VectorXd>>(
        static_cast<size_t>(m),
        std::vector<Eigen::VectorXd>(static_cast<size_t>(m), Eigen::VectorXd::Zero(n)));
}

/// Convenience constructor for 1-D systems from scalar coefficient tables.
inline CoupledSystem make_system_1d(int m, int c, const std::vector<double>& d,
                                    const Eigen::MatrixXd& g_scalar, const Eigen::MatrixXd& a,
                                    double T, double L, double omega_a, double omega_b) {
    CoupledSystem sys;
    sys.m = m;
    sys.n = 1;
    sys.c = c;
    sys.D.clear();
    for (int p = 0; p < m; ++p) {
        Eigen::MatrixXd dp(1, 1);
        dp(0, 0) = d[static_cast<size_t>(p)];
        sys.D.push_back(dp);
    }
    sys.G = zero_couplings(m, 1);
    for (int p = 0; p < m; ++p)
        for (int k = 0; k < m; ++k) sys.G[static_cast<size_t>(p)][static_cast<size_t>(k)](0) = g_scalar(p, k);
    sys.A = a;
    sys.T = T;
    sys.L = L;
    sys.omega_a = omega_a;
    sys.omega_b = omega_b;
    return sys;
}

struct Finding {
    std::string label;    ///< short tag, e.g. "ellipticity"
    std::string message;
};

struct ValidationReport {
    bool ok = true;
    double ellipticity_constant = 0.0;  ///< min over p of the smallest eigenvalue of d_p
    std::vector<Finding> violations;
};

/** Checks structural well-posedness: symmetric diffusion blocks, uniform
 *  ellipticity, strictly interior control region, positive horizon.
 *  Findings are reported as data; nothing throws.
 */
inline ValidationReport validate_system(const CoupledSystem& sys) {
    constexpr double kSymTol = 1e-12;
    ValidationReport rep;
    auto flag = [&rep](const std::string& label, const std::string& msg) {
        rep.violations.push_back({label, msg});
    };

    if (sys.m < 1 || sys.n < 1) flag("dimension", "m and n must be positive");
    if (sys.c < 1 || sys.c > sys.m) flag("actuation", "actuated count c must satisfy 1 <= c <= m");
    if (static_cast<int>(sys.D.size()) != sys.m) flag("dimension", "D must hold m diffusion matrices");
    if (sys.A.rows() != sys.m || sys.A.cols() != sys.m) flag("dimension", "A must be m x m");

    double min_eig = std::numeric_limits<double>::infinity();
    for (int p = 0; p < static_cast<int>(sys.D.size()); ++p) {
        const Eigen::MatrixXd& dp = sys.D[static_cast<size_t>(p)];
        if (dp.rows() != sys.n || dp.cols() != sys.n) {
            flag("dimension", "d_" + std::to_string(p + 1) + " must be n x n");
            continue;
        }
        if ((dp - dp.transpose()).cwiseAbs().maxCoeff() > kSymTol)
            flag("symmetry", "d_" + std::to_string(p + 1) + " is not symmetric");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (dp + dp.transpose()));
        min_eig = std::min(min_eig, es.eigenvalues().minCoeff());
    }
    if (std::isfinite(min_eig)) {
        rep.ellipticity_constant = min_eig;
        if (min_eig < kSymTol)
            flag("ellipticity", "smallest diffusion eigenvalue " + std::to_string(min_eig) +
                                    " is not positive");
    }
    if (!(sys.T > 0)) flag("horizon", "T must be positive");
    if (!(sys.L > 0)) flag("domain", "L must be positive");
    if (!(0.0 < sys.omega_a && sys.omega_a < sys.omega_b && sys.omega_b < sys.L))
        flag("omega", "control region must satisfy 0 < a < b < L");

    rep.ok = rep.violations.empty();
    return rep;
}

/** Actuation shape B = (Id_c ; 0): a c-vector is injected into the first c
 *  of m components.
 */
struct ActuationMatrix {
    int m = 1;
    int c = 1;
};

/// Applies B to a control vector: first c outputs equal u, the rest are zero.
inline Eigen::VectorXd apply_actuation(const ActuationMatrix& B, const Eigen::VectorXd& u) {
    if (u.size() != B.c) throw DimensionMismatch("apply_actuation: control must have c components");
    Eigen::VectorXd out = Eigen::VectorXd::Zero(B.m);
    out.head(B.c) = u;
    return out;
}

}  // namespace fcm
