#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <cmath>
#include <functional>
#include <memory>
#include <ostream>
#include <vector>

#include "fcm/errors.hpp"
#include "fcm/model.hpp"

namespace fcm {

/** Uniform space-time grid on (0, L) x (0, T): Nx interior nodes, Nt steps.
 *  Dirichlet boundary values are represented implicitly as zeros.
 */
struct Grid {
    int Nx = 100;
    int Nt = 200;
    double L = 1.0;
    double T = 1.0;

    Grid() = default;
    Grid(int nx, int nt, double l, double t) : Nx(nx), Nt(nt), L(l), T(t) {
        if (Nx < 3 || Nt < 2) throw Error("Grid: need Nx >= 3 and Nt >= 2");
        if (!(L > 0) || !(T > 0)) throw Error("Grid: need positive extents");
    }

    double dx() const { return L / (Nx + 1); }
    double dt() const { return T / Nt; }
    double x(int i) const { return (i + 1) * dx(); }
    double t(int k) const { return k * dt(); }
};

/** Values of an m-vector field on the grid: frames 0..Nt, each frame a
 *  component-major vector of length m * Nx (index p * Nx + i).
 */
struct TrajectoryField {
    Grid grid;
    int m = 1;
    std::vector<Eigen::VectorXd> frames;

    TrajectoryField() = default;
    TrajectoryField(const Grid& g, int m_) : grid(g), m(m_) {
        frames.assign(static_cast<size_t>(g.Nt) + 1, Eigen::VectorXd::Zero(m_ * g.Nx));
    }

    double& at(int k, int comp, int i) {
        return frames[static_cast<size_t>(k)](comp * grid.Nx + i);
    }
    double at(int k, int comp, int i) const {
        return frames[static_cast<size_t>(k)](comp * grid.Nx + i);
    }
    Eigen::VectorXd& frame(int k) { return frames[static_cast<size_t>(k)]; }
    const Eigen::VectorXd& frame(int k) const { return frames[static_cast<size_t>(k)]; }

    /// Discrete L2 norm of a frame: sqrt(dx * sum of squares).
    double frame_norm(int k) const { return std::sqrt(grid.dx()) * frame(k).norm(); }

    double max_abs() const {
        double v = 0.0;
        for (const auto& f : frames) v = std::max(v, f.size() ? f.cwiseAbs().maxCoeff() : 0.0);
        return v;
    }
};

/// dx-weighted inner product of two stacked frames.
inline double dot_x(const Grid& g, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return g.dx() * a.dot(b);
}

/// Applies B = (Id_c ; 0) pointwise to a c-component field.
inline TrajectoryField apply_actuation(const ActuationMatrix& B, const TrajectoryField& u) {
    if (u.m != B.c) throw DimensionMismatch("apply_actuation: field must have c components");
    TrajectoryField out(u.grid, B.m);
    for (int k = 0; k <= u.grid.Nt; ++k)
        out.frame(k).head(B.c * u.grid.Nx) = u.frame(k);
    return out;
}

/** One-step implicit Euler operator for the coupled system and the exact
 *  transpose used by the adjoint march.  Centered second-order differences
 *  for diffusion and advection; Dirichlet rows are eliminated.  The step
 *  matrix I - dt*M is factorized once (constant coefficients).
 */
struct DiscreteOperator {
    Grid grid;
    int m = 1;
    Eigen::SparseMatrix<double> M;     ///< discrete div(D grad) + G.grad + A
    double peclet = 0.0;               ///< max grid Peclet number |g| dx / d
    bool peclet_warning = false;       ///< set when the Peclet number exceeds 2
    std::shared_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>> lu;   ///< of I - dt*M
    std::shared_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>> luT;  ///< of (I - dt*M)^T
};

/// Assembles the spatial operator and factorizes the implicit Euler step.
inline DiscreteOperator assemble(const CoupledSystem& sys, const Grid& grid) {
    if (sys.n != 1) throw Error("assemble: the solver is restricted to n = 1");
    const int m = sys.m, Nx = grid.Nx;
    const double dx = grid.dx(), dt = grid.dt();

    DiscreteOperator opd;
    opd.grid = grid;
    opd.m = m;

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<size_t>(m * Nx * (m + 3)));
    auto idx = [Nx](int p, int i) { return p * Nx + i; };

    for (int p = 0; p < m; ++p) {
        const double dp = sys.d(p);
        for (int i = 0; i < Nx; ++i) {
            trip.emplace_back(idx(p, i), idx(p, i), -2.0 * dp / (dx * dx));
            if (i > 0) trip.emplace_back(idx(p, i), idx(p, i - 1), dp / (dx * dx));
            if (i + 1 < Nx) trip.emplace_back(idx(p, i), idx(p, i + 1), dp / (dx * dx));
            for (int k = 0; k < m; ++k) {
                const double g = sys.g(p, k);
                if (g != 0.0) {
                    if (i > 0) trip.emplace_back(idx(p, i), idx(k, i - 1), -g / (2.0 * dx));
                    if (i + 1 < Nx) trip.emplace_back(idx(p, i), idx(k, i + 1), g / (2.0 * dx));
                }
                const double a = sys.a(p, k);
                if (a != 0.0) trip.emplace_back(idx(p, i), idx(k, i), a);
            }
        }
    }
    opd.M.resize(m * Nx, m * Nx);
    opd.M.setFromTriplets(trip.begin(), trip.end());

    double gmax = 0.0, dmin = std::numeric_limits<double>::infinity();
    for (int p = 0; p < m; ++p) {
        dmin = std::min(dmin, sys.d(p));
        for (int k = 0; k < m; ++k) gmax = std::max(gmax, std::abs(sys.g(p, k)));
    }
    opd.peclet = gmax * dx / dmin;
    opd.peclet_warning = opd.peclet > 2.0;

    Eigen::SparseMatrix<double> I(m * Nx, m * Nx);
    I.setIdentity();
    Eigen::SparseMatrix<double> step = I - dt * opd.M;
    opd.lu = std::make_shared<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
    opd.lu->compute(step);
    if (opd.lu->info() != Eigen::Success)
        throw IllConditionedStep("assemble: implicit step factorization failed");
    Eigen::SparseMatrix<double> stepT = Eigen::SparseMatrix<double>(step.transpose());
    opd.luT = std::make_shared<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
    opd.luT->compute(stepT);
    if (opd.luT->info() != Eigen::Success)
        throw IllConditionedStep("assemble: transposed step factorization failed");
    return opd;
}

namespace detail {

inline void check_finite(const Eigen::VectorXd& v, const char* where) {
    if (!v.allFinite()) throw Diverged(std::string(where) + ": non-finite values");
}

/// Forward march with a per-step source callback (step k uses source_at(k)).
inline TrajectoryField march_forward(const DiscreteOperator& opd, const Eigen::VectorXd& y0,
                                     const std::function<const Eigen::VectorXd*(int)>& source_at) {
    TrajectoryField traj(opd.grid, opd.m);
    if (y0.size() != traj.frame(0).size())
        throw DimensionMismatch("solve_forward: initial data has wrong size");
    traj.frame(0) = y0;
    const double dt = opd.grid.dt();
    for (int k = 1; k <= opd.grid.Nt; ++k) {
        Eigen::VectorXd rhs = traj.frame(k - 1);
        if (const Eigen::VectorXd* s = source_at(k)) rhs += dt * (*s);
        traj.frame(k) = opd.lu->solve(rhs);
        check_finite(traj.frame(k), "solve_forward");
    }
    return traj;
}

}  // namespace detail

/** Implicit Euler: (I - dt M) y^{k+1} = y^k + dt r^{k+1}; the full trajectory
 *  including the t = 0 slice is returned.  The source field's frame k feeds
 *  step k.
 */
inline TrajectoryField solve_forward(const DiscreteOperator& opd, const Eigen::VectorXd& y0,
                                     const TrajectoryField* source = nullptr) {
    return detail::march_forward(opd, y0, [&](int k) -> const Eigen::VectorXd* {
        return source ? &source->frame(k) : nullptr;
    });
}

/** Backward march with the exact transpose of the forward one-step map, so
 *  the discrete duality identity holds to round-off.
 */
inline TrajectoryField solve_adjoint(const DiscreteOperator& opd, const Eigen::VectorXd& psiT) {
    TrajectoryField traj(opd.grid, opd.m);
    if (psiT.size() != traj.frame(0).size())
        throw DimensionMismatch("solve_adjoint: terminal data has wrong size");
    traj.frame(opd.grid.Nt) = psiT;
    for (int k = opd.grid.Nt - 1; k >= 0; --k) {
        traj.frame(k) = opd.luT->solve(traj.frame(k + 1));
        detail::check_finite(traj.frame(k), "solve_adjoint");
    }
    return traj;
}

/** |<y(T), psi(T)> - <y0, psi(0)> - sum_k dt <r^k, psi^{k-1}>| under the
 *  discrete inner product; pure round-off with the exact-transpose adjoint.
 *  The source at step k pairs with the adjoint frame k-1, which is the
 *  pairing the one-step transposition makes exact.
 */
inline double duality_defect(const DiscreteOperator& opd, const Eigen::VectorXd& y0,
                             const TrajectoryField* source, const Eigen::VectorXd& psiT) {
    TrajectoryField y = solve_forward(opd, y0, source);
    TrajectoryField psi = solve_adjoint(opd, psiT);
    const Grid& g = opd.grid;
    double defect = dot_x(g, y.frame(g.Nt), psi.frame(g.Nt)) - dot_x(g, y0, psi.frame(0));
    if (source)
        for (int k = 1; k <= g.Nt; ++k)
            defect -= g.dt() * dot_x(g, source->frame(k), psi.frame(k - 1));
    return std::abs(defect);
}

/** Energy certificate for adjoint trajectories: with
 *  C = 2(1 + |A|_inf) + |G|_inf^2 / min eig(D), the map
 *  t_k -> exp(C t_k) |psi(t_k)|^2 must be nondecreasing (relative
 *  tolerance 1e-8).
 */
inline std::pair<double, bool> energy_certificate(const CoupledSystem& sys,
                                                  const TrajectoryField& traj) {
    double a_inf = 0.0, g_inf = 0.0;
    for (int p = 0; p < sys.m; ++p) {
        double ra = 0.0, rg = 0.0;
        for (int k = 0; k < sys.m; ++k) {
            ra += std::abs(sys.a(p, k));
            rg += sys.G[static_cast<size_t>(p)][static_cast<size_t>(k)].norm();
        }
        a_inf = std::max(a_inf, ra);
        g_inf = std::max(g_inf, rg);
    }
    double dmin = std::numeric_limits<double>::infinity();
    for (const auto& d : sys.D) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (d + d.transpose()));
        dmin = std::min(dmin, es.eigenvalues().minCoeff());
    }
    const double C = 2.0 * (1.0 + a_inf) + g_inf * g_inf / dmin;

    bool monotone = true;
    double prev = -std::numeric_limits<double>::infinity();
    for (int k = 0; k <= traj.grid.Nt; ++k) {
        double val = std::exp(C * traj.grid.t(k)) * traj.frame(k).squaredNorm() * traj.grid.dx();
        if (val < prev * (1.0 - 1e-8)) {
            monotone = false;
            break;
        }
        prev = val;
    }
    return {C, monotone};
}

/// CSV dump with columns t,x,component,value; (Nt+1) * Nx * m rows.
inline void write_csv(const TrajectoryField& f, std::ostream& os) {
    os << "t,x,component,value\n";
    for (int k = 0; k <= f.grid.Nt; ++k)
        for (int p = 0; p < f.m; ++p)
            for (int i = 0; i < f.grid.Nx; ++i)
                os << f.grid.t(k) << ',' << f.grid.x(i) << ',' << p + 1 << ',' << f.at(k, p, i)
                   << '\n';
}

}  // namespace fcm
