#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "fcm/carleman.hpp"
#include "fcm/errors.hpp"
#include "fcm/model.hpp"
#include "fcm/pde.hpp"

namespace fcm {

/** Discretized penalized control problem for the analytic (fully actuated)
 *  stage: the m-component control v acts through the cutoff theta on every
 *  equation, weighted by rho.  Precomputes the weight tables on the grid.
 */
struct HumProblem {
    CoupledSystem sys;
    Grid grid;
    DiscreteOperator opd;
    CarlemanWeights weights;
    CutoffFamily cutoffs;
    double K = 0.5;  ///< exponent for the regularity diagnostic

    Eigen::VectorXd theta;  ///< cutoff per spatial node
    Eigen::MatrixXd rho;    ///< rho(t_k, x_i), rows k = 0..Nt

    double rho_theta2(int k, int i) const { return rho(k, i) * theta(i) * theta(i); }
};

inline HumProblem make_hum_problem(const CoupledSystem& sys, const Grid& grid,
                                   const CarlemanWeights& weights, const CutoffFamily& cutoffs,
                                   double K = 0.5) {
    HumProblem prob{sys, grid, assemble(sys, grid), weights, cutoffs, K,
                    Eigen::VectorXd(grid.Nx), Eigen::MatrixXd(grid.Nt + 1, grid.Nx)};
    for (int i = 0; i < grid.Nx; ++i) prob.theta(i) = cutoffs.theta(grid.x(i));
    for (int k = 0; k <= grid.Nt; ++k)
        for (int i = 0; i < grid.Nx; ++i)
            prob.rho(k, i) = (k == 0 || k == grid.Nt) ? 0.0 : eval_rho(weights, grid.t(k), grid.x(i));
    return prob;
}

/// Zero-control trajectory from y0; its terminal slice feeds the Gramian equation.
inline TrajectoryField free_solution(const HumProblem& prob, const Eigen::VectorXd& y0) {
    return solve_forward(prob.opd, y0);
}

namespace detail {

/// Control field v = -rho theta psi on the whole grid.
inline TrajectoryField control_from_adjoint(const HumProblem& prob, const TrajectoryField& psi) {
    TrajectoryField v(prob.grid, prob.sys.m);
    for (int k = 0; k <= prob.grid.Nt; ++k)
        for (int p = 0; p < prob.sys.m; ++p)
            for (int i = 0; i < prob.grid.Nx; ++i)
                v.at(k, p, i) = -prob.rho(k, i) * prob.theta(i) * psi.at(k, p, i);
    return v;
}

/** Forward solve from y0 with source theta * v, where the implicit step k
 *  carries the control frame k-1.  That index pairing is the transpose of
 *  the adjoint march, which keeps the Gramian exactly symmetric and the
 *  discrete cost identity exact.
 */
inline TrajectoryField forward_with_control(const HumProblem& prob, const Eigen::VectorXd& y0,
                                            const TrajectoryField& v) {
    Eigen::VectorXd scratch(prob.sys.m * prob.grid.Nx);
    return detail::march_forward(prob.opd, y0, [&](int k) -> const Eigen::VectorXd* {
        const Eigen::VectorXd& vk = v.frame(k - 1);
        for (int p = 0; p < prob.sys.m; ++p)
            for (int i = 0; i < prob.grid.Nx; ++i)
                scratch(p * prob.grid.Nx + i) = prob.theta(i) * vk(p * prob.grid.Nx + i);
        return &scratch;
    });
}

}  // namespace detail

/** One Gramian application: psi solves the adjoint with psi(T) = phiT,
 *  v = -rho theta psi, and y solves the primal from zero initial data with
 *  source theta v; returns y(T).  The map phiT -> -y(T) is symmetric
 *  positive semi-definite in the discrete inner product.
 */
inline Eigen::VectorXd gramian_apply(const HumProblem& prob, const Eigen::VectorXd& phiT) {
    TrajectoryField psi = solve_adjoint(prob.opd, phiT);
    TrajectoryField v = detail::control_from_adjoint(prob, psi);
    TrajectoryField y = detail::forward_with_control(prob, Eigen::VectorXd::Zero(phiT.size()), v);
    return y.frame(prob.grid.Nt);
}

struct PenaltyRun {
    double k = 0.0;
    TrajectoryField v;    ///< fictitious control, m components
    TrajectoryField y;    ///< controlled state
    TrajectoryField psi;  ///< adjoint state, psi(T) = k y(T)
    double Jk = 0.0;
    double terminal_norm = 0.0;
    double weighted_control_norm = 0.0;  ///< int rho^{-1} |v|^2 = int rho theta^2 |psi|^2
    double regularity_weighted_norm = 0.0;  ///< int e^{2 K s1 alpha*} |v|^2
    int cg_iters = 0;
    double cg_residual = 0.0;
    bool converged = false;
    double closure_defect = 0.0;  ///< |phiT - k y(T)| / |phiT|
};

/// CG stagnation carrying what was computed so far.
struct CgNotConverged : Error {
    PenaltyRun partial;
    CgNotConverged(std::string msg, PenaltyRun run) : Error(std::move(msg)), partial(std::move(run)) {}
};

namespace detail {

struct CgResult {
    Eigen::VectorXd x;
    int iters = 0;
    double rel_residual = 0.0;
    bool converged = false;
};

/** Plain conjugate gradient on a PSD operator.  Besides the relative
 *  residual, an optional closure criterion k |r| <= 5 tol |x| is enforced
 *  so that the reconstructed optimality closure |phiT - k y(T)| / |phiT|
 *  lands below 10 tol.
 */
inline CgResult conjugate_gradient(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& A,
                                   const Eigen::VectorXd& b, double tol, int max_iters,
                                   double closure_k = 0.0) {
    CgResult res;
    res.x = Eigen::VectorXd::Zero(b.size());
    const double bnorm = b.norm();
    if (bnorm == 0.0) {
        res.converged = true;
        return res;
    }
    Eigen::VectorXd r = b, p = b;
    double rs = r.squaredNorm();
    for (int it = 0; it < max_iters; ++it) {
        Eigen::VectorXd Ap = A(p);
        const double pAp = p.dot(Ap);
        if (!(pAp > 0.0)) break;  // lost positivity, stop with what we have
        const double alpha = rs / pAp;
        res.x += alpha * p;
        r -= alpha * Ap;
        const double rs_new = r.squaredNorm();
        res.iters = it + 1;
        res.rel_residual = std::sqrt(rs_new) / bnorm;
        const double rnorm = std::sqrt(rs_new);
        const bool closure_ok =
            closure_k <= 0.0 || closure_k * rnorm <= 5.0 * tol * res.x.norm();
        if (res.rel_residual <= tol && closure_ok) {
            res.converged = true;
            return res;
        }
        p = r + (rs_new / rs) * p;
        rs = rs_new;
    }
    res.rel_residual = r.norm() / bnorm;
    return res;
}

}  // namespace detail

/** Minimizes J_k(v) = 1/2 int rho^{-1}|v|^2 + k/2 |y(T)|^2 by conjugate
 *  gradient on the normal equation (G + k^{-1} I) phiT = y_free(T), where
 *  G(phiT) = -gramian_apply(phiT) is symmetric PSD.  At the solution
 *  phiT = k y(T) and v = -rho theta psi.
 */
inline PenaltyRun solve_penalized(const HumProblem& prob, const Eigen::VectorXd& y0, double k,
                                  double cg_tol = 1e-10, int cg_max = 5000,
                                  bool throw_on_stagnation = true) {
    if (!(k > 0.0)) throw Error("solve_penalized: penalty k must be positive");
    const Grid& g = prob.grid;
    TrajectoryField yfree = free_solution(prob, y0);
    const Eigen::VectorXd b = yfree.frame(g.Nt);

    auto A = [&](const Eigen::VectorXd& w) -> Eigen::VectorXd {
        return -gramian_apply(prob, w) + w / k;
    };
    detail::CgResult cg = detail::conjugate_gradient(A, b, cg_tol, cg_max, k);

    PenaltyRun run;
    run.k = k;
    run.cg_iters = cg.iters;
    run.cg_residual = cg.rel_residual;
    run.converged = cg.converged;
    run.psi = solve_adjoint(prob.opd, cg.x);
    run.v = detail::control_from_adjoint(prob, run.psi);
    run.y = detail::forward_with_control(prob, y0, run.v);
    run.terminal_norm = run.y.frame_norm(g.Nt);

    double wcn = 0.0;
    for (int kk = 0; kk < g.Nt; ++kk) {
        double s = 0.0;
        for (int p = 0; p < prob.sys.m; ++p)
            for (int i = 0; i < g.Nx; ++i) {
                const double ps = run.psi.at(kk, p, i);
                s += prob.rho_theta2(kk, i) * ps * ps;
            }
        wcn += g.dt() * g.dx() * s;
    }
    run.weighted_control_norm = wcn;
    run.Jk = 0.5 * wcn + 0.5 * k * run.terminal_norm * run.terminal_norm;

    const double phi_norm = cg.x.norm();
    run.closure_defect =
        phi_norm > 0.0 ? (cg.x - k * run.y.frame(g.Nt)).norm() / phi_norm : 0.0;

    // int e^{2 K s1 alpha*} |v|^2, in log space; v vanishes where rho snapped
    double reg = 0.0;
    for (int kk = 1; kk < g.Nt; ++kk) {
        const double a_star = eval_star_weights(prob.weights, g.t(kk)).alpha;
        const double ln_w = 2.0 * prob.K * prob.weights.s1 * a_star;
        for (int p = 0; p < prob.sys.m; ++p)
            for (int i = 0; i < g.Nx; ++i) {
                const double vv = std::abs(run.v.at(kk, p, i));
                if (vv == 0.0) continue;
                reg += g.dt() * g.dx() * snap_exp(std::min(ln_w + 2.0 * std::log(vv), 700.0));
            }
    }
    run.regularity_weighted_norm = reg;

    if (!run.converged && throw_on_stagnation)
        throw CgNotConverged("solve_penalized: CG did not reach tolerance " +
                                 std::to_string(cg_tol) + " within " + std::to_string(cg_max) +
                                 " iterations",
                             run);
    return run;
}

/// |J_k - 1/2 <y0, psi(0)>| / max(J_k, eps); exact at the converged solution.
inline double cost_identity_check(const PenaltyRun& run, const Eigen::VectorXd& y0) {
    const Grid& g = run.y.grid;
    const double half_pair = 0.5 * dot_x(g, y0, run.psi.frame(0));
    const double eps = 1e-30;
    return std::abs(run.Jk - half_pair) / std::max(run.Jk, eps);
}

/// |psi(0)| / |y0|, the empirical stand-in for the adjoint-at-zero bound.
inline double adjoint_zero_bound_probe(const PenaltyRun& run, const Eigen::VectorXd& y0) {
    const Grid& g = run.y.grid;
    const double ny0 = std::sqrt(g.dx()) * y0.norm();
    if (ny0 == 0.0) return 0.0;
    return run.psi.frame_norm(0) / ny0;
}

struct ObservabilityProbe {
    int samples = 0;
    std::vector<double> ratios;  ///< |psi(0)|^2 / int_{omega_0} rho |psi|^2
    double max_ratio = 0.0;
    int inf_flags = 0;  ///< draws whose denominator underflowed
};

/** Ratios |psi(0)|^2 / int over (0,T) x omega_0 of rho |psi|^2 for random
 *  Gaussian terminal data; the denominator integrates over omega_0 only.
 */
inline ObservabilityProbe observability_probe(const HumProblem& prob, int samples,
                                              std::uint64_t seed = 987654321ULL) {
    ObservabilityProbe probe;
    probe.samples = samples;
    const Grid& g = prob.grid;
    const auto [w0a, w0b] = prob.cutoffs.omegas[0];
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int s = 0; s < samples; ++s) {
        Eigen::VectorXd psiT(prob.sys.m * g.Nx);
        for (int i = 0; i < psiT.size(); ++i) psiT(i) = gauss(rng);
        TrajectoryField psi = solve_adjoint(prob.opd, psiT);
        const double num = g.dx() * psi.frame(0).squaredNorm();
        double den = 0.0;
        for (int k = 0; k <= g.Nt; ++k)
            for (int i = 0; i < g.Nx; ++i) {
                const double x = g.x(i);
                if (x <= w0a || x >= w0b) continue;
                double s2 = 0.0;
                for (int p = 0; p < prob.sys.m; ++p) s2 += psi.at(k, p, i) * psi.at(k, p, i);
                den += g.dt() * g.dx() * prob.rho(k, i) * s2;
            }
        if (den < kWeightUnderflow) {
            ++probe.inf_flags;
            probe.ratios.push_back(std::numeric_limits<double>::infinity());
        } else {
            probe.ratios.push_back(num / den);
            probe.max_ratio = std::max(probe.max_ratio, num / den);
        }
    }
    return probe;
}

struct SweepReport {
    std::vector<PenaltyRun> runs;
    std::vector<double> failed_ks;
    bool terminal_nonincreasing = true;       ///< terminal norm non-increasing in k
    bool terminal_bound_ok = true;            ///< terminal_norm <= sqrt(2 J_k / k) each run
};

/// Penalty runs over an increasing k schedule; failed runs are recorded and skipped.
inline SweepReport penalty_sweep(const HumProblem& prob, const Eigen::VectorXd& y0,
                                 const std::vector<double>& ks, double cg_tol = 1e-10,
                                 int cg_max = 5000) {
    if (ks.empty()) throw Error("penalty_sweep: schedule must be nonempty");
    SweepReport rep;
    for (double k : ks) {
        try {
            rep.runs.push_back(solve_penalized(prob, y0, k, cg_tol, cg_max));
        } catch (const CgNotConverged&) {
            rep.failed_ks.push_back(k);
            continue;
        }
        const PenaltyRun& run = rep.runs.back();
        if (run.terminal_norm > std::sqrt(2.0 * run.Jk / run.k) * (1.0 + 1e-9))
            rep.terminal_bound_ok = false;
        if (rep.runs.size() >= 2) {
            const PenaltyRun& prev = rep.runs[rep.runs.size() - 2];
            if (run.terminal_norm > prev.terminal_norm * (1.0 + 1e-9))
                rep.terminal_nonincreasing = false;
        }
    }
    return rep;
}

}  // namespace fcm
