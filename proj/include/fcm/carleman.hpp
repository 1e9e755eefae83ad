#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "fcm/algebra.hpp"  // binomial
#include "fcm/errors.hpp"
#include "fcm/pde.hpp"

namespace fcm {

/// Weighted quantities below this threshold snap to exact zero.
constexpr double kWeightUnderflow = 1e-300;
inline double snap_exp(double ln_value) {
    return ln_value < -690.0 ? 0.0 : std::exp(ln_value);
}

struct WeightConfig {
    double lambda = 1.0;
    double sigma = 1.0;
    int p = 0;
    std::optional<double> s0_override;  ///< stand-in for the unspecified base constant
    double K = 0.5;                     ///< regularity diagnostics exponent, in (0,1)
    double C_generic = 1.0;             ///< generic constant placeholder
    double lambda_min = 1.0;
};

// ---------------------------------------------------------------------------
// Auxiliary spatial profile eta0
// ---------------------------------------------------------------------------

/** Polynomial profile eta0(x) = scale * x^q (L-x)^q N(x) on [0, L] with
 *  q = p + 3, positive inside, vanishing at the endpoints, normalized to
 *  sup-norm one, and with its unique interior critical point at the center
 *  of the innermost cutoff region.  N is a one-sided factor (x + eps)^k or
 *  (L - x + eps)^k chosen so the log-derivative cancels exactly at the
 *  requested critical point; since every term of the log-derivative is
 *  strictly decreasing, the critical point is unique.
 */
struct EtaFunction {
    double L = 1.0;
    int q = 3;
    int k = 0;          ///< exponent of the shifting factor, 0 when centered
    double eps = 0.0;   ///< shift of the one-sided factor
    int side = 0;       ///< +1: factor (x+eps)^k, -1: factor (L-x+eps)^k
    double scale = 1.0;
    double x_crit = 0.5;
    double kappa = 0.0;     ///< min |eta0'| off the innermost region
    double sup_norm = 1.0;  ///< 1 after normalization

    double eval(double x) const {
        double nf = 1.0;
        if (side > 0) nf = std::pow(x + eps, k);
        else if (side < 0) nf = std::pow(L - x + eps, k);
        return scale * std::pow(x, q) * std::pow(L - x, q) * nf;
    }

    double deval(double x) const {
        double nf = 1.0, dnf = 0.0;
        if (side > 0) {
            nf = std::pow(x + eps, k);
            dnf = k * std::pow(x + eps, k - 1);
        } else if (side < 0) {
            nf = std::pow(L - x + eps, k);
            dnf = -k * std::pow(L - x + eps, k - 1);
        }
        const double core = std::pow(x, q) * std::pow(L - x, q);
        double dcore = 0.0;
        if (x > 0.0 && x < L)
            dcore = core * (q / x - q / (L - x));
        else if (q >= 1)
            dcore = 0.0;  // order-q zero at the endpoints
        return scale * (dcore * nf + core * dnf);
    }

    /// Power-basis coefficients of eta0 (degree 2q + k).
    std::vector<double> coefficients() const {
        auto mul = [](std::vector<double> a, const std::vector<double>& b) {
            std::vector<double> out(a.size() + b.size() - 1, 0.0);
            for (size_t i = 0; i < a.size(); ++i)
                for (size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
            return out;
        };
        std::vector<double> poly{1.0};
        for (int i = 0; i < q; ++i) poly = mul(poly, {0.0, 1.0});
        for (int i = 0; i < q; ++i) poly = mul(poly, {L, -1.0});
        for (int i = 0; i < k; ++i) {
            if (side > 0) poly = mul(poly, {eps, 1.0});
            else poly = mul(poly, {L + eps, -1.0});
        }
        for (double& cc : poly) cc *= scale;
        return poly;
    }
};

/** Builds eta0 for the domain (0, L) with critical point at the midpoint of
 *  omega_inner and kappa measured on a fine interior grid off omega_inner.
 */
inline EtaFunction build_eta0(double L, std::pair<double, double> omega_inner, int p,
                              int kappa_grid = 10000) {
    if (!(0.0 < omega_inner.first && omega_inner.first < omega_inner.second &&
          omega_inner.second < L))
        throw Error("build_eta0: omega_inner must be strictly inside (0, L)");
    EtaFunction eta;
    eta.L = L;
    eta.q = p + 3;
    eta.x_crit = 0.5 * (omega_inner.first + omega_inner.second);

    const double u = eta.x_crit - 0.5 * L;
    if (std::abs(u) > 1e-14 * L) {
        // log-derivative of the core at x_crit that the factor must cancel
        const double w = eta.q * (2.0 * eta.x_crit - L) / (eta.x_crit * (L - eta.x_crit));
        if (w > 0.0) {
            eta.side = 1;
            eta.k = static_cast<int>(std::ceil(w * eta.x_crit)) + 1;
            eta.eps = eta.k / w - eta.x_crit;
        } else {
            eta.side = -1;
            const double wp = -w;
            eta.k = static_cast<int>(std::ceil(wp * (L - eta.x_crit))) + 1;
            eta.eps = eta.k / wp - (L - eta.x_crit);
        }
        if (eta.eps <= 0.0) throw ConstructionFailed("build_eta0: shift factor degenerate");
    }

    const double raw_max = eta.eval(eta.x_crit);
    if (!(raw_max > 0.0)) throw ConstructionFailed("build_eta0: profile not positive at center");
    eta.scale = 1.0 / raw_max;
    eta.sup_norm = 1.0;

    // kappa on the interior of (0, L) minus omega_inner
    double kappa = std::numeric_limits<double>::infinity();
    const double total = omega_inner.first + (L - omega_inner.second);
    const int n_left = std::max(2, static_cast<int>(kappa_grid * omega_inner.first / total));
    const int n_right = std::max(2, kappa_grid - n_left);
    for (int i = 0; i < n_left; ++i) {
        double x = (i + 0.5) * omega_inner.first / n_left;
        kappa = std::min(kappa, std::abs(eta.deval(x)));
    }
    for (int i = 0; i < n_right; ++i) {
        double x = omega_inner.second + (i + 0.5) * (L - omega_inner.second) / n_right;
        kappa = std::min(kappa, std::abs(eta.deval(x)));
    }
    eta.kappa = kappa;
    if (!(eta.kappa > 0.0)) throw ConstructionFailed("build_eta0: kappa not positive");
    return eta;
}

// ---------------------------------------------------------------------------
// Cutoffs and nested subdomains
// ---------------------------------------------------------------------------

/** Nested control subregions omega > supp(theta) > omega_0 > ... > omega_{p+2}
 *  by geometric shrinkage toward the center of omega, and a polynomial
 *  smoothstep cutoff of degree 2p+5: theta = 1 on omega_0, supp(theta)
 *  strictly inside omega, derivatives up to order p+2 vanishing at both
 *  transition ends.
 */
struct CutoffFamily {
    std::vector<std::pair<double, double>> omegas;  ///< omega_0 .. omega_{p+2}
    double supp_a = 0.0, supp_b = 0.0;              ///< support of theta
    double center = 0.0;
    int smooth_order = 2;  ///< p + 2

    double theta(double x) const {
        const double w1 = 0.5 * (omegas[0].second - omegas[0].first);
        const double ws = 0.5 * (supp_b - supp_a);
        const double d = std::abs(x - center);
        if (d >= ws) return 0.0;
        if (d <= w1) return 1.0;
        return smoothstep((ws - d) / (ws - w1));
    }

    /// Polynomial smoothstep with zero derivatives up to smooth_order at both ends.
    double smoothstep(double u) const {
        const int k = smooth_order;
        double s = 0.0;
        for (int j = 0; j <= k; ++j)
            s += static_cast<double>(binomial(k + j, j)) *
                 static_cast<double>(binomial(2 * k + 1, k - j)) * std::pow(-u, j);
        return std::pow(u, k + 1) * s;
    }
};

inline CutoffFamily build_cutoffs(double omega_a, double omega_b, int p, double min_dx = 0.0) {
    if (!(omega_a < omega_b)) throw Error("build_cutoffs: empty region");
    if (min_dx > 0.0 && (omega_b - omega_a) < 10.0 * min_dx)
        throw DegenerateRegion("build_cutoffs: control region narrower than 10 grid cells");
    constexpr double kShrink = 0.7;
    CutoffFamily cf;
    cf.center = 0.5 * (omega_a + omega_b);
    cf.smooth_order = p + 2;
    const double w = 0.5 * (omega_b - omega_a);
    double r = kShrink;
    for (int i = 0; i <= p + 2; ++i) {
        cf.omegas.emplace_back(cf.center - w * r, cf.center + w * r);
        r *= kShrink;
    }
    const double ws = w * std::sqrt(kShrink);  // between omega and omega_0
    cf.supp_a = cf.center - ws;
    cf.supp_b = cf.center + ws;
    return cf;
}

// ---------------------------------------------------------------------------
// Weight family
// ---------------------------------------------------------------------------

/** The weight family built from eta0:
 *
 *    alpha(t,x) = (e^{12 l M} - e^{l(10 M + eta0(x))}) / (t^5 (T-t)^5),
 *    xi(t,x)    =  e^{l(10 M + eta0(x))} / (t^5 (T-t)^5),
 *
 *  with M = |eta0|_inf, l the spectral parameter, s1 = sigma (T^5 + T^10),
 *  and rho = e^{-2 s1 alpha} xi^{2p+7}.
 */
struct CarlemanWeights {
    EtaFunction eta;
    double lambda = 1.0;
    double sigma = 1.0;
    double T = 1.0;
    int p = 0;
    double s1 = 2.0;
};

inline CarlemanWeights make_weights(EtaFunction eta, double lambda, double sigma, double T, int p) {
    CarlemanWeights w;
    w.eta = std::move(eta);
    w.lambda = lambda;
    w.sigma = sigma;
    w.T = T;
    w.p = p;
    w.s1 = sigma * (std::pow(T, 5) + std::pow(T, 10));
    return w;
}

/// Same weight family with s1 given directly; sigma is derived.
inline CarlemanWeights make_weights_s1(EtaFunction eta, double lambda, double s1, double T, int p) {
    CarlemanWeights w;
    w.eta = std::move(eta);
    w.lambda = lambda;
    w.T = T;
    w.p = p;
    w.s1 = s1;
    w.sigma = s1 / (std::pow(T, 5) + std::pow(T, 10));
    return w;
}

struct WeightPoint {
    double alpha;
    double xi;
};

inline double ln_time_factor(double t, double T) { return 5.0 * (std::log(t) + std::log(T - t)); }

inline WeightPoint eval_weights(const CarlemanWeights& w, double t, double x) {
    if (!(t > 0.0 && t < w.T)) throw OutOfRange("eval_weights: t must lie in (0, T)");
    const double M = w.eta.sup_norm;
    const double tau = std::pow(t, 5) * std::pow(w.T - t, 5);
    const double phi = w.lambda * (10.0 * M + w.eta.eval(x));
    return {(std::exp(12.0 * w.lambda * M) - std::exp(phi)) / tau, std::exp(phi) / tau};
}

/// alpha* = max_x alpha and xi* = min_x xi, both attained where eta0 = 0.
inline WeightPoint eval_star_weights(const CarlemanWeights& w, double t) {
    if (!(t > 0.0 && t < w.T)) throw OutOfRange("eval_star_weights: t must lie in (0, T)");
    const double M = w.eta.sup_norm;
    const double tau = std::pow(t, 5) * std::pow(w.T - t, 5);
    return {(std::exp(12.0 * w.lambda * M) - std::exp(10.0 * w.lambda * M)) / tau,
            std::exp(10.0 * w.lambda * M) / tau};
}

/// log of e^{-2 s alpha} xi^k, handled in log space; -inf at the time endpoints.
inline double ln_weight_product(const CarlemanWeights& w, double s, double k_pow, double t,
                                double x) {
    if (!(t > 0.0 && t < w.T)) return -std::numeric_limits<double>::infinity();
    const double M = w.eta.sup_norm;
    const double ln_tau = ln_time_factor(t, w.T);
    const double phi = w.lambda * (10.0 * M + w.eta.eval(x));
    const double N = std::exp(12.0 * w.lambda * M) - std::exp(phi);
    const double u = std::log(2.0 * s * N) - ln_tau;
    const double singular = (u > 709.0) ? std::numeric_limits<double>::infinity() : std::exp(u);
    return -singular + k_pow * (phi - ln_tau);
}

inline double ln_rho(const CarlemanWeights& w, double t, double x) {
    return ln_weight_product(w, w.s1, 2.0 * w.p + 7.0, t, x);
}

/// rho = e^{-2 s1 alpha} xi^{2p+7}; defined as 0 at t in {0, T} by limit.
inline double eval_rho(const CarlemanWeights& w, double t, double x) {
    return snap_exp(ln_rho(w, t, x));
}

// ---------------------------------------------------------------------------
// Choice of the weight scale s1
// ---------------------------------------------------------------------------

struct S1Choice {
    double s1 = 0.0;
    double sigma_equiv = 0.0;     ///< s1 / (T^5 + T^10)
    double term_explicit = 0.0;   ///< the closed-form candidate term
    double term_rho_bound = 0.0;  ///< smallest s keeping rho <= 1 on Q_T
    double s0 = 0.0;
};

/** Chooses s1 = max{s0, explicit candidate, rho-bound term}.  The explicit
 *  candidate is (3^5 (2p+7) lambda / 4^10) max_x (10M + eta0)/(e^{12 l M} -
 *  e^{l(10M + eta0)}).  The rho-bound term is the smallest s for which
 *  e^{-2 s alpha} xi^{2p+7} <= 1 everywhere: for fixed x the supremum over
 *  the time factor tau sits either at an interior critical point or at
 *  tau = (T/2)^10, giving a closed-form threshold per x; both candidates
 *  are increasing in eta0, so the maximum over x is attained where eta0
 *  peaks and is evaluated exactly there.  The base constant s0 the
 *  estimate leaves unspecified is surfaced through the config and
 *  defaults to zero.
 */
inline S1Choice compute_s1(const WeightConfig& cfg, const EtaFunction& eta, double T,
                           double lambda) {
    S1Choice out;
    out.s0 = cfg.s0_override.value_or(0.0);
    const double M = eta.sup_norm;
    const double two_p7 = 2.0 * cfg.p + 7.0;
    const double tau_max = std::pow(0.5 * T, 10);
    const double ln_tau_max = std::log(tau_max);

    const double phi = lambda * 11.0 * M;  // the peak of eta0 dominates both terms
    const double N = std::exp(12.0 * lambda * M) - std::exp(phi);
    out.term_explicit =
        (std::pow(3.0, 5) * two_p7 * lambda / std::pow(4.0, 10)) * (11.0 * M / N);

    // smallest s with sup_{tau <= tau_max} [-2sN/tau + (2p+7)(phi - ln tau)] <= 0
    const double s_c = two_p7 * tau_max / (2.0 * N);
    const double s_bnd = std::max(0.0, tau_max * two_p7 * (phi - ln_tau_max) / (2.0 * N));
    const double s_int = two_p7 * std::exp(phi - 1.0) / (2.0 * N);
    out.term_rho_bound = std::min(s_int, std::max(s_c, s_bnd)) * (1.0 + 1e-12);

    out.s1 = std::max({out.s0, out.term_explicit, out.term_rho_bound});
    out.sigma_equiv = out.s1 / (std::pow(T, 5) + std::pow(T, 10));
    return out;
}

// ---------------------------------------------------------------------------
// Weighted functionals and diagnostics
// ---------------------------------------------------------------------------

/** I(s, l; u) = s^3 l^4 int e^{-2 s alpha} xi^3 |u|^2
 *             + s   l^2 int e^{-2 s alpha} xi   |grad u|^2
 *  via trapezoidal quadrature; the integrand is taken as 0 at t in {0, T}
 *  and the gradient uses centered differences with zero Dirichlet ghosts.
 */
inline double carleman_functional(const CarlemanWeights& w, double s, double lambda,
                                  const TrajectoryField& u) {
    const Grid& g = u.grid;
    const double dx = g.dx(), dt = g.dt();
    CarlemanWeights wl = w;
    wl.lambda = lambda;  // weights evaluated at the requested spectral parameter
    double term0 = 0.0, term1 = 0.0;
    for (int k = 1; k < g.Nt; ++k) {
        const double t = g.t(k);
        for (int i = 0; i < g.Nx; ++i) {
            const double x = g.x(i);
            const double w3 = snap_exp(ln_weight_product(wl, s, 3.0, t, x));
            const double w1 = snap_exp(ln_weight_product(wl, s, 1.0, t, x));
            double nu2 = 0.0, ngrad2 = 0.0;
            for (int p = 0; p < u.m; ++p) {
                const double up = u.at(k, p, i);
                nu2 += up * up;
                const double right = (i + 1 < g.Nx) ? u.at(k, p, i + 1) : 0.0;
                const double left = (i > 0) ? u.at(k, p, i - 1) : 0.0;
                const double d1 = (right - left) / (2.0 * dx);
                ngrad2 += d1 * d1;
            }
            term0 += dt * dx * w3 * nu2;
            term1 += dt * dx * w1 * ngrad2;
        }
    }
    return std::pow(s, 3) * std::pow(lambda, 4) * term0 + s * lambda * lambda * term1;
}

struct WeightBoundReport {
    double time_constant = 0.0;   ///< sup |d_t W| / (T xi^{a+6/5} e^{-2 s1 alpha})
    double space_constant = 0.0;  ///< sup |d_x^r W| / (xi^{a+r} e^{-2 s1 alpha})
    bool finite = false;
};

/** Empirical constants for the decay of W = xi^a e^{-2 s1 alpha} under time
 *  and spatial differentiation, by centered differences on an interior grid.
 *  Points where the reference weight underflows are skipped.
 */
inline WeightBoundReport weight_bound_diagnostics(const CarlemanWeights& w, double a, int r,
                                                  int grid_n = 400) {
    WeightBoundReport rep;
    const double L = w.eta.L, T = w.T;
    const double ht = T / (grid_n + 1), hx = L / (grid_n + 1);
    auto W = [&](double t, double x) { return snap_exp(ln_weight_product(w, w.s1, a, t, x)); };

    double sup_t = 0.0, sup_x = 0.0;
    for (int j = 1; j <= grid_n; ++j) {
        const double t = j * ht;
        for (int i = 1; i <= grid_n; ++i) {
            const double x = i * hx;
            const double ln_den = ln_weight_product(w, w.s1, a, t, x);
            if (ln_den < -250.0 * std::log(10.0)) continue;

            if (j > 1 && j < grid_n) {
                const double dWt = (W(t + ht, x) - W(t - ht, x)) / (2.0 * ht);
                const double den_t = T * snap_exp(ln_weight_product(w, w.s1, a + 1.2, t, x));
                if (den_t > 0.0) sup_t = std::max(sup_t, std::abs(dWt) / den_t);
            }
            if (r == 0) {
                sup_x = std::max(sup_x, 1.0);
            } else if (i > r && i + r <= grid_n) {
                // r-fold centered first difference
                std::vector<double> vals;
                for (int o = -r; o <= r; ++o) vals.push_back(W(t, x + o * hx));
                for (int it = 0; it < r; ++it) {
                    std::vector<double> next;
                    for (size_t q = 1; q + 1 < vals.size(); ++q)
                        next.push_back((vals[q + 1] - vals[q - 1]) / (2.0 * hx));
                    vals = std::move(next);
                }
                const double den_x = snap_exp(ln_weight_product(w, w.s1, a + r, t, x));
                if (den_x > 0.0) sup_x = std::max(sup_x, std::abs(vals[0]) / den_x);
            }
        }
    }
    rep.time_constant = sup_t;
    rep.space_constant = sup_x;
    rep.finite = std::isfinite(sup_t) && std::isfinite(sup_x);
    return rep;
}

/// Empirical constant in e^{2 K s1 alpha*} <= C_K xi^{-2p-7} e^{2 s1 alpha}.
inline double empirical_CK(const CarlemanWeights& w, double K, int grid_n = 200) {
    double sup = 0.0;
    const double T = w.T, L = w.eta.L;
    for (int j = 1; j < grid_n; ++j) {
        const double t = j * T / grid_n;
        const WeightPoint star = eval_star_weights(w, t);
        for (int i = 1; i < grid_n; ++i) {
            const double x = i * L / grid_n;
            const WeightPoint pt = eval_weights(w, t, x);
            const double ln_val = 2.0 * K * w.s1 * star.alpha + (2.0 * w.p + 7.0) * std::log(pt.xi) -
                                  2.0 * w.s1 * pt.alpha;
            sup = std::max(sup, snap_exp(ln_val));
        }
    }
    return sup;
}

}  // namespace fcm
