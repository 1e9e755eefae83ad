#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fcm/algebra.hpp"
#include "fcm/carleman.hpp"
#include "fcm/compose.hpp"
#include "fcm/errors.hpp"
#include "fcm/hum.hpp"
#include "fcm/model.hpp"
#include "fcm/pde.hpp"

namespace fcm {

inline constexpr const char* kVersion = "0.1.0";

// exit codes shared by the CLI
inline constexpr int kExitOk = 0;
inline constexpr int kExitNotSolvable = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitConfig = 4;

struct PipelineConfig {
    CoupledSystem system;
    int Nx = 100;
    int Nt = 200;
    WeightConfig weights;

    std::vector<double> ks{1e2, 1e3, 1e4, 1e5, 1e6};
    double cg_tol = 1e-10;
    int cg_max = 5000;

    int p_max = 12;
    double rank_tol = 1e-12;

    std::string initial_type = "sine";
    std::vector<double> initial_amplitudes;  ///< per component, default all ones

    std::string out_dir = "out";
    bool write_trajectories = false;
    bool write_weights_csv = false;

    std::uint64_t seed = 20240601ULL;
    int threads = 1;

    nlohmann::json echo;  ///< fully defaulted configuration

    Grid grid() const { return Grid(Nx, Nt, system.L, system.T); }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::vector<std::string>& known,
                                const std::string& where, std::vector<std::string>& errs) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            errs.push_back("unknown key '" + where + it.key() + "'");
    }
}

inline Eigen::MatrixXd parse_matrix(const nlohmann::json& j, int m, const std::string& name,
                                    std::vector<std::string>& errs) {
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(m, m);
    if (!j.is_array() || static_cast<int>(j.size()) != m) {
        errs.push_back(name + " must be an " + std::to_string(m) + "-row array");
        return M;
    }
    for (int r = 0; r < m; ++r) {
        const auto& row = j[static_cast<size_t>(r)];
        if (!row.is_array() || static_cast<int>(row.size()) != m) {
            errs.push_back(name + " row " + std::to_string(r) + " must have m entries");
            continue;
        }
        for (int c = 0; c < m; ++c) M(r, c) = row[static_cast<size_t>(c)].get<double>();
    }
    return M;
}

}  // namespace detail

/** Parses and validates a pipeline configuration.  Defaults are applied,
 *  unknown keys are rejected, and every constraint violation is collected
 *  before a single ConfigError is thrown.
 */
inline PipelineConfig parse_config(const nlohmann::json& j) {
    std::vector<std::string> errs;
    PipelineConfig cfg;

    detail::reject_unknown_keys(
        j, {"system", "grid", "weights", "hum", "algebra", "initial", "outputs", "seed", "threads"},
        "", errs);

    if (!j.contains("system") || !j["system"].is_object()) {
        errs.push_back("missing 'system' object");
    } else {
        const auto& s = j["system"];
        detail::reject_unknown_keys(s, {"m", "n", "c", "D", "G", "A", "T", "L", "omega"},
                                    "system.", errs);
        const int m = s.value("m", 2);
        const int n = s.value("n", 1);
        const int c = s.value("c", m);
        if (n != 1) errs.push_back("system.n: the simulator supports n = 1 only");
        cfg.system.m = m;
        cfg.system.n = 1;
        cfg.system.c = c;
        cfg.system.T = s.value("T", 1.0);
        cfg.system.L = s.value("L", 1.0);
        if (s.contains("omega")) {
            if (s["omega"].is_array() && s["omega"].size() == 2) {
                cfg.system.omega_a = s["omega"][0].get<double>();
                cfg.system.omega_b = s["omega"][1].get<double>();
            } else {
                errs.push_back("system.omega must be [a, b]");
            }
        }
        std::vector<double> d(static_cast<size_t>(m), 1.0);
        if (s.contains("D")) {
            if (s["D"].is_array() && static_cast<int>(s["D"].size()) == m) {
                for (int p = 0; p < m; ++p) d[static_cast<size_t>(p)] = s["D"][static_cast<size_t>(p)].get<double>();
            } else {
                errs.push_back("system.D must be a length-m array of scalars (n = 1)");
            }
        }
        Eigen::MatrixXd G = Eigen::MatrixXd::Zero(m, m), A = Eigen::MatrixXd::Zero(m, m);
        if (s.contains("G")) G = detail::parse_matrix(s["G"], m, "system.G", errs);
        if (s.contains("A")) A = detail::parse_matrix(s["A"], m, "system.A", errs);
        cfg.system = make_system_1d(m, c, d, G, A, cfg.system.T, cfg.system.L, cfg.system.omega_a,
                                    cfg.system.omega_b);
    }

    if (j.contains("grid")) {
        detail::reject_unknown_keys(j["grid"], {"Nx", "Nt"}, "grid.", errs);
        cfg.Nx = j["grid"].value("Nx", 100);
        cfg.Nt = j["grid"].value("Nt", 200);
        if (cfg.Nx < 3) errs.push_back("grid.Nx must be at least 3");
        if (cfg.Nt < 2) errs.push_back("grid.Nt must be at least 2");
    }

    if (j.contains("weights")) {
        const auto& w = j["weights"];
        detail::reject_unknown_keys(w, {"lambda", "sigma", "K", "C_generic", "s0", "p"},
                                    "weights.", errs);
        cfg.weights.lambda = w.value("lambda", 1.0);
        cfg.weights.sigma = w.value("sigma", 1.0);
        cfg.weights.K = w.value("K", 0.5);
        cfg.weights.C_generic = w.value("C_generic", 1.0);
        cfg.weights.p = w.value("p", 0);
        if (w.contains("s0")) cfg.weights.s0_override = w["s0"].get<double>();
        if (!(cfg.weights.lambda >= cfg.weights.lambda_min))
            errs.push_back("weights.lambda must be >= lambda_min = 1");
        if (!(cfg.weights.sigma > 0)) errs.push_back("weights.sigma must be positive");
        if (!(cfg.weights.K > 0 && cfg.weights.K < 1)) errs.push_back("weights.K must lie in (0,1)");
    }

    if (j.contains("hum")) {
        const auto& h = j["hum"];
        detail::reject_unknown_keys(h, {"ks", "cg_tol", "cg_max"}, "hum.", errs);
        if (h.contains("ks")) {
            cfg.ks.clear();
            for (const auto& v : h["ks"]) cfg.ks.push_back(v.get<double>());
            if (cfg.ks.empty()) errs.push_back("hum.ks must be nonempty");
            for (size_t i = 1; i < cfg.ks.size(); ++i)
                if (cfg.ks[i] <= cfg.ks[i - 1]) errs.push_back("hum.ks must be increasing");
        }
        cfg.cg_tol = h.value("cg_tol", 1e-10);
        cfg.cg_max = h.value("cg_max", 5000);
    }

    if (j.contains("algebra")) {
        detail::reject_unknown_keys(j["algebra"], {"p_max", "rank_tol"}, "algebra.", errs);
        cfg.p_max = j["algebra"].value("p_max", 12);
        cfg.rank_tol = j["algebra"].value("rank_tol", 1e-12);
    }

    cfg.initial_amplitudes.assign(static_cast<size_t>(cfg.system.m), 1.0);
    if (j.contains("initial")) {
        detail::reject_unknown_keys(j["initial"], {"type", "amplitudes"}, "initial.", errs);
        cfg.initial_type = j["initial"].value("type", "sine");
        if (cfg.initial_type != "sine" && cfg.initial_type != "bump" && cfg.initial_type != "zero")
            errs.push_back("initial.type must be one of sine, bump, zero");
        if (j["initial"].contains("amplitudes")) {
            const auto& a = j["initial"]["amplitudes"];
            if (a.is_array() && static_cast<int>(a.size()) == cfg.system.m) {
                for (int p = 0; p < cfg.system.m; ++p)
                    cfg.initial_amplitudes[static_cast<size_t>(p)] = a[static_cast<size_t>(p)].get<double>();
            } else {
                errs.push_back("initial.amplitudes must have m entries");
            }
        }
    }

    if (j.contains("outputs")) {
        detail::reject_unknown_keys(j["outputs"], {"dir", "trajectories", "weights_csv"},
                                    "outputs.", errs);
        cfg.out_dir = j["outputs"].value("dir", std::string("out"));
        cfg.write_trajectories = j["outputs"].value("trajectories", false);
        cfg.write_weights_csv = j["outputs"].value("weights_csv", false);
    }

    cfg.seed = j.value("seed", static_cast<std::uint64_t>(20240601ULL));
    cfg.threads = j.value("threads", 1);

    // cross-field constraints shared with validate_system
    ValidationReport vr = validate_system(cfg.system);
    for (const auto& f : vr.violations) errs.push_back("system." + f.label + ": " + f.message);

    if (!errs.empty()) {
        std::string msg = "configuration invalid:";
        for (const auto& e : errs) msg += "\n  - " + e;
        throw ConfigError(msg);
    }

    // normalized echo
    nlohmann::json echo;
    echo["system"]["m"] = cfg.system.m;
    echo["system"]["n"] = cfg.system.n;
    echo["system"]["c"] = cfg.system.c;
    echo["system"]["T"] = cfg.system.T;
    echo["system"]["L"] = cfg.system.L;
    echo["system"]["omega"] = {cfg.system.omega_a, cfg.system.omega_b};
    {
        std::vector<double> d;
        for (int p = 0; p < cfg.system.m; ++p) d.push_back(cfg.system.d(p));
        echo["system"]["D"] = d;
        std::vector<std::vector<double>> Gv(static_cast<size_t>(cfg.system.m)),
            Av(static_cast<size_t>(cfg.system.m));
        for (int p = 0; p < cfg.system.m; ++p)
            for (int k = 0; k < cfg.system.m; ++k) {
                Gv[static_cast<size_t>(p)].push_back(cfg.system.g(p, k));
                Av[static_cast<size_t>(p)].push_back(cfg.system.a(p, k));
            }
        echo["system"]["G"] = Gv;
        echo["system"]["A"] = Av;
    }
    echo["grid"]["Nx"] = cfg.Nx;
    echo["grid"]["Nt"] = cfg.Nt;
    echo["weights"]["lambda"] = cfg.weights.lambda;
    echo["weights"]["sigma"] = cfg.weights.sigma;
    echo["weights"]["K"] = cfg.weights.K;
    echo["weights"]["C_generic"] = cfg.weights.C_generic;
    echo["weights"]["p"] = cfg.weights.p;
    if (cfg.weights.s0_override) echo["weights"]["s0"] = *cfg.weights.s0_override;
    echo["hum"]["ks"] = cfg.ks;
    echo["hum"]["cg_tol"] = cfg.cg_tol;
    echo["hum"]["cg_max"] = cfg.cg_max;
    echo["algebra"]["p_max"] = cfg.p_max;
    echo["algebra"]["rank_tol"] = cfg.rank_tol;
    echo["initial"]["type"] = cfg.initial_type;
    echo["initial"]["amplitudes"] = cfg.initial_amplitudes;
    echo["outputs"]["dir"] = cfg.out_dir;
    echo["outputs"]["trajectories"] = cfg.write_trajectories;
    echo["outputs"]["weights_csv"] = cfg.write_weights_csv;
    echo["seed"] = cfg.seed;
    echo["threads"] = cfg.threads;
    cfg.echo = echo;
    return cfg;
}

inline PipelineConfig parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config file: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("malformed JSON: ") + e.what());
    }
    return parse_config(j);
}

/// Initial datum on the grid per the config's 'initial' section.
inline Eigen::VectorXd initial_datum(const PipelineConfig& cfg) {
    Grid g = cfg.grid();
    Eigen::VectorXd y0 = Eigen::VectorXd::Zero(cfg.system.m * g.Nx);
    for (int p = 0; p < cfg.system.m; ++p) {
        const double amp = cfg.initial_amplitudes[static_cast<size_t>(p)];
        for (int i = 0; i < g.Nx; ++i) {
            const double x = g.x(i);
            double v = 0.0;
            if (cfg.initial_type == "sine")
                v = std::sin(M_PI * x / cfg.system.L);
            else if (cfg.initial_type == "bump")
                v = std::exp(-50.0 * (x - 0.5 * cfg.system.L) * (x - 0.5 * cfg.system.L));
            y0(p * g.Nx + i) = amp * v;
        }
    }
    return y0;
}

inline nlohmann::json to_json(const ProlongationCounts& pc) {
    return {{"p", pc.p}, {"F_p", pc.F_p}, {"F_p2", pc.F_p2}, {"E", pc.E}, {"U", pc.U}};
}

inline nlohmann::json to_json(const SolvabilityReport& rep) {
    nlohmann::json j;
    j["h"] = rep.h;
    j["regime"] = to_string(rep.regime);
    j["verdict"] = to_string(rep.verdict);
    j["p_min"] = rep.p_min;
    j["counts"] = to_json(rep.counts);
    j["condition_numbers"] = rep.condition_numbers;
    if (rep.failing_subset) j["failing_subset"] = *rep.failing_subset;
    return j;
}

/** Solvability decision for the configured system: the coupling rank
 *  condition when c >= h, the square-candidate search over p otherwise.
 */
inline SolvabilityReport decide_solvability(const PipelineConfig& cfg) {
    SolvabilityReport rep = check_rank_condition(cfg.system, cfg.rank_tol, cfg.p_max);
    if (rep.regime != Regime::c_lt_h) return rep;
    for (int p = 0; p <= cfg.p_max; ++p) {
        try {
            return check_square_candidate(cfg.system, p, cfg.rank_tol);
        } catch (const NoSquareCandidate&) {
            continue;
        }
    }
    return rep;  // inconclusive: no square candidate up to p_max
}

struct StageTimer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

struct PipelineResult {
    nlohmann::json report;
    int exit_code = kExitOk;
};

inline PipelineResult run_check(const PipelineConfig& cfg) {
    StageTimer timer;
    SolvabilityReport rep = decide_solvability(cfg);
    PipelineResult out;
    out.report["version"] = kVersion;
    out.report["config"] = cfg.echo;
    out.report["solvability"] = to_json(rep);
    out.report["timings"]["check_seconds"] = timer.seconds();
    out.exit_code = rep.verdict == Verdict::solvable ? kExitOk : kExitNotSolvable;
    return out;
}

inline nlohmann::json to_json(const PenaltyRun& run, const Eigen::VectorXd& y0) {
    nlohmann::json j;
    j["k"] = run.k;
    j["Jk"] = run.Jk;
    j["terminal_norm"] = run.terminal_norm;
    j["weighted_control_norm"] = run.weighted_control_norm;
    j["regularity_weighted_norm"] = run.regularity_weighted_norm;
    j["cg_iters"] = run.cg_iters;
    j["cg_residual"] = run.cg_residual;
    j["converged"] = run.converged;
    j["closure_defect"] = run.closure_defect;
    j["cost_identity_defect"] = cost_identity_check(run, y0);
    j["adjoint_zero_ratio"] = adjoint_zero_bound_probe(run, y0);
    return j;
}

/** The full pipeline: check, weights, penalized runs, operator application,
 *  composition.  Stops after the check stage with a structured report when
 *  the verdict is not solvable.
 */
inline PipelineResult run_synthesize(const PipelineConfig& cfg) {
    PipelineResult out;
    out.report["version"] = kVersion;
    out.report["config"] = cfg.echo;

    StageTimer t_all;
    StageTimer t_check;
    SolvabilityReport solv = decide_solvability(cfg);
    out.report["solvability"] = to_json(solv);
    out.report["timings"]["check_seconds"] = t_check.seconds();
    if (solv.verdict != Verdict::solvable) {
        out.report["stage"] = "check";
        out.exit_code = kExitNotSolvable;
        return out;
    }
    const int p = solv.p_min;
    if (p < 0) {
        out.report["stage"] = "check";
        out.report["error"] = "no workable prolongation order up to p_max";
        out.exit_code = kExitNotSolvable;
        return out;
    }

    try {
        Grid grid = cfg.grid();

        StageTimer t_alg;
        DifferentialOperator B_op = extract_inverse_operator(cfg.system, p, cfg.rank_tol);
        const double rinv_residual = verify_right_inverse(cfg.system, B_op, 20, cfg.seed);
        out.report["operator"]["p"] = p;
        out.report["operator"]["max_space_order"] = B_op.max_space_order;
        out.report["operator"]["max_time_order"] = B_op.max_time_order;
        out.report["operator"]["coefficients"] = B_op.coeffs.size();
        out.report["operator"]["polynomial_residual"] = rinv_residual;
        out.report["timings"]["algebra_seconds"] = t_alg.seconds();

        StageTimer t_w;
        CutoffFamily cutoffs =
            build_cutoffs(cfg.system.omega_a, cfg.system.omega_b, p, grid.dx());
        const int halfwidth = (B_op.max_space_order + 1) / 2 + 2;
        if (cutoffs.supp_a - cfg.system.omega_a < halfwidth * grid.dx())
            throw GridTooCoarse("run_synthesize: stencil margin around supp(theta) is below " +
                                std::to_string(halfwidth) + " cells");
        EtaFunction eta =
            build_eta0(cfg.system.L, cutoffs.omegas[static_cast<size_t>(p) + 2], p);
        WeightConfig wc = cfg.weights;
        wc.p = p;
        CarlemanWeights weights = make_weights(eta, wc.lambda, wc.sigma, cfg.system.T, p);
        S1Choice s1c = compute_s1(wc, eta, cfg.system.T, wc.lambda);
        out.report["weights"]["p"] = p;
        out.report["weights"]["kappa"] = eta.kappa;
        out.report["weights"]["s1"] = weights.s1;
        out.report["weights"]["sigma"] = weights.sigma;
        out.report["weights"]["s1_choice"] = {{"s1", s1c.s1},
                                              {"sigma_equiv", s1c.sigma_equiv},
                                              {"term_explicit", s1c.term_explicit},
                                              {"term_rho_bound", s1c.term_rho_bound},
                                              {"s0", s1c.s0}};
        out.report["timings"]["weights_seconds"] = t_w.seconds();

        StageTimer t_hum;
        Eigen::VectorXd y0 = initial_datum(cfg);
        HumProblem prob = make_hum_problem(cfg.system, grid, weights, cutoffs, cfg.weights.K);
        out.report["pde"]["peclet"] = prob.opd.peclet;
        out.report["pde"]["peclet_warning"] = prob.opd.peclet_warning;

        SweepReport sweep;
        if (cfg.threads > 1) {
            std::vector<std::future<PenaltyRun>> futs;
            for (double k : cfg.ks) {
                futs.push_back(std::async(std::launch::async, [&, k]() {
                    HumProblem local =
                        make_hum_problem(cfg.system, grid, weights, cutoffs, cfg.weights.K);
                    return solve_penalized(local, y0, k, cfg.cg_tol, cfg.cg_max, false);
                }));
            }
            for (auto& f : futs) {
                PenaltyRun run = f.get();
                if (!run.converged) {
                    sweep.failed_ks.push_back(run.k);
                } else {
                    sweep.runs.push_back(std::move(run));
                }
            }
            for (size_t i = 0; i < sweep.runs.size(); ++i) {
                const PenaltyRun& run = sweep.runs[i];
                if (run.terminal_norm > std::sqrt(2.0 * run.Jk / run.k) * (1.0 + 1e-9))
                    sweep.terminal_bound_ok = false;
                if (i > 0 && run.terminal_norm > sweep.runs[i - 1].terminal_norm * (1.0 + 1e-9))
                    sweep.terminal_nonincreasing = false;
            }
        } else {
            sweep = penalty_sweep(prob, y0, cfg.ks, cfg.cg_tol, cfg.cg_max);
        }
        if (sweep.runs.empty()) throw Error("run_synthesize: every penalty run failed");

        nlohmann::json runs_json = nlohmann::json::array();
        for (const auto& run : sweep.runs) runs_json.push_back(to_json(run, y0));
        out.report["hum"]["runs"] = runs_json;
        out.report["hum"]["failed_ks"] = sweep.failed_ks;
        out.report["hum"]["terminal_nonincreasing"] = sweep.terminal_nonincreasing;
        out.report["hum"]["terminal_bound_ok"] = sweep.terminal_bound_ok;
        out.report["timings"]["hum_seconds"] = t_hum.seconds();

        StageTimer t_comp;
        const PenaltyRun& best = sweep.runs.back();
        TrajectoryField theta_v(grid, cfg.system.m);
        for (int k = 0; k <= grid.Nt; ++k)
            for (int pp = 0; pp < cfg.system.m; ++pp)
                for (int i = 0; i < grid.Nx; ++i)
                    theta_v.at(k, pp, i) = prob.theta(i) * best.v.at(k, pp, i);

        auto [y_hat, u_hat] = synthesize_reduced(cfg.system, B_op, theta_v, grid);
        const double alg_residual =
            verify_algebraic_residual(cfg.system, y_hat, u_hat, theta_v, grid);
        ComposedSolution sol = combine_and_verify(cfg.system, best.y, y_hat, u_hat, grid);
        out.report["compose"]["k_used"] = best.k;
        out.report["compose"]["algebraic_residual"] = alg_residual;
        out.report["compose"]["residual_uncontrolled"] = sol.residual_uncontrolled;
        out.report["compose"]["residual_controlled"] = sol.residual_controlled;
        out.report["compose"]["terminal_norm"] = sol.terminal_norm;
        out.report["compose"]["fictitious_terminal_norm"] = best.terminal_norm;
        out.report["compose"]["support_violation"] = sol.support_violation;
        out.report["compose"]["y_hat_initial_norm"] = sol.y_hat_initial_norm;
        out.report["compose"]["y_hat_terminal_norm"] = sol.y_hat_terminal_norm;
        out.report["timings"]["compose_seconds"] = t_comp.seconds();

        if (cfg.write_trajectories) {
            std::filesystem::create_directories(cfg.out_dir);
            auto dump = [&](const TrajectoryField& f, const std::string& name) {
                std::ofstream os(cfg.out_dir + "/" + name);
                write_csv(f, os);
            };
            dump(best.y, "y_fictitious.csv");
            dump(best.v, "v_fictitious.csv");
            dump(sol.y, "y.csv");
            dump(sol.u, "u.csv");
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        out.report["error"] = e.what();
        out.exit_code = kExitNumeric;
        return out;
    }

    out.report["timings"]["total_seconds"] = t_all.seconds();
    out.exit_code = kExitOk;
    return out;
}

/// CSV dump of (t, x, alpha, xi, rho, theta) on the config grid.
inline void run_weights(const PipelineConfig& cfg, std::ostream& os) {
    Grid grid = cfg.grid();
    const int p = cfg.weights.p;
    CutoffFamily cutoffs = build_cutoffs(cfg.system.omega_a, cfg.system.omega_b, p, grid.dx());
    EtaFunction eta = build_eta0(cfg.system.L, cutoffs.omegas[static_cast<size_t>(p) + 2], p);
    CarlemanWeights weights =
        make_weights(eta, cfg.weights.lambda, cfg.weights.sigma, cfg.system.T, p);
    os << "t,x,alpha,xi,rho,theta\n";
    for (int k = 0; k <= grid.Nt; ++k) {
        const double t = grid.t(k);
        for (int i = 0; i < grid.Nx; ++i) {
            const double x = grid.x(i);
            double alpha = std::numeric_limits<double>::infinity();
            double xi = std::numeric_limits<double>::infinity();
            if (k > 0 && k < grid.Nt) {
                WeightPoint wp = eval_weights(weights, t, x);
                alpha = wp.alpha;
                xi = wp.xi;
            }
            os << t << ',' << x << ',' << alpha << ',' << xi << ','
               << eval_rho(weights, t, x) << ',' << cutoffs.theta(x) << '\n';
        }
    }
}

/// Reads a triplet file (row col value per line, 0-indexed) into a pattern.
inline SparsePattern read_triplets(std::istream& is) {
    SparsePattern pat;
    int r, c;
    double v;
    while (is >> r >> c >> v) {
        pat.entries.push_back({r, c, v});
        pat.rows = std::max(pat.rows, r + 1);
        pat.cols = std::max(pat.cols, c + 1);
    }
    pat.validate();
    return pat;
}

/// Decomposition of an external pattern: permutations and block boundaries.
inline nlohmann::json run_dm(std::istream& is) {
    SparsePattern pat = read_triplets(is);
    Matching matching = maximum_matching(pat);
    DMDecomposition dm = dulmage_mendelsohn(pat, matching);
    nlohmann::json j;
    j["rows"] = pat.rows;
    j["cols"] = pat.cols;
    j["structural_rank"] = matching.size();
    nlohmann::json mj = nlohmann::json::array();
    for (auto [r, c] : matching) mj.push_back({r, c});
    j["matching"] = mj;
    j["VR"] = dm.VR;
    j["HR"] = dm.HR;
    j["SR"] = dm.SR;
    j["VC"] = dm.VC;
    j["HC"] = dm.HC;
    j["SC"] = dm.SC;
    j["row_perm"] = dm.row_perm;
    j["col_perm"] = dm.col_perm;
    j["row_block_bounds"] = dm.row_block_bounds;
    j["col_block_bounds"] = dm.col_block_bounds;
    return j;
}

}  // namespace fcm
