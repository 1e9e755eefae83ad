#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <vector>

#include "fcm/errors.hpp"
#include "fcm/model.hpp"
#include "fcm/poly.hpp"

namespace fcm {

// ---------------------------------------------------------------------------
// Counting
// ---------------------------------------------------------------------------

inline long long binomial(int n, int k) {
    if (k < 0 || k > n) return 0;
    k = std::min(k, n - k);
    long long r = 1;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

/// Number of distinct spatial derivatives of order <= p in n variables.
inline long long count_derivatives(int p, int n) { return binomial(p + n, n); }

/// Size h of the coupling rank condition: h = (m - c)(n + 1).
inline int compute_h(int m, int c, int n) { return (m - c) * (n + 1); }

struct ProlongationCounts {
    int p = 0;
    long long F_p = 0;   ///< derivatives of order <= p
    long long F_p2 = 0;  ///< derivatives of order <= p + 2
    long long E = 0;     ///< equations after p prolongations: m * F(p)
    long long U = 0;     ///< algebraic unknowns: (m - c)(F(p+2) + F(p))
};

inline ProlongationCounts prolongation_counts(int m, int n, int c, int p) {
    ProlongationCounts pc;
    pc.p = p;
    pc.F_p = count_derivatives(p, n);
    pc.F_p2 = count_derivatives(p + 2, n);
    pc.E = m * pc.F_p;
    pc.U = (m - c) * (pc.F_p2 + pc.F_p);
    return pc;
}

/** Smallest p <= p_max with E(p) > U(p).  Requires c > m/2; otherwise no such
 *  p exists for any p_max.
 */
inline int find_min_prolongation(int m, int n, int c, int p_max) {
    if (2 * c <= m)
        throw NoProlongationExists("find_min_prolongation: requires c > m/2");
    for (int p = 0; p <= p_max; ++p) {
        auto pc = prolongation_counts(m, n, c, p);
        if (pc.E > pc.U) return p;
    }
    throw LimitExceeded("find_min_prolongation: no p <= p_max with E(p) > U(p)");
}

// ---------------------------------------------------------------------------
// Multi-indices
// ---------------------------------------------------------------------------

using MultiIndex = std::vector<int>;

inline int mi_order(const MultiIndex& a) {
    int s = 0;
    for (int v : a) s += v;
    return s;
}

/// All multi-indices of exact order k in n variables, lexicographic.
inline std::vector<MultiIndex> multi_indices_of_order(int n, int k) {
    std::vector<MultiIndex> out;
    MultiIndex cur(static_cast<size_t>(n), 0);
    // depth-first over positions; lexicographic by construction
    std::function<void(int, int)> rec = [&](int pos, int left) {
        if (pos == n - 1) {
            cur[static_cast<size_t>(pos)] = left;
            out.push_back(cur);
            return;
        }
        for (int v = 0; v <= left; ++v) {
            cur[static_cast<size_t>(pos)] = v;
            rec(pos + 1, left - v);
        }
    };
    if (n >= 1) rec(0, k);
    return out;
}

/// All multi-indices of order <= p, graded lexicographic.
inline std::vector<MultiIndex> multi_indices_up_to(int n, int p) {
    std::vector<MultiIndex> out;
    for (int k = 0; k <= p; ++k) {
        auto v = multi_indices_of_order(n, k);
        out.insert(out.end(), v.begin(), v.end());
    }
    return out;
}

inline MultiIndex mi_add(MultiIndex a, const MultiIndex& b) {
    for (size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    return a;
}

inline MultiIndex mi_unit(int n, int e) {
    MultiIndex a(static_cast<size_t>(n), 0);
    a[static_cast<size_t>(e)] = 1;
    return a;
}

// ---------------------------------------------------------------------------
// Sparse patterns, matching, Dulmage-Mendelsohn
// ---------------------------------------------------------------------------

struct SparsePattern {
    int rows = 0;
    int cols = 0;
    struct Entry {
        int r;
        int c;
        double v;
    };
    std::vector<Entry> entries;

    void validate() const {
        std::map<std::pair<int, int>, int> seen;
        for (const auto& e : entries) {
            if (e.r < 0 || e.r >= rows || e.c < 0 || e.c >= cols)
                throw Error("SparsePattern: entry index out of range");
            if (++seen[{e.r, e.c}] > 1) throw Error("SparsePattern: duplicate entry");
        }
    }

    Eigen::MatrixXd dense() const {
        Eigen::MatrixXd M = Eigen::MatrixXd::Zero(rows, cols);
        for (const auto& e : entries) M(e.r, e.c) = e.v;
        return M;
    }
};

using Matching = std::vector<std::pair<int, int>>;  ///< (row, col) edges

namespace detail {

inline std::vector<std::vector<int>> row_adjacency(const SparsePattern& pat) {
    std::vector<std::vector<int>> adj(static_cast<size_t>(pat.rows));
    for (const auto& e : pat.entries) adj[static_cast<size_t>(e.r)].push_back(e.c);
    for (auto& v : adj) std::sort(v.begin(), v.end());
    return adj;
}

/// Hopcroft-Karp augmentation on top of an initial (partial) matching.
inline void hopcroft_karp(const std::vector<std::vector<int>>& adj, int n_cols,
                          std::vector<int>& match_row, std::vector<int>& match_col) {
    const int n_rows = static_cast<int>(adj.size());
    const int INF = std::numeric_limits<int>::max();
    std::vector<int> dist(static_cast<size_t>(n_rows));

    auto bfs = [&]() {
        std::queue<int> q;
        bool found = false;
        for (int r = 0; r < n_rows; ++r) {
            if (match_row[static_cast<size_t>(r)] < 0) {
                dist[static_cast<size_t>(r)] = 0;
                q.push(r);
            } else {
                dist[static_cast<size_t>(r)] = INF;
            }
        }
        while (!q.empty()) {
            int r = q.front();
            q.pop();
            for (int c : adj[static_cast<size_t>(r)]) {
                int r2 = match_col[static_cast<size_t>(c)];
                if (r2 < 0) {
                    found = true;
                } else if (dist[static_cast<size_t>(r2)] == INF) {
                    dist[static_cast<size_t>(r2)] = dist[static_cast<size_t>(r)] + 1;
                    q.push(r2);
                }
            }
        }
        return found;
    };

    std::function<bool(int)> dfs = [&](int r) {
        for (int c : adj[static_cast<size_t>(r)]) {
            int r2 = match_col[static_cast<size_t>(c)];
            if (r2 < 0 || (dist[static_cast<size_t>(r2)] == dist[static_cast<size_t>(r)] + 1 && dfs(r2))) {
                match_row[static_cast<size_t>(r)] = c;
                match_col[static_cast<size_t>(c)] = r;
                return true;
            }
        }
        dist[static_cast<size_t>(r)] = std::numeric_limits<int>::max();
        return false;
    };

    while (bfs()) {
        for (int r = 0; r < n_rows; ++r)
            if (match_row[static_cast<size_t>(r)] < 0) dfs(r);
    }
}

}  // namespace detail

/** Maximum-cardinality bipartite matching of the nonzero pattern.
 *
 *  Columns holding a single entry of value -1 (time-derivative unknowns of
 *  the prolonged system) are matched first; augmentation never displaces
 *  them because such columns have no alternative edge.  Cardinality equals
 *  the structural rank.
 */
inline Matching maximum_matching(const SparsePattern& pat) {
    pat.validate();
    auto adj = detail::row_adjacency(pat);
    std::vector<int> match_row(static_cast<size_t>(pat.rows), -1);
    std::vector<int> match_col(static_cast<size_t>(pat.cols), -1);

    // force single-entry -1 columns
    std::vector<int> col_count(static_cast<size_t>(pat.cols), 0);
    std::vector<const SparsePattern::Entry*> col_entry(static_cast<size_t>(pat.cols), nullptr);
    for (const auto& e : pat.entries) {
        ++col_count[static_cast<size_t>(e.c)];
        col_entry[static_cast<size_t>(e.c)] = &e;
    }
    for (int c = 0; c < pat.cols; ++c) {
        if (col_count[static_cast<size_t>(c)] == 1 && col_entry[static_cast<size_t>(c)]->v == -1.0) {
            int r = col_entry[static_cast<size_t>(c)]->r;
            if (match_row[static_cast<size_t>(r)] < 0) {
                match_row[static_cast<size_t>(r)] = c;
                match_col[static_cast<size_t>(c)] = r;
            }
        }
    }

    detail::hopcroft_karp(adj, pat.cols, match_row, match_col);

    Matching m;
    for (int r = 0; r < pat.rows; ++r)
        if (match_row[static_cast<size_t>(r)] >= 0) m.emplace_back(r, match_row[static_cast<size_t>(r)]);
    return m;
}

/** Coarse Dulmage-Mendelsohn decomposition with respect to a maximum matching.
 *
 *  VR/VC are reached by alternating paths from unmatched rows, HR/HC from
 *  unmatched columns, SR/SC is the remainder.  The row/column permutations
 *  order the blocks (HR, SR, VR) x (HC, SC, VC) so that everything strictly
 *  below the coarse block diagonal is zero.
 */
struct DMDecomposition {
    Matching matching;
    std::vector<int> VR, HR, SR;  ///< row index sets, ascending
    std::vector<int> VC, HC, SC;  ///< column index sets, ascending
    std::vector<int> row_perm;    ///< permuted order: original row index per new position
    std::vector<int> col_perm;
    std::vector<int> row_block_bounds;  ///< 5 offsets: HR | SR | VR-matched | VR-unmatched
    std::vector<int> col_block_bounds;  ///< 5 offsets: HC-unmatched | HC-matched | SC | VC
};

inline DMDecomposition dulmage_mendelsohn(const SparsePattern& pat, const Matching& matching) {
    pat.validate();
    auto adj = detail::row_adjacency(pat);
    std::vector<std::vector<int>> adj_col(static_cast<size_t>(pat.cols));
    for (const auto& e : pat.entries) adj_col[static_cast<size_t>(e.c)].push_back(e.r);

    std::vector<int> match_row(static_cast<size_t>(pat.rows), -1);
    std::vector<int> match_col(static_cast<size_t>(pat.cols), -1);
    for (auto [r, c] : matching) {
        if (r < 0 || r >= pat.rows || c < 0 || c >= pat.cols)
            throw InvalidMatching("dulmage_mendelsohn: matching edge out of range");
        if (!std::binary_search(adj[static_cast<size_t>(r)].begin(), adj[static_cast<size_t>(r)].end(), c))
            throw InvalidMatching("dulmage_mendelsohn: matching edge not present in pattern");
        if (match_row[static_cast<size_t>(r)] >= 0 || match_col[static_cast<size_t>(c)] >= 0)
            throw InvalidMatching("dulmage_mendelsohn: matching shares a vertex");
        match_row[static_cast<size_t>(r)] = c;
        match_col[static_cast<size_t>(c)] = r;
    }

    // Alternating reachability from unmatched rows; reaching an unmatched
    // column exposes an augmenting path, i.e. the matching is not maximum.
    std::vector<char> in_vr(static_cast<size_t>(pat.rows), 0), in_vc(static_cast<size_t>(pat.cols), 0);
    {
        std::queue<int> q;
        for (int r = 0; r < pat.rows; ++r)
            if (match_row[static_cast<size_t>(r)] < 0) {
                in_vr[static_cast<size_t>(r)] = 1;
                q.push(r);
            }
        while (!q.empty()) {
            int r = q.front();
            q.pop();
            for (int c : adj[static_cast<size_t>(r)]) {
                if (in_vc[static_cast<size_t>(c)]) continue;
                in_vc[static_cast<size_t>(c)] = 1;
                int r2 = match_col[static_cast<size_t>(c)];
                if (r2 < 0) throw InvalidMatching("dulmage_mendelsohn: matching is not maximum");
                if (!in_vr[static_cast<size_t>(r2)]) {
                    in_vr[static_cast<size_t>(r2)] = 1;
                    q.push(r2);
                }
            }
        }
    }
    // Alternating reachability from unmatched columns.
    std::vector<char> in_hr(static_cast<size_t>(pat.rows), 0), in_hc(static_cast<size_t>(pat.cols), 0);
    {
        std::queue<int> q;
        for (int c = 0; c < pat.cols; ++c)
            if (match_col[static_cast<size_t>(c)] < 0) {
                in_hc[static_cast<size_t>(c)] = 1;
                q.push(c);
            }
        while (!q.empty()) {
            int c = q.front();
            q.pop();
            for (int r : adj_col[static_cast<size_t>(c)]) {
                if (in_hr[static_cast<size_t>(r)]) continue;
                in_hr[static_cast<size_t>(r)] = 1;
                int c2 = match_row[static_cast<size_t>(r)];
                if (c2 < 0) throw InvalidMatching("dulmage_mendelsohn: matching is not maximum");
                if (!in_hc[static_cast<size_t>(c2)]) {
                    in_hc[static_cast<size_t>(c2)] = 1;
                    q.push(c2);
                }
            }
        }
    }

    DMDecomposition dm;
    dm.matching = matching;
    for (int r = 0; r < pat.rows; ++r) {
        if (in_vr[static_cast<size_t>(r)]) dm.VR.push_back(r);
        else if (in_hr[static_cast<size_t>(r)]) dm.HR.push_back(r);
        else dm.SR.push_back(r);
    }
    for (int c = 0; c < pat.cols; ++c) {
        if (in_vc[static_cast<size_t>(c)]) dm.VC.push_back(c);
        else if (in_hc[static_cast<size_t>(c)]) dm.HC.push_back(c);
        else dm.SC.push_back(c);
    }

    // Row order: HR, SR, matched VR (aligned with VC), unmatched VR.
    dm.row_perm = dm.HR;
    dm.row_block_bounds = {0, static_cast<int>(dm.HR.size())};
    for (int r : dm.SR) dm.row_perm.push_back(r);
    dm.row_block_bounds.push_back(static_cast<int>(dm.row_perm.size()));
    for (int c : dm.VC) dm.row_perm.push_back(match_col[static_cast<size_t>(c)]);
    dm.row_block_bounds.push_back(static_cast<int>(dm.row_perm.size()));
    for (int r : dm.VR)
        if (match_row[static_cast<size_t>(r)] < 0) dm.row_perm.push_back(r);
    dm.row_block_bounds.push_back(static_cast<int>(dm.row_perm.size()));

    // Column order: unmatched HC, matched HC (aligned with HR), SC (aligned
    // with SR), VC.
    for (int c : dm.HC)
        if (match_col[static_cast<size_t>(c)] < 0) dm.col_perm.push_back(c);
    dm.col_block_bounds = {0, static_cast<int>(dm.col_perm.size())};
    for (int r : dm.HR) dm.col_perm.push_back(match_row[static_cast<size_t>(r)]);
    dm.col_block_bounds.push_back(static_cast<int>(dm.col_perm.size()));
    for (int r : dm.SR) dm.col_perm.push_back(match_row[static_cast<size_t>(r)]);
    dm.col_block_bounds.push_back(static_cast<int>(dm.col_perm.size()));
    for (int c : dm.VC) dm.col_perm.push_back(c);
    dm.col_block_bounds.push_back(static_cast<int>(dm.col_perm.size()));

    return dm;
}

// ---------------------------------------------------------------------------
// Prolonged adjoint system
// ---------------------------------------------------------------------------

/// A row of the prolonged system: equation `eq` (1-based) differentiated by `beta`.
struct ProlongedRow {
    MultiIndex beta;
    int eq;
};

/// A column: derivative `gamma` of unknown component `comp` (1-based, > c),
/// optionally carrying one time derivative.
struct ProlongedCol {
    MultiIndex gamma;
    int comp;
    bool time_deriv;
};

struct ProlongedSystem {
    int m = 0, n = 0, c = 0, p = 0;
    SparsePattern pat;
    std::vector<ProlongedRow> rows;
    std::vector<ProlongedCol> cols;

    int col_index(const MultiIndex& gamma, int comp, bool time_deriv) const {
        for (size_t j = 0; j < cols.size(); ++j)
            if (cols[j].comp == comp && cols[j].time_deriv == time_deriv && cols[j].gamma == gamma)
                return static_cast<int>(j);
        throw Error("ProlongedSystem: unknown column requested");
    }
};

/** Coefficient matrix of the adjoint structural system prolonged p times.
 *
 *  Rows are the m adjoint equations and their spatial prolongations up to
 *  order p, ordered by prolongation order, then multi-index, then equation.
 *  Columns index the algebraic unknowns: spatial derivatives of the
 *  unactuated components up to order p+2 plus their time-derivative unknowns
 *  up to spatial order p.  Column groups are ordered so that the
 *  time-derivative group of order k is interleaved after the spatial group
 *  of order k+1 (after order 0 for k = 0), matching the layout the
 *  extraction expects.  Every time-derivative column carries exactly one
 *  entry, equal to -1.
 */
inline ProlongedSystem build_prolonged_matrix(const CoupledSystem& sys, int p) {
    const int m = sys.m, n = sys.n, c = sys.c;
    ProlongedSystem ps;
    ps.m = m;
    ps.n = n;
    ps.c = c;
    ps.p = p;

    // column layout: S0, T0, S1, then (S_{k+1}, T_k) for k = 1..p, then S_{p+2}
    auto push_spatial = [&](int k) {
        for (const auto& gamma : multi_indices_of_order(n, k))
            for (int j = c + 1; j <= m; ++j) ps.cols.push_back({gamma, j, false});
    };
    auto push_time = [&](int k) {
        for (const auto& gamma : multi_indices_of_order(n, k))
            for (int j = m; j >= c + 1; --j) ps.cols.push_back({gamma, j, true});
    };
    push_spatial(0);
    push_time(0);
    push_spatial(1);
    for (int k = 1; k <= p; ++k) {
        push_spatial(k + 1);
        push_time(k);
    }
    push_spatial(p + 2);

    for (int k = 0; k <= p; ++k)
        for (const auto& beta : multi_indices_of_order(n, k))
            for (int i = 1; i <= m; ++i) ps.rows.push_back({beta, i});

    std::map<std::pair<int, int>, double> acc;
    for (size_t ri = 0; ri < ps.rows.size(); ++ri) {
        const auto& row = ps.rows[ri];
        const int i = row.eq;
        for (int j = c + 1; j <= m; ++j) {
            // zero-order coupling: -a_{ji}
            acc[{static_cast<int>(ri), ps.col_index(row.beta, j, false)}] += -sys.A(j - 1, i - 1);
            // first-order couplings: g_{ji}^e
            for (int e = 0; e < n; ++e) {
                double g = sys.G[static_cast<size_t>(j - 1)][static_cast<size_t>(i - 1)](e);
                if (g != 0.0)
                    acc[{static_cast<int>(ri), ps.col_index(mi_add(row.beta, mi_unit(n, e)), j, false)}] += g;
            }
        }
        if (i > c) {
            // time-derivative unknown and diffusion of the i-th unknown
            acc[{static_cast<int>(ri), ps.col_index(row.beta, i, true)}] += -1.0;
            const Eigen::MatrixXd& d = sys.D[static_cast<size_t>(i - 1)];
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) {
                    if (d(a, b) == 0.0) continue;
                    MultiIndex gamma = mi_add(mi_add(row.beta, mi_unit(n, a)), mi_unit(n, b));
                    acc[{static_cast<int>(ri), ps.col_index(gamma, i, false)}] += -d(a, b);
                }
        }
    }

    ps.pat.rows = static_cast<int>(ps.rows.size());
    ps.pat.cols = static_cast<int>(ps.cols.size());
    for (const auto& [rc, v] : acc)
        if (v != 0.0) ps.pat.entries.push_back({rc.first, rc.second, v});
    ps.pat.validate();
    return ps;
}

// ---------------------------------------------------------------------------
// Rank conditions and solvability verdicts
// ---------------------------------------------------------------------------

/** The h x h coupling matrix for a choice of actuated indices alphas
 *  (1-based, subset of {1..c}).  Row i lists the zero-order couplings
 *  a_{(c+1)alpha_i} .. a_{m alpha_i} followed by the n component blocks of
 *  the first-order couplings.
 */
inline Eigen::MatrixXd build_C(const CoupledSystem& sys, const std::vector<int>& alphas) {
    const int m = sys.m, n = sys.n, c = sys.c;
    const int h = compute_h(m, c, n);
    if (static_cast<int>(alphas.size()) != h)
        throw Error("build_C: alphas must have h = (m-c)(n+1) elements");
    std::vector<int> sorted = alphas;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw Error("build_C: repeated index in alphas");
    for (int a : alphas)
        if (a < 1 || a > c) throw Error("build_C: alphas must lie in {1..c}");

    Eigen::MatrixXd C(h, h);
    for (int i = 0; i < h; ++i) {
        const int alpha = alphas[static_cast<size_t>(i)];
        int col = 0;
        for (int j = c + 1; j <= m; ++j) C(i, col++) = sys.A(j - 1, alpha - 1);
        for (int e = 0; e < n; ++e)
            for (int j = c + 1; j <= m; ++j)
                C(i, col++) = sys.G[static_cast<size_t>(j - 1)][static_cast<size_t>(alpha - 1)](e);
    }
    return C;
}

enum class Regime { fully_actuated, c_ge_h, c_lt_h };
enum class Verdict { solvable, not_solvable, inconclusive };

inline const char* to_string(Regime r) {
    switch (r) {
        case Regime::fully_actuated: return "fully_actuated";
        case Regime::c_ge_h: return "c_ge_h";
        default: return "c_lt_h";
    }
}
inline const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::solvable: return "solvable";
        case Verdict::not_solvable: return "not_solvable";
        default: return "inconclusive";
    }
}

struct SolvabilityReport {
    int h = 0;
    Regime regime = Regime::fully_actuated;
    Verdict verdict = Verdict::inconclusive;
    std::optional<std::vector<int>> failing_subset;  ///< 1-based alphas, present iff not_solvable
    int p_min = 0;                                   ///< -1 when no workable order was found
    ProlongationCounts counts;
    std::vector<double> condition_numbers;  ///< reciprocal condition numbers of checked blocks
};

// forward declaration; defined with the extraction below
struct DifferentialOperator;
inline DifferentialOperator extract_inverse_operator(const CoupledSystem& sys, int p,
                                                     double rank_tol);

namespace detail {

/// All size-k subsets of {1..c} in lexicographic order.
inline std::vector<std::vector<int>> subsets_lex(int c, int k) {
    std::vector<std::vector<int>> out;
    std::vector<int> idx(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) idx[static_cast<size_t>(i)] = i + 1;
    while (true) {
        out.push_back(idx);
        int i = k - 1;
        while (i >= 0 && idx[static_cast<size_t>(i)] == c - (k - 1 - i)) --i;
        if (i < 0) break;
        ++idx[static_cast<size_t>(i)];
        for (int j = i + 1; j < k; ++j) idx[static_cast<size_t>(j)] = idx[static_cast<size_t>(j - 1)] + 1;
    }
    return out;
}

/// Smallest p at which operator extraction succeeds, or -1.
inline int search_extraction_order(const CoupledSystem& sys, double rank_tol, int p_max);

}  // namespace detail

/** Decides solvability through the coupling rank condition.  When c >= h,
 *  every h-subset of {1..c} is checked in lexicographic order with early
 *  exit on the first singular block (reciprocal condition number below
 *  rank_tol).  When c < h the verdict is inconclusive; see
 *  check_square_candidate for that regime.
 */
inline SolvabilityReport check_rank_condition(const CoupledSystem& sys, double rank_tol = 1e-12,
                                              int p_max = 12) {
    SolvabilityReport rep;
    rep.h = compute_h(sys.m, sys.c, sys.n);
    if (rep.h == 0) {
        rep.regime = Regime::fully_actuated;
        rep.verdict = Verdict::solvable;
        rep.p_min = 0;
        rep.counts = prolongation_counts(sys.m, sys.n, sys.c, 0);
        return rep;
    }
    if (sys.c < rep.h) {
        rep.regime = Regime::c_lt_h;
        rep.verdict = Verdict::inconclusive;
        rep.counts = prolongation_counts(sys.m, sys.n, sys.c, 0);
        return rep;
    }
    rep.regime = Regime::c_ge_h;
    rep.verdict = Verdict::solvable;
    for (const auto& alphas : detail::subsets_lex(sys.c, rep.h)) {
        Eigen::MatrixXd C = build_C(sys, alphas);
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(C);
        double rc = lu.rcond();
        rep.condition_numbers.push_back(rc);
        if (!(rc >= rank_tol)) {
            rep.verdict = Verdict::not_solvable;
            rep.failing_subset = alphas;
            break;
        }
    }
    if (rep.verdict == Verdict::solvable)
        rep.p_min = detail::search_extraction_order(sys, rank_tol, p_max);
    rep.counts = prolongation_counts(sys.m, sys.n, sys.c, std::max(rep.p_min, 0));
    return rep;
}

namespace detail {

/// Rows of the overdetermined block grouped by prolongation multi-index,
/// accumulated until the touched columns form a square block.
struct SquareCandidate {
    std::vector<int> rows;  ///< original row indices
    std::vector<int> cols;  ///< original column indices, ascending
};

inline std::optional<SquareCandidate> find_square_candidate(const ProlongedSystem& ps,
                                                            const DMDecomposition& dm) {
    if (dm.VR.empty()) return std::nullopt;
    // bucket VR rows by prolongation multi-index, graded lexicographic
    std::map<std::pair<int, MultiIndex>, std::vector<int>> groups;
    for (int r : dm.VR) {
        const auto& beta = ps.rows[static_cast<size_t>(r)].beta;
        groups[{mi_order(beta), beta}].push_back(r);
    }
    std::vector<std::vector<int>> row_adj(static_cast<size_t>(ps.pat.rows));
    for (const auto& e : ps.pat.entries) row_adj[static_cast<size_t>(e.r)].push_back(e.c);

    SquareCandidate cand;
    std::set<int> touched;
    for (const auto& [key, rows] : groups) {
        for (int r : rows) {
            cand.rows.push_back(r);
            for (int c : row_adj[static_cast<size_t>(r)]) touched.insert(c);
        }
        if (static_cast<int>(cand.rows.size()) == static_cast<int>(touched.size())) {
            cand.cols.assign(touched.begin(), touched.end());
            return cand;
        }
        if (static_cast<int>(cand.rows.size()) > static_cast<int>(touched.size())) return std::nullopt;
    }
    return std::nullopt;
}

}  // namespace detail

/** Solvability in the c < h regime: assembles the smallest square candidate
 *  from complete prolongation-order groups of the overdetermined block and
 *  decides by its nonsingularity.  Throws NoSquareCandidate when the block
 *  admits no square candidate at this order.
 */
inline SolvabilityReport check_square_candidate(const CoupledSystem& sys, int p,
                                                double rank_tol = 1e-12) {
    const int h = compute_h(sys.m, sys.c, sys.n);
    if (sys.c >= h) throw Error("check_square_candidate: applies only when c < h");
    SolvabilityReport rep;
    rep.h = h;
    rep.regime = Regime::c_lt_h;
    rep.counts = prolongation_counts(sys.m, sys.n, sys.c, p);
    rep.p_min = p;

    auto ps = build_prolonged_matrix(sys, p);
    auto matching = maximum_matching(ps.pat);
    auto dm = dulmage_mendelsohn(ps.pat, matching);
    auto cand = detail::find_square_candidate(ps, dm);
    if (!cand)
        throw NoSquareCandidate("check_square_candidate: no square candidate at p = " +
                                std::to_string(p) + "; increase p");

    Eigen::MatrixXd M(cand->rows.size(), cand->cols.size());
    M.setZero();
    {
        std::map<int, int> colpos;
        for (size_t j = 0; j < cand->cols.size(); ++j) colpos[cand->cols[j]] = static_cast<int>(j);
        std::map<int, int> rowpos;
        for (size_t i = 0; i < cand->rows.size(); ++i) rowpos[cand->rows[i]] = static_cast<int>(i);
        for (const auto& e : ps.pat.entries) {
            auto ri = rowpos.find(e.r);
            if (ri == rowpos.end()) continue;
            auto cj = colpos.find(e.c);
            if (cj != colpos.end()) M(ri->second, cj->second) = e.v;
        }
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(M);
    double rc = lu.rcond();
    rep.condition_numbers.push_back(rc);
    if (rc >= rank_tol) {
        rep.verdict = Verdict::solvable;
    } else {
        rep.verdict = Verdict::not_solvable;
        std::vector<int> fs;
        for (int a = 1; a <= sys.c; ++a) fs.push_back(a);
        rep.failing_subset = fs;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Differential operators
// ---------------------------------------------------------------------------

/** Constant-coefficient linear partial differential operator between vector
 *  fields: time order <= 1, spatial order bounded by the prolongation order
 *  plus two.  Coefficients are indexed by (output component, input
 *  component, time order, spatial multi-index), all expressed 1-based for
 *  components and 0-based for orders.
 */
struct DifferentialOperator {
    int out_dim = 0;
    int in_dim = 0;
    int n = 1;
    int max_time_order = 0;
    int max_space_order = 0;

    struct Key {
        int out;
        int in;
        int tor;
        MultiIndex beta;
        bool operator<(const Key& o) const {
            if (out != o.out) return out < o.out;
            if (in != o.in) return in < o.in;
            if (tor != o.tor) return tor < o.tor;
            return beta < o.beta;
        }
    };
    std::map<Key, double> coeffs;

    void add(int out, int in, int tor, MultiIndex beta, double v) {
        if (v == 0.0) return;
        max_time_order = std::max(max_time_order, tor);
        max_space_order = std::max(max_space_order, mi_order(beta));
        coeffs[{out, in, tor, std::move(beta)}] += v;
    }
};

/** Exact application to polynomials in (t, x); 1-D only.  Linear in the
 *  inputs, no discretization error.
 */
inline std::vector<Poly2> apply_operator_polynomial(const DifferentialOperator& op,
                                                    const std::vector<Poly2>& inputs) {
    if (op.n != 1) throw Error("apply_operator_polynomial: polynomial path is 1-D only");
    if (static_cast<int>(inputs.size()) != op.in_dim)
        throw DimensionMismatch("apply_operator_polynomial: wrong input count");
    std::vector<Poly2> out(static_cast<size_t>(op.out_dim));
    for (const auto& [key, v] : op.coeffs) {
        Poly2 term = inputs[static_cast<size_t>(key.in - 1)];
        for (int i = 0; i < key.tor; ++i) term = term.dt();
        term = term.dx(key.beta[0]);
        out[static_cast<size_t>(key.out - 1)] += v * term;
    }
    return out;
}

namespace detail {

/// Greedy independent row selection (modified Gram-Schmidt) over given columns.
inline std::optional<std::vector<int>> greedy_independent_rows(const Eigen::MatrixXd& block,
                                                               int target) {
    std::vector<int> picked;
    std::vector<Eigen::VectorXd> basis;
    for (int r = 0; r < block.rows() && static_cast<int>(picked.size()) < target; ++r) {
        Eigen::VectorXd v = block.row(r).transpose();
        double norm0 = v.norm();
        if (norm0 == 0.0) continue;
        for (const auto& b : basis) v -= b.dot(v) * b;
        if (v.norm() > 1e-10 * norm0) {
            basis.push_back(v.normalized());
            picked.push_back(r);
        }
    }
    if (static_cast<int>(picked.size()) < target) return std::nullopt;
    return picked;
}

}  // namespace detail

/** Constructs the right-inverse operator: the first m output components map
 *  the source onto a state whose unactuated equations balance exactly, and
 *  the last c components complete the controls,
 *
 *      u_l = (d/dt - div(d_l grad)) y_l - sum_i (g_{li} . grad + a_{li}) y_i
 *            - (source)_l .
 *
 *  The state block comes from transposing the solve of a nonsingular square
 *  block of the prolonged adjoint matrix (the matched overdetermined block
 *  when c >= h, the square candidate when c < h).  Spatial order <= p + 2,
 *  time order <= 1.
 */
inline DifferentialOperator extract_inverse_operator(const CoupledSystem& sys, int p,
                                                     double rank_tol = 1e-12) {
    const int m = sys.m, n = sys.n, c = sys.c;
    DifferentialOperator op;
    op.out_dim = m + c;
    op.in_dim = m;
    op.n = n;

    std::vector<int> sel_rows;   // prolonged row indices backing the state block
    Eigen::MatrixXd X;           // (m-c) x |sel_rows| solve weights
    ProlongedSystem ps;

    if (c < m) {
        ps = build_prolonged_matrix(sys, p);
        auto matching = maximum_matching(ps.pat);
        auto dm = dulmage_mendelsohn(ps.pat, matching);
        if (dm.VR.empty())
            throw NotSolvableAtP("extract_inverse_operator: no overdetermined block at p = " +
                                 std::to_string(p));

        std::vector<int> cols;
        const int h = compute_h(m, c, n);
        if (c >= h) {
            cols = dm.VC;
            if (cols.empty())
                throw NotSolvableAtP("extract_inverse_operator: overdetermined block has no "
                                     "columns at p = " + std::to_string(p));
            Eigen::MatrixXd block(dm.VR.size(), cols.size());
            block.setZero();
            std::map<int, int> colpos;
            for (size_t j = 0; j < cols.size(); ++j) colpos[cols[j]] = static_cast<int>(j);
            std::map<int, int> rowpos;
            for (size_t i = 0; i < dm.VR.size(); ++i) rowpos[dm.VR[i]] = static_cast<int>(i);
            for (const auto& e : ps.pat.entries) {
                auto ri = rowpos.find(e.r);
                if (ri == rowpos.end()) continue;
                auto cj = colpos.find(e.c);
                if (cj == colpos.end())
                    throw NotSolvableAtP("extract_inverse_operator: overdetermined row leaks "
                                         "outside its column block");
                block(ri->second, cj->second) = e.v;
            }
            auto picked = detail::greedy_independent_rows(block, static_cast<int>(cols.size()));
            if (!picked)
                throw NotSolvableAtP("extract_inverse_operator: overdetermined block is column "
                                     "rank deficient at p = " + std::to_string(p));
            for (int r : *picked) sel_rows.push_back(dm.VR[static_cast<size_t>(r)]);
        } else {
            auto cand = detail::find_square_candidate(ps, dm);
            if (!cand)
                throw NoSquareCandidate("extract_inverse_operator: no square candidate at p = " +
                                        std::to_string(p));
            sel_rows = cand->rows;
            cols = cand->cols;
        }

        Eigen::MatrixXd M = Eigen::MatrixXd::Zero(sel_rows.size(), cols.size());
        std::map<int, int> colpos;
        for (size_t j = 0; j < cols.size(); ++j) colpos[cols[j]] = static_cast<int>(j);
        std::map<int, int> rowpos;
        for (size_t i = 0; i < sel_rows.size(); ++i) rowpos[sel_rows[i]] = static_cast<int>(i);
        for (const auto& e : ps.pat.entries) {
            auto ri = rowpos.find(e.r);
            if (ri == rowpos.end()) continue;
            auto cj = colpos.find(e.c);
            if (cj == colpos.end())
                throw NotSolvableAtP("extract_inverse_operator: selected row leaks outside the "
                                     "square block");
            M(ri->second, cj->second) = e.v;
        }

        Eigen::PartialPivLU<Eigen::MatrixXd> lu(M);
        if (!(lu.rcond() >= rank_tol))
            throw NotSolvableAtP("extract_inverse_operator: square block is numerically singular "
                                 "(rcond < tol) at p = " + std::to_string(p));
        Eigen::MatrixXd Minv = lu.inverse();

        // rows of M^{-1} at the order-zero unknowns give the solve weights
        MultiIndex zero(static_cast<size_t>(n), 0);
        X.resize(m - c, static_cast<Eigen::Index>(sel_rows.size()));
        for (int r = 0; r < m - c; ++r) {
            int col_id = ps.col_index(zero, c + 1 + r, false);
            auto it = colpos.find(col_id);
            if (it == colpos.end())
                throw NotSolvableAtP("extract_inverse_operator: square block misses an "
                                     "order-zero unknown at p = " + std::to_string(p));
            X.row(r) = Minv.row(it->second);
        }

        // state rows: y_i accumulates (-1)^{|beta|} X(r, j) d^beta applied to
        // source component c+1+r, for each selected prolonged row (beta, i)
        for (size_t j = 0; j < sel_rows.size(); ++j) {
            const auto& row = ps.rows[static_cast<size_t>(sel_rows[j])];
            const double sign = (mi_order(row.beta) % 2 == 0) ? 1.0 : -1.0;
            for (int r = 0; r < m - c; ++r) {
                double w = X(r, static_cast<Eigen::Index>(j));
                if (w != 0.0) op.add(row.eq, c + 1 + r, 0, row.beta, sign * w);
            }
        }
    }

    // control rows complete the actuated equations
    std::vector<std::pair<DifferentialOperator::Key, double>> state(op.coeffs.begin(),
                                                                    op.coeffs.end());
    for (int l = 1; l <= c; ++l) {
        for (const auto& [key, v] : state) {
            if (key.out == l) {
                op.add(m + l, key.in, key.tor + 1, key.beta, v);
                const Eigen::MatrixXd& d = sys.D[static_cast<size_t>(l - 1)];
                for (int a = 0; a < n; ++a)
                    for (int b = 0; b < n; ++b)
                        if (d(a, b) != 0.0)
                            op.add(m + l, key.in, key.tor,
                                   mi_add(mi_add(key.beta, mi_unit(n, a)), mi_unit(n, b)),
                                   -d(a, b) * v);
            }
            const int i = key.out;
            const Eigen::VectorXd& g = sys.G[static_cast<size_t>(l - 1)][static_cast<size_t>(i - 1)];
            for (int e = 0; e < n; ++e)
                if (g(e) != 0.0)
                    op.add(m + l, key.in, key.tor, mi_add(key.beta, mi_unit(n, e)), -g(e) * v);
            if (sys.A(l - 1, i - 1) != 0.0)
                op.add(m + l, key.in, key.tor, key.beta, -sys.A(l - 1, i - 1) * v);
        }
        op.add(m + l, l, 0, MultiIndex(static_cast<size_t>(n), 0), -1.0);
    }
    return op;
}

namespace detail {

inline int search_extraction_order(const CoupledSystem& sys, double rank_tol, int p_max) {
    for (int p = 0; p <= p_max; ++p) {
        try {
            extract_inverse_operator(sys, p, rank_tol);
            return p;
        } catch (const NotSolvableAtP&) {
        } catch (const NoSquareCandidate&) {
        }
    }
    return -1;
}

}  // namespace detail

/** Maximum absolute residual coefficient of L(B(phi)) - phi over random
 *  polynomial sources, by exact polynomial arithmetic.  1-D only.
 */
inline double verify_right_inverse(const CoupledSystem& sys, const DifferentialOperator& op,
                                   int trials, std::uint64_t seed = 20240601ULL) {
    if (sys.n != 1) throw Error("verify_right_inverse: polynomial oracle is 1-D only");
    const int m = sys.m, c = sys.c;
    const int deg_x = std::max(3, op.max_space_order + 1);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);

    double worst = 0.0;
    for (int trial = 0; trial < trials; ++trial) {
        std::vector<Poly2> phi;
        for (int i = 0; i < m; ++i) {
            Eigen::MatrixXd coeffs(3, deg_x + 1);
            for (int a = 0; a < coeffs.rows(); ++a)
                for (int b = 0; b < coeffs.cols(); ++b) coeffs(a, b) = unif(rng);
            phi.emplace_back(coeffs);
        }
        auto out = apply_operator_polynomial(op, phi);
        for (int k = 1; k <= m; ++k) {
            Poly2 res = out[static_cast<size_t>(k - 1)].dt();
            res -= sys.d(k - 1) * out[static_cast<size_t>(k - 1)].dx(2);
            for (int i = 1; i <= m; ++i) {
                res -= sys.g(k - 1, i - 1) * out[static_cast<size_t>(i - 1)].dx();
                res -= sys.a(k - 1, i - 1) * out[static_cast<size_t>(i - 1)];
            }
            if (k <= c) res -= out[static_cast<size_t>(m + k - 1)];
            res -= phi[static_cast<size_t>(k - 1)];
            worst = std::max(worst, res.max_abs_coeff());
        }
    }
    return worst;
}

}  // namespace fcm
