#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "grade/dynamics.hpp"
#include "grade/errors.hpp"
#include "grade/glasso.hpp"
#include "grade/smoother.hpp"
#include "grade/threading.hpp"

namespace grade {

enum class SelectionMode { Bic, FixedLambda, TargetEdges };

struct GradeConfig {
    LocalPolyConfig smoother;
    BasisSpec basis = BasisSpec::cubic_spline(2);
    double quad_step = 0.01;
    int lambda_grid_size = 50;
    double lambda_grid_ratio = 1e-3;
    double ridge = 0.0;
    SelectionMode selection = SelectionMode::Bic;
    double fixed_lambda = 0.0;
    int target_edges = 0;
    std::vector<int> m_candidates;  // family parameters for BIC-over-M; empty = use basis as-is
    int threads = 1;
    double tol = 1e-8;
    int max_iter = 10000;
    int max_edges_on_path = 0;  // 0 = full grid; otherwise the path stops once exceeded
};

// Per-node paths over one common absolute lambda grid (the selection rules
// compare nodes at the same sparsity parameter, so the grid is anchored at
// the largest nodewise lambda_max).
struct NodewisePaths {
    std::vector<StandardizedProblem> problems;  // one per node
    std::vector<double> lambdas;                // common, decreasing
    std::vector<std::vector<GroupLassoFit>> fits;  // [node][grid]
    std::vector<double> node_lambda_max;
    int p = 0;
};

struct RecoveryPoint {
    double lambda = 0.0;
    int total = 0;
    int true_selected = 0;
};

struct RecoveryReport {
    std::vector<RecoveryPoint> curve;
    double auc = 0.5;
    int tp = 0, fp = 0, fn = 0, tn = 0;
};

struct NetworkEstimate {
    int p = 0;
    std::string method;  // "GRADE" | "DerivativeBaseline"
    std::vector<Edge> edges;
    Eigen::VectorXd selected_lambda;   // per node
    Eigen::MatrixXd dense_strength;    // (from,to) group norms at the smallest path lambda
    std::vector<Eigen::MatrixXd> path_norms;  // per node: grid x p group norms
    std::vector<std::vector<double>> path_bic;      // per node, per grid point
    std::vector<std::vector<bool>> path_certified;  // per node, per grid point
    std::vector<double> lambdas;              // common grid
    double alpha = 1.0;                        // target-edge-count multiplier
    bool all_certified = true;
    std::uint64_t smoother_fingerprint = 0;
    std::vector<double> node_bic_lambda;  // per-node BIC choice (reference for alpha scaling)
    int basis_param = 0;                  // family parameter actually used (after BIC-over-M)
};

// ---------------------------------------------------------------------------

inline std::vector<std::vector<SmoothEstimate>> smooth_dataset(const TimeSeriesDataset& data,
                                                               const LocalPolyConfig& config,
                                                               int threads = 1) {
    std::vector<std::vector<SmoothEstimate>> out(data.R);
    std::vector<std::optional<SmoothEstimate>> flat(data.R * data.p);
    parallel_for(data.R * data.p, threads, [&](int idx) {
        const int r = idx / data.p;
        const int k = idx % data.p;
        flat[idx].emplace(local_poly_fit(data.times, data.y[r].col(k), config));
    });
    for (int r = 0; r < data.R; ++r) {
        out[r].reserve(data.p);
        for (int k = 0; k < data.p; ++k) out[r].push_back(std::move(*flat[r * data.p + k]));
    }
    return out;
}

inline std::uint64_t smooths_fingerprint(const std::vector<std::vector<SmoothEstimate>>& smooths) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& row : smooths)
        for (const auto& s : row) {
            h ^= s.fingerprint();
            h *= 1099511628211ULL;
        }
    return h;
}

namespace detail {

inline int count_edges(const std::vector<GroupLassoFit>& node_fits) {
    int c = 0;
    for (const auto& f : node_fits) c += static_cast<int>(f.active.size());
    return c;
}

inline NodewisePaths fit_network_paths(const IntegratedDesign& design,
                                       const std::vector<Eigen::VectorXd>& responses,
                                       InterceptMode intercepts, const GradeConfig& cfg) {
    NodewisePaths np;
    np.p = design.p;
    np.problems.resize(design.p);
    parallel_for(design.p, cfg.threads, [&](int j) {
        GroupLassoProblem prob;
        prob.design = &design;
        prob.response = responses[j];
        prob.ridge = cfg.ridge;
        prob.intercept_mode = intercepts;
        np.problems[j] = standardize_groups(prob);
    });
    np.node_lambda_max.resize(design.p);
    double common = 0.0;
    for (int j = 0; j < design.p; ++j) {
        np.node_lambda_max[j] = compute_lambda_max(np.problems[j]);
        common = std::max(common, np.node_lambda_max[j]);
    }
    if (!(common > 0.0)) common = 1.0;  // fully degenerate data; grid is irrelevant
    np.fits.assign(design.p, {});
    const int G = cfg.lambda_grid_size;
    for (int g = 0; g < G; ++g) {
        const double lam = common * std::pow(cfg.lambda_grid_ratio, static_cast<double>(g) / (G - 1));
        np.lambdas.push_back(lam);
        parallel_for(design.p, cfg.threads, [&](int j) {
            const GroupLassoFit* warm = np.fits[j].empty() ? nullptr : &np.fits[j].back();
            np.fits[j].push_back(fit_single(np.problems[j], lam, cfg.tol, cfg.max_iter, warm));
        });
        if (cfg.max_edges_on_path > 0) {
            int total = 0;
            for (int j = 0; j < design.p; ++j) total += static_cast<int>(np.fits[j].back().active.size());
            if (total > cfg.max_edges_on_path) break;
        }
    }
    return np;
}

inline void fill_path_norms(const NodewisePaths& np, NetworkEstimate& est) {
    const int G = static_cast<int>(np.lambdas.size());
    est.lambdas = np.lambdas;
    est.path_norms.assign(np.p, Eigen::MatrixXd::Zero(G, np.p));
    est.path_bic.assign(np.p, std::vector<double>(G, 0.0));
    est.path_certified.assign(np.p, std::vector<bool>(G, false));
    for (int j = 0; j < np.p; ++j)
        for (int g = 0; g < G; ++g) {
            for (int k = 0; k < np.p; ++k) est.path_norms[j](g, k) = np.fits[j][g].group_norms[k];
            est.path_bic[j][g] = bic_of_fit(np.fits[j][g], np.problems[j].N);
            est.path_certified[j][g] = np.fits[j][g].kkt.certified;
        }
    est.dense_strength = Eigen::MatrixXd::Zero(np.p, np.p);
    for (int j = 0; j < np.p; ++j)
        for (int k = 0; k < np.p; ++k) est.dense_strength(k, j) = np.fits[j][G - 1].group_norms[k];
}

inline void select_into(NetworkEstimate& est, const std::vector<const GroupLassoFit*>& chosen) {
    est.edges.clear();
    est.selected_lambda.resize(est.p);
    est.all_certified = true;
    for (int j = 0; j < est.p; ++j) {
        const GroupLassoFit& f = *chosen[j];
        est.selected_lambda(j) = f.lambda;
        est.all_certified = est.all_certified && f.kkt.certified && f.converged;
        for (int k : f.active) est.edges.push_back({k - 1, j, f.group_norms[k - 1]});
    }
    std::sort(est.edges.begin(), est.edges.end(), [](const Edge& a, const Edge& b) {
        return a.from != b.from ? a.from < b.from : a.to < b.to;
    });
}

}  // namespace detail

// Bisection over a common multiplier alpha applied to each node's reference
// lambda (its lambda_max), refitting at each probe until the edge count is
// within +/-2 of the target or the bracket collapses.
struct TargetSelection {
    double alpha = 1.0;
    std::vector<GroupLassoFit> fits;  // one per node
    int total_edges = 0;
};

inline TargetSelection select_lambda_for_edge_count(NodewisePaths& np, int target, double tol = 1e-8,
                                                    int max_iter = 10000, int threads = 1) {
    const int p = np.p;
    if (target < 0 || target > p * p) throw TargetUnreachable("target edge count outside [0, p^2]");
    const double lo_ratio = std::min(1e-3, np.lambdas.empty() ? 1e-3 : np.lambdas.back() / np.lambdas.front());

    auto probe = [&](double alpha) {
        TargetSelection sel;
        sel.alpha = alpha;
        sel.fits.resize(p);
        parallel_for(p, threads, [&](int j) {
            const double lam = alpha * np.node_lambda_max[j];
            // warm start from the sparser side: the closest grid fit whose
            // lambda is >= the probe (descending toward a solution keeps
            // exact zeros exact; a denser warm start can stall at tiny
            // nonzero coefficients within tolerance)
            const GroupLassoFit* warm = nullptr;
            for (const auto& f : np.fits[j]) {
                if (f.lambda >= lam * (1.0 - 1e-12))
                    warm = &f;
                else
                    break;
            }
            sel.fits[j] = fit_single(np.problems[j], lam, tol, max_iter, warm);
        });
        for (int j = 0; j < p; ++j) sel.total_edges += static_cast<int>(sel.fits[j].active.size());
        return sel;
    };

    TargetSelection hi = probe(1.0);  // empty by construction of lambda_max
    if (std::abs(hi.total_edges - target) <= 2) return hi;
    double cur_lo = lo_ratio;
    TargetSelection lo = probe(cur_lo);
    while (lo.total_edges + 2 < target && cur_lo > 1e-14) {
        cur_lo *= 1e-2;
        lo = probe(cur_lo);
    }
    if (lo.total_edges + 2 < target)
        throw TargetUnreachable("edge counts never bracket the target on the searchable range");
    if (std::abs(lo.total_edges - target) <= 2) return lo;

    double a_lo = cur_lo, a_hi = 1.0;
    TargetSelection best = std::abs(lo.total_edges - target) < std::abs(hi.total_edges - target) ? lo : hi;
    for (int iter = 0; iter < 60 && a_hi - a_lo > 1e-6; ++iter) {
        const double mid = std::sqrt(a_lo * a_hi);  // bisect on the log scale
        TargetSelection ts = probe(mid);
        if (std::abs(ts.total_edges - target) < std::abs(best.total_edges - target)) best = ts;
        if (std::abs(ts.total_edges - target) <= 2) return ts;
        if (ts.total_edges > target)
            a_lo = mid;
        else
            a_hi = mid;
    }
    return best;
}

namespace detail {

inline NetworkEstimate assemble_network(const IntegratedDesign& design,
                                        const std::vector<Eigen::VectorXd>& responses,
                                        InterceptMode intercepts, const GradeConfig& cfg,
                                        const std::string& method) {
    NodewisePaths np = fit_network_paths(design, responses, intercepts, cfg);
    NetworkEstimate est;
    est.p = design.p;
    est.method = method;
    fill_path_norms(np, est);

    const int G = static_cast<int>(np.lambdas.size());
    std::vector<const GroupLassoFit*> chosen(design.p, nullptr);
    est.node_bic_lambda.resize(design.p);
    std::vector<int> bic_idx(design.p, 0);
    for (int j = 0; j < design.p; ++j) {
        for (int g = 1; g < G; ++g)
            if (est.path_bic[j][g] < est.path_bic[j][bic_idx[j]]) bic_idx[j] = g;
        est.node_bic_lambda[j] = np.lambdas[bic_idx[j]];
    }

    std::vector<GroupLassoFit> extra(design.p);
    switch (cfg.selection) {
        case SelectionMode::Bic: {
            for (int j = 0; j < design.p; ++j) chosen[j] = &np.fits[j][bic_idx[j]];
            break;
        }
        case SelectionMode::FixedLambda: {
            parallel_for(design.p, cfg.threads, [&](int j) {
                const GroupLassoFit* warm = np.fits[j].empty() ? nullptr : &np.fits[j].back();
                extra[j] = fit_single(np.problems[j], cfg.fixed_lambda, cfg.tol, cfg.max_iter, warm);
            });
            for (int j = 0; j < design.p; ++j) chosen[j] = &extra[j];
            break;
        }
        case SelectionMode::TargetEdges: {
            TargetSelection sel = select_lambda_for_edge_count(np, cfg.target_edges, cfg.tol, cfg.max_iter,
                                                               cfg.threads);
            est.alpha = sel.alpha;
            extra = std::move(sel.fits);
            for (int j = 0; j < design.p; ++j) chosen[j] = &extra[j];
            break;
        }
    }
    select_into(est, chosen);
    return est;
}

inline BasisSpec family_with_param(const BasisSpec& family, int param) {
    switch (family.family()) {
        case BasisFamily::Monomial: return BasisSpec::monomial(param);
        case BasisFamily::Linear: return BasisSpec::linear();
        case BasisFamily::CubicSplineKnots: return BasisSpec::cubic_spline(param);
        case BasisFamily::Trigonometric: return BasisSpec::trigonometric(param);
    }
    throw Error("unknown basis family");
}

inline double total_min_bic(const NetworkEstimate& est) {
    double s = 0.0;
    for (const auto& v : est.path_bic) s += *std::min_element(v.begin(), v.end());
    return s;
}

}  // namespace detail

// Full GRADE reconstruction: smooth each series (GCV bandwidth per series),
// build the integrated design, fit nodewise standardized-group-lasso paths
// with per-experiment intercepts, apply the selection mode. When
// m_candidates is non-empty the family parameter is chosen by the summed
// per-node minimum BIC across candidates.
inline NetworkEstimate grade_fit(const TimeSeriesDataset& data, const GradeConfig& cfg,
                                 const std::vector<std::vector<SmoothEstimate>>* precomputed_smooths = nullptr) {
    std::vector<std::vector<SmoothEstimate>> local;
    const auto* smooths = precomputed_smooths;
    if (!smooths) {
        local = smooth_dataset(data, cfg.smoother, cfg.threads);
        smooths = &local;
    }
    if (!cfg.m_candidates.empty()) {
        NetworkEstimate best;
        double best_bic = std::numeric_limits<double>::infinity();
        for (int cand : cfg.m_candidates) {
            GradeConfig c2 = cfg;
            c2.m_candidates.clear();
            c2.basis = detail::family_with_param(cfg.basis, cand);
            NetworkEstimate est = grade_fit(data, c2, smooths);
            const double score = detail::total_min_bic(est);
            if (score < best_bic) {
                best_bic = score;
                best = std::move(est);
            }
        }
        return best;
    }
    const int M = cfg.basis.size();
    if (static_cast<long long>(data.n) * data.R <= 2LL * M)
        throw InsufficientData("n*R must exceed 2*M");
    const double tmax = data.times(data.n - 1);
    const std::vector<BasisSpec> bases = fit_bases_to_smooths(*smooths, cfg.basis, cfg.quad_step, tmax);
    const IntegratedDesign design = build_integrated_design(*smooths, bases, data.times, cfg.quad_step);
    std::vector<Eigen::VectorXd> responses(data.p);
    for (int j = 0; j < data.p; ++j) {
        responses[j].resize(data.R * data.n);
        for (int r = 0; r < data.R; ++r) responses[j].segment(r * data.n, data.n) = data.y[r].col(j);
    }
    NetworkEstimate est =
        detail::assemble_network(design, responses, InterceptMode::PerExperiment, cfg, "GRADE");
    est.smoother_fingerprint = smooths_fingerprint(*smooths);
    est.basis_param = cfg.basis.param();
    return est;
}

// Derivative-based two-step baseline (the shared NeRDS/SA-ODE skeleton):
// the smoothed derivative is regressed on the non-integrated basis
// regressors with a single unpenalized intercept.
inline NetworkEstimate derivative_baseline_fit(const TimeSeriesDataset& data, const GradeConfig& cfg,
                                               const std::vector<std::vector<SmoothEstimate>>* precomputed_smooths = nullptr) {
    std::vector<std::vector<SmoothEstimate>> local;
    const auto* smooths = precomputed_smooths;
    if (!smooths) {
        local = smooth_dataset(data, cfg.smoother, cfg.threads);
        smooths = &local;
    }
    if (!cfg.m_candidates.empty()) {
        NetworkEstimate best;
        double best_bic = std::numeric_limits<double>::infinity();
        for (int cand : cfg.m_candidates) {
            GradeConfig c2 = cfg;
            c2.m_candidates.clear();
            c2.basis = detail::family_with_param(cfg.basis, cand);
            NetworkEstimate est = derivative_baseline_fit(data, c2, smooths);
            const double score = detail::total_min_bic(est);
            if (score < best_bic) {
                best_bic = score;
                best = std::move(est);
            }
        }
        return best;
    }
    const int M = cfg.basis.size();
    if (static_cast<long long>(data.n) * data.R <= 2LL * M)
        throw InsufficientData("n*R must exceed 2*M");
    const double tmax = data.times(data.n - 1);
    const std::vector<BasisSpec> bases = fit_bases_to_smooths(*smooths, cfg.basis, cfg.quad_step, tmax);
    const IntegratedDesign design = build_pointwise_design(*smooths, bases, data.times);
    std::vector<Eigen::VectorXd> responses(data.p);
    for (int j = 0; j < data.p; ++j) {
        responses[j].resize(data.R * data.n);
        for (int r = 0; r < data.R; ++r)
            for (int i = 0; i < data.n; ++i)
                responses[j](r * data.n + i) = (*smooths)[r][j].derivative(data.times(i));
    }
    NetworkEstimate est =
        detail::assemble_network(design, responses, InterceptMode::Global, cfg, "DerivativeBaseline");
    est.smoother_fingerprint = smooths_fingerprint(*smooths);
    est.basis_param = cfg.basis.param();
    return est;
}

// ---------------------------------------------------------------------------
// Recovery evaluation

namespace detail {

// Mid-rank Mann-Whitney AUC over all p^2 ordered pairs.
inline double auc_midrank(const Eigen::MatrixXd& strength, const Eigen::MatrixXd& truth) {
    const int p = static_cast<int>(strength.rows());
    std::vector<std::pair<double, int>> scored;
    scored.reserve(p * p);
    for (int k = 0; k < p; ++k)
        for (int j = 0; j < p; ++j) scored.emplace_back(strength(k, j), truth(k, j) > 0.5 ? 1 : 0);
    std::sort(scored.begin(), scored.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    const int total = static_cast<int>(scored.size());
    std::vector<double> rank(total);
    int i = 0;
    while (i < total) {
        int j = i;
        while (j + 1 < total && scored[j + 1].first == scored[i].first) ++j;
        const double mid = 0.5 * (i + j) + 1.0;
        for (int t = i; t <= j; ++t) rank[t] = mid;
        i = j + 1;
    }
    double pos_rank_sum = 0.0;
    int n_true = 0;
    for (int t = 0; t < total; ++t)
        if (scored[t].second) {
            pos_rank_sum += rank[t];
            ++n_true;
        }
    const int n_false = total - n_true;
    if (n_true == 0 || n_false == 0) return 0.5;
    return (pos_rank_sum - 0.5 * n_true * (n_true + 1.0)) / (static_cast<double>(n_true) * n_false);
}

}  // namespace detail

inline RecoveryReport evaluate_recovery(const NetworkEstimate& est, const Eigen::MatrixXd& truth) {
    if (truth.rows() != est.p || truth.cols() != est.p)
        throw DimensionMismatch("truth adjacency size != estimate p");
    RecoveryReport rep;
    const int G = static_cast<int>(est.lambdas.size());
    for (int g = 0; g < G; ++g) {
        RecoveryPoint pt;
        pt.lambda = est.lambdas[g];
        for (int j = 0; j < est.p; ++j)
            for (int k = 0; k < est.p; ++k)
                if (est.path_norms[j](g, k) > 0.0) {
                    ++pt.total;
                    if (truth(k, j) > 0.5) ++pt.true_selected;
                }
        rep.curve.push_back(pt);
    }
    rep.auc = detail::auc_midrank(est.dense_strength, truth);
    Eigen::MatrixXd sel = Eigen::MatrixXd::Zero(est.p, est.p);
    for (const Edge& e : est.edges) sel(e.from, e.to) = 1.0;
    for (int k = 0; k < est.p; ++k)
        for (int j = 0; j < est.p; ++j) {
            const bool s = sel(k, j) > 0.5, t = truth(k, j) > 0.5;
            rep.tp += s && t;
            rep.fp += s && !t;
            rep.fn += !s && t;
            rep.tn += !s && !t;
        }
    return rep;
}

// Curve/AUC for a bare strength matrix (used by the ROC null calibration).
inline double strength_auc(const Eigen::MatrixXd& strength, const Eigen::MatrixXd& truth) {
    return detail::auc_midrank(strength, truth);
}

// ---------------------------------------------------------------------------
// Robustness experiment (Lotka-Volterra, target-20 selection)

struct LvRobustnessRow {
    double v = 0.0;
    double mean_self = 0.0;
    double mean_nonself = 0.0;
    double d1 = 0.0;
    double d2 = 0.0;
};

inline std::vector<LvRobustnessRow> lv_robustness_experiment(const std::vector<double>& v_values, int R,
                                                             std::uint64_t seed, int reps,
                                                             const GradeConfig& base_cfg, int n = 200,
                                                             int mc_reps = 200) {
    if (reps < 1) throw Error("reps must be >= 1");
    std::vector<LvRobustnessRow> out;
    for (std::size_t vi = 0; vi < v_values.size(); ++vi) {
        const double v = v_values[vi];
        const OdeSystem lv = make_lv_system(v);
        LvRobustnessRow row;
        row.v = v;
        const Eigen::MatrixXd D = regulatory_effect(lv, R, derive_stream(seed, 7000 + vi), mc_reps);
        std::tie(row.d1, row.d2) = min_regulatory_effects(D);
        for (int rep = 0; rep < reps; ++rep) {
            const std::uint64_t rep_seed = derive_stream(seed, vi * 1000 + rep);
            const Eigen::MatrixXd inits = lv_initials(R, lv.p, rep_seed);
            const TimeSeriesDataset data = generate_multi_experiment(lv, inits, n, 0.0, rep_seed);
            GradeConfig cfg = base_cfg;
            cfg.selection = SelectionMode::TargetEdges;
            cfg.target_edges = 20;
            const NetworkEstimate est = grade_fit(data, cfg);
            int self_edges = 0, nonself = 0;
            for (const Edge& e : est.edges) {
                if (e.from == e.to)
                    ++self_edges;
                else if (e.from / 2 == e.to / 2)
                    ++nonself;
            }
            row.mean_self += self_edges;
            row.mean_nonself += nonself;
        }
        row.mean_self /= reps;
        row.mean_nonself /= reps;
        out.push_back(row);
    }
    return out;
}

}  // namespace grade
