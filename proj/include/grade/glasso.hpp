#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "grade/basis.hpp"
#include "grade/errors.hpp"

namespace grade {

enum class InterceptMode { Global, PerExperiment };

// One nodewise regression: response stacked over experiments against a
// grouped design; groups 1..p penalized, intercept(s) and the time column
// unpenalized.
struct GroupLassoProblem {
    const IntegratedDesign* design = nullptr;
    Eigen::VectorXd response;  // R*n
    double ridge = 0.0;        // mu
    InterceptMode intercept_mode = InterceptMode::PerExperiment;
};

struct GroupReport {
    int rank = 0;          // effective rank after the 1e-10 relative threshold
    int dropped = 0;       // directions dropped
    bool degenerate = false;  // whole group numerically zero; excluded from selection
};

// The reparameterized problem: unpenalized columns (per-experiment intercepts
// and the time regressor) are projected out of the response and of every
// penalized group; each group is then orthonormalized against its projected
// Gram, so the empirical-norm penalty is the plain Euclidean norm of the
// transformed block and the transformed group Gram is the identity on its
// effective rank.
class StandardizedProblem {
  public:
    int N = 0, R = 1, n = 0, p = 0, q = 0;
    double ridge = 0.0;
    Eigen::MatrixXd unpen;    // N x q
    Eigen::MatrixXd unpen_Q;  // N x q, orthonormal columns
    Eigen::VectorXd y;        // raw response
    Eigen::VectorXd y_proj;
    std::vector<Eigen::MatrixXd> Z;     // N x rank_k standardized blocks
    std::vector<Eigen::MatrixXd> back;  // M x rank_k, theta = back * b
    std::vector<Eigen::MatrixXd> fwd;   // M x rank_k, s_orig = fwd * s_std (Lambda^{1/2} V)
    std::vector<Eigen::MatrixXd> gram;  // projected group Gram, M x M
    std::vector<GroupReport> report;
    const IntegratedDesign* design = nullptr;
    double lambda_max_cache = 0.0;

    int group_size() const { return design->M; }
    double kkt_scale() const { return std::max(1.0, lambda_max_cache); }
};

inline StandardizedProblem standardize_groups(const GroupLassoProblem& problem) {
    const IntegratedDesign& d = *problem.design;
    StandardizedProblem sp;
    sp.N = d.rows();
    sp.R = d.R;
    sp.n = d.n;
    sp.p = d.p;
    sp.ridge = problem.ridge;
    sp.design = problem.design;
    if (problem.response.size() != sp.N) throw DimensionMismatch("response length != design rows");

    const int n_intercepts = problem.intercept_mode == InterceptMode::PerExperiment ? d.R : 1;
    sp.q = n_intercepts + (d.has_time_column ? 1 : 0);
    sp.unpen = Eigen::MatrixXd::Zero(sp.N, sp.q);
    if (problem.intercept_mode == InterceptMode::PerExperiment) {
        for (int r = 0; r < d.R; ++r) sp.unpen.block(r * d.n, r, d.n, 1).setOnes();
    } else {
        sp.unpen.col(0).setOnes();
    }
    if (d.has_time_column) sp.unpen.col(n_intercepts) = d.X.col(0);

    Eigen::HouseholderQR<Eigen::MatrixXd> qr(sp.unpen);
    sp.unpen_Q = qr.householderQ() * Eigen::MatrixXd::Identity(sp.N, sp.q);
    auto project = [&sp](const Eigen::MatrixXd& v) -> Eigen::MatrixXd {
        return v - sp.unpen_Q * (sp.unpen_Q.transpose() * v);
    };

    sp.y = problem.response;
    sp.y_proj = project(sp.y);

    sp.Z.resize(d.p);
    sp.back.resize(d.p);
    sp.fwd.resize(d.p);
    sp.gram.resize(d.p);
    sp.report.resize(d.p);
    for (int k = 1; k <= d.p; ++k) {
        const auto raw = d.X.middleCols(d.group_offset(k), d.M);
        const Eigen::MatrixXd Xg = project(raw);
        const Eigen::MatrixXd G = Xg.transpose() * Xg / sp.N;
        sp.gram[k - 1] = G;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(G);
        const Eigen::VectorXd w = eig.eigenvalues();
        const double wmax = w(w.size() - 1);
        // A group whose projected columns are at the rounding floor relative
        // to its raw columns is entirely explained by the unpenalized block
        // (e.g. a constant trajectory); it carries no selectable signal.
        const double raw_scale = raw.squaredNorm() / sp.N;
        GroupReport rep;
        if (!(wmax > 1e-20 * std::max(raw_scale, 1e-300))) {
            rep.degenerate = true;
            rep.rank = 0;
            rep.dropped = d.M;
            sp.Z[k - 1].resize(sp.N, 0);
            sp.back[k - 1].resize(d.M, 0);
            sp.fwd[k - 1].resize(d.M, 0);
            sp.report[k - 1] = rep;
            continue;
        }
        std::vector<int> keep;
        for (int i = 0; i < w.size(); ++i)
            if (w(i) > 1e-10 * wmax) keep.push_back(i);
        rep.rank = static_cast<int>(keep.size());
        rep.dropped = d.M - rep.rank;
        Eigen::MatrixXd back(d.M, rep.rank), fwd(d.M, rep.rank);
        for (int c = 0; c < rep.rank; ++c) {
            const double rt = std::sqrt(w(keep[c]));
            back.col(c) = eig.eigenvectors().col(keep[c]) / rt;
            fwd.col(c) = eig.eigenvectors().col(keep[c]) * rt;
        }
        sp.Z[k - 1] = Xg * back;
        sp.back[k - 1] = std::move(back);
        sp.fwd[k - 1] = std::move(fwd);
        sp.report[k - 1] = rep;
    }

    double lmax = 0.0;
    for (int k = 0; k < d.p; ++k)
        if (sp.Z[k].cols() > 0) lmax = std::max(lmax, (sp.Z[k].transpose() * sp.y_proj / sp.N).norm());
    sp.lambda_max_cache = lmax;
    return sp;
}

// Smallest lambda with an empty active set: the unpenalized columns are
// projected out of the response and the largest standardized group
// correlation norm is taken.
inline double compute_lambda_max(const StandardizedProblem& sp) { return sp.lambda_max_cache; }

struct KktReport {
    double max_active_stationarity = 0.0;
    double max_inactive_ratio = 0.0;
    double scale = 1.0;
    bool certified = false;
};

struct GroupLassoFit {
    double lambda = 0.0;
    double ridge = 0.0;
    std::vector<Eigen::VectorXd> coef;  // theta_k, original coordinates (M each)
    std::vector<Eigen::VectorXd> b;     // standardized coordinates (warm-start state)
    double time_coef = 0.0;
    Eigen::VectorXd intercepts;  // R (per-experiment) or 1 (global)
    std::vector<double> group_norms;  // ||theta_k||_{n,k} = ||b_k||
    std::vector<int> active;
    double rss = 0.0;
    double objective = 0.0;
    int df = 0;
    int iterations = 0;
    bool converged = false;
    KktReport kkt;
};

namespace detail {

inline double glasso_objective(const StandardizedProblem& sp, const Eigen::VectorXd& resid,
                               const std::vector<Eigen::VectorXd>& b, double lambda) {
    double obj = resid.squaredNorm() / (2.0 * sp.N);
    for (int k = 0; k < sp.p; ++k) {
        if (b[k].size() == 0) continue;
        const double nb = b[k].norm();
        obj += lambda * nb + 0.5 * sp.ridge * nb * nb;
    }
    return obj;
}

}  // namespace detail

inline KktReport kkt_certificate(const GroupLassoFit& fit, const StandardizedProblem& sp) {
    KktReport rep;
    rep.scale = sp.kkt_scale();
    Eigen::VectorXd resid = sp.y_proj;
    for (int k = 0; k < sp.p; ++k)
        if (fit.b[k].size() > 0) resid -= sp.Z[k] * fit.b[k];
    for (int k = 0; k < sp.p; ++k) {
        if (sp.report[k].degenerate) continue;
        const Eigen::VectorXd corr = sp.Z[k].transpose() * resid / sp.N;
        const double nb = fit.b[k].size() > 0 ? fit.b[k].norm() : 0.0;
        if (nb > 0.0) {
            const Eigen::VectorXd s_std = corr - fit.lambda * fit.b[k] / nb - sp.ridge * fit.b[k];
            const double stat = (sp.fwd[k] * s_std).norm();
            rep.max_active_stationarity = std::max(rep.max_active_stationarity, stat);
        } else {
            double ratio;
            if (fit.lambda > 0.0)
                ratio = corr.squaredNorm() / (fit.lambda * fit.lambda);
            else
                ratio = corr.norm() <= 1e-6 * rep.scale ? 0.0 : std::numeric_limits<double>::infinity();
            rep.max_inactive_ratio = std::max(rep.max_inactive_ratio, ratio);
        }
    }
    rep.certified = rep.max_active_stationarity <= 1e-6 * rep.scale && rep.max_inactive_ratio <= 1.0 + 1e-6;
    return rep;
}

// Block coordinate descent with exact group soft-threshold updates in the
// standardized coordinates. The unpenalized coordinates live in the
// projected-out subspace, so they are recovered by least squares after the
// sweeps; their fitted contribution is unaffected by the penalized blocks.
inline GroupLassoFit fit_single(const StandardizedProblem& sp, double lambda, double tol = 1e-8,
                                int max_iter = 10000, const GroupLassoFit* warm = nullptr) {
    if (lambda < 0.0) throw Error("lambda must be non-negative");
    if (!(tol > 0.0)) throw Error("tol must be positive");
    GroupLassoFit fit;
    fit.lambda = lambda;
    fit.ridge = sp.ridge;
    fit.b.resize(sp.p);
    for (int k = 0; k < sp.p; ++k)
        fit.b[k] = (warm && warm->b[k].size() == sp.Z[k].cols()) ? warm->b[k]
                                                                 : Eigen::VectorXd::Zero(sp.Z[k].cols());
    Eigen::VectorXd resid = sp.y_proj;
    for (int k = 0; k < sp.p; ++k)
        if (fit.b[k].size() > 0 && fit.b[k].norm() > 0) resid -= sp.Z[k] * fit.b[k];

    double prev_obj = detail::glasso_objective(sp, resid, fit.b, lambda);
    fit.converged = false;
    int it = 0;
    for (it = 1; it <= max_iter; ++it) {
        double delta = 0.0;
        for (int k = 0; k < sp.p; ++k) {
            const auto rk = sp.Z[k].cols();
            if (rk == 0) continue;
            Eigen::VectorXd z = sp.Z[k].transpose() * resid / sp.N + fit.b[k];
            const double nz = z.norm();
            Eigen::VectorXd bnew;
            if (nz <= lambda)
                bnew = Eigen::VectorXd::Zero(rk);
            else
                bnew = ((1.0 - lambda / nz) / (1.0 + sp.ridge)) * z;
            const Eigen::VectorXd db = bnew - fit.b[k];
            const double step = db.cwiseAbs().maxCoeff();
            if (step > 0.0) {
                resid -= sp.Z[k] * db;
                fit.b[k] = std::move(bnew);
                delta = std::max(delta, step);
            }
        }
        const double obj = detail::glasso_objective(sp, resid, fit.b, lambda);
        if (obj > prev_obj + 1e-12 * (1.0 + std::abs(prev_obj)))
            throw Error("BCD objective increased; solver invariant violated");
        prev_obj = obj;
        if (delta < tol) {
            fit.converged = true;
            break;
        }
    }
    fit.iterations = std::min(it, max_iter);

    fit.coef.resize(sp.p);
    fit.group_norms.resize(sp.p);
    Eigen::VectorXd pen_fit = Eigen::VectorXd::Zero(sp.N);
    for (int k = 0; k < sp.p; ++k) {
        fit.coef[k] = Eigen::VectorXd::Zero(sp.design->M);
        fit.group_norms[k] = fit.b[k].size() > 0 ? fit.b[k].norm() : 0.0;
        if (fit.group_norms[k] > 0.0) {
            fit.coef[k] = sp.back[k] * fit.b[k];
            fit.active.push_back(k + 1);
            pen_fit += sp.design->X.middleCols(sp.design->group_offset(k + 1), sp.design->M) * fit.coef[k];
        }
    }
    const Eigen::VectorXd cu =
        sp.unpen.colPivHouseholderQr().solve(sp.y - pen_fit);
    const int n_intercepts = sp.q - (sp.design->has_time_column ? 1 : 0);
    fit.intercepts = cu.head(n_intercepts);
    fit.time_coef = sp.design->has_time_column ? cu(n_intercepts) : 0.0;
    fit.rss = resid.squaredNorm();
    fit.objective = prev_obj;
    fit.df = sp.q;
    for (int a : fit.active) fit.df += sp.report[a - 1].rank;
    fit.kkt = kkt_certificate(fit, sp);
    return fit;
}

struct GroupLassoPath {
    std::vector<double> lambdas;  // decreasing
    std::vector<GroupLassoFit> fits;
    std::vector<double> bic;
};

inline double bic_of_fit(const GroupLassoFit& fit, int n_effective) {
    const double rss = std::max(fit.rss, 1e-300);
    return n_effective * std::log(rss / n_effective) + std::log(static_cast<double>(n_effective)) * fit.df;
}

// Log-spaced grid from lambda_max down to ratio*lambda_max, warm-started.
inline GroupLassoPath fit_path(const StandardizedProblem& sp, int grid_size, double grid_ratio,
                               double tol = 1e-8, int max_iter = 10000, double lambda_max_override = -1.0) {
    if (grid_size < 2) throw Error("grid size must be >= 2");
    if (!(grid_ratio > 0.0 && grid_ratio < 1.0)) throw Error("grid ratio must be in (0,1)");
    const double lmax = lambda_max_override >= 0.0 ? lambda_max_override : compute_lambda_max(sp);
    GroupLassoPath path;
    const GroupLassoFit* warm = nullptr;
    for (int g = 0; g < grid_size; ++g) {
        const double lam = lmax * std::pow(grid_ratio, static_cast<double>(g) / (grid_size - 1));
        path.fits.push_back(fit_single(sp, lam, tol, max_iter, warm));
        warm = &path.fits.back();
        path.lambdas.push_back(lam);
        path.bic.push_back(bic_of_fit(path.fits.back(), sp.N));
    }
    return path;
}

// argmin BIC, ties toward larger lambda (earlier grid index).
inline int bic_select(const GroupLassoPath& path) {
    if (path.fits.empty()) throw Error("empty path");
    int best = 0;
    for (int g = 1; g < static_cast<int>(path.fits.size()); ++g)
        if (path.bic[g] < path.bic[best]) best = g;
    return best;
}

// Same selection with the BIC recomputed at an explicit effective sample size.
inline int bic_select(const GroupLassoPath& path, int n_effective) {
    if (path.fits.empty()) throw Error("empty path");
    int best = 0;
    for (int g = 1; g < static_cast<int>(path.fits.size()); ++g)
        if (bic_of_fit(path.fits[g], n_effective) < bic_of_fit(path.fits[best], n_effective)) best = g;
    return best;
}

}  // namespace grade
