#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "grade/errors.hpp"

namespace grade {

enum class KernelType { Epanechnikov, GaussianTruncated, Uniform };

inline const char* kernel_name(KernelType k) {
    switch (k) {
        case KernelType::Epanechnikov: return "epanechnikov";
        case KernelType::GaussianTruncated: return "gaussian-truncated";
        case KernelType::Uniform: return "uniform";
    }
    return "?";
}

// Compact support in [-1,1]; bounded.
inline double kernel_eval(KernelType k, double u) {
    if (std::abs(u) > 1.0) return 0.0;
    switch (k) {
        case KernelType::Epanechnikov: return 0.75 * (1.0 - u * u);
        case KernelType::GaussianTruncated: return std::exp(-0.5 * u * u);
        case KernelType::Uniform: return 0.5;
    }
    return 0.0;
}

struct LocalPolyConfig {
    int degree = 3;
    KernelType kernel = KernelType::Epanechnikov;
    // Fixed bandwidth if set; otherwise selected by GCV over h_grid
    // (or over default_h_grid(n, degree) when h_grid is empty).
    std::optional<double> bandwidth;
    std::vector<double> h_grid;
};

// h must keep at least degree+1 points in boundary windows; the lower end
// also respects the h >= 1/(2n) precondition.
inline std::vector<double> default_h_grid(int n, int degree, int count = 12) {
    const double lo = std::max(1.0 / (2.0 * n), 1.5 * (degree + 1) / static_cast<double>(n));
    const double hi = 0.5;
    std::vector<double> g(count);
    for (int i = 0; i < count; ++i)
        g[i] = std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * i / (count - 1.0));
    return g;
}

struct WeightDiagnostics {
    double sum = 0.0;      // should be 1
    double sup_abs = 0.0;  // sup_i |W_ni|
    double abs_sum = 0.0;  // sum_i |W_ni|
};

namespace detail {

struct LocalSystem {
    Eigen::MatrixXd B;   // (l+1)x(l+1), (1/nh) sum U U^T K
    Eigen::VectorXd a;   // (l+1), (1/nh) sum U K y (zero if no y)
    int lo = 0, hi = 0;  // window [lo, hi) into times
};

inline void scaled_basis(double u, int degree, Eigen::VectorXd& out) {
    out(0) = 1.0;
    double fact = 1.0;
    double pw = 1.0;
    for (int m = 1; m <= degree; ++m) {
        fact *= m;
        pw *= u;
        out(m) = pw / fact;
    }
}

inline LocalSystem build_local_system(double t, const Eigen::VectorXd& times, const Eigen::VectorXd* y,
                                      double h, int degree, KernelType kernel) {
    const int n = static_cast<int>(times.size());
    LocalSystem sys;
    sys.B = Eigen::MatrixXd::Zero(degree + 1, degree + 1);
    sys.a = Eigen::VectorXd::Zero(degree + 1);
    const double* tb = times.data();
    sys.lo = static_cast<int>(std::lower_bound(tb, tb + n, t - h) - tb);
    sys.hi = static_cast<int>(std::upper_bound(tb, tb + n, t + h) - tb);
    Eigen::VectorXd U(degree + 1);
    for (int i = sys.lo; i < sys.hi; ++i) {
        const double u = (times(i) - t) / h;
        const double K = kernel_eval(kernel, u);
        if (K == 0.0) continue;
        scaled_basis(u, degree, U);
        sys.B.selfadjointView<Eigen::Lower>().rankUpdate(U, K);
        if (y) sys.a += (K * (*y)(i)) * U;
    }
    sys.B = sys.B.selfadjointView<Eigen::Lower>();
    const double scale = 1.0 / (n * h);
    sys.B *= scale;
    sys.a *= scale;
    return sys;
}

// Rank-revealing solve with the condition threshold from the contract.
// One step of iterative refinement keeps the weight-sum identity at 1e-10
// even for moderately conditioned local designs.
class LocalSolver {
  public:
    explicit LocalSolver(const Eigen::MatrixXd& B) : B_(B), svd_(B, Eigen::ComputeFullU | Eigen::ComputeFullV) {
        const auto& sv = svd_.singularValues();
        const double smax = sv(0);
        const double smin = sv(sv.size() - 1);
        if (!(smax > 0.0) || !(smin > 0.0) || smax / smin > 1e12)
            throw SingularLocalDesign("local design matrix B_nt is numerically singular (bandwidth too small)");
    }

    Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
        Eigen::VectorXd x = svd_.solve(rhs);
        x += svd_.solve(rhs - B_ * x);
        return x;
    }

  private:
    Eigen::MatrixXd B_;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd_;
};

}  // namespace detail

// W_ni(t;h) for all i. Also reports the Lemma-S1 diagnostics.
inline Eigen::VectorXd weight_vector(double t, const Eigen::VectorXd& times, const LocalPolyConfig& config,
                                     double h, WeightDiagnostics* diag = nullptr) {
    const int n = static_cast<int>(times.size());
    if (n < config.degree + 1) throw Error("need at least degree+1 observations");
    auto sys = detail::build_local_system(t, times, nullptr, h, config.degree, config.kernel);
    detail::LocalSolver solver(sys.B);
    Eigen::VectorXd e1 = Eigen::VectorXd::Zero(config.degree + 1);
    e1(0) = 1.0;
    const Eigen::VectorXd s = solver.solve(e1);
    Eigen::VectorXd W = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd U(config.degree + 1);
    const double scale = 1.0 / (n * h);
    for (int i = sys.lo; i < sys.hi; ++i) {
        const double u = (times(i) - t) / h;
        const double K = kernel_eval(config.kernel, u);
        if (K == 0.0) continue;
        detail::scaled_basis(u, config.degree, U);
        W(i) = scale * K * s.dot(U);
    }
    if (diag) {
        diag->sum = W.sum();
        diag->sup_abs = W.cwiseAbs().maxCoeff();
        diag->abs_sum = W.cwiseAbs().sum();
    }
    return W;
}

// Local polynomial regression estimate of one series. Immutable; evaluation
// is reentrant.
class SmoothEstimate {
  public:
    SmoothEstimate(Eigen::VectorXd times, Eigen::VectorXd y, LocalPolyConfig config, double h)
        : times_(std::move(times)), y_(std::move(y)), config_(std::move(config)), h_(h) {
        const int n = static_cast<int>(times_.size());
        influence_diag_.resize(n);
        fitted_.resize(n);
        for (int i = 0; i < n; ++i) {
            const Eigen::VectorXd W = weight_vector(times_(i), times_, config_, h_);
            fitted_(i) = W.dot(y_);
            influence_diag_(i) = W(i);
        }
    }

    double value(double t) const { return coefficients(t)(0); }

    // Slope coefficient of the local fit (U'(0) contraction), divided by h.
    double derivative(double t) const {
        if (config_.degree < 1) throw Error("derivative needs degree >= 1");
        return coefficients(t)(1) / h_;
    }

    Eigen::VectorXd values(const Eigen::VectorXd& ts) const {
        Eigen::VectorXd out(ts.size());
        for (Eigen::Index i = 0; i < ts.size(); ++i) out(i) = value(ts(i));
        return out;
    }

    double bandwidth() const { return h_; }
    int degree() const { return config_.degree; }
    KernelType kernel() const { return config_.kernel; }
    const Eigen::VectorXd& train_times() const { return times_; }
    const Eigen::VectorXd& train_values() const { return y_; }
    const Eigen::VectorXd& influence_diagonal() const { return influence_diag_; }
    const Eigen::VectorXd& fitted() const { return fitted_; }
    const std::vector<std::pair<double, double>>& gcv_curve() const { return gcv_curve_; }
    void set_gcv_curve(std::vector<std::pair<double, double>> c) { gcv_curve_ = std::move(c); }

    std::uint64_t fingerprint() const {
        std::uint64_t hash = 1469598103934665603ULL;
        auto mix = [&hash](std::uint64_t v) {
            hash ^= v;
            hash *= 1099511628211ULL;
        };
        auto mixd = [&](double d) {
            std::uint64_t bits;
            std::memcpy(&bits, &d, sizeof(bits));
            mix(bits);
        };
        mix(static_cast<std::uint64_t>(config_.degree));
        mix(static_cast<std::uint64_t>(config_.kernel));
        mixd(h_);
        for (Eigen::Index i = 0; i < times_.size(); ++i) {
            mixd(times_(i));
            mixd(y_(i));
        }
        return hash;
    }

  private:
    Eigen::VectorXd coefficients(double t) const {
        auto sys = detail::build_local_system(t, times_, &y_, h_, config_.degree, config_.kernel);
        detail::LocalSolver solver(sys.B);
        return solver.solve(sys.a);
    }

    Eigen::VectorXd times_;
    Eigen::VectorXd y_;
    LocalPolyConfig config_;
    double h_;
    Eigen::VectorXd influence_diag_;
    Eigen::VectorXd fitted_;
    std::vector<std::pair<double, double>> gcv_curve_;
};

// GCV(h) = (RSS(h)/n) / (1 - tr(L_h)/n)^2, minimized over the grid with ties
// broken toward larger h. Grid entries where some local design is singular
// are skipped; AllSingular if that kills the whole grid.
inline double gcv_select_bandwidth(const Eigen::VectorXd& times, const Eigen::VectorXd& y,
                                   const LocalPolyConfig& config,
                                   std::vector<std::pair<double, double>>* curve = nullptr) {
    const int n = static_cast<int>(times.size());
    std::vector<double> grid = config.h_grid.empty() ? default_h_grid(n, config.degree) : config.h_grid;
    std::sort(grid.begin(), grid.end());
    double best_h = std::numeric_limits<double>::quiet_NaN();
    double best_gcv = std::numeric_limits<double>::infinity();
    bool any = false;
    // Residuals at the rounding floor count as exact zeros, so that
    // reproduction-exact fits tie and the tie-break toward larger h applies.
    const double rss_floor = n * 1e-20 * std::max(1.0, y.squaredNorm() / n);
    for (double h : grid) {
        double rss = 0.0, trace = 0.0;
        bool ok = true;
        for (int i = 0; i < n; ++i) {
            try {
                const Eigen::VectorXd W = weight_vector(times(i), times, config, h);
                const double fit = W.dot(y);
                rss += (y(i) - fit) * (y(i) - fit);
                trace += W(i);
            } catch (const SingularLocalDesign&) {
                ok = false;
                break;
            }
        }
        if (!ok) continue;
        if (rss <= rss_floor) rss = 0.0;
        const double den = 1.0 - trace / n;
        const double gcv = den <= 0.0 ? std::numeric_limits<double>::infinity() : (rss / n) / (den * den);
        if (curve) curve->emplace_back(h, gcv);
        if (!any || gcv <= best_gcv) {
            best_h = h;
            best_gcv = gcv;
            any = true;
        }
    }
    if (!any) throw AllSingular("every bandwidth on the grid yields a singular local design");
    return best_h;
}

inline SmoothEstimate local_poly_fit(const Eigen::VectorXd& times, const Eigen::VectorXd& y,
                                     const LocalPolyConfig& config) {
    if (times.size() != y.size()) throw DimensionMismatch("times/values length mismatch");
    if (times.size() < config.degree + 1) throw Error("need at least degree+1 observations");
    for (Eigen::Index i = 1; i < times.size(); ++i)
        if (!(times(i) > times(i - 1))) throw Error("times must be strictly increasing");
    double h;
    std::vector<std::pair<double, double>> curve;
    if (config.bandwidth) {
        h = *config.bandwidth;
        if (h <= 0.0) throw Error("bandwidth must be positive");
    } else {
        h = gcv_select_bandwidth(times, y, config, &curve);
    }
    SmoothEstimate est(times, y, config, h);
    est.set_gcv_curve(std::move(curve));
    return est;
}

}  // namespace grade
