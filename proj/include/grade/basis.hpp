#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "grade/errors.hpp"
#include "grade/smoother.hpp"

namespace grade {

enum class BasisFamily { Monomial, Linear, CubicSplineKnots, Trigonometric };

// Basis family descriptor plus, for splines, the fitted knot sequence.
// evaluate() is a total function on finite reals: spline families extrapolate
// linearly beyond the boundary knots.
class BasisSpec {
  public:
    static BasisSpec monomial(int degree) {
        BasisSpec b;
        b.family_ = BasisFamily::Monomial;
        b.param_ = degree;
        return b;
    }
    static BasisSpec linear() {
        BasisSpec b;
        b.family_ = BasisFamily::Linear;
        b.param_ = 1;
        return b;
    }
    static BasisSpec cubic_spline(int internal_knots) {
        BasisSpec b;
        b.family_ = BasisFamily::CubicSplineKnots;
        b.param_ = internal_knots;
        return b;
    }
    static BasisSpec trigonometric(int m) {
        BasisSpec b;
        b.family_ = BasisFamily::Trigonometric;
        b.param_ = m;
        return b;
    }

    BasisFamily family() const { return family_; }
    int param() const { return param_; }

    int size() const {
        switch (family_) {
            case BasisFamily::Monomial: return param_;
            case BasisFamily::Linear: return 1;
            case BasisFamily::CubicSplineKnots: return param_ + 4;
            case BasisFamily::Trigonometric: return param_;
        }
        return 0;
    }

    bool needs_knots() const { return family_ == BasisFamily::CubicSplineKnots; }
    bool has_knots() const { return !knots_.empty(); }
    double knot_lo() const { return lo_; }
    double knot_hi() const { return hi_; }
    const std::vector<double>& internal_knots() const { return internal_; }

    // Knot placement: equally spaced interior quantiles of the observed
    // (smoothed) values, boundary knots at the value range.
    BasisSpec with_knots_from(const std::vector<double>& values) const {
        BasisSpec b = *this;
        if (!needs_knots()) return b;
        std::vector<double> sorted = values;
        std::sort(sorted.begin(), sorted.end());
        const double lo = sorted.front();
        const double hi = sorted.back();
        b.lo_ = lo;
        b.hi_ = (hi - lo > 1e-12) ? hi : lo + 1.0;
        b.internal_.clear();
        const int K = param_;
        for (int j = 1; j <= K; ++j) {
            const double q = static_cast<double>(j) / (K + 1);
            const double pos = q * (sorted.size() - 1);
            const auto idx = static_cast<std::size_t>(pos);
            const double w = pos - idx;
            double v = sorted[idx];
            if (idx + 1 < sorted.size()) v = (1.0 - w) * sorted[idx] + w * sorted[idx + 1];
            b.internal_.push_back(std::min(std::max(v, b.lo_), b.hi_));
        }
        std::sort(b.internal_.begin(), b.internal_.end());
        b.knots_.clear();
        for (int i = 0; i < 4; ++i) b.knots_.push_back(b.lo_);
        for (double v : b.internal_) b.knots_.push_back(v);
        for (int i = 0; i < 4; ++i) b.knots_.push_back(b.hi_);
        return b;
    }

    Eigen::VectorXd evaluate(double x) const {
        const int M = size();
        Eigen::VectorXd out(M);
        switch (family_) {
            case BasisFamily::Monomial: {
                double pw = 1.0;
                for (int m = 0; m < M; ++m) {
                    pw *= x;
                    out(m) = pw;
                }
                return out;
            }
            case BasisFamily::Linear:
                out(0) = x;
                return out;
            case BasisFamily::Trigonometric: {
                for (int m = 0; m < M; ++m) {
                    const int j = m / 2 + 1;
                    out(m) = (m % 2 == 0) ? std::sqrt(2.0) * std::cos(2.0 * M_PI * j * x)
                                          : std::sqrt(2.0) * std::sin(2.0 * M_PI * j * x);
                }
                return out;
            }
            case BasisFamily::CubicSplineKnots: {
                if (!has_knots()) throw Error("spline basis evaluated before knots were fixed");
                if (x < lo_) {
                    Eigen::VectorXd f = bspline_at(lo_);
                    Eigen::VectorXd d = bspline_deriv_at(lo_);
                    return f + (x - lo_) * d;
                }
                if (x > hi_) {
                    Eigen::VectorXd f = bspline_at(hi_);
                    Eigen::VectorXd d = bspline_deriv_at(hi_);
                    return f + (x - hi_) * d;
                }
                return bspline_at(x);
            }
        }
        throw Error("unknown basis family");
    }

    std::string family_name() const {
        switch (family_) {
            case BasisFamily::Monomial: return "monomial";
            case BasisFamily::Linear: return "linear";
            case BasisFamily::CubicSplineKnots: return "cubic_spline";
            case BasisFamily::Trigonometric: return "trigonometric";
        }
        return "?";
    }

  private:
    // Cox-de Boor for the clamped cubic knot vector; M = K+4 functions.
    Eigen::VectorXd bspline_at(double x) const {
        const int M = size();
        const int nk = static_cast<int>(knots_.size());
        std::vector<double> N(nk - 1, 0.0);
        for (int i = 0; i < nk - 1; ++i)
            N[i] = (knots_[i] <= x && x < knots_[i + 1]) ? 1.0 : 0.0;
        if (x >= knots_[nk - 1]) {
            for (int i = nk - 2; i >= 0; --i)
                if (knots_[i] < knots_[i + 1]) {
                    N[i] = 1.0;
                    break;
                }
        }
        for (int d = 1; d <= 3; ++d) {
            for (int i = 0; i + d + 1 < nk; ++i) {
                double left = 0.0, right = 0.0;
                if (knots_[i + d] > knots_[i]) left = (x - knots_[i]) / (knots_[i + d] - knots_[i]) * N[i];
                if (knots_[i + d + 1] > knots_[i + 1])
                    right = (knots_[i + d + 1] - x) / (knots_[i + d + 1] - knots_[i + 1]) * N[i + 1];
                N[i] = left + right;
            }
        }
        Eigen::VectorXd out(M);
        for (int i = 0; i < M; ++i) out(i) = N[i];
        return out;
    }

    // Derivative of the cubic B-splines: 3*(N3_i/(t_{i+3}-t_i) - N3_{i+1}/(t_{i+4}-t_{i+1}))
    Eigen::VectorXd bspline_deriv_at(double x) const {
        const int M = size();
        const int nk = static_cast<int>(knots_.size());
        std::vector<double> N(nk - 1, 0.0);
        for (int i = 0; i < nk - 1; ++i)
            N[i] = (knots_[i] <= x && x < knots_[i + 1]) ? 1.0 : 0.0;
        if (x >= knots_[nk - 1]) {
            for (int i = nk - 2; i >= 0; --i)
                if (knots_[i] < knots_[i + 1]) {
                    N[i] = 1.0;
                    break;
                }
        }
        for (int d = 1; d <= 2; ++d) {
            for (int i = 0; i + d + 1 < nk; ++i) {
                double left = 0.0, right = 0.0;
                if (knots_[i + d] > knots_[i]) left = (x - knots_[i]) / (knots_[i + d] - knots_[i]) * N[i];
                if (knots_[i + d + 1] > knots_[i + 1])
                    right = (knots_[i + d + 1] - x) / (knots_[i + d + 1] - knots_[i + 1]) * N[i + 1];
                N[i] = left + right;
            }
        }
        Eigen::VectorXd out(M);
        for (int i = 0; i < M; ++i) {
            double a = 0.0, b = 0.0;
            if (knots_[i + 3] > knots_[i]) a = N[i] / (knots_[i + 3] - knots_[i]);
            if (i + 4 < nk && knots_[i + 4] > knots_[i + 1]) b = N[i + 1] / (knots_[i + 4] - knots_[i + 1]);
            out(i) = 3.0 * (a - b);
        }
        return out;
    }

    BasisFamily family_ = BasisFamily::Monomial;
    int param_ = 3;
    double lo_ = 0.0, hi_ = 1.0;
    std::vector<double> internal_;
    std::vector<double> knots_;
};

inline Eigen::VectorXd evaluate_basis(const BasisSpec& spec, double x) { return spec.evaluate(x); }

enum class DesignKind { Integrated, Pointwise };

// Grouped regressor matrix shared by GRADE (integrated columns) and the
// derivative baseline (pointwise columns). Column 0 is the time regressor
// Psi_0(t) = t when has_time_column; then p blocks of M columns.
struct IntegratedDesign {
    int n = 0;  // observation times per experiment
    int R = 1;
    int p = 0;
    int M = 0;
    bool has_time_column = true;
    DesignKind kind = DesignKind::Integrated;
    double quad_step = 0.0;
    Eigen::VectorXd times;            // n
    Eigen::MatrixXd X;                // (R*n) x (has_time + p*M)
    std::vector<BasisSpec> bases;     // per variable, knots fixed

    int rows() const { return R * n; }
    int cols() const { return static_cast<int>(X.cols()); }
    int group_offset(int k) const { return (has_time_column ? 1 : 0) + (k - 1) * M; }
    int group_size(int k) const { return k == 0 ? 1 : M; }

    // (1/(R n)) sum_i Psi_k(t_i) Psi_k(t_i)^T; group 0 is the scalar time column.
    Eigen::MatrixXd group_gram(int k) const {
        if (k < 0 || k > p) throw DimensionMismatch("group index out of range");
        if (k == 0) {
            if (!has_time_column) throw DimensionMismatch("design has no time column");
            Eigen::MatrixXd g(1, 1);
            g(0, 0) = X.col(0).squaredNorm() / rows();
            return g;
        }
        const auto block = X.middleCols(group_offset(k), M);
        return block.transpose() * block / rows();
    }
};

namespace detail {

// Cumulative integral of psi(Xhat(u)) on [0, max(times)] by composite
// Simpson over panels of width quad_step (midpoint-sampled), with the final
// partial panel integrated exactly the same way. Returns the M columns
// evaluated at each requested time.
inline Eigen::MatrixXd integrate_basis_columns(const SmoothEstimate& smooth, const BasisSpec& basis,
                                               const Eigen::VectorXd& times, double quad_step) {
    const int M = basis.size();
    const int n = static_cast<int>(times.size());
    const double tmax = times(n - 1);
    const int G = std::max(1, static_cast<int>(std::ceil(tmax / quad_step - 1e-9)));
    Eigen::MatrixXd f_grid(G + 1, M);
    Eigen::MatrixXd f_mid(G, M);
    for (int g = 0; g <= G; ++g) {
        const double u = std::min(g * quad_step, tmax);
        f_grid.row(g) = basis.evaluate(smooth.value(u)).transpose();
    }
    for (int g = 0; g < G; ++g) {
        const double u = std::min((g + 0.5) * quad_step, tmax);
        f_mid.row(g) = basis.evaluate(smooth.value(u)).transpose();
    }
    Eigen::MatrixXd C(G + 1, M);
    C.row(0).setZero();
    for (int g = 0; g < G; ++g) {
        const double a = g * quad_step;
        const double b = std::min((g + 1) * quad_step, tmax);
        C.row(g + 1) = C.row(g) + ((b - a) / 6.0) * (f_grid.row(g) + 4.0 * f_mid.row(g) + f_grid.row(g + 1));
    }
    Eigen::MatrixXd out(n, M);
    for (int i = 0; i < n; ++i) {
        const double t = times(i);
        int g = std::min(static_cast<int>(t / quad_step + 1e-12), G);
        const double a = g * quad_step;
        if (std::abs(t - a) < 1e-12) {
            out.row(i) = C.row(g);
            continue;
        }
        const Eigen::VectorXd fm = basis.evaluate(smooth.value(a + (t - a) / 2.0));
        const Eigen::VectorXd ft = basis.evaluate(smooth.value(t));
        out.row(i) = C.row(g) + ((t - a) / 6.0) * (f_grid.row(g) + 4.0 * fm.transpose() + ft.transpose());
    }
    return out;
}

}  // namespace detail

// smooths[r][k]: smoothed trajectory of variable k in experiment r.
// The basis spec must already carry knots where the family needs them
// (see fit_bases_to_smooths below for the quantile placement).
inline IntegratedDesign build_integrated_design(const std::vector<std::vector<SmoothEstimate>>& smooths,
                                                const std::vector<BasisSpec>& bases,
                                                const Eigen::VectorXd& times, double quad_step) {
    if (quad_step <= 0.0) throw QuadTooCoarse("quad_step must be positive");
    const int n = static_cast<int>(times.size());
    double max_gap = 0.0;
    for (int i = 1; i < n; ++i) {
        if (!(times(i) > times(i - 1))) throw Error("times must be strictly increasing");
        max_gap = std::max(max_gap, times(i) - times(i - 1));
    }
    if (n > 1 && quad_step > 2.0 * max_gap + 1e-12)
        throw QuadTooCoarse("quad_step too coarse for the observation grid");
    const int R = static_cast<int>(smooths.size());
    const int p = static_cast<int>(smooths[0].size());
    if (static_cast<int>(bases.size()) != p) throw DimensionMismatch("one basis per variable required");
    const int M = bases[0].size();
    IntegratedDesign d;
    d.n = n;
    d.R = R;
    d.p = p;
    d.M = M;
    d.quad_step = quad_step;
    d.times = times;
    d.bases = bases;
    d.has_time_column = true;
    d.kind = DesignKind::Integrated;
    d.X.resize(R * n, 1 + p * M);
    for (int r = 0; r < R; ++r) d.X.block(r * n, 0, n, 1) = times;
    for (int r = 0; r < R; ++r)
        for (int k = 0; k < p; ++k)
            d.X.block(r * n, 1 + k * M, n, M) =
                detail::integrate_basis_columns(smooths[r][k], bases[k], times, quad_step);
    return d;
}

// Non-integrated regressors psi(Xhat_k(t_i)) for the derivative baseline.
inline IntegratedDesign build_pointwise_design(const std::vector<std::vector<SmoothEstimate>>& smooths,
                                               const std::vector<BasisSpec>& bases,
                                               const Eigen::VectorXd& times) {
    const int n = static_cast<int>(times.size());
    const int R = static_cast<int>(smooths.size());
    const int p = static_cast<int>(smooths[0].size());
    if (static_cast<int>(bases.size()) != p) throw DimensionMismatch("one basis per variable required");
    const int M = bases[0].size();
    IntegratedDesign d;
    d.n = n;
    d.R = R;
    d.p = p;
    d.M = M;
    d.quad_step = 0.0;
    d.times = times;
    d.bases = bases;
    d.has_time_column = false;
    d.kind = DesignKind::Pointwise;
    d.X.resize(R * n, p * M);
    for (int r = 0; r < R; ++r)
        for (int k = 0; k < p; ++k)
            for (int i = 0; i < n; ++i)
                d.X.block(r * n + i, k * M, 1, M) = bases[k].evaluate(smooths[r][k].value(times(i))).transpose();
    return d;
}

// Per-variable knot fitting: values of the smoothed trajectory are pooled
// across experiments on the quadrature evaluation grid.
inline std::vector<BasisSpec> fit_bases_to_smooths(const std::vector<std::vector<SmoothEstimate>>& smooths,
                                                   const BasisSpec& family, double quad_step, double tmax) {
    const int R = static_cast<int>(smooths.size());
    const int p = static_cast<int>(smooths[0].size());
    std::vector<BasisSpec> out;
    out.reserve(p);
    for (int k = 0; k < p; ++k) {
        if (!family.needs_knots()) {
            out.push_back(family);
            continue;
        }
        std::vector<double> vals;
        const int G = std::max(1, static_cast<int>(std::ceil(tmax / quad_step - 1e-9)));
        for (int r = 0; r < R; ++r)
            for (int g = 0; g <= 2 * G; ++g)
                vals.push_back(smooths[r][k].value(std::min(g * quad_step / 2.0, tmax)));
        out.push_back(family.with_knots_from(vals));
    }
    return out;
}

}  // namespace grade
