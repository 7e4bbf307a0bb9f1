#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "grade/basis.hpp"
#include "grade/errors.hpp"
#include "grade/rng.hpp"

namespace grade {

enum class SystemKind { AdditiveBasis, LotkaVolterraPairs, LinearOscillatorPairs };

// Directed edge k -> j: variable k drives the derivative of variable j.
struct Edge {
    int from = 0;
    int to = 0;
    double strength = 0.0;
};

struct OdeSystem {
    SystemKind kind = SystemKind::AdditiveBasis;
    int p = 0;
    double horizon = 1.0;  // T

    // AdditiveBasis: X'_j = drift_j + sum_k psi(X_k)^T coef[j][k]
    BasisSpec basis = BasisSpec::monomial(3);
    Eigen::VectorXd drift;                          // p
    std::vector<std::vector<Eigen::VectorXd>> coef; // [j][k], empty vector means zero block

    // LotkaVolterraPairs: X'_{2k} = 2 X_{2k} - v X_{2k} X_{2k+1}, X'_{2k+1} = v X_{2k} X_{2k+1} - 2 X_{2k+1}
    double interaction = 0.0;  // v >= 0

    // LinearOscillatorPairs: X'_{2k} = w_k X_{2k+1}, X'_{2k+1} = -w_k X_{2k}
    Eigen::VectorXd pair_frequencies;

    void rhs(const Eigen::VectorXd& x, Eigen::VectorXd& dx) const {
        switch (kind) {
            case SystemKind::AdditiveBasis: {
                dx = drift;
                for (int k = 0; k < p; ++k) {
                    bool used = false;
                    for (int j = 0; j < p; ++j)
                        if (coef[j][k].size() > 0) used = true;
                    if (!used) continue;
                    const Eigen::VectorXd psik = basis.evaluate(x(k));
                    for (int j = 0; j < p; ++j)
                        if (coef[j][k].size() > 0) dx(j) += psik.dot(coef[j][k]);
                }
                return;
            }
            case SystemKind::LotkaVolterraPairs: {
                dx.resize(p);
                for (int k = 0; k < p / 2; ++k) {
                    const int a = 2 * k, b = 2 * k + 1;
                    const double cross = interaction * x(a) * x(b);
                    dx(a) = 2.0 * x(a) - cross;
                    dx(b) = cross - 2.0 * x(b);
                }
                return;
            }
            case SystemKind::LinearOscillatorPairs: {
                dx.resize(p);
                for (int k = 0; k < p / 2; ++k) {
                    const int a = 2 * k, b = 2 * k + 1;
                    dx(a) = pair_frequencies(k) * x(b);
                    dx(b) = -pair_frequencies(k) * x(a);
                }
                return;
            }
        }
    }

    std::vector<std::pair<int, int>> ground_truth_edges() const {
        std::vector<std::pair<int, int>> e;
        switch (kind) {
            case SystemKind::AdditiveBasis:
                for (int k = 0; k < p; ++k)
                    for (int j = 0; j < p; ++j)
                        if (coef[j][k].size() > 0 && coef[j][k].cwiseAbs().maxCoeff() > 0.0) e.emplace_back(k, j);
                break;
            case SystemKind::LotkaVolterraPairs:
                for (int j = 0; j < p; ++j) e.emplace_back(j, j);
                if (interaction > 0.0)
                    for (int k = 0; k < p / 2; ++k) {
                        e.emplace_back(2 * k, 2 * k + 1);
                        e.emplace_back(2 * k + 1, 2 * k);
                    }
                break;
            case SystemKind::LinearOscillatorPairs:
                for (int k = 0; k < p / 2; ++k) {
                    e.emplace_back(2 * k, 2 * k + 1);
                    e.emplace_back(2 * k + 1, 2 * k);
                }
                break;
        }
        std::sort(e.begin(), e.end());
        return e;
    }

    // adjacency(from, to) = 1 iff edge from -> to
    Eigen::MatrixXd adjacency() const {
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
        for (auto [k, j] : ground_truth_edges()) a(k, j) = 1.0;
        return a;
    }
};

struct Trajectory {
    double step = 0.0;
    Eigen::VectorXd times;   // N+1 values on [0, T]
    Eigen::MatrixXd values;  // (N+1) x p
};

inline Trajectory euler_integrate(const OdeSystem& system, const Eigen::VectorXd& init, double step) {
    if (!(step > 0.0)) throw BadStep("integration step must be positive");
    const auto nsteps = static_cast<long long>(std::llround(system.horizon / step));
    if (nsteps < 1 || std::abs(nsteps * step - system.horizon) > step)
        throw BadStep("step does not divide the horizon to within one grid point");
    Trajectory traj;
    traj.step = step;
    traj.times.resize(nsteps + 1);
    traj.values.resize(nsteps + 1, system.p);
    traj.values.row(0) = init;
    Eigen::VectorXd x = init, dx(system.p);
    for (long long m = 0; m < nsteps; ++m) {
        traj.times(m) = m * step;
        system.rhs(x, dx);
        x += step * dx;
        if (!x.allFinite()) throw NonFiniteState("trajectory became non-finite at t=" + std::to_string((m + 1) * step));
        traj.values.row(m + 1) = x;
    }
    traj.times(nsteps) = nsteps * step;
    return traj;
}

// Internal cross-check option; not used by the simulation protocol.
inline Trajectory rk4_integrate(const OdeSystem& system, const Eigen::VectorXd& init, double step) {
    if (!(step > 0.0)) throw BadStep("integration step must be positive");
    const auto nsteps = static_cast<long long>(std::llround(system.horizon / step));
    if (nsteps < 1 || std::abs(nsteps * step - system.horizon) > step)
        throw BadStep("step does not divide the horizon to within one grid point");
    Trajectory traj;
    traj.step = step;
    traj.times.resize(nsteps + 1);
    traj.values.resize(nsteps + 1, system.p);
    traj.values.row(0) = init;
    Eigen::VectorXd x = init, k1(system.p), k2(system.p), k3(system.p), k4(system.p);
    for (long long m = 0; m < nsteps; ++m) {
        traj.times(m) = m * step;
        system.rhs(x, k1);
        system.rhs(x + 0.5 * step * k1, k2);
        system.rhs(x + 0.5 * step * k2, k3);
        system.rhs(x + step * k3, k4);
        x += (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!x.allFinite()) throw NonFiniteState("trajectory became non-finite");
        traj.values.row(m + 1) = x;
    }
    traj.times(nsteps) = nsteps * step;
    return traj;
}

struct TimeSeriesDataset {
    int n = 0;
    int R = 1;
    int p = 0;
    Eigen::VectorXd times;          // n values i/n on (0,1] (rescaled)
    std::vector<Eigen::MatrixXd> y; // R matrices, n x p
    std::optional<Eigen::MatrixXd> truth;  // p x p adjacency (from,to)
    double horizon = 1.0;
    double sigma = 0.0;
    std::uint64_t seed = 0;
    std::string rng_name = kRngName;
};

namespace detail {

inline Eigen::MatrixXd observe_at_grid(const Trajectory& traj, double horizon, int n) {
    const int p = static_cast<int>(traj.values.cols());
    Eigen::MatrixXd out(n, p);
    for (int i = 1; i <= n; ++i) {
        const double target = i * horizon / n;
        const auto idx = static_cast<long long>(std::llround(target / traj.step));
        if (idx < 0 || idx >= traj.values.rows() ||
            std::abs(idx * traj.step - target) > traj.step / 2.0 + 1e-12 * horizon)
            throw GridMismatch("observation time iT/n does not land on the integrator grid");
        out.row(i - 1) = traj.values.row(idx);
    }
    return out;
}

inline void add_noise(Eigen::MatrixXd& y, double sigma, std::uint64_t stream_seed) {
    if (sigma == 0.0) return;
    Rng rng(stream_seed);
    for (Eigen::Index i = 0; i < y.rows(); ++i)
        for (Eigen::Index j = 0; j < y.cols(); ++j) y(i, j) += sigma * rng.normal();
}

}  // namespace detail

// Y_i = X(iT/n) + eps_i, eps ~ N(0, sigma^2) iid; times rescaled to i/n.
inline TimeSeriesDataset sample_observations(const Trajectory& traj, double horizon, int n, double sigma,
                                             std::uint64_t seed) {
    if (n < 2) throw Error("need at least two observation times");
    if (sigma < 0.0) throw Error("sigma must be non-negative");
    TimeSeriesDataset d;
    d.n = n;
    d.R = 1;
    d.p = static_cast<int>(traj.values.cols());
    d.horizon = horizon;
    d.sigma = sigma;
    d.seed = seed;
    d.times.resize(n);
    for (int i = 1; i <= n; ++i) d.times(i - 1) = static_cast<double>(i) / n;
    Eigen::MatrixXd y = detail::observe_at_grid(traj, horizon, n);
    detail::add_noise(y, sigma, derive_stream(seed, 0));
    d.y.push_back(std::move(y));
    return d;
}

// R experiments from the same system, one initial-value row each; shared
// grid, independent noise streams (seed partitioned by experiment index).
inline TimeSeriesDataset generate_multi_experiment(const OdeSystem& system, const Eigen::MatrixXd& inits,
                                                   int n, double sigma, std::uint64_t seed,
                                                   double euler_step = 1e-3) {
    if (inits.rows() < 1) throw Error("need at least one experiment");
    if (inits.cols() != system.p) throw DimensionMismatch("initial-value row width != p");
    TimeSeriesDataset d;
    d.n = n;
    d.R = static_cast<int>(inits.rows());
    d.p = system.p;
    d.horizon = system.horizon;
    d.sigma = sigma;
    d.seed = seed;
    d.times.resize(n);
    for (int i = 1; i <= n; ++i) d.times(i - 1) = static_cast<double>(i) / n;
    if (n < 2) throw Error("need at least two observation times");
    if (sigma < 0.0) throw Error("sigma must be non-negative");
    for (int r = 0; r < d.R; ++r) {
        Trajectory traj = euler_integrate(system, inits.row(r), euler_step);
        Eigen::MatrixXd y = detail::observe_at_grid(traj, system.horizon, n);
        detail::add_noise(y, sigma, derive_stream(seed, r));
        d.y.push_back(std::move(y));
    }
    d.truth = system.adjacency();
    return d;
}

// ---------------------------------------------------------------------------
// Preset systems

// Additive system with cubic monomial basis on [0,20]; pairs (X1,X2),
// (X3,X4), (X5,X6) carry the structure, X7..X10 are noise variables whose
// initial values and drifts are N(0,1) draws from the seed's system stream.
inline OdeSystem make_appendix_c_system(std::uint64_t seed, Eigen::VectorXd* init_out = nullptr) {
    OdeSystem s;
    s.kind = SystemKind::AdditiveBasis;
    s.p = 10;
    s.horizon = 20.0;
    s.basis = BasisSpec::monomial(3);
    s.drift = Eigen::VectorXd::Zero(10);
    s.coef.assign(10, std::vector<Eigen::VectorXd>(10));
    auto v3 = [](double a, double b, double c) {
        Eigen::VectorXd v(3);
        v << a, b, c;
        return v;
    };
    s.drift(0) = 0.0;
    s.coef[0][0] = v3(1.2, 0.3, -0.6);
    s.coef[0][1] = v3(0.1, 0.2, 0.2);
    s.drift(1) = 0.4;
    s.coef[1][0] = v3(-2.0, 0.0, 0.4);
    s.coef[1][1] = v3(0.5, 0.2, -0.3);
    s.drift(2) = -0.2;
    s.coef[2][3] = v3(-0.3, 0.4, 0.1);
    s.drift(3) = -0.2;
    s.coef[3][2] = v3(0.2, -0.1, -0.2);
    s.drift(4) = 0.05;
    s.coef[4][5] = v3(0.1, 0.0, -0.8);
    s.drift(5) = -0.05;
    s.coef[5][4] = v3(0.0, 0.0, 0.5);
    Eigen::VectorXd init(10);
    init << -2.0, 2.0, 2.0, -2.0, -1.5, 1.5, 0.0, 0.0, 0.0, 0.0;
    Rng rng(derive_stream(seed, kSystemStream));
    for (int j = 6; j < 10; ++j) {
        init(j) = rng.normal();
        s.drift(j) = rng.normal();
    }
    if (init_out) *init_out = init;
    return s;
}

// pairs oscillators with frequencies 2*pi*k on [0,1]; eight true edges for
// the default four pairs.
inline OdeSystem make_oscillator_system(int pairs = 4) {
    OdeSystem s;
    s.kind = SystemKind::LinearOscillatorPairs;
    s.p = 2 * pairs;
    s.horizon = 1.0;
    s.pair_frequencies.resize(pairs);
    for (int k = 0; k < pairs; ++k) s.pair_frequencies(k) = 2.0 * M_PI * (k + 1);
    return s;
}

// Initial values (sin(y_k), cos(y_k)), y_k ~ N(0,1).
inline Eigen::VectorXd oscillator_initials(int pairs, std::uint64_t seed) {
    Rng rng(derive_stream(seed, kSystemStream));
    Eigen::VectorXd init(2 * pairs);
    for (int k = 0; k < pairs; ++k) {
        const double y = rng.normal();
        init(2 * k) = std::sin(y);
        init(2 * k + 1) = std::cos(y);
    }
    return init;
}

inline OdeSystem make_lv_system(double v, int pairs = 5) {
    if (v < 0.0) throw Error("interaction strength must be non-negative");
    OdeSystem s;
    s.kind = SystemKind::LotkaVolterraPairs;
    s.p = 2 * pairs;
    s.horizon = 5.0;
    s.interaction = v;
    return s;
}

// |N(0, 2I)| rows. Raw N(0,2I) draws put mixed-sign pairs outside the
// Lotka-Volterra invariant orthant, which blows up in finite time for v>0;
// folding onto the positive orthant keeps the protocol runnable. Recorded in
// dataset metadata by the callers.
inline Eigen::MatrixXd lv_initials(int R, int p, std::uint64_t seed) {
    Rng rng(derive_stream(seed, kSystemStream));
    Eigen::MatrixXd inits(R, p);
    for (int r = 0; r < R; ++r)
        for (int j = 0; j < p; ++j) inits(r, j) = std::abs(std::sqrt(2.0) * rng.normal());
    return inits;
}

// Monte-Carlo estimate of the regulatory-effect matrix
//   D_{j,k} = E[ R * int_0^T (df_j/dX_k)^2 dt ]
// for the Lotka-Volterra closure, with analytic partial derivatives and the
// trapezoid rule on the integrator grid.
inline Eigen::MatrixXd regulatory_effect(const OdeSystem& system, int R, std::uint64_t seed, int mc_reps,
                                         double euler_step = 1e-3) {
    if (system.kind != SystemKind::LotkaVolterraPairs)
        throw Error("regulatory_effect is defined for the Lotka-Volterra closure");
    if (mc_reps < 1) throw Error("mc_reps must be >= 1");
    const int p = system.p;
    const double v = system.interaction;
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(p, p);
    for (int rep = 0; rep < mc_reps; ++rep) {
        const Eigen::MatrixXd init = lv_initials(1, p, derive_stream(seed, rep));
        Trajectory traj = euler_integrate(system, init.row(0), euler_step);
        const auto rows = traj.values.rows();
        Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(p, p);
        for (Eigen::Index m = 0; m < rows; ++m) {
            const double w = (m == 0 || m == rows - 1) ? 0.5 : 1.0;
            for (int k = 0; k < p / 2; ++k) {
                const int a = 2 * k, b = 2 * k + 1;
                const double xa = traj.values(m, a), xb = traj.values(m, b);
                const double daa = 2.0 - v * xb;
                const double dab = -v * xa;
                const double dba = v * xb;
                const double dbb = v * xa - 2.0;
                acc(a, a) += w * daa * daa;  // D(from=a, to=a): df_a/dX_a
                acc(b, a) += w * dab * dab;  // edge b -> a enters df_a/dX_b
                acc(a, b) += w * dba * dba;
                acc(b, b) += w * dbb * dbb;
            }
        }
        D += acc * traj.step;
    }
    return (static_cast<double>(R) / mc_reps) * D;
}

// D^(1): min over self-edges; D^(2): min over within-pair cross-edges.
inline std::pair<double, double> min_regulatory_effects(const Eigen::MatrixXd& D) {
    const int p = static_cast<int>(D.rows());
    double d1 = std::numeric_limits<double>::infinity();
    double d2 = std::numeric_limits<double>::infinity();
    for (int j = 0; j < p; ++j) d1 = std::min(d1, D(j, j));
    for (int k = 0; k < p / 2; ++k) {
        d2 = std::min(d2, D(2 * k, 2 * k + 1));
        d2 = std::min(d2, D(2 * k + 1, 2 * k));
    }
    return {d1, d2};
}

}  // namespace grade
