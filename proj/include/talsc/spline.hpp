#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "talsc/errors.hpp"

namespace talsc {

// Uniform B-spline basis over [a,b]: G subintervals, order (degree) k, knots
// t_{-k}..t_{G+k}, giving G+k basis functions. Basis i (1-based in the math,
// 0-based here) is supported on [t_{i-k}, t_{i+1}].
struct SplineSpec {
    double a = 0.0;
    double b = 10.0;
    int grid = 8;   // G
    int order = 3;  // k

    int num_basis() const { return grid + order; }
    int num_knots() const { return grid + 2 * order + 1; }
    double step() const { return (b - a) / grid; }
    double knot(int j) const { return a + j * step(); }  // j in [-k, G+k]

    void validate() const {
        if (!(b > a)) throw ConfigError("SplineSpec: domain must satisfy a < b");
        if (grid < 1) throw ConfigError("SplineSpec: grid size must be >= 1");
        if (order < 0) throw ConfigError("SplineSpec: order must be >= 0");
    }

    bool operator==(const SplineSpec& o) const {
        return a == o.a && b == o.b && grid == o.grid && order == o.order;
    }

    double clamp(double x) const { return x < a ? a : (x > b ? b : x); }

    // All G+k basis values at x (clamped into [a,b]); optional first
    // derivatives. The derivative of a clamped evaluation w.r.t. the raw
    // input is zero outside the domain; callers handle that via `clamped`.
    void basis(double x, std::vector<double>& out, std::vector<double>* deriv = nullptr) const {
        const int k = order, G = grid;
        const double xc = clamp(x);
        const int nseg = G + 2 * k;  // degree-0 functions
        // interval index u such that knot(u-k) <= xc < knot(u-k+1)
        std::vector<double> n0(nseg, 0.0);
        int seg = static_cast<int>(std::floor((xc - a) / step()));
        if (seg >= G) seg = G - 1;  // x == b falls into the last interior interval
        if (seg < 0) seg = 0;
        n0[seg + k] = 1.0;

        std::vector<double> cur = n0, nxt;
        std::vector<double> prev_deg;  // degree k-1 table for derivatives
        for (int d = 1; d <= k; ++d) {
            if (d == k && deriv) prev_deg = cur;
            nxt.assign(nseg, 0.0);
            for (int u = 0; u + d < nseg; ++u) {
                const double t_u = knot(u - k), t_ud = knot(u - k + d);
                const double t_u1 = knot(u - k + 1), t_ud1 = knot(u - k + d + 1);
                double v = 0.0;
                if (cur[u] != 0.0) v += (xc - t_u) / (t_ud - t_u) * cur[u];
                if (u + 1 < nseg && cur[u + 1] != 0.0)
                    v += (t_ud1 - xc) / (t_ud1 - t_u1) * cur[u + 1];
                nxt[u] = v;
            }
            cur.swap(nxt);
        }
        out.assign(cur.begin(), cur.begin() + num_basis());
        if (deriv) {
            deriv->assign(num_basis(), 0.0);
            if (k == 0) return;
            if (prev_deg.empty()) prev_deg = n0;  // k == 1
            // d/dx N_{u,k} = k * (N_{u,k-1}/(t_{u+k}-t_u) - N_{u+1,k-1}/(t_{u+k+1}-t_{u+1}))
            for (int u = 0; u < num_basis(); ++u) {
                double v = k * prev_deg[u] / (knot(u) - knot(u - k));
                if (u + 1 < nseg) v -= k * prev_deg[u + 1] / (knot(u + 1) - knot(u - k + 1));
                (*deriv)[u] = v;
            }
        }
    }

    std::vector<double> basis(double x) const {
        std::vector<double> out;
        basis(x, out);
        return out;
    }

    // f(x) = sum_i c_i B_i(x)
    double eval(std::span<const double> coeffs, double x) const {
        std::vector<double> B;
        basis(x, B);
        double acc = 0.0;
        for (int i = 0; i < num_basis(); ++i) acc += coeffs[i] * B[i];
        return acc;
    }

    // Coefficients reproducing f(x)=x exactly (Greville abscissae).
    std::vector<double> identity_coeffs() const {
        std::vector<double> c(num_basis());
        for (int i = 0; i < num_basis(); ++i) {
            if (order == 0) {
                c[i] = 0.5 * (knot(i - order) + knot(i - order + 1));
            } else {
                double s = 0.0;
                for (int j = 1; j <= order; ++j) s += knot(i - order + j);
                c[i] = s / order;
            }
        }
        return c;
    }
};

inline constexpr double kPinvRankTolerance = 1e-10;

inline Eigen::MatrixXd basis_matrix(const SplineSpec& spec, std::span<const double> xs) {
    Eigen::MatrixXd B(xs.size(), spec.num_basis());
    std::vector<double> row;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        spec.basis(xs[i], row);
        for (int j = 0; j < spec.num_basis(); ++j) B(i, j) = row[j];
    }
    return B;
}

// Least-squares spline fit of (xs, ys).
inline std::vector<double> fit_spline(const SplineSpec& spec, std::span<const double> xs,
                                      std::span<const double> ys) {
    if (xs.size() != ys.size() || xs.empty()) throw ValidationError("fit_spline: bad sample set");
    Eigen::MatrixXd B = basis_matrix(spec, xs);
    Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(ys.data(), ys.size());
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(B);
    cod.setThreshold(kPinvRankTolerance);
    Eigen::VectorXd c = cod.solve(y);
    return std::vector<double>(c.data(), c.data() + c.size());
}

// Coefficient transfer matrix T12 = pinv(B2) * B1 from a coarse spec to a
// finer one, built on sample points drawn from the operating distribution.
struct TransformMatrix {
    Eigen::MatrixXd t;  // (G2+k2) x (G1+k1)
    SplineSpec source;
    SplineSpec target;

    std::vector<double> apply(std::span<const double> coeffs) const {
        if (static_cast<int>(coeffs.size()) != source.num_basis())
            throw ValidationError("TransformMatrix: coefficient count mismatch");
        Eigen::VectorXd c = Eigen::Map<const Eigen::VectorXd>(coeffs.data(), coeffs.size());
        Eigen::VectorXd out = t * c;
        return std::vector<double>(out.data(), out.data() + out.size());
    }
};

inline TransformMatrix grid_transform(const SplineSpec& source, const SplineSpec& target,
                                      std::span<const double> xs) {
    source.validate();
    target.validate();
    if (static_cast<int>(xs.size()) < target.num_basis())
        throw SolverError("grid_transform: need at least G2+k2 sample points");
    Eigen::MatrixXd b1 = basis_matrix(source, xs);
    Eigen::MatrixXd b2 = basis_matrix(target, xs);
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(b2);
    cod.setThreshold(kPinvRankTolerance);
    if (cod.rank() < target.num_basis())
        throw SolverError("grid_transform: target basis matrix is rank-deficient; "
                          "supply more or denser sample points");
    TransformMatrix tm;
    tm.t = cod.pseudoInverse() * b1;
    tm.source = source;
    tm.target = target;
    return tm;
}

inline std::vector<double> grid_extend(std::span<const double> coeffs, const SplineSpec& source,
                                       const SplineSpec& target, std::span<const double> xs) {
    return grid_transform(source, target, xs).apply(coeffs);
}

// Approximation-decay table: least-squares fits of a smooth target at each
// grid size, sup error over a dense probe grid, and the log-log slope of
// error vs G.
struct DecayRow {
    int grid = 0;
    double sup_error = 0.0;
};

struct DecayResult {
    std::vector<DecayRow> rows;
    double loglog_slope = 0.0;
};

inline DecayResult spline_decay_table(const std::function<double(double)>& target, double a,
                                      double b, int order, std::span<const int> grids,
                                      int fit_samples = 2048, int probes = 4001) {
    DecayResult res;
    std::vector<double> xs(fit_samples), ys(fit_samples);
    for (int i = 0; i < fit_samples; ++i) {
        xs[i] = a + (b - a) * i / (fit_samples - 1.0);
        ys[i] = target(xs[i]);
    }
    for (int g : grids) {
        SplineSpec spec{a, b, g, order};
        auto coeffs = fit_spline(spec, xs, ys);
        double sup = 0.0;
        for (int i = 0; i < probes; ++i) {
            const double x = a + (b - a) * i / (probes - 1.0);
            sup = std::max(sup, std::abs(spec.eval(coeffs, x) - target(x)));
        }
        res.rows.push_back({g, sup});
    }
    // least-squares line through (log G, log err)
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (const auto& r : res.rows) {
        if (r.sup_error <= 0.0) continue;  // exact fits (e.g. constants) carry no slope info
        const double lx = std::log(static_cast<double>(r.grid));
        const double ly = std::log(r.sup_error);
        sx += lx; sy += ly; sxx += lx * lx; sxy += lx * ly;
        ++n;
    }
    res.loglog_slope = n >= 2 ? (n * sxy - sx * sy) / (n * sxx - sx * sx) : 0.0;
    return res;
}

}  // namespace talsc
