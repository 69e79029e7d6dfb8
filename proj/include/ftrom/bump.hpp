#pragma once

// Gaussian-bump alignment study: parameterized bumps on [-1,1], the analytic
// endpoint-preserving mapping that relocates a bump center, and the
// aligned-vs-unaligned singular-value-decay comparison.

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "ftrom/errors.hpp"

namespace ftrom {

inline double bump(double x, double c) { return std::exp(-100.0 * (x - c) * (x - c)); }

/// Rational-polynomial map fixing -1 and +1 and sending c to x_t.
inline double bump_map(double x, double c, double x_t) {
    if (std::abs(c) >= 1.0)
        throw InvalidArgument("bump_map: c must lie strictly inside (-1, 1)");
    return x_t * ((x - 1.0) * (x + 1.0)) / ((c - 1.0) * (c + 1.0)) +
           (x + 1.0) * (x - c) / (2.0 * (1.0 - c)) -
           (x - 1.0) * (x - c) / (2.0 * (c + 1.0));
}

struct BumpStudyConfig {
    std::vector<double> centers;
    Eigen::VectorXd grid;   // strictly increasing sample points on [-1, 1]
    double x_t = 0.0;

    static BumpStudyConfig with_uniform_grid(std::vector<double> centers, double x_t,
                                             int n_grid = 1000) {
        BumpStudyConfig cfg;
        cfg.centers = std::move(centers);
        cfg.x_t = x_t;
        cfg.grid = Eigen::VectorXd::LinSpaced(n_grid, -1.0, 1.0);
        return cfg;
    }
};

struct BumpSpectra {
    Eigen::VectorXd unaligned;  // normalized by sigma_1
    Eigen::VectorXd aligned;
    Eigen::MatrixXd unaligned_columns;
    Eigen::MatrixXd aligned_columns;
};

/// Unaligned columns sample each bump on the shared grid; aligned columns
/// compose each bump with the map sending x_t to its center, so all peaks
/// coincide at x_t. Both spectra are normalized by their leading singular
/// value.
inline BumpSpectra bump_svd_study(const BumpStudyConfig& cfg) {
    const int m = static_cast<int>(cfg.grid.size());
    const int n = static_cast<int>(cfg.centers.size());
    if (n < 1) throw InvalidArgument("bump_svd_study: need at least one center");
    for (double c : cfg.centers)
        if (std::abs(c) >= 1.0)
            throw InvalidArgument("bump_svd_study: centers must lie inside (-1, 1)");

    BumpSpectra out;
    out.unaligned_columns.resize(m, n);
    out.aligned_columns.resize(m, n);
    for (int j = 0; j < n; ++j) {
        const double c = cfg.centers[static_cast<size_t>(j)];
        for (int i = 0; i < m; ++i) {
            const double x = cfg.grid[i];
            out.unaligned_columns(i, j) = bump(x, c);
            out.aligned_columns(i, j) = bump(bump_map(x, cfg.x_t, c), c);
        }
    }
    auto spectrum = [](const Eigen::MatrixXd& A) {
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
        Eigen::VectorXd s = svd.singularValues();
        if (s.size() && s[0] > 0) s /= s[0];
        return s;
    };
    out.unaligned = spectrum(out.unaligned_columns);
    out.aligned = spectrum(out.aligned_columns);
    return out;
}

}  // namespace ftrom
