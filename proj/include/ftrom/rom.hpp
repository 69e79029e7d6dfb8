#pragma once

// Reduced bases (POD state basis from aligned snapshots, raw mesh
// displacement basis) and the online joint least-squares problem over the
// reduced state and mesh coefficients (a, y), solved by Levenberg-Marquardt.
//
// Theta convention: the stored diagonal holds the square-root weights
// theta_i (sqrt(omega) on flagged entries, 1 elsewhere), so the weighted
// norm is |theta o R|_2 and the effective per-entry weight inside R^T Theta R
// is omega.

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "ftrom/errors.hpp"
#include "ftrom/hdm.hpp"
#include "ftrom/mesh.hpp"

namespace ftrom {

struct SnapshotRecord {
    double mu = 0.0;
    DiscreteState Q;        // fixed-mesh HDM solution
    MappingDofs xh;         // registered mapping dofs (identity for reference)
    DiscreteState aligned;  // aligned solution on the reference mesh
};

struct SnapshotSet {
    std::vector<SnapshotRecord> entries;
    int ref_index = 0;
};

/// Resample a fixed-mesh cell-average field at the warped cell centers using
/// bilinear interpolation on the uniform cell-center lattice (linear
/// extension at the lattice rim; evaluation points are clamped to the domain
/// first).
inline DiscreteState align_snapshot(const DiscreteState& Q,
                                    const MappingDofs& warp_dofs,
                                    const StructuredQuadMesh& mesh) {
    const int nx = mesh.nx(), nt = mesh.nt();
    if (Q.values.size() != mesh.num_cells())
        throw InvalidArgument("align_snapshot: state size mismatch");
    const Rect& b = mesh.bounds();
    const double dx = mesh.dx(), dt = mesh.dt();
    auto q = [&](int i, int j) { return Q.values[mesh.cell_index(i, j)]; };

    DiscreteState out;
    out.values.resize(mesh.num_cells());
    for (int c = 0; c < mesh.num_cells(); ++c) {
        Vec2 p = warp_dofs.cell_center(mesh, c);
        p.x() = std::clamp(p.x(), b.x_lo, b.x_hi);
        p.y() = std::clamp(p.y(), b.t_lo, b.t_hi);
        const double u = (p.x() - (b.x_lo + 0.5 * dx)) / dx;
        const double v = (p.y() - (b.t_lo + 0.5 * dt)) / dt;
        const int i0 = std::clamp(static_cast<int>(std::floor(u)), 0, nx - 2);
        const int j0 = std::clamp(static_cast<int>(std::floor(v)), 0, nt - 2);
        const double fu = u - i0, fv = v - j0;
        out.values[c] = (1 - fu) * (1 - fv) * q(i0, j0) + fu * (1 - fv) * q(i0 + 1, j0) +
                        (1 - fu) * fv * q(i0, j0 + 1) + fu * fv * q(i0 + 1, j0 + 1);
    }
    return out;
}

struct PodResult {
    Eigen::MatrixXd Phi;              // N x n_q, orthonormal
    Eigen::VectorXd singular_values;  // full spectrum, non-increasing
};

/// Thin SVD of the aligned-perturbed snapshot matrix; first n_q left
/// singular vectors.
inline PodResult build_pod(const Eigen::MatrixXd& snapshots, const Eigen::VectorXd& Qr,
                           int n_q) {
    if (n_q < 0 || n_q > snapshots.cols())
        throw InvalidArgument("build_pod: n_q exceeds snapshot count");
    Eigen::MatrixXd pert = snapshots.colwise() - Qr;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(pert, Eigen::ComputeThinU);
    PodResult res;
    res.singular_values = svd.singularValues();
    res.Phi = svd.matrixU().leftCols(n_q);
    return res;
}

/// Raw displacement columns x_h(mu_i) - X_h; the reference snapshot's zero
/// column is dropped. Column order follows the entry order.
inline Eigen::MatrixXd build_mesh_basis(const SnapshotSet& snaps,
                                        const StructuredQuadMesh& mesh) {
    if (snaps.entries.empty())
        throw InvalidArgument("build_mesh_basis: no snapshots");
    const Eigen::VectorXd X = MappingDofs::identity(mesh).flatten();
    Eigen::MatrixXd Psi(X.size(), static_cast<Eigen::Index>(snaps.entries.size()) - 1);
    Eigen::Index col = 0;
    for (size_t i = 0; i < snaps.entries.size(); ++i) {
        if (static_cast<int>(i) == snaps.ref_index) continue;
        Psi.col(col++) = snaps.entries[i].xh.flatten() - X;
    }
    return Psi;
}

/// Diagonal square-root weights: sqrt(omega) on the flagged cells, 1
/// elsewhere.
inline Eigen::VectorXd build_theta(const StructuredQuadMesh& mesh,
                                   const std::vector<int>& weight_cells, double omega) {
    if (!(omega > 0)) throw InvalidArgument("build_theta: omega must be > 0");
    Eigen::VectorXd theta = Eigen::VectorXd::Ones(mesh.num_cells());
    const double w = std::sqrt(omega);
    for (int c : weight_cells) {
        if (c < 0 || c >= mesh.num_cells())
            throw InvalidArgument("build_theta: cell index out of range");
        theta[c] = w;
    }
    return theta;
}

struct RomBases {
    Eigen::MatrixXd Phi;       // N x n_q
    Eigen::VectorXd Qr;        // N
    Eigen::MatrixXd Psi;       // N_x x n_x (may have 0 columns)
    Eigen::VectorXd theta;     // N square-root weights
    std::vector<double> train_mu;  // mu per Psi column
    double ref_mu = 0.0;
    Eigen::VectorXd singular_values;

    // Optional warm-start table: projected training coefficients
    // Phi^T (Q_train(mu_i) - Qr), one column per entry of train_a_mu. The
    // online solve interpolates this table in mu for its initial a; an empty
    // table falls back to a = 0.
    Eigen::MatrixXd train_a;  // n_q x m
    std::vector<double> train_a_mu;
};

struct LmOptions {
    double lambda0 = 1e-4;
    double obj_rel_tol = 1e-8;
    double grad_tol = 1e-8;
    double step_tol = 1e-10;
    int max_iter = 100;
};

struct RomSolution {
    Eigen::VectorXd a;
    Eigen::VectorXd y;
    Eigen::VectorXd Q_hat;   // Qr + Phi a
    Eigen::VectorXd x_hat;   // X_h + Psi y
    double weighted_residual_norm = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> objective_trace;
};

/// Piecewise-linear interpolation (and linear extrapolation beyond the
/// ends) of tabulated coefficient columns in mu.
inline Eigen::VectorXd interp_in_mu(double mu, const std::vector<double>& mus,
                                    const Eigen::MatrixXd& cols) {
    if (static_cast<Eigen::Index>(mus.size()) != cols.cols())
        throw InvalidArgument("interp_in_mu: mu/column count mismatch");
    std::vector<std::pair<double, Eigen::Index>> pts;
    for (size_t i = 0; i < mus.size(); ++i)
        pts.emplace_back(mus[i], static_cast<Eigen::Index>(i));
    std::sort(pts.begin(), pts.end());
    if (pts.size() == 1) return cols.col(pts[0].second);

    size_t seg = 0;
    while (seg + 2 < pts.size() && mu > pts[seg + 1].first) ++seg;
    const double m0 = pts[seg].first, m1 = pts[seg + 1].first;
    if (m0 == m1) return cols.col(pts[seg].second);
    const double s = (mu - m0) / (m1 - m0);
    return cols.col(pts[seg].second) +
           s * (cols.col(pts[seg + 1].second) - cols.col(pts[seg].second));
}

/// Default mesh-coefficient start: linear interpolation/extrapolation in mu
/// of the training coordinates (the reference has y = 0 and training
/// snapshot i has coordinates e_i because Psi holds the raw displacements).
inline Eigen::VectorXd initial_mesh_coefficients(double mu, const RomBases& bases) {
    const Eigen::Index n_x = bases.Psi.cols();
    if (n_x == 0) return Eigen::VectorXd::Zero(0);
    std::vector<double> mus{bases.ref_mu};
    Eigen::MatrixXd cols = Eigen::MatrixXd::Zero(n_x, n_x + 1);
    for (Eigen::Index i = 0; i < n_x; ++i) {
        mus.push_back(bases.train_mu[static_cast<size_t>(i)]);
        cols(i, i + 1) = 1.0;
    }
    return interp_in_mu(mu, mus, cols);
}

/// Default state-coefficient start: the warm-start table interpolated in mu,
/// or zero when no table is available.
inline Eigen::VectorXd initial_state_coefficients(double mu, const RomBases& bases) {
    if (bases.train_a.cols() == 0) return Eigen::VectorXd::Zero(bases.Phi.cols());
    return interp_in_mu(mu, bases.train_a_mu, bases.train_a);
}

inline RomSolution solve_rom(double mu, const RomBases& bases,
                             const StructuredQuadMesh& mesh, double nu,
                             const LmOptions& opts = {},
                             std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>>
                                 init = std::nullopt) {
    const Eigen::Index n_q = bases.Phi.cols();
    const Eigen::Index n_x = bases.Psi.cols();
    const Eigen::VectorXd X = MappingDofs::identity(mesh).flatten();
    const BurgersConfig cfg(nu, mu);

    Eigen::VectorXd a = init ? init->first : initial_state_coefficients(mu, bases);
    Eigen::VectorXd y = init ? init->second : initial_mesh_coefficients(mu, bases);

    auto dofs_of = [&](const Eigen::VectorXd& yv) {
        return MappingDofs::unflatten(X + bases.Psi * yv);
    };
    auto weighted_residual = [&](const Eigen::VectorXd& av, const MappingDofs& dofs) {
        DiscreteState Q{bases.Qr + bases.Phi * av};
        Eigen::VectorXd R;
        fv::assemble(Q.values, mesh, dofs, cfg, &R, nullptr);
        return Eigen::VectorXd(bases.theta.cwiseProduct(R));
    };

    // A far-extrapolated start can overshoot into an inverted mesh; back off
    // along the ray toward the identity (y = 0, always valid) by the
    // smallest scaling that restores validity, keeping a small margin.
    MappingDofs dofs = dofs_of(y);
    if (!check_mapping_validity(mesh, dofs).valid) {
        double lo = 0.0, hi = 1.0;
        for (int k = 0; k < 40; ++k) {
            const double mid = 0.5 * (lo + hi);
            if (check_mapping_validity(mesh, dofs_of(mid * y)).valid)
                lo = mid;
            else
                hi = mid;
        }
        y *= 0.98 * lo;
        dofs = dofs_of(y);
        for (int k = 0; k < 60 && !check_mapping_validity(mesh, dofs).valid; ++k) {
            y *= 0.5;
            dofs = dofs_of(y);
        }
        if (!check_mapping_validity(mesh, dofs).valid) {
            y.setZero();
            dofs = dofs_of(y);
        }
    }
    Eigen::VectorXd r = weighted_residual(a, dofs);
    double obj = 0.5 * r.squaredNorm();

    RomSolution sol;
    sol.objective_trace.push_back(obj);

    if (n_q + n_x == 0) {
        sol.a = a;
        sol.y = y;
        sol.Q_hat = bases.Qr;
        sol.x_hat = X;
        sol.weighted_residual_norm = std::sqrt(2.0 * obj);
        sol.converged = true;
        return sol;
    }

    double lambda = opts.lambda0;
    double grad0 = -1.0;
    int invalid_streak = 0;
    bool converged = false;
    int it = 0;
    for (; it < opts.max_iter; ++it) {
        // Jacobian columns: Theta^{1/2} [dR/dQ Phi, dR/dx Psi].
        DiscreteState Q{bases.Qr + bases.Phi * a};
        Eigen::MatrixXd J(mesh.num_cells(), n_q + n_x);
        if (n_q > 0) {
            const auto dRdQ = residual_state_jacobian(Q, mesh, dofs, cfg);
            J.leftCols(n_q) =
                bases.theta.asDiagonal() * (dRdQ * bases.Phi).eval();
        }
        for (Eigen::Index c = 0; c < n_x; ++c)
            J.col(n_q + c) = bases.theta.cwiseProduct(
                residual_mesh_jacobian_apply(Q, mesh, dofs, cfg, bases.Psi.col(c)));

        const Eigen::VectorXd grad = J.transpose() * r;
        const double gnorm = grad.lpNorm<Eigen::Infinity>();
        if (grad0 < 0) grad0 = gnorm;
        if (gnorm < opts.grad_tol * std::max(1.0, grad0)) {
            converged = true;
            break;
        }

        const Eigen::MatrixXd JtJ = J.transpose() * J;
        bool accepted = false;
        while (!accepted) {
            Eigen::MatrixXd A = JtJ;
            A.diagonal().array() += lambda;
            const Eigen::VectorXd step = A.ldlt().solve(-grad);
            if (step.norm() < opts.step_tol) {
                converged = true;
                break;
            }
            const Eigen::VectorXd a_trial = a + step.head(n_q);
            const Eigen::VectorXd y_trial = y + step.tail(n_x);
            const MappingDofs dofs_trial = dofs_of(y_trial);
            bool ok = check_mapping_validity(mesh, dofs_trial).valid;
            double obj_trial = std::numeric_limits<double>::infinity();
            Eigen::VectorXd r_trial;
            if (ok) {
                r_trial = weighted_residual(a_trial, dofs_trial);
                obj_trial = 0.5 * r_trial.squaredNorm();
            }
            if (ok && obj_trial < obj) {
                invalid_streak = 0;
                const double rel_dec = (obj - obj_trial) / std::max(obj, 1e-300);
                a = a_trial;
                y = y_trial;
                dofs = dofs_trial;
                r = std::move(r_trial);
                obj = obj_trial;
                lambda *= 0.25;
                accepted = true;
                sol.objective_trace.push_back(obj);
                if (rel_dec < opts.obj_rel_tol) converged = true;
            } else {
                if (!ok && ++invalid_streak >= 10)
                    throw Error("solve_rom: persistent invalid-mapping rejections");
                lambda *= 4.0;
                if (lambda > 1e16) {
                    converged = true;  // stalled at numerical floor
                    break;
                }
            }
        }
        if (converged) break;
    }

    sol.a = a;
    sol.y = y;
    sol.Q_hat = bases.Qr + bases.Phi * a;
    sol.x_hat = X + bases.Psi * y;
    sol.weighted_residual_norm = std::sqrt(2.0 * obj);
    sol.iterations = it;
    sol.converged = converged;
    return sol;
}

/// The LSPG problem restricted to a frozen mesh (y = 0), typically with a
/// basis built from unaligned snapshots.
inline RomSolution fixed_mesh_rom(double mu, const Eigen::MatrixXd& Phi_unaligned,
                                  const Eigen::VectorXd& Qr,
                                  const StructuredQuadMesh& mesh, double nu,
                                  const LmOptions& opts = {},
                                  const Eigen::VectorXd* theta = nullptr,
                                  const Eigen::MatrixXd* train_a = nullptr,
                                  const std::vector<double>* train_a_mu = nullptr) {
    RomBases b;
    b.Phi = Phi_unaligned;
    b.Qr = Qr;
    b.Psi.resize(2 * static_cast<Eigen::Index>(mesh.num_nodes()), 0);
    b.theta = theta ? *theta : Eigen::VectorXd::Ones(mesh.num_cells());
    b.ref_mu = mu;
    if (train_a && train_a_mu) {
        b.train_a = *train_a;
        b.train_a_mu = *train_a_mu;
    }
    return solve_rom(mu, b, mesh, nu, opts);
}

}  // namespace ftrom
