#pragma once

// First-order cell-centered finite-volume discretization of the space-time
// viscous Burgers equation on a (possibly warped) structured quad mesh, with
// a damped Newton solver and the residual Jacobians needed by the ROM.
//
// Numerical flux: local Lax-Friedrichs (Rusanov) on the space-time flux
// (q^2/2 - nu q_x, q) with wave speed |n_x| max(|qL|,|qR|) + |n_t|. On
// axis-aligned time faces this reduces to pure upwinding in +t, making the
// space-time solve equivalent to implicit time stepping. The viscous flux
// uses a two-point gradient between adjacent cell centers in physical
// coordinates.
//
// Boundary closure: Dirichlet ghost q = mu at x = x_lo (inflow), Dirichlet
// ghost per the step initial condition at t = t_lo, copy-out ghosts at
// x = x_hi and t = t_hi.

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "ftrom/conslaw.hpp"
#include "ftrom/errors.hpp"
#include "ftrom/mesh.hpp"

namespace ftrom {

/// One cell-average value per cell, lexicographic cell ordering.
struct DiscreteState {
    Eigen::VectorXd values;
};

struct ResidualReport {
    Eigen::VectorXd residual;
    double norm = 0.0;
    double weighted_norm = 0.0;
};

namespace fv {

struct FaceFlux {
    double F;      // normal flux per unit face length
    double dFdqL;
    double dFdqR;
};

inline FaceFlux face_flux(double qL, double qR, const Vec2& n, const Vec2& cL,
                          const Vec2& cR, const BurgersConfig& cfg) {
    const double anx = std::abs(n.x());
    const double lam = anx * std::max(std::abs(qL), std::abs(qR)) + std::abs(n.y());
    const double finv = 0.5 * ((0.5 * qL * qL + 0.5 * qR * qR) * n.x() +
                               (qL + qR) * n.y()) -
                        0.5 * lam * (qR - qL);
    const Vec2 d = cR - cL;
    const double d2 = d.squaredNorm();
    const double gx = (qR - qL) * d.x() / d2;  // two-point gradient, x component

    const double dlam_dqL =
        std::abs(qL) >= std::abs(qR) ? anx * (qL >= 0 ? 1.0 : -1.0) : 0.0;
    const double dlam_dqR =
        std::abs(qR) > std::abs(qL) ? anx * (qR >= 0 ? 1.0 : -1.0) : 0.0;

    FaceFlux ff;
    ff.F = finv - cfg.nu * gx * n.x();
    ff.dFdqL = 0.5 * (qL * n.x() + n.y()) + 0.5 * lam -
               0.5 * (qR - qL) * dlam_dqL + cfg.nu * (d.x() / d2) * n.x();
    ff.dFdqR = 0.5 * (qR * n.x() + n.y()) - 0.5 * lam -
               0.5 * (qR - qL) * dlam_dqR - cfg.nu * (d.x() / d2) * n.x();
    return ff;
}

enum class Boundary { Left, Right, Bottom, Top };

/// Shared face loop. Accumulates the residual (if R != nullptr) and the
/// state-Jacobian triplets (if trips != nullptr) in one pass.
inline void assemble(const Eigen::VectorXd& Q, const StructuredQuadMesh& mesh,
                     const MappingDofs& dofs, const BurgersConfig& cfg,
                     Eigen::VectorXd* R,
                     std::vector<Eigen::Triplet<double>>* trips) {
    const int nx = mesh.nx(), nt = mesh.nt();
    if (Q.size() != mesh.num_cells())
        throw InvalidArgument("assemble_residual: state size mismatch");
    if (dofs.phys_nodes.size() != static_cast<size_t>(mesh.num_nodes()))
        throw InvalidArgument("assemble_residual: dofs size mismatch");

    if (R) R->setZero(mesh.num_cells());

    std::vector<Vec2> centers(static_cast<size_t>(mesh.num_cells()));
    for (int c = 0; c < mesh.num_cells(); ++c)
        centers[static_cast<size_t>(c)] = dofs.cell_center(mesh, c);

    auto interior = [&](int cL, int cR, const Vec2& A, const Vec2& B, bool vertical) {
        Vec2 e = B - A;
        // Normal pointing from cL (left/bottom) toward cR.
        Vec2 nn = vertical ? Vec2(e.y(), -e.x()) : Vec2(-e.y(), e.x());
        const double len = nn.norm();
        nn /= len;
        const auto ff = face_flux(Q[cL], Q[cR], nn, centers[static_cast<size_t>(cL)],
                                  centers[static_cast<size_t>(cR)], cfg);
        if (R) {
            (*R)[cL] += ff.F * len;
            (*R)[cR] -= ff.F * len;
        }
        if (trips) {
            trips->emplace_back(cL, cL, ff.dFdqL * len);
            trips->emplace_back(cL, cR, ff.dFdqR * len);
            trips->emplace_back(cR, cL, -ff.dFdqL * len);
            trips->emplace_back(cR, cR, -ff.dFdqR * len);
        }
    };

    auto boundary = [&](int c, const Vec2& A, const Vec2& B, bool vertical,
                        bool flip, Boundary kind) {
        Vec2 e = B - A;
        Vec2 nn = vertical ? Vec2(e.y(), -e.x()) : Vec2(-e.y(), e.x());
        if (flip) nn = -nn;  // outward
        const double len = nn.norm();
        nn /= len;
        const Vec2 fm = 0.5 * (A + B);
        const Vec2& cin = centers[static_cast<size_t>(c)];
        const Vec2 cgh = 2.0 * fm - cin;  // ghost center mirrors across the face

        double qgh = 0.0, dqgh = 0.0;
        switch (kind) {
            case Boundary::Left: qgh = cfg.mu; break;
            case Boundary::Bottom: qgh = initial_state(fm.x(), cfg); break;
            case Boundary::Right:
            case Boundary::Top: qgh = Q[c]; dqgh = 1.0; break;
        }
        const auto ff = face_flux(Q[c], qgh, nn, cin, cgh, cfg);
        if (R) (*R)[c] += ff.F * len;
        if (trips) trips->emplace_back(c, c, (ff.dFdqL + ff.dFdqR * dqgh) * len);
    };

    auto P = [&](int i, int j) { return dofs.node(mesh.node_index(i, j)); };

    // Vertical faces (constant i).
    for (int j = 0; j < nt; ++j) {
        for (int i = 0; i <= nx; ++i) {
            const Vec2 A = P(i, j), B = P(i, j + 1);
            if (i == 0)
                boundary(mesh.cell_index(0, j), A, B, true, true, Boundary::Left);
            else if (i == nx)
                boundary(mesh.cell_index(nx - 1, j), A, B, true, false, Boundary::Right);
            else
                interior(mesh.cell_index(i - 1, j), mesh.cell_index(i, j), A, B, true);
        }
    }
    // Horizontal faces (constant j).
    for (int j = 0; j <= nt; ++j) {
        for (int i = 0; i < nx; ++i) {
            const Vec2 A = P(i, j), B = P(i + 1, j);
            if (j == 0)
                boundary(mesh.cell_index(i, 0), A, B, false, true, Boundary::Bottom);
            else if (j == nt)
                boundary(mesh.cell_index(i, nt - 1), A, B, false, false, Boundary::Top);
            else
                interior(mesh.cell_index(i, j - 1), mesh.cell_index(i, j), A, B, false);
        }
    }
}

}  // namespace fv

inline ResidualReport assemble_residual(const DiscreteState& Q,
                                        const StructuredQuadMesh& mesh,
                                        const MappingDofs& dofs,
                                        const BurgersConfig& cfg,
                                        const Eigen::VectorXd* theta = nullptr) {
    ResidualReport rep;
    fv::assemble(Q.values, mesh, dofs, cfg, &rep.residual, nullptr);
    rep.norm = rep.residual.norm();
    rep.weighted_norm =
        theta ? (theta->cwiseProduct(rep.residual)).norm() : rep.norm;
    return rep;
}

/// Analytic Jacobian dR/dQ of the finite-volume stencil (pentadiagonal).
inline Eigen::SparseMatrix<double> residual_state_jacobian(
    const DiscreteState& Q, const StructuredQuadMesh& mesh,
    const MappingDofs& dofs, const BurgersConfig& cfg) {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<size_t>(5 * mesh.num_cells()));
    fv::assemble(Q.values, mesh, dofs, cfg, nullptr, &trips);
    Eigen::SparseMatrix<double> J(mesh.num_cells(), mesh.num_cells());
    J.setFromTriplets(trips.begin(), trips.end());
    return J;
}

/// Directional mesh derivative (dR/dx_h) p by forward finite differences,
/// with step 1e-7 scaled by the node-coordinate magnitude.
inline Eigen::VectorXd residual_mesh_jacobian_apply(
    const DiscreteState& Q, const StructuredQuadMesh& mesh,
    const MappingDofs& dofs, const BurgersConfig& cfg,
    const Eigen::VectorXd& direction) {
    const Eigen::VectorXd x = dofs.flatten();
    if (direction.size() != x.size())
        throw InvalidArgument("residual_mesh_jacobian_apply: direction size mismatch");
    const double pmax = direction.cwiseAbs().maxCoeff();
    if (pmax == 0.0) return Eigen::VectorXd::Zero(mesh.num_cells());
    const double h = 1e-7 * (1.0 + x.cwiseAbs().maxCoeff()) / pmax;

    Eigen::VectorXd R0, R1;
    fv::assemble(Q.values, mesh, dofs, cfg, &R0, nullptr);
    const MappingDofs pert = MappingDofs::unflatten(x + h * direction);
    fv::assemble(Q.values, mesh, pert, cfg, &R1, nullptr);
    return (R1 - R0) / h;
}

struct NewtonOptions {
    double tol = 1e-10;
    int max_iter = 200;
    double lambda0 = 1.0;
    std::vector<double>* trace = nullptr;  // accepted residual norms, if set
};

/// Newton solve of R(Q) = 0 with pseudo-transient continuation: solve
/// (dR/dQ + lambda I) dQ = -R; lambda shrinks x0.2 on residual decrease and
/// grows x5 on increase. Initial iterate: the step initial condition extruded
/// in time.
inline DiscreteState solve_hdm(const StructuredQuadMesh& mesh,
                               const BurgersConfig& cfg,
                               const MappingDofs& dofs,
                               const NewtonOptions& opts = {}) {
    const auto validity = check_mapping_validity(mesh, dofs);
    if (!validity.valid)
        throw SingularMappingError("solve_hdm: invalid mapping");

    DiscreteState Q;
    Q.values.resize(mesh.num_cells());
    for (int c = 0; c < mesh.num_cells(); ++c)
        Q.values[c] = initial_state(dofs.cell_center(mesh, c).x(), cfg);

    Eigen::VectorXd R;
    fv::assemble(Q.values, mesh, dofs, cfg, &R, nullptr);
    double rnorm = R.norm();
    const double target = opts.tol * std::max(1.0, rnorm);
    if (opts.trace) opts.trace->push_back(rnorm);

    double lambda = opts.lambda0;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    for (int it = 0; it < opts.max_iter; ++it) {
        if (rnorm <= target) return Q;

        std::vector<Eigen::Triplet<double>> trips;
        fv::assemble(Q.values, mesh, dofs, cfg, nullptr, &trips);
        for (int c = 0; c < mesh.num_cells(); ++c)
            trips.emplace_back(c, c, lambda);
        Eigen::SparseMatrix<double> J(mesh.num_cells(), mesh.num_cells());
        J.setFromTriplets(trips.begin(), trips.end());

        lu.compute(J);
        if (lu.info() != Eigen::Success)
            throw SolverFailure("solve_hdm: singular linearization", rnorm);
        const Eigen::VectorXd dq = lu.solve(-R);

        Eigen::VectorXd Rtrial;
        const Eigen::VectorXd Qtrial = Q.values + dq;
        fv::assemble(Qtrial, mesh, dofs, cfg, &Rtrial, nullptr);
        const double rtrial = Rtrial.norm();
        if (rtrial < rnorm) {
            Q.values = Qtrial;
            R = Rtrial;
            rnorm = rtrial;
            lambda *= 0.2;
            if (opts.trace) opts.trace->push_back(rnorm);
        } else {
            lambda *= 5.0;
            if (lambda > 1e14)
                throw SolverFailure("solve_hdm: damping blow-up", rnorm);
        }
    }
    if (rnorm <= target) return Q;
    throw SolverFailure("solve_hdm: no convergence after iteration cap", rnorm);
}

inline DiscreteState solve_hdm(const StructuredQuadMesh& mesh,
                               const BurgersConfig& cfg,
                               const NewtonOptions& opts = {}) {
    return solve_hdm(mesh, cfg, MappingDofs::identity(mesh), opts);
}

/// Rightmost linear-interpolated crossing of the cell-center profile at the
/// time slice closest to t_slice.
inline double shock_position(const DiscreteState& Q, const StructuredQuadMesh& mesh,
                             const MappingDofs& dofs, double t_slice, double level) {
    const int nx = mesh.nx(), nt = mesh.nt();
    // Pick the cell row whose mean physical center time is closest.
    int best_j = 0;
    double best = std::numeric_limits<double>::max();
    for (int j = 0; j < nt; ++j) {
        double tbar = 0;
        for (int i = 0; i < nx; ++i)
            tbar += dofs.cell_center(mesh, mesh.cell_index(i, j)).y();
        tbar /= nx;
        if (std::abs(tbar - t_slice) < best) {
            best = std::abs(tbar - t_slice);
            best_j = j;
        }
    }
    std::vector<std::pair<double, double>> prof(static_cast<size_t>(nx));
    for (int i = 0; i < nx; ++i) {
        const int c = mesh.cell_index(i, best_j);
        prof[static_cast<size_t>(i)] = {dofs.cell_center(mesh, c).x(), Q.values[c]};
    }
    std::sort(prof.begin(), prof.end());

    double pos = std::numeric_limits<double>::quiet_NaN();
    bool found = false;
    for (int i = 0; i + 1 < nx; ++i) {
        const auto [x0, q0] = prof[static_cast<size_t>(i)];
        const auto [x1, q1] = prof[static_cast<size_t>(i + 1)];
        if ((q0 - level) * (q1 - level) <= 0.0 && q0 != q1) {
            pos = x0 + (level - q0) / (q1 - q0) * (x1 - x0);
            found = true;
        }
    }
    if (!found) throw NotFound("shock_position: profile does not cross level");
    return pos;
}

}  // namespace ftrom
