#pragma once

// Structured quadrilateral space-time mesh, physical node positions and the
// piecewise-bilinear domain mapping with its Jacobian.
//
// Conventions (fixed once, used everywhere):
//  * node ordering is lexicographic with the first (spatial) coordinate
//    fastest: node(i,j) = i + j*(nx+1), i in [0,nx], j in [0,nt];
//  * cell ordering likewise: cell(i,j) = i + j*nx;
//  * local coordinates on each cell live on [0,1]^2.

#include <array>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "ftrom/errors.hpp"

namespace ftrom {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

struct Rect {
    double x_lo, x_hi;
    double t_lo, t_hi;

    double width() const { return x_hi - x_lo; }
    double height() const { return t_hi - t_lo; }
    bool degenerate() const { return !(x_hi > x_lo) || !(t_hi > t_lo); }
};

class StructuredQuadMesh {
public:
    StructuredQuadMesh(int nx, int nt, Rect bounds)
        : nx_(nx), nt_(nt), bounds_(bounds) {
        if (nx < 2 || nt < 2)
            throw InvalidArgument("build_rect_mesh: nx and nt must be >= 2");
        if (bounds.degenerate())
            throw InvalidArgument("build_rect_mesh: degenerate bounds");
        ref_nodes_.resize(static_cast<size_t>(num_nodes()));
        const double dx = bounds.width() / nx;
        const double dt = bounds.height() / nt;
        for (int j = 0; j <= nt; ++j)
            for (int i = 0; i <= nx; ++i)
                ref_nodes_[static_cast<size_t>(node_index(i, j))] =
                    Vec2(bounds.x_lo + i * dx, bounds.t_lo + j * dt);
    }

    int nx() const { return nx_; }
    int nt() const { return nt_; }
    const Rect& bounds() const { return bounds_; }
    double dx() const { return bounds_.width() / nx_; }
    double dt() const { return bounds_.height() / nt_; }

    int num_nodes() const { return (nx_ + 1) * (nt_ + 1); }
    int num_cells() const { return nx_ * nt_; }

    int node_index(int i, int j) const { return i + j * (nx_ + 1); }
    int cell_index(int i, int j) const { return i + j * nx_; }
    int cell_i(int c) const { return c % nx_; }
    int cell_j(int c) const { return c / nx_; }

    /// Counterclockwise node indices of a cell: (i,j), (i+1,j), (i+1,j+1), (i,j+1).
    std::array<int, 4> cell_nodes(int c) const {
        const int i = cell_i(c), j = cell_j(c);
        return {node_index(i, j), node_index(i + 1, j),
                node_index(i + 1, j + 1), node_index(i, j + 1)};
    }

    const std::vector<Vec2>& ref_nodes() const { return ref_nodes_; }
    const Vec2& ref_node(int n) const { return ref_nodes_[static_cast<size_t>(n)]; }

    /// Reference cell center (uniform grid).
    Vec2 ref_cell_center(int c) const {
        const int i = cell_i(c), j = cell_j(c);
        return Vec2(bounds_.x_lo + (i + 0.5) * dx(), bounds_.t_lo + (j + 0.5) * dt());
    }

private:
    int nx_, nt_;
    Rect bounds_;
    std::vector<Vec2> ref_nodes_;
};

inline StructuredQuadMesh build_rect_mesh(int nx, int nt, Rect bounds) {
    return StructuredQuadMesh(nx, nt, bounds);
}

/// Physical (possibly warped) node positions, same ordering as ref_nodes.
struct MappingDofs {
    std::vector<Vec2> phys_nodes;

    static MappingDofs identity(const StructuredQuadMesh& mesh) {
        return MappingDofs{mesh.ref_nodes()};
    }

    const Vec2& node(int n) const { return phys_nodes[static_cast<size_t>(n)]; }

    /// Physical cell center = bilinear map of the cell at (1/2, 1/2).
    Vec2 cell_center(const StructuredQuadMesh& mesh, int c) const {
        const auto nd = mesh.cell_nodes(c);
        return 0.25 * (node(nd[0]) + node(nd[1]) + node(nd[2]) + node(nd[3]));
    }

    /// Flatten to interleaved (x_0, t_0, x_1, t_1, ...) vector of length 2*num_nodes.
    Eigen::VectorXd flatten() const {
        Eigen::VectorXd v(2 * static_cast<Eigen::Index>(phys_nodes.size()));
        for (size_t n = 0; n < phys_nodes.size(); ++n) {
            v[2 * static_cast<Eigen::Index>(n)] = phys_nodes[n].x();
            v[2 * static_cast<Eigen::Index>(n) + 1] = phys_nodes[n].y();
        }
        return v;
    }

    static MappingDofs unflatten(const Eigen::VectorXd& v) {
        MappingDofs d;
        d.phys_nodes.resize(static_cast<size_t>(v.size() / 2));
        for (size_t n = 0; n < d.phys_nodes.size(); ++n)
            d.phys_nodes[n] = Vec2(v[2 * static_cast<Eigen::Index>(n)],
                                   v[2 * static_cast<Eigen::Index>(n) + 1]);
        return d;
    }
};

struct MappingJacobian {
    Mat2 G;    // d(physical)/d(reference)
    double g;  // det(G)
};

/// Bilinear map of one cell: x(xi,eta) = sum_a N_a(xi,eta) x_a, with the
/// reference chart xi = (X - X_00)/dx, eta = (T - T_00)/dt.
inline Vec2 bilinear_map(const StructuredQuadMesh& mesh, const MappingDofs& dofs,
                         int cell, double xi, double eta) {
    const auto nd = mesh.cell_nodes(cell);
    return (1 - xi) * (1 - eta) * dofs.node(nd[0]) + xi * (1 - eta) * dofs.node(nd[1]) +
           xi * eta * dofs.node(nd[2]) + (1 - xi) * eta * dofs.node(nd[3]);
}

inline MappingJacobian mapping_jacobian(const StructuredQuadMesh& mesh,
                                        const MappingDofs& dofs, int cell,
                                        double xi, double eta) {
    if (cell < 0 || cell >= mesh.num_cells())
        throw InvalidArgument("mapping_jacobian: cell index out of range");
    if (dofs.phys_nodes.size() != static_cast<size_t>(mesh.num_nodes()))
        throw InvalidArgument("mapping_jacobian: dofs size mismatch");
    const auto nd = mesh.cell_nodes(cell);
    // d/dxi and d/deta of the bilinear interpolant.
    const Vec2 dxi = -(1 - eta) * dofs.node(nd[0]) + (1 - eta) * dofs.node(nd[1]) +
                     eta * dofs.node(nd[2]) - eta * dofs.node(nd[3]);
    const Vec2 deta = -(1 - xi) * dofs.node(nd[0]) - xi * dofs.node(nd[1]) +
                      xi * dofs.node(nd[2]) + (1 - xi) * dofs.node(nd[3]);
    MappingJacobian J;
    J.G.col(0) = dxi / mesh.dx();
    J.G.col(1) = deta / mesh.dt();
    J.g = J.G.determinant();
    return J;
}

struct ValidityReport {
    bool valid = true;
    std::vector<int> offending_cells;
};

/// g > 0 at the four corners and the center of every cell. The bilinear
/// determinant is itself bilinear in (xi,eta), so this is a practical proxy
/// rather than an exact positivity certificate.
inline ValidityReport check_mapping_validity(const StructuredQuadMesh& mesh,
                                             const MappingDofs& dofs) {
    if (dofs.phys_nodes.size() != static_cast<size_t>(mesh.num_nodes()))
        throw InvalidArgument("check_mapping_validity: dofs size mismatch");
    static constexpr double pts[5][2] = {
        {0, 0}, {1, 0}, {1, 1}, {0, 1}, {0.5, 0.5}};
    ValidityReport rep;
    for (int c = 0; c < mesh.num_cells(); ++c) {
        for (const auto& p : pts) {
            if (mapping_jacobian(mesh, dofs, c, p[0], p[1]).g <= 0) {
                rep.valid = false;
                rep.offending_cells.push_back(c);
                break;
            }
        }
    }
    return rep;
}

}  // namespace ftrom
