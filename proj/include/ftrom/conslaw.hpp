#pragma once

// Space-time viscous Burgers flux split and the reference-domain
// transformation of fluxes, gradients and sources.
//
// Space-time convention: the first coordinate is space, the second is time.
// The flux row is f = (f_x, f_t) with f_x = q^2/2 - nu*dq/dx and f_t = q, so
// div f = 0 reproduces q_t + d/dx(q^2/2 - nu q_x) = 0. Diffusion acts only in
// the first coordinate.

#include <cmath>

#include <Eigen/Dense>

#include "ftrom/errors.hpp"
#include "ftrom/mesh.hpp"

namespace ftrom {

struct BurgersConfig {
    double nu;  // viscosity, > 0
    double mu;  // step height / inflow value

    BurgersConfig(double nu, double mu) : nu(nu), mu(mu) {
        if (!(nu > 0)) throw InvalidArgument("BurgersConfig: nu must be > 0");
    }
};

/// m x 2 flux array; m = 1 for Burgers but the transformation algebra below
/// is state-size-agnostic.
using FluxValue = Eigen::Matrix<double, Eigen::Dynamic, 2>;

inline FluxValue burgers_inviscid_flux(double q) {
    FluxValue f(1, 2);
    f(0, 0) = 0.5 * q * q;
    f(0, 1) = q;
    return f;
}

inline FluxValue burgers_viscous_flux(const Vec2& grad_q, const BurgersConfig& cfg) {
    FluxValue f(1, 2);
    f(0, 0) = cfg.nu * grad_q.x();
    f(0, 1) = 0.0;
    return f;
}

/// f = f^i - f^v.
inline FluxValue burgers_flux(double q, const Vec2& grad_q, const BurgersConfig& cfg) {
    return burgers_inviscid_flux(q) - burgers_viscous_flux(grad_q, cfg);
}

namespace detail {
inline void require_invertible(const MappingJacobian& J, const char* who) {
    const double scale = J.G.cwiseAbs().maxCoeff();
    if (std::abs(J.g) < 1e-14 * std::max(1.0, scale * scale))
        throw SingularMappingError(std::string(who) + ": singular mapping Jacobian");
}
}  // namespace detail

/// Reference flux F = g f G^{-T}.
inline FluxValue transform_flux(const FluxValue& f_phys, const MappingJacobian& J) {
    detail::require_invertible(J, "transform_flux");
    return J.g * f_phys * J.G.inverse().transpose();
}

/// Reference source S = g s (trivially zero for Burgers; kept for the scaling).
inline Eigen::VectorXd transform_source(const Eigen::VectorXd& s_phys,
                                        const MappingJacobian& J) {
    detail::require_invertible(J, "transform_source");
    return J.g * s_phys;
}

/// Physical gradient from a reference gradient: grad q = grad_0 Q * G^{-1}.
/// Gradients are row vectors (per state component); for m = 1 we pass Vec2.
inline Vec2 pullback_gradient(const Vec2& grad_ref, const MappingJacobian& J) {
    detail::require_invertible(J, "pullback_gradient");
    Eigen::RowVector2d r = grad_ref.transpose() * J.G.inverse();
    return r.transpose();
}

/// Step initial condition: q0 = mu for x < -0.5, else 0.
inline double initial_state(double x, const BurgersConfig& cfg) {
    return x < -0.5 ? cfg.mu : 0.0;
}

}  // namespace ftrom
