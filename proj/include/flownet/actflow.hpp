#pragma once

#include <algorithm>
#include <cmath>

#include "flownet/nettypes.hpp"
#include "flownet/timescale.hpp"

namespace flownet {

namespace detail {

// Solve (1-h)Z + h a(Z) = z for a single component. The left side is strictly
// increasing with slope >= 1-h > 0, so a bracket always exists; safeguarded
// Newton falls back to bisection whenever a step leaves the bracket.
inline double invert_activation_flow(const ActivationKind& a, double h, double z) {
    const double one_minus_h = 1.0 - h;
    auto g = [&](double Z) { return one_minus_h * Z + h * a.apply(Z); };
    const double tol = 1e-12 * std::max(1.0, std::abs(z));

    double lo = z, hi = z;
    double step = std::max(1.0, std::abs(z));
    for (int guard = 0; g(lo) > z; ++guard) {
        if (guard > 200) fail("numeric.no_bracket", "activation flow inverse: no lower bracket");
        lo -= step;
        step *= 2.0;
    }
    step = std::max(1.0, std::abs(z));
    for (int guard = 0; g(hi) < z; ++guard) {
        if (guard > 200) fail("numeric.no_bracket", "activation flow inverse: no upper bracket");
        hi += step;
        step *= 2.0;
    }

    double Z = 0.5 * (lo + hi);
    for (int iter = 0; iter < 100; ++iter) {
        const double val = g(Z) - z;
        if (std::abs(val) <= tol) return Z;
        if (val > 0.0) hi = Z;
        else lo = Z;
        const double deriv = one_minus_h + h * a.derivative(Z);
        double next = deriv > 0.0 ? Z - val / deriv : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        Z = next;
    }
    return Z;
}

}  // namespace detail

// The activation flow phi(tau, Z) = (1-h(tau))Z + h(tau)a(Z): a homotopy from
// the identity (tau=0) to the activation (tau=1), strictly increasing in Z for
// tau < 1. relu/leaky_relu take closed-form paths throughout (phi is itself a
// leaky relu in Z), which also makes the endpoint identities exact.
struct ActivationFlow {
    ActivationKind activation;
    TimeScale ts;

    // Negative-side slope of the kinked flows, written as the lerp
    // (1-h) + h*slope rather than 1 - h*(1-slope): the two only differ in the
    // last ulp, but the lerp hits slope exactly at h = 1, which the
    // "phi(1, .) = a" contract needs for non-dyadic slopes.
    double kink_coeff(double hv) const { return (1.0 - hv) + hv * activation.slope; }

    double phi_scalar(double tau, double Z) const {
        check_tau_closed(tau);
        const double hv = ts.h(tau);
        switch (activation.tag) {
            case ActivationTag::relu:
                return std::max(Z, (1.0 - hv) * Z);
            case ActivationTag::leaky_relu:
                return std::max(Z, kink_coeff(hv) * Z);
            case ActivationTag::identity:
                return Z;
            case ActivationTag::tanh:
                return (1.0 - hv) * Z + hv * std::tanh(Z);
        }
        return Z;
    }

    Vector phi(double tau, const Vector& Z) const {
        check_tau_closed(tau);
        Vector out(Z.size());
        for (Index i = 0; i < Z.size(); ++i) out(i) = phi_scalar(tau, Z(i));
        return out;
    }

    double phi_inv_scalar(double tau, double z) const {
        check_tau_open(tau);
        const double hv = ts.h(tau);
        switch (activation.tag) {
            case ActivationTag::relu:
                return std::min(z, z / (1.0 - hv));
            case ActivationTag::leaky_relu:
                return std::min(z, z / kink_coeff(hv));
            case ActivationTag::identity:
                return z;
            case ActivationTag::tanh:
                return detail::invert_activation_flow(activation, hv, z);
        }
        return z;
    }

    Vector phi_inv(double tau, const Vector& z) const {
        check_tau_open(tau);
        Vector out(z.size());
        for (Index i = 0; i < z.size(); ++i) out(i) = phi_inv_scalar(tau, z(i));
        return out;
    }

    // Transport velocity v^a(tau, z) = h_dot(tau) (a(Z) - Z) at Z =
    // phi_inv(tau, z). For relu this collapses to a(h_dot/(h-1) z). Diverges
    // like h_dot/(1-h) as tau -> 1; consumers truncate at 1 - eps_act.
    Vector velocity(double tau, const Vector& z) const {
        check_tau_open(tau);
        const double hd = ts.h_dot(tau);
        if (hd == 0.0) return Vector::Zero(z.size());
        const double hv = ts.h(tau);
        Vector out(z.size());
        switch (activation.tag) {
            case ActivationTag::relu: {
                const double c = hd / (hv - 1.0);
                for (Index i = 0; i < z.size(); ++i) out(i) = std::max(c * z(i), 0.0);
                return out;
            }
            case ActivationTag::leaky_relu: {
                // Z = z / c0 on the negative side; a(Z)-Z = (slope-1)Z.
                const double c0 = kink_coeff(hv);
                const double k = hd * (activation.slope - 1.0) / c0;
                for (Index i = 0; i < z.size(); ++i) out(i) = z(i) < 0.0 ? k * z(i) : 0.0;
                return out;
            }
            case ActivationTag::identity:
                return Vector::Zero(z.size());
            case ActivationTag::tanh: {
                for (Index i = 0; i < z.size(); ++i) {
                    const double Z = phi_inv_scalar(tau, z(i));
                    out(i) = hd * (std::tanh(Z) - Z);
                }
                return out;
            }
        }
        return out;
    }

    // J(tau, Z) = diag((1-h) + h a'(Z)), returned as its diagonal.
    Vector jacobian(double tau, const Vector& Z) const {
        check_tau_closed(tau);
        const double hv = ts.h(tau);
        Vector out(Z.size());
        for (Index i = 0; i < Z.size(); ++i)
            out(i) = (1.0 - hv) + hv * activation.derivative(Z(i));
        return out;
    }

    Vector jacobian_inv(double tau, const Vector& Z) const {
        Vector J = jacobian(tau, Z);
        for (Index i = 0; i < Z.size(); ++i) {
            if (J(i) == 0.0)
                fail("numeric.singular_jacobian",
                     "activation flow Jacobian is singular (tau=1 with a'=0 at component " +
                         std::to_string(i) + ")");
            J(i) = 1.0 / J(i);
        }
        return J;
    }

private:
    static void check_tau_closed(double tau) {
        if (!(tau >= 0.0 && tau <= 1.0))
            fail("domain.tau", "tau must lie in [0,1], got " + std::to_string(tau));
    }
    static void check_tau_open(double tau) {
        if (!(tau >= 0.0 && tau < 1.0))
            fail("domain.tau", "tau must lie in [0,1), got " + std::to_string(tau));
    }
};

}  // namespace flownet
