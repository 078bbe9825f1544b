#pragma once

#include <cmath>
#include <string>

#include "flownet/error.hpp"

namespace flownet {

enum class TimeScaleKind { quintic, bump };

// Smooth monotone ramp h: 0 for tau <= 0, 1 for tau >= 1, h_dot = 0 outside
// (0,1). Every flow segment composes its generator with h so that segment
// velocities vanish exactly at gluing times.
//
// quintic: 6t^5 - 15t^4 + 10t^3, C^2 at the endpoints, cheap.
// bump:    sigma(t)/(sigma(t)+sigma(1-t)) with sigma(t)=exp(-1/t), C-infinity.
struct TimeScale {
    TimeScaleKind kind = TimeScaleKind::quintic;

    double h(double tau) const {
        if (tau <= 0.0) return 0.0;
        if (tau >= 1.0) return 1.0;
        switch (kind) {
            case TimeScaleKind::quintic:
                return tau * tau * tau * (10.0 + tau * (6.0 * tau - 15.0));
            case TimeScaleKind::bump: {
                const double a = sigma(tau);
                const double b = sigma(1.0 - tau);
                return a / (a + b);
            }
        }
        return 0.0;
    }

    double h_dot(double tau) const {
        if (tau <= 0.0 || tau >= 1.0) return 0.0;
        switch (kind) {
            case TimeScaleKind::quintic: {
                // 30 t^2 (1-t)^2: the factored form is exactly zero at both ends.
                const double u = tau * (1.0 - tau);
                return 30.0 * u * u;
            }
            case TimeScaleKind::bump: {
                const double a = sigma(tau);
                const double b = sigma(1.0 - tau);
                const double den = a + b;
                return (sigma_dot(tau) * b + a * sigma_dot(1.0 - tau)) / (den * den);
            }
        }
        return 0.0;
    }

    std::string name() const { return kind == TimeScaleKind::quintic ? "quintic" : "bump"; }

    static TimeScale parse(const std::string& name) {
        if (name == "quintic") return {TimeScaleKind::quintic};
        if (name == "bump") return {TimeScaleKind::bump};
        fail("option.invalid", "unknown timescale \"" + name + "\" (expected quintic or bump)");
    }

private:
    static double sigma(double t) { return t > 0.0 ? std::exp(-1.0 / t) : 0.0; }
    static double sigma_dot(double t) { return t > 0.0 ? std::exp(-1.0 / t) / (t * t) : 0.0; }
};

}  // namespace flownet
