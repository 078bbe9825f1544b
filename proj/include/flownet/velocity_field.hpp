#pragma once

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "flownet/linalg.hpp"

namespace flownet {

// Piecewise-in-time velocity (t, x) -> v. boundaries lists the gluing times
// (including 0 and horizon) of whatever schedule built the field; analytic
// fields carry just {0, horizon}. Evaluators are total on [0, horizon] x R^d
// and clamp t, so one-step methods may probe t = horizon + ulp safely.
struct VelocityField {
    double horizon = 0.0;
    Index dimension = 0;
    std::vector<double> boundaries;
    std::function<Vector(double, const Vector&)> evaluator;

    Vector operator()(double t, const Vector& x) const {
        if (x.size() != dimension)
            fail("dim.mismatch", "velocity field expects dimension " +
                                     std::to_string(dimension) + ", input has " +
                                     std::to_string(x.size()));
        return evaluator(t, x);
    }
};

// Built-in analytic fields; the CLI addresses these by name so convergence
// runs need no fixture files.

inline VelocityField constant_field(Vector c, double horizon) {
    VelocityField f;
    f.horizon = horizon;
    f.dimension = c.size();
    f.boundaries = {0.0, horizon};
    f.evaluator = [c = std::move(c)](double, const Vector&) { return c; };
    return f;
}

inline VelocityField linear_decay_field(Index dimension, double horizon) {
    VelocityField f;
    f.horizon = horizon;
    f.dimension = dimension;
    f.boundaries = {0.0, horizon};
    f.evaluator = [](double, const Vector& x) { return Vector(-x); };
    return f;
}

inline VelocityField rotation_field(double omega, double horizon) {
    VelocityField f;
    f.horizon = horizon;
    f.dimension = 2;
    f.boundaries = {0.0, horizon};
    f.evaluator = [omega](double, const Vector& x) {
        Vector v(2);
        v(0) = -omega * x(1);
        v(1) = omega * x(0);
        return v;
    };
    return f;
}

}  // namespace flownet
