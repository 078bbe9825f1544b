#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "flownet/velocity_field.hpp"

namespace flownet {

struct TimeGrid {
    std::vector<double> times;  // t_0 < ... < t_L

    static TimeGrid uniform(double t0, double t1, std::size_t steps) {
        if (steps < 1) fail("option.invalid", "time grid needs at least 1 step");
        if (!(t1 > t0)) fail("option.invalid", "time grid needs t1 > t0");
        TimeGrid g;
        g.times.resize(steps + 1);
        const double s = (t1 - t0) / static_cast<double>(steps);
        for (std::size_t j = 0; j < steps; ++j) g.times[j] = t0 + s * static_cast<double>(j);
        g.times[steps] = t1;
        return g;
    }

    std::size_t steps() const { return times.empty() ? 0 : times.size() - 1; }
    double step(std::size_t k) const { return times[k + 1] - times[k]; }

    void validate() const {
        if (times.size() < 2) fail("option.invalid", "time grid needs at least 2 points");
        for (std::size_t k = 0; k + 1 < times.size(); ++k)
            if (!(times[k] < times[k + 1]))
                fail("option.invalid", "time grid must be strictly increasing (violated at index " +
                                           std::to_string(k + 1) + ")");
    }
};

struct Trajectory {
    TimeGrid grid;
    std::vector<Vector> states;  // one per grid point

    const Vector& final_state() const { return states.back(); }
};

enum class Stepper { euler, rk4 };

inline Stepper parse_stepper(const std::string& name) {
    if (name == "euler") return Stepper::euler;
    if (name == "rk4") return Stepper::rk4;
    fail("option.invalid", "unknown method \"" + name + "\" (expected euler or rk4)");
}

namespace detail {

inline void check_grid_in_horizon(const TimeGrid& grid, const VelocityField& v) {
    grid.validate();
    const double slack = 1e-9 * std::max(1.0, std::abs(v.horizon));
    if (grid.times.front() < -slack || grid.times.back() > v.horizon + slack)
        fail("domain.grid", "time grid [" + std::to_string(grid.times.front()) + ", " +
                                std::to_string(grid.times.back()) +
                                "] exceeds the field horizon [0, " + std::to_string(v.horizon) +
                                "]");
}

inline void check_state(const Vector& x, std::size_t step, double t) {
    if (!x.allFinite())
        fail("numeric.nonfinite", "integration produced a non-finite state at step " +
                                      std::to_string(step) + " (t=" + std::to_string(t) + ")");
}

}  // namespace detail

// Fully explicit Euler, velocity sampled at the left endpoint (t_{k-1},
// x_{k-1}). This is the sampling that turns a block grid over a
// piecewise-constant ResNet field back into the ResNet forward pass.
inline Trajectory integrate_euler(const VelocityField& v, const Vector& x0, const TimeGrid& grid) {
    detail::check_grid_in_horizon(grid, v);
    Trajectory tr;
    tr.grid = grid;
    tr.states.reserve(grid.times.size());
    tr.states.push_back(x0);
    Vector x = x0;
    for (std::size_t k = 0; k + 1 < grid.times.size(); ++k) {
        const double s = grid.step(k);
        const Vector vel = v(grid.times[k], x);
        for (Index i = 0; i < x.size(); ++i) x(i) += s * vel(i);
        detail::check_state(x, k + 1, grid.times[k + 1]);
        tr.states.push_back(x);
    }
    return tr;
}

inline Trajectory integrate_rk4(const VelocityField& v, const Vector& x0, const TimeGrid& grid) {
    detail::check_grid_in_horizon(grid, v);
    Trajectory tr;
    tr.grid = grid;
    tr.states.reserve(grid.times.size());
    tr.states.push_back(x0);
    Vector x = x0;
    for (std::size_t k = 0; k + 1 < grid.times.size(); ++k) {
        const double t = grid.times[k];
        const double s = grid.step(k);
        const Vector k1 = v(t, x);
        const Vector k2 = v(t + 0.5 * s, x + (0.5 * s) * k1);
        const Vector k3 = v(t + 0.5 * s, x + (0.5 * s) * k2);
        const Vector k4 = v(t + s, x + s * k3);
        x += (s / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        detail::check_state(x, k + 1, grid.times[k + 1]);
        tr.states.push_back(x);
    }
    return tr;
}

inline Trajectory integrate(const VelocityField& v, const Vector& x0, const TimeGrid& grid,
                            Stepper method) {
    return method == Stepper::euler ? integrate_euler(v, x0, grid) : integrate_rk4(v, x0, grid);
}

struct ConvergenceReport {
    std::vector<std::size_t> grid_sizes;
    std::vector<double> steps;
    std::vector<double> max_abs_err;
    std::vector<double> rel_err;
    // Least-squares slope of log-error vs log-step; NaN when errors vanish
    // (constant fields) and there is nothing to fit.
    double fitted_order = std::numeric_limits<double>::quiet_NaN();

    std::string to_csv() const {
        std::string out = "L,step,max_abs_err,rel_err,fitted_order\n";
        char buf[160];
        for (std::size_t i = 0; i < grid_sizes.size(); ++i) {
            if (i + 1 < grid_sizes.size()) {
                std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,\n",
                              static_cast<std::size_t>(grid_sizes[i]), steps[i], max_abs_err[i],
                              rel_err[i]);
            } else {
                std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n",
                              static_cast<std::size_t>(grid_sizes[i]), steps[i], max_abs_err[i],
                              rel_err[i], fitted_order);
            }
            out += buf;
        }
        return out;
    }
};

// Integrate to the horizon on each grid and compare final states against the
// supplied reference. Errors at or below 1e-15 are excluded from the slope
// fit (they are float noise, not discretization error).
inline ConvergenceReport convergence_study(const VelocityField& v, const Vector& x0,
                                           const Vector& exact_final,
                                           const std::vector<std::size_t>& grid_sizes,
                                           Stepper method) {
    if (grid_sizes.size() < 3)
        fail("option.invalid", "convergence study needs at least 3 grid sizes");
    for (std::size_t i = 0; i + 1 < grid_sizes.size(); ++i)
        if (grid_sizes[i] >= grid_sizes[i + 1])
            fail("option.invalid", "convergence grid sizes must be strictly increasing");
    if (exact_final.size() != x0.size())
        fail("dim.mismatch", "reference final state has wrong dimension");

    ConvergenceReport rep;
    rep.grid_sizes = grid_sizes;
    const double ref_norm = exact_final.cwiseAbs().maxCoeff();
    for (std::size_t L : grid_sizes) {
        const TimeGrid grid = TimeGrid::uniform(0.0, v.horizon, L);
        const Trajectory tr = integrate(v, x0, grid, method);
        const double err = (tr.final_state() - exact_final).cwiseAbs().maxCoeff();
        rep.steps.push_back(v.horizon / static_cast<double>(L));
        rep.max_abs_err.push_back(err);
        rep.rel_err.push_back(err / std::max(ref_norm, 1e-300));
    }

    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < grid_sizes.size(); ++i) {
        if (rep.max_abs_err[i] <= 1e-15) continue;
        const double lx = std::log(rep.steps[i]);
        const double ly = std::log(rep.max_abs_err[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        ++n;
    }
    if (n >= 2) {
        const double denom = static_cast<double>(n) * sxx - sx * sx;
        if (denom != 0.0) rep.fitted_order = (static_cast<double>(n) * sxy - sx * sy) / denom;
    }
    return rep;
}

}  // namespace flownet
