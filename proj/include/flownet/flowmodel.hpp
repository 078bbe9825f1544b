#pragma once

#include <array>
#include <memory>
#include <vector>

#include "flownet/actflow.hpp"
#include "flownet/integrate.hpp"
#include "flownet/lindecomp.hpp"
#include "flownet/nettypes.hpp"
#include "flownet/velocity_field.hpp"

namespace flownet {

// One unit of local time within a layer flow. Rotation/stretch/translation
// carry their generator; the activation segment carries the flow and its
// eps_act truncation (velocity held at zero on [1-eps_act, 1), since the relu
// rate h_dot/(1-h) diverges as tau -> 1).
struct FlowSegment {
    enum class Kind { rotation, stretch, translation, activation };

    Kind kind = Kind::translation;
    TimeScale ts;
    Matrix rotation_generator;   // kind == rotation (skew)
    Vector stretch_generator;    // kind == stretch (diagonal of Lambda + beta*Pi)
    Vector shift;                // kind == translation
    ActivationKind activation;   // kind == activation
    double eps_act = 0.05;

    static FlowSegment rotation(Matrix skew, TimeScale ts) {
        FlowSegment s;
        s.kind = Kind::rotation;
        s.ts = ts;
        s.rotation_generator = std::move(skew);
        return s;
    }
    static FlowSegment stretch(Vector diag, TimeScale ts) {
        FlowSegment s;
        s.kind = Kind::stretch;
        s.ts = ts;
        s.stretch_generator = std::move(diag);
        return s;
    }
    static FlowSegment translation(Vector shift, TimeScale ts) {
        FlowSegment s;
        s.kind = Kind::translation;
        s.ts = ts;
        s.shift = std::move(shift);
        return s;
    }
    static FlowSegment activation_segment(ActivationKind a, TimeScale ts, double eps_act) {
        FlowSegment s;
        s.kind = Kind::activation;
        s.ts = ts;
        s.activation = a;
        s.eps_act = eps_act;
        return s;
    }

    // Velocity at local time tau in [0,1). Exactly zero whenever h_dot(tau)
    // is (both segment endpoints), so glued fields are still at boundaries.
    Vector velocity(double tau, const Vector& z) const {
        switch (kind) {
            case Kind::rotation: {
                const double hd = ts.h_dot(tau);
                if (hd == 0.0) return Vector::Zero(z.size());
                return hd * (rotation_generator * z);
            }
            case Kind::stretch: {
                const double hd = ts.h_dot(tau);
                if (hd == 0.0) return Vector::Zero(z.size());
                return hd * stretch_generator.cwiseProduct(z);
            }
            case Kind::translation: {
                const double hd = ts.h_dot(tau);
                if (hd == 0.0) return Vector::Zero(shift.size());
                return hd * shift;
            }
            case Kind::activation: {
                if (tau >= 1.0 - eps_act) return Vector::Zero(z.size());
                ActivationFlow af{activation, ts};
                return af.velocity(tau, z);
            }
        }
        return Vector::Zero(z.size());
    }
};

// The 5-segment glued flow realizing one plain layer: rotation(Psi),
// stretch(Lambda + beta*Pi), rotation(Phi), translation(b), activation(a),
// one local time unit each.
struct LayerFlow {
    std::array<FlowSegment, 5> segments;
    Index dimension = 0;
};

inline LayerFlow build_layer_flow(const PlainLayer& layer, double beta, const TimeScale& ts,
                                  double eps_act = 0.05) {
    const LinearDecomposition dec = decompose(layer.W, beta);
    LayerFlow flow{{FlowSegment::rotation(dec.Psi, ts),
                    FlowSegment::stretch(dec.stretch_generator(), ts),
                    FlowSegment::rotation(dec.Phi, ts),
                    FlowSegment::translation(layer.b, ts),
                    FlowSegment::activation_segment(layer.activation, ts, eps_act)},
                   layer.W.rows()};
    return flow;
}

inline Vector layer_velocity(const LayerFlow& flow, double tau, const Vector& z) {
    if (!(tau >= 0.0 && tau < 5.0))
        fail("domain.tau", "layer flow time must lie in [0,5), got " + std::to_string(tau));
    int seg = static_cast<int>(tau);
    if (seg > 4) seg = 4;
    return flow.segments[static_cast<std::size_t>(seg)].velocity(tau - seg, z);
}

namespace detail {

// Index of the interval [k*s, (k+1)*s) containing t, robust to t/s landing
// one ulp on the wrong side of an integer (grid points are built as k*s, so
// the correction compares against the identical products).
inline Index interval_index(double t, double s, Index count) {
    Index k = static_cast<Index>(t / s);
    if (k > count - 1) k = count - 1;
    if (k < 0) k = 0;
    if (k + 1 < count && t >= (k + 1) * s) ++k;
    else if (k > 0 && t < k * s) --k;
    return k;
}

}  // namespace detail

// Glue layer flows into one field on [0, T], s = T/L wall-clock per layer:
// v(t,x) = (5/s) * v_k((5/s)(t - t_{k-1}), x). The 5/s factor is the chain
// rule for compressing 5 local units into s wall-clock units.
inline VelocityField build_network_flow(const Network& net, double T, double beta,
                                        const TimeScale& ts, double eps_act = 0.05) {
    validate_network(net);
    if (!(T > 0.0)) fail("option.invalid", "horizon T must be positive");
    auto flows = std::make_shared<std::vector<LayerFlow>>();
    flows->reserve(net.layers.size());
    for (const Layer& layer : net.layers) {
        const auto* plain = std::get_if<PlainLayer>(&layer);
        if (!plain)
            fail("option.invalid", "build_network_flow requires a network of plain layers");
        flows->push_back(build_layer_flow(*plain, beta, ts, eps_act));
    }
    const Index L = static_cast<Index>(net.layers.size());
    const double s = T / static_cast<double>(L);

    VelocityField field;
    field.horizon = T;
    field.dimension = net.dimension;
    field.boundaries.resize(static_cast<std::size_t>(L) + 1);
    for (Index k = 0; k <= L; ++k)
        field.boundaries[static_cast<std::size_t>(k)] = k == L ? T : k * s;
    field.evaluator = [flows, s, T, L](double t, const Vector& x) -> Vector {
        if (t < 0.0) t = 0.0;
        if (t > T) t = T;
        const Index k = detail::interval_index(t, s, L);
        double local = (5.0 / s) * (t - k * s);
        if (local < 0.0) local = 0.0;
        if (local >= 5.0) return Vector::Zero(x.size());  // t == T
        Vector v = layer_velocity((*flows)[static_cast<std::size_t>(k)], local, x);
        v *= 5.0 / s;
        return v;
    };
    return field;
}

enum class ParamInterpolation { piecewise_constant, linear };

inline ParamInterpolation parse_interpolation(const std::string& name) {
    if (name == "const" || name == "piecewise_constant") return ParamInterpolation::piecewise_constant;
    if (name == "linear") return ParamInterpolation::linear;
    fail("option.invalid", "unknown interpolation \"" + name + "\" (expected const or linear)");
}

// Read a ResNet of 2-layer blocks as samples of a time-dependent velocity
// v(t,x) = W2(t) a(W1(t) x + b1(t)) + b2(t). Blocks store s*W2, so the
// continuous parameters divide the step back out. piecewise_constant assigns
// block k to [t_k, t_{k+1}) (left samples): one Euler step per block then
// reproduces the block map. linear interpolates between block parameters
// placed at the left endpoints t_k, clamped outside [t_0, t_{L-1}].
inline VelocityField resnet_to_flow(const Network& net, double T,
                                    ParamInterpolation interpolation) {
    validate_network(net);
    if (!(T > 0.0)) fail("option.invalid", "horizon T must be positive");
    struct Params {
        Matrix W1;
        Vector b1;
        Matrix W2;
        Vector b2;
    };
    auto params = std::make_shared<std::vector<Params>>();
    params->reserve(net.layers.size());
    ActivationKind act;
    bool first = true;
    const Index L = static_cast<Index>(net.layers.size());
    const double s = T / static_cast<double>(L);
    for (const Layer& layer : net.layers) {
        const auto* block = std::get_if<ResBlock2>(&layer);
        if (!block) fail("option.invalid", "resnet_to_flow requires a network of res2 blocks");
        if (first) {
            act = block->activation;
            first = false;
        } else if (!(act == block->activation)) {
            fail("option.invalid", "resnet_to_flow requires all blocks to share one activation");
        }
        params->push_back({block->W1, block->b1, Matrix(block->W2 / s), Vector(block->b2 / s)});
    }

    VelocityField field;
    field.horizon = T;
    field.dimension = net.dimension;
    field.boundaries.resize(static_cast<std::size_t>(L) + 1);
    for (Index k = 0; k <= L; ++k)
        field.boundaries[static_cast<std::size_t>(k)] = k == L ? T : k * s;

    if (interpolation == ParamInterpolation::piecewise_constant) {
        field.evaluator = [params, act, s, T, L](double t, const Vector& x) -> Vector {
            if (t < 0.0) t = 0.0;
            if (t > T) t = T;
            const auto& p = (*params)[static_cast<std::size_t>(detail::interval_index(t, s, L))];
            return p.W2 * act.apply(Vector(p.W1 * x + p.b1)) + p.b2;
        };
    } else {
        field.evaluator = [params, act, s, T, L](double t, const Vector& x) -> Vector {
            if (t < 0.0) t = 0.0;
            if (t > T) t = T;
            const double u = t / s;
            Matrix W1, W2;
            Vector b1, b2;
            if (u <= 0.0 || L == 1) {
                const auto& p = params->front();
                W1 = p.W1; b1 = p.b1; W2 = p.W2; b2 = p.b2;
            } else if (u >= static_cast<double>(L - 1)) {
                const auto& p = params->back();
                W1 = p.W1; b1 = p.b1; W2 = p.W2; b2 = p.b2;
            } else {
                const Index i = detail::interval_index(t, s, L - 1);
                const double w = u - static_cast<double>(i);
                const auto& pa = (*params)[static_cast<std::size_t>(i)];
                const auto& pb = (*params)[static_cast<std::size_t>(i + 1)];
                W1 = (1.0 - w) * pa.W1 + w * pb.W1;
                b1 = (1.0 - w) * pa.b1 + w * pb.b1;
                W2 = (1.0 - w) * pa.W2 + w * pb.W2;
                b2 = (1.0 - w) * pa.b2 + w * pb.b2;
            }
            return W2 * act.apply(Vector(W1 * x + b1)) + b2;
        };
    }
    return field;
}

// Terminal value problem for the transport equation: u(T, .) = f, velocity v.
// Solved by characteristics: u(0, x0) = f(q(T)) where q follows the
// characteristic ODE forward from q(0) = x0.
struct TransportProblem {
    VelocityField velocity;
    std::function<double(const Vector&)> terminal_value;
    double horizon = 0.0;
};

inline TransportProblem make_transport_problem(VelocityField velocity,
                                               std::function<double(const Vector&)> terminal) {
    const double T = velocity.horizon;
    return TransportProblem{std::move(velocity), std::move(terminal), T};
}

inline double solve_tvp(const TransportProblem& p, const Vector& x0, const TimeGrid& grid,
                        Stepper method) {
    grid.validate();
    const double slack = 1e-9 * std::max(1.0, std::abs(p.horizon));
    if (std::abs(grid.times.front()) > slack || std::abs(grid.times.back() - p.horizon) > slack)
        fail("domain.grid", "solve_tvp grid must span [0, " + std::to_string(p.horizon) + "]");
    const Trajectory tr = integrate(p.velocity, x0, grid, method);
    return p.terminal_value(tr.final_state());
}

}  // namespace flownet
