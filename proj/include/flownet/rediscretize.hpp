#pragma once

#include <string>
#include <vector>

#include "flownet/actflow.hpp"
#include "flownet/lindecomp.hpp"
#include "flownet/nettypes.hpp"
#include "flownet/timescale.hpp"

namespace flownet {

enum class LinearMode { whole_map, resnet_blocks };
enum class ActivationMode { auto_select, exact_velocity, relu_closed_form, linearized_2layer };

inline LinearMode parse_linear_mode(const std::string& name) {
    if (name == "whole" || name == "whole_map") return LinearMode::whole_map;
    if (name == "blocks" || name == "resnet_blocks") return LinearMode::resnet_blocks;
    fail("option.invalid", "unknown linear mode \"" + name + "\" (expected whole or blocks)");
}

inline ActivationMode parse_activation_mode(const std::string& name) {
    if (name == "auto") return ActivationMode::auto_select;
    if (name == "exact" || name == "exact_velocity") return ActivationMode::exact_velocity;
    if (name == "relu" || name == "relu_closed_form") return ActivationMode::relu_closed_form;
    if (name == "linearized" || name == "linearized_2layer") return ActivationMode::linearized_2layer;
    fail("option.invalid",
         "unknown activation mode \"" + name + "\" (expected auto, exact, relu or linearized)");
}

struct RediscretizationOptions {
    std::size_t blocks_per_segment = 32;  // l; alpha = 1/l on the linear segments
    LinearMode linear_mode = LinearMode::whole_map;
    // auto_select: relu_closed_form for relu layers, linearized_2layer otherwise.
    ActivationMode activation_mode = ActivationMode::auto_select;
    double eps_act = 0.05;
    double beta = 30.0;
    TimeScale ts{};
    // Geometric (shrinking toward tau = 1 - eps_act) activation grid instead
    // of uniform; off by default to match the uniform partition everywhere else.
    bool tail_refine = false;

    void validate() const {
        if (blocks_per_segment < 1) fail("option.invalid", "blocks per segment must be >= 1");
        if (!(eps_act > 0.0 && eps_act < 0.5))
            fail("option.invalid", "eps_act must lie in (0, 0.5), got " + std::to_string(eps_act));
        if (!(beta > 0.0)) fail("option.invalid", "beta must be positive");
    }
};

// Nodes tau_0 = 0 < ... < tau_l = 1 - eps_act of the truncated activation
// grid. Uniform, or geometric with ratio 0.85 so steps shrink toward the
// stiff end.
inline std::vector<double> activation_grid(std::size_t l, double eps_act, bool tail_refine) {
    const double span = 1.0 - eps_act;
    std::vector<double> tau(l + 1);
    tau[0] = 0.0;
    if (!tail_refine) {
        for (std::size_t r = 1; r < l; ++r)
            tau[r] = span * static_cast<double>(r) / static_cast<double>(l);
    } else {
        const double q = 0.85;
        double total = 0.0, w = 1.0;
        for (std::size_t r = 0; r < l; ++r, w *= q) total += w;
        double acc = 0.0;
        w = 1.0;
        for (std::size_t r = 1; r < l; ++r) {
            acc += w / total;
            w *= q;
            tau[r] = span * acc;
        }
    }
    tau[l] = span;
    return tau;
}

// l linear residual blocks y -> y + alpha h_dot(tau_r) G y realizing one unit
// of a linear flow segment with generator G; left endpoints tau_r = r/l, so
// the first block is always the identity (h_dot(0) = 0).
inline std::vector<ResBlock1> linear_flow_blocks(const Matrix& generator, std::size_t l,
                                                 const TimeScale& ts) {
    require_square(generator, "linear_flow_blocks generator");
    require_finite(generator, "linear_flow_blocks generator");
    if (l < 1) fail("option.invalid", "blocks per segment must be >= 1");
    const Index d = generator.rows();
    const double alpha = 1.0 / static_cast<double>(l);
    std::vector<ResBlock1> blocks;
    blocks.reserve(l);
    for (std::size_t r = 0; r < l; ++r) {
        const double tau = static_cast<double>(r) * alpha;
        blocks.push_back({Matrix(alpha * ts.h_dot(tau) * generator), Vector::Zero(d)});
    }
    return blocks;
}

// The translation segment's blocks: y -> y + alpha h_dot(tau_r) b.
inline std::vector<ResBlock1> translation_flow_blocks(const Vector& b, std::size_t l,
                                                      const TimeScale& ts) {
    require_finite(b, "translation_flow_blocks shift");
    if (l < 1) fail("option.invalid", "blocks per segment must be >= 1");
    const Index d = b.size();
    const double alpha = 1.0 / static_cast<double>(l);
    std::vector<ResBlock1> blocks;
    blocks.reserve(l);
    for (std::size_t r = 0; r < l; ++r) {
        const double tau = static_cast<double>(r) * alpha;
        blocks.push_back({Matrix::Zero(d, d), Vector(alpha * ts.h_dot(tau) * b)});
    }
    return blocks;
}

// Euler blocks for the relu activation flow on the truncated grid: each block
// is y -> y + relu(w_r y) with scalar weight w_r = alpha_r h_dot(tau_r) /
// (h(tau_r) - 1). The map is nonlinear (relu applied in-block), hence emitted
// as 2-layer blocks with W2 = I; relu's positive homogeneity folds the step
// size into the inner weight.
inline std::vector<ResBlock2> relu_flow_blocks(Index d, std::size_t l, const TimeScale& ts,
                                               double eps_act, bool tail_refine = false) {
    if (l < 1) fail("option.invalid", "blocks per segment must be >= 1");
    if (!(eps_act > 0.0 && eps_act < 0.5)) fail("option.invalid", "eps_act must lie in (0, 0.5)");
    const std::vector<double> tau = activation_grid(l, eps_act, tail_refine);
    const Matrix I = Matrix::Identity(d, d);
    const Vector zero = Vector::Zero(d);
    std::vector<ResBlock2> blocks;
    blocks.reserve(l);
    for (std::size_t r = 0; r < l; ++r) {
        const double alpha = tau[r + 1] - tau[r];
        const double w = alpha * ts.h_dot(tau[r]) / (ts.h(tau[r]) - 1.0);
        blocks.push_back({Matrix(w * I), zero, I, zero, ActivationKind::relu()});
    }
    return blocks;
}

// One Euler step of the activation flow linearized at the anchor z_k:
// y -> M y + alpha h_dot(tau_r) (a(W1 y + b1) - b1), all diagonal data stored
// as vectors. M = I - alpha h_dot W1 is stored directly so tau_r with
// h_dot = 0 never touches an inverse; Wbar2/bbar2 (= alpha W2_r, alpha b2_r)
// feed the res2 + linear network emission.
struct LinearizedActivationBlock {
    Vector W1;     // diagonal of J^{-1}(tau_r, z_k)
    Vector b1;     // z_k - J^{-1} phi(tau_r, z_k)
    Vector M;      // diagonal of I - alpha h_dot(tau_r) W1
    Vector Wbar2;  // diagonal of alpha h_dot(tau_r) M^{-1} (zero when h_dot = 0)
    Vector bbar2;  // -Wbar2 .* b1
    double alpha_hdot = 0.0;

    Vector apply(const Vector& y, const ActivationKind& a) const {
        Vector out(y.size());
        for (Index i = 0; i < y.size(); ++i)
            out(i) = M(i) * y(i) + alpha_hdot * (a.apply(W1(i) * y(i) + b1(i)) - b1(i));
        return out;
    }
};

inline std::vector<LinearizedActivationBlock> linearized_activation_blocks(
    const Vector& z_anchor, const ActivationFlow& af, const RediscretizationOptions& opts) {
    opts.validate();
    require_finite(z_anchor, "linearization anchor");
    const Index d = z_anchor.size();
    const std::vector<double> tau =
        activation_grid(opts.blocks_per_segment, opts.eps_act, opts.tail_refine);
    std::vector<LinearizedActivationBlock> blocks;
    blocks.reserve(opts.blocks_per_segment);
    for (std::size_t r = 0; r < opts.blocks_per_segment; ++r) {
        const double t = tau[r];
        const double alpha = tau[r + 1] - tau[r];
        const double hd = af.ts.h_dot(t);
        LinearizedActivationBlock blk;
        blk.W1 = af.jacobian_inv(t, z_anchor);
        blk.b1 = z_anchor - blk.W1.cwiseProduct(af.phi(t, z_anchor));
        blk.alpha_hdot = alpha * hd;
        blk.M = Vector::Ones(d) - blk.alpha_hdot * blk.W1;
        if (hd != 0.0) {
            for (Index i = 0; i < d; ++i)
                if (std::abs(blk.M(i)) <= 1e-12)
                    fail("rediscretize.singular",
                         "linearized block map is singular at tau=" + std::to_string(t) +
                             " (component " + std::to_string(i) +
                             "); increase blocks per segment or eps_act");
            blk.Wbar2 = blk.alpha_hdot * blk.M.cwiseInverse();
        } else {
            blk.Wbar2 = Vector::Zero(d);
        }
        blk.bbar2 = -blk.Wbar2.cwiseProduct(blk.b1);
        blocks.push_back(std::move(blk));
    }
    return blocks;
}

namespace detail {

inline void emit_linearized(std::vector<Layer>& out, const Vector& z_anchor,
                            const ActivationKind& act, const RediscretizationOptions& opts) {
    const ActivationFlow af{act, opts.ts};
    const Index d = z_anchor.size();
    for (const LinearizedActivationBlock& blk : linearized_activation_blocks(z_anchor, af, opts)) {
        out.push_back(ResBlock2{Matrix(blk.W1.asDiagonal()), blk.b1,
                                Matrix(blk.Wbar2.asDiagonal()), blk.bbar2, act});
        out.push_back(LinearBlock{Matrix(blk.M.asDiagonal()), Vector::Zero(d)});
    }
}

// Euler blocks for the exact activation velocity; possible only when the flow
// inverse has a closed form the block algebra can express.
inline void emit_exact_velocity(std::vector<Layer>& out, Index d, const ActivationKind& act,
                                const RediscretizationOptions& opts) {
    switch (act.tag) {
        case ActivationTag::identity:
            return;  // velocity is identically zero
        case ActivationTag::relu: {
            for (ResBlock2& blk :
                 relu_flow_blocks(d, opts.blocks_per_segment, opts.ts, opts.eps_act,
                                  opts.tail_refine))
                out.push_back(std::move(blk));
            return;
        }
        case ActivationTag::leaky_relu: {
            // v = h_dot (slope-1)/c0 min(y,0) with c0 = (1-h) + h slope. On
            // the negative side relu(-y) = -y, so alpha*v = W2 relu(-y) needs
            // W2 = alpha h_dot (1-slope)/c0 (positive).
            const std::vector<double> tau =
                activation_grid(opts.blocks_per_segment, opts.eps_act, opts.tail_refine);
            const Matrix I = Matrix::Identity(d, d);
            const Vector zero = Vector::Zero(d);
            for (std::size_t r = 0; r < opts.blocks_per_segment; ++r) {
                const double alpha = tau[r + 1] - tau[r];
                const double hv = opts.ts.h(tau[r]);
                const double c0 = (1.0 - hv) + hv * act.slope;
                const double k = alpha * opts.ts.h_dot(tau[r]) * (1.0 - act.slope) / c0;
                out.push_back(ResBlock2{Matrix(-I), zero, Matrix(k * I), zero,
                                        ActivationKind::relu()});
            }
            return;
        }
        case ActivationTag::tanh:
            fail("option.invalid",
                 "activation_mode exact_velocity needs a closed-form flow inverse (relu, "
                 "leaky_relu, identity); use linearized_2layer for tanh");
    }
}

}  // namespace detail

// Replace each plain layer by explicit ResNet blocks: the linear part as one
// exact affine map (whole_map) or 4*l linear residual blocks (resnet_blocks),
// the activation as Euler blocks of its flow. The probe input supplies the
// linearization anchors z_k = W_k x_{k-1} + b_k along the exact plain-net
// trajectory; accuracy of linearized blocks degrades away from that
// trajectory.
inline Network rediscretize_network(const Network& net, const RediscretizationOptions& opts,
                                    const Vector& probe) {
    validate_network(net);
    opts.validate();
    if (probe.size() != net.dimension)
        fail("dim.mismatch", "probe has dimension " + std::to_string(probe.size()) +
                                 ", network expects " + std::to_string(net.dimension));
    const Index d = net.dimension;
    const std::size_t l = opts.blocks_per_segment;
    std::vector<Layer> out;
    Vector x = probe;
    for (const Layer& layer : net.layers) {
        const auto* plain = std::get_if<PlainLayer>(&layer);
        if (!plain)
            fail("option.invalid", "rediscretize_network requires a network of plain layers");
        const Vector z_anchor = detail::affine(plain->W, plain->b, x);

        if (opts.linear_mode == LinearMode::whole_map) {
            out.push_back(LinearBlock{plain->W, plain->b});
        } else {
            const LinearDecomposition dec = decompose(plain->W, opts.beta);
            for (ResBlock1& blk : linear_flow_blocks(dec.Psi, l, opts.ts))
                out.push_back(std::move(blk));
            for (ResBlock1& blk :
                 linear_flow_blocks(Matrix(dec.stretch_generator().asDiagonal()), l, opts.ts))
                out.push_back(std::move(blk));
            for (ResBlock1& blk : linear_flow_blocks(dec.Phi, l, opts.ts))
                out.push_back(std::move(blk));
            for (ResBlock1& blk : translation_flow_blocks(plain->b, l, opts.ts))
                out.push_back(std::move(blk));
        }

        ActivationMode mode = opts.activation_mode;
        if (mode == ActivationMode::auto_select)
            mode = plain->activation.tag == ActivationTag::relu ? ActivationMode::relu_closed_form
                                                                : ActivationMode::linearized_2layer;
        switch (mode) {
            case ActivationMode::relu_closed_form:
                if (plain->activation.tag != ActivationTag::relu)
                    fail("option.invalid", "relu_closed_form requires relu activation, layer has " +
                                               plain->activation.name());
                for (ResBlock2& blk :
                     relu_flow_blocks(d, l, opts.ts, opts.eps_act, opts.tail_refine))
                    out.push_back(std::move(blk));
                break;
            case ActivationMode::exact_velocity:
                detail::emit_exact_velocity(out, d, plain->activation, opts);
                break;
            case ActivationMode::linearized_2layer:
                detail::emit_linearized(out, z_anchor, plain->activation, opts);
                break;
            case ActivationMode::auto_select:
                break;  // unreachable
        }
        x = plain->activation.apply(z_anchor);
    }
    return make_network(d, std::move(out));
}

}  // namespace flownet
