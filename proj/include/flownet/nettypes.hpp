#pragma once

#include <cmath>
#include <string>
#include <variant>
#include <vector>

#include "flownet/linalg.hpp"

namespace flownet {

enum class ActivationTag { relu, leaky_relu, tanh, identity };

// Componentwise, non-decreasing, Lipschitz activations. leaky_relu carries its
// negative-side slope (validated into (0,1)); for the kinked activations the
// derivative at 0 is resolved to the left limit (0 for relu, slope for leaky),
// which is the convention every Jacobian in this library uses.
struct ActivationKind {
    ActivationTag tag = ActivationTag::relu;
    double slope = 0.0;  // leaky_relu only

    static ActivationKind relu() { return {ActivationTag::relu, 0.0}; }
    static ActivationKind tanh() { return {ActivationTag::tanh, 0.0}; }
    static ActivationKind identity() { return {ActivationTag::identity, 0.0}; }
    static ActivationKind leaky_relu(double slope) {
        if (!(slope > 0.0 && slope < 1.0))
            fail("option.invalid",
                 "leaky_relu slope must lie in (0,1), got " + std::to_string(slope));
        return {ActivationTag::leaky_relu, slope};
    }

    double apply(double z) const {
        switch (tag) {
            case ActivationTag::relu: return z > 0.0 ? z : 0.0;
            case ActivationTag::leaky_relu: return z > 0.0 ? z : slope * z;
            case ActivationTag::tanh: return std::tanh(z);
            case ActivationTag::identity: return z;
        }
        return z;
    }

    double derivative(double z) const {
        switch (tag) {
            case ActivationTag::relu: return z > 0.0 ? 1.0 : 0.0;
            case ActivationTag::leaky_relu: return z > 0.0 ? 1.0 : slope;
            case ActivationTag::tanh: {
                const double t = std::tanh(z);
                return 1.0 - t * t;
            }
            case ActivationTag::identity: return 1.0;
        }
        return 1.0;
    }

    Vector apply(const Vector& z) const {
        Vector out(z.size());
        for (Index i = 0; i < z.size(); ++i) out(i) = apply(z(i));
        return out;
    }

    std::string name() const {
        switch (tag) {
            case ActivationTag::relu: return "relu";
            case ActivationTag::leaky_relu: return "leaky_relu";
            case ActivationTag::tanh: return "tanh";
            case ActivationTag::identity: return "identity";
        }
        return "?";
    }

    bool operator==(const ActivationKind&) const = default;
};

struct PlainLayer {
    Matrix W;  // d x d
    Vector b;  // d
    ActivationKind activation;
};

// Residual block x + W2 a(W1 x + b1) + b2. W2/b2 are stored pre-scaled: a
// block read off a velocity field at step size s holds s*W2(t_k), s*b2(t_k).
struct ResBlock2 {
    Matrix W1;
    Vector b1;
    Matrix W2;
    Vector b2;
    ActivationKind activation;
};

// Linear residual block x + W x + b.
struct ResBlock1 {
    Matrix W;
    Vector b;
};

// Non-residual affine map x -> M x + c.
struct LinearBlock {
    Matrix M;
    Vector c;
};

using Layer = std::variant<PlainLayer, ResBlock2, ResBlock1, LinearBlock>;

// Immutable container for both network families; transformations return new
// networks.
struct Network {
    Index dimension = 0;
    std::vector<Layer> layers;
};

inline Index layer_dimension(const Layer& layer) {
    return std::visit([](const auto& l) -> Index {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, PlainLayer>) return l.W.rows();
        else if constexpr (std::is_same_v<T, ResBlock2>) return l.W1.rows();
        else if constexpr (std::is_same_v<T, ResBlock1>) return l.W.rows();
        else return l.M.rows();
    }, layer);
}

namespace detail {

inline void check_layer(const Layer& layer, Index d, std::size_t index) {
    const std::string at = "layers[" + std::to_string(index) + "]";
    auto check = [&](const Matrix& m, const Vector& v, const char* mname, const char* vname) {
        require_square(m, at + "." + mname);
        if (m.rows() != d)
            fail("dim.mismatch", at + "." + mname + " is " + std::to_string(m.rows()) + "x" +
                                     std::to_string(m.cols()) + ", network dimension is " +
                                     std::to_string(d));
        if (v.size() != d)
            fail("dim.mismatch", at + "." + vname + " has length " + std::to_string(v.size()) +
                                     ", network dimension is " + std::to_string(d));
        require_finite(m, at + "." + mname);
        require_finite(v, at + "." + vname);
    };
    std::visit([&](const auto& l) {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, PlainLayer>) {
            check(l.W, l.b, "W", "b");
        } else if constexpr (std::is_same_v<T, ResBlock2>) {
            check(l.W1, l.b1, "W1", "b1");
            check(l.W2, l.b2, "W2", "b2");
        } else if constexpr (std::is_same_v<T, ResBlock1>) {
            check(l.W, l.b, "W", "b");
        } else {
            check(l.M, l.c, "M", "c");
        }
    }, layer);
}

// Row-sequential affine map. The fixed left-to-right summation order makes
// zero-padding exact: embedding a network in a higher dimension appends +0
// terms to each row sum, so the original coordinates are bit-identical.
inline Vector affine(const Matrix& W, const Vector& b, const Vector& x) {
    Vector y(W.rows());
    for (Index i = 0; i < W.rows(); ++i) {
        double s = b(i);
        for (Index j = 0; j < W.cols(); ++j) s += W(i, j) * x(j);
        y(i) = s;
    }
    return y;
}

}  // namespace detail

inline void validate_network(const Network& net) {
    if (net.dimension <= 0)
        fail("dim.mismatch", "network dimension must be positive, got " +
                                 std::to_string(net.dimension));
    if (net.layers.empty()) fail("dim.mismatch", "network has no layers");
    for (std::size_t i = 0; i < net.layers.size(); ++i)
        detail::check_layer(net.layers[i], net.dimension, i);
}

inline Network make_network(Index dimension, std::vector<Layer> layers) {
    Network net{dimension, std::move(layers)};
    validate_network(net);
    return net;
}

inline Vector eval_plain(const PlainLayer& layer, const Vector& x) {
    require_square(layer.W, "plain layer W");
    if (layer.b.size() != layer.W.rows() || x.size() != layer.W.cols())
        fail("dim.mismatch", "plain layer expects dimension " + std::to_string(layer.W.cols()) +
                                 ", input has " + std::to_string(x.size()));
    return layer.activation.apply(detail::affine(layer.W, layer.b, x));
}

inline Vector eval_layer(const Layer& layer, const Vector& x) {
    return std::visit([&](const auto& l) -> Vector {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, PlainLayer>) {
            return l.activation.apply(detail::affine(l.W, l.b, x));
        } else if constexpr (std::is_same_v<T, ResBlock2>) {
            const Vector inner = detail::affine(l.W1, l.b1, x);
            const Vector residual = detail::affine(l.W2, l.b2, l.activation.apply(inner));
            Vector y(x.size());
            for (Index i = 0; i < x.size(); ++i) y(i) = x(i) + residual(i);
            return y;
        } else if constexpr (std::is_same_v<T, ResBlock1>) {
            const Vector residual = detail::affine(l.W, l.b, x);
            Vector y(x.size());
            for (Index i = 0; i < x.size(); ++i) y(i) = x(i) + residual(i);
            return y;
        } else {
            return detail::affine(l.M, l.c, x);
        }
    }, layer);
}

inline Vector eval_network(const Network& net, const Vector& x) {
    if (x.size() != net.dimension)
        fail("dim.mismatch", "input has dimension " + std::to_string(x.size()) +
                                 ", network expects " + std::to_string(net.dimension));
    Vector state = x;
    for (const Layer& layer : net.layers) {
        if (layer_dimension(layer) != net.dimension)
            fail("dim.mismatch", "layer dimension " + std::to_string(layer_dimension(layer)) +
                                     " does not match network dimension " +
                                     std::to_string(net.dimension));
        state = eval_layer(layer, state);
    }
    return state;
}

namespace detail {

inline Matrix pad_matrix(const Matrix& m, Index d_new) {
    Matrix out = Matrix::Zero(d_new, d_new);
    out.topLeftCorner(m.rows(), m.cols()) = m;
    return out;
}

inline Vector pad_vector(const Vector& v, Index d_new) {
    Vector out = Vector::Zero(d_new);
    out.head(v.size()) = v;
    return out;
}

}  // namespace detail

// Zero-pad every layer to dimension d_new. Requires d_new >= d+1: the
// embedding exists precisely so padded weights are rank-deficient, which the
// linear decomposition needs.
inline Network embed_to_dimension(const Network& net, Index d_new) {
    validate_network(net);
    if (d_new <= net.dimension)
        fail("dim.invalid", "embed_to_dimension requires d_new >= d+1 (d=" +
                                std::to_string(net.dimension) + ", d_new=" +
                                std::to_string(d_new) + ")");
    Network out;
    out.dimension = d_new;
    out.layers.reserve(net.layers.size());
    for (const Layer& layer : net.layers) {
        out.layers.push_back(std::visit([&](const auto& l) -> Layer {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, PlainLayer>) {
                return PlainLayer{detail::pad_matrix(l.W, d_new), detail::pad_vector(l.b, d_new),
                                  l.activation};
            } else if constexpr (std::is_same_v<T, ResBlock2>) {
                return ResBlock2{detail::pad_matrix(l.W1, d_new), detail::pad_vector(l.b1, d_new),
                                 detail::pad_matrix(l.W2, d_new), detail::pad_vector(l.b2, d_new),
                                 l.activation};
            } else if constexpr (std::is_same_v<T, ResBlock1>) {
                return ResBlock1{detail::pad_matrix(l.W, d_new), detail::pad_vector(l.b, d_new)};
            } else {
                return LinearBlock{detail::pad_matrix(l.M, d_new), detail::pad_vector(l.c, d_new)};
            }
        }, layer));
    }
    return out;
}

inline bool structurally_equal(const Layer& a, const Layer& b) {
    if (a.index() != b.index()) return false;
    if (const auto* pa = std::get_if<PlainLayer>(&a)) {
        const auto& pb = std::get<PlainLayer>(b);
        return exactly_equal(pa->W, pb.W) && exactly_equal(pa->b, pb.b) &&
               pa->activation == pb.activation;
    }
    if (const auto* ra = std::get_if<ResBlock2>(&a)) {
        const auto& rb = std::get<ResBlock2>(b);
        return exactly_equal(ra->W1, rb.W1) && exactly_equal(ra->b1, rb.b1) &&
               exactly_equal(ra->W2, rb.W2) && exactly_equal(ra->b2, rb.b2) &&
               ra->activation == rb.activation;
    }
    if (const auto* ra = std::get_if<ResBlock1>(&a)) {
        const auto& rb = std::get<ResBlock1>(b);
        return exactly_equal(ra->W, rb.W) && exactly_equal(ra->b, rb.b);
    }
    const auto& la = std::get<LinearBlock>(a);
    const auto& lb = std::get<LinearBlock>(b);
    return exactly_equal(la.M, lb.M) && exactly_equal(la.c, lb.c);
}

inline bool structurally_equal(const Network& a, const Network& b) {
    if (a.dimension != b.dimension || a.layers.size() != b.layers.size()) return false;
    for (std::size_t i = 0; i < a.layers.size(); ++i)
        if (!structurally_equal(a.layers[i], b.layers[i])) return false;
    return true;
}

}  // namespace flownet
