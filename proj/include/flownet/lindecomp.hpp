#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>
#include <vector>

#include "flownet/linalg.hpp"

namespace flownet {

namespace detail {

// Diagonal Pade approximant r_m(A) = q_m(A)^{-1} p_m(A) to exp(A), degrees per
// Higham's scaling-and-squaring analysis. Callers must keep ||A||_1 under the
// matching theta threshold.
inline Matrix pade_approximant(const Matrix& A, int degree) {
    static const double b3[] = {120., 60., 12., 1.};
    static const double b5[] = {30240., 15120., 3360., 420., 30., 1.};
    static const double b7[] = {17297280., 8648640., 1995840., 277200., 25200., 1512., 56., 1.};
    static const double b9[] = {17643225600., 8821612800., 2075673600., 302702400., 30270240.,
                                2162160., 110880., 3960., 90., 1.};
    static const double b13[] = {64764752532480000., 32382376266240000., 7771770303897600.,
                                 1187353796428800., 129060195264000., 10559470521600.,
                                 670442572800., 33522128640., 1323241920., 40840800., 960960.,
                                 16380., 182., 1.};
    const Index d = A.rows();
    const Matrix I = Matrix::Identity(d, d);
    Matrix U, V;
    if (degree == 13) {
        const Matrix A2 = A * A;
        const Matrix A4 = A2 * A2;
        const Matrix A6 = A4 * A2;
        U = A * (A6 * (b13[13] * A6 + b13[11] * A4 + b13[9] * A2) + b13[7] * A6 + b13[5] * A4 +
                 b13[3] * A2 + b13[1] * I);
        V = A6 * (b13[12] * A6 + b13[10] * A4 + b13[8] * A2) + b13[6] * A6 + b13[4] * A4 +
            b13[2] * A2 + b13[0] * I;
    } else {
        const double* b = degree == 3 ? b3 : degree == 5 ? b5 : degree == 7 ? b7 : b9;
        const Matrix A2 = A * A;
        std::vector<Matrix> even{I};  // I, A^2, A^4, ...
        for (int k = 1; 2 * k <= degree - 1; ++k) even.push_back(even.back() * A2);
        Matrix sum_odd = Matrix::Zero(d, d);
        Matrix sum_even = Matrix::Zero(d, d);
        for (int k = 0; 2 * k + 1 <= degree; ++k) sum_odd += b[2 * k + 1] * even[k];
        for (int k = 0; 2 * k <= degree; ++k) sum_even += b[2 * k] * even[k];
        U = A * sum_odd;
        V = sum_even;
    }
    // p = V + U (even + odd), q = p(-A) = V - U.
    return (V - U).partialPivLu().solve(V + U);
}

}  // namespace detail

// Matrix exponential by scaling and squaring with diagonal Pade approximants.
// Relative accuracy ~1e-15 for well-scaled inputs; contractually <= 1e-12 for
// ||A|| <= 50.
inline Matrix expm(const Matrix& A) {
    require_square(A, "expm input");
    require_finite(A, "expm input");
    const Index d = A.rows();
    if (d == 0) return Matrix(0, 0);
    const double norm1 = A.cwiseAbs().colwise().sum().maxCoeff();
    if (norm1 <= 1.495585217958292e-2) return detail::pade_approximant(A, 3);
    if (norm1 <= 2.539398330063230e-1) return detail::pade_approximant(A, 5);
    if (norm1 <= 9.504178996162932e-1) return detail::pade_approximant(A, 7);
    if (norm1 <= 2.097847961257068e+0) return detail::pade_approximant(A, 9);
    const double theta13 = 5.371920351148152;
    int squarings = 0;
    Matrix scaled = A;
    if (norm1 > theta13) {
        squarings = static_cast<int>(std::ceil(std::log2(norm1 / theta13)));
        scaled *= std::ldexp(1.0, -squarings);  // exact power-of-two scaling
    }
    Matrix F = detail::pade_approximant(scaled, 13);
    for (int i = 0; i < squarings; ++i) F = F * F;
    return F;
}

// Principal real logarithm of a special-orthogonal matrix, returned exactly
// skew-symmetric. Computed from the real Schur form, whose 2x2 diagonal
// blocks are plane rotations: each contributes an angle atan2(s, c) in
// (-pi, pi]. Eigenvalue -1 can only occur with even multiplicity (det = +1);
// such 1x1 blocks are paired into pi-rotations.
inline Matrix rotation_log(const Matrix& Q) {
    require_square(Q, "rotation_log input");
    require_finite(Q, "rotation_log input");
    const Index d = Q.rows();
    const Matrix I = Matrix::Identity(d, d);
    const double ortho_defect = (Q.transpose() * Q - I).norm();
    if (ortho_defect > 1e-8)
        fail("linalg.not_orthogonal",
             "rotation_log input is not orthogonal (||Q^T Q - I||_F = " +
                 std::to_string(ortho_defect) + ")");
    if (Q.determinant() <= 0.0)
        fail("linalg.reflection", "rotation_log input has non-positive determinant");

    Eigen::RealSchur<Matrix> schur(Q);
    if (schur.info() != Eigen::Success) fail("numeric.schur", "real Schur decomposition failed");
    const Matrix& T = schur.matrixT();
    const Matrix& Z = schur.matrixU();

    Matrix G = Matrix::Zero(d, d);  // generator in the Schur basis
    std::vector<Index> minus_ones;
    Index i = 0;
    while (i < d) {
        if (i + 1 < d && T(i + 1, i) != 0.0) {
            const double c = 0.5 * (T(i, i) + T(i + 1, i + 1));
            const double s = 0.5 * (T(i + 1, i) - T(i, i + 1));
            const double angle = std::atan2(s, c);
            G(i, i + 1) = -angle;
            G(i + 1, i) = angle;
            i += 2;
        } else {
            if (T(i, i) < 0.0) minus_ones.push_back(i);
            ++i;
        }
    }
    if (minus_ones.size() % 2 != 0)
        fail("linalg.reflection",
             "orthogonal input has an odd count of -1 eigenvalues (a reflection)");
    for (std::size_t k = 0; k + 1 < minus_ones.size(); k += 2) {
        const Index p = minus_ones[k];
        const Index q = minus_ones[k + 1];
        G(p, q) = -std::numbers::pi;
        G(q, p) = std::numbers::pi;
    }
    Matrix A = Z * G * Z.transpose();
    // (x - y) == -(y - x) in IEEE arithmetic, so this symmetrization is skew
    // to the last bit, with exact zeros on the diagonal.
    return 0.5 * (A - A.transpose());
}

// W ~ exp(Phi) exp(Lambda + beta*Pi) exp(Psi). Lambda and Pi are diagonal and
// stored as their diagonals: Lambda holds log singular values on the leading
// rank positions, Pi holds -1 on the trailing d-rank positions.
struct LinearDecomposition {
    Matrix Phi;
    Matrix Psi;
    Vector Lambda;
    Vector Pi;
    double beta = 30.0;
    Index rank = 0;

    Vector stretch_generator() const { return Lambda + beta * Pi; }
};

inline LinearDecomposition decompose(const Matrix& W, double beta, double rank_tol = 1e-10) {
    require_square(W, "decompose input");
    require_finite(W, "decompose input");
    if (!(beta > 0.0)) fail("option.invalid", "beta must be positive");
    if (!(rank_tol >= 0.0)) fail("option.invalid", "rank tolerance must be nonnegative");
    const Index d = W.rows();
    if (d == 0) fail("dim.mismatch", "decompose input is empty");

    Eigen::JacobiSVD<Matrix> svd(W, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vector& sv = svd.singularValues();
    Matrix U = svd.matrixU();
    Matrix V = svd.matrixV();  // W = U * diag(sv) * V^T
    const double smax = sv(0);
    Index rank = 0;
    for (Index i = 0; i < d; ++i)
        if (sv(i) > rank_tol * smax && sv(i) > 0.0) ++rank;

    if (rank == d) {
        if (W.determinant() < 0.0)
            fail("decompose.reflection",
                 "W has full rank and negative determinant, so U and V cannot both be proper "
                 "rotations; embed the network into a higher dimension first "
                 "(embed_to_dimension) and retry");
        // det(U)*det(V) = sign(det W) = +1 here; if both are -1, flipping the
        // same trailing column of U and V leaves U S V^T unchanged.
        if (U.determinant() < 0.0) {
            U.col(d - 1) *= -1.0;
            V.col(d - 1) *= -1.0;
        }
    } else {
        // Null-space columns (indices >= rank) multiply zero singular values,
        // so each sign flip is free.
        if (U.determinant() < 0.0) U.col(d - 1) *= -1.0;
        if (V.determinant() < 0.0) V.col(d - 1) *= -1.0;
    }

    LinearDecomposition dec;
    dec.beta = beta;
    dec.rank = rank;
    dec.Lambda = Vector::Zero(d);
    dec.Pi = Vector::Zero(d);
    for (Index i = 0; i < d; ++i) {
        if (i < rank) dec.Lambda(i) = std::log(sv(i));
        else dec.Pi(i) = -1.0;
    }
    dec.Phi = rotation_log(U);
    dec.Psi = rotation_log(V.transpose());
    return dec;
}

inline Matrix reconstruct(const LinearDecomposition& dec) {
    const Matrix S = expm(Matrix(dec.stretch_generator().asDiagonal()));
    return expm(dec.Phi) * S * expm(dec.Psi);
}

}  // namespace flownet
