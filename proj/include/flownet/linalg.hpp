#pragma once

#include <Eigen/Dense>
#include <string>

#include "flownet/error.hpp"

namespace flownet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline void require_finite(const Matrix& m, const std::string& what) {
    if (!m.allFinite()) fail("numeric.nonfinite", what + " contains NaN or Inf");
}

inline void require_finite(const Vector& v, const std::string& what) {
    if (!v.allFinite()) fail("numeric.nonfinite", what + " contains NaN or Inf");
}

inline void require_square(const Matrix& m, const std::string& what) {
    if (m.rows() != m.cols())
        fail("dim.mismatch", what + " must be square, got " + std::to_string(m.rows()) + "x" +
                                 std::to_string(m.cols()));
}

inline bool exactly_equal(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    for (Index j = 0; j < a.cols(); ++j)
        for (Index i = 0; i < a.rows(); ++i)
            if (a(i, j) != b(i, j)) return false;
    return true;
}

inline bool exactly_equal(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) return false;
    for (Index i = 0; i < a.size(); ++i)
        if (a(i) != b(i)) return false;
    return true;
}

}  // namespace flownet
