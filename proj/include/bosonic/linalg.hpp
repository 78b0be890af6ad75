#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "bosonic/errors.hpp"

namespace bosonic {

using cplx = std::complex<double>;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using RVec = Eigen::VectorXd;
using RMat = Eigen::MatrixXd;

inline constexpr double kPi = std::numbers::pi;

// Pivot-free LDL^T of a complex *symmetric* matrix (A = A^T, not Hermitian).
// Well defined whenever Re(A) is positive definite, which every covariance here satisfies.
class SymLDLT {
public:
    explicit SymLDLT(const CMat& a) : L_(CMat::Identity(a.rows(), a.cols())), d_(a.rows()) {
        if (a.rows() != a.cols()) throw DimensionMismatch("LDLT of non-square matrix");
        const Eigen::Index n = a.rows();
        const double scale = std::max(a.cwiseAbs().maxCoeff(), 1e-300);
        for (Eigen::Index j = 0; j < n; ++j) {
            cplx dj = a(j, j);
            for (Eigen::Index k = 0; k < j; ++k) dj -= L_(j, k) * L_(j, k) * d_(k);
            if (std::abs(dj) <= 1e-14 * scale) throw SingularCovariance("zero pivot in LDL^T");
            d_(j) = dj;
            for (Eigen::Index i = j + 1; i < n; ++i) {
                cplx v = a(i, j);
                for (Eigen::Index k = 0; k < j; ++k) v -= L_(i, k) * L_(j, k) * d_(k);
                L_(i, j) = v / dj;
            }
        }
    }

    CMat solve(const CMat& b) const {
        CMat y = L_.triangularView<Eigen::UnitLower>().solve(b);
        for (Eigen::Index i = 0; i < y.rows(); ++i) y.row(i) /= d_(i);
        return L_.transpose().triangularView<Eigen::UnitUpper>().solve(y);
    }
    CVec solve(const CVec& b) const { return solve(CMat(b)).col(0); }
    CMat inverse() const { return solve(CMat(CMat::Identity(L_.rows(), L_.cols()))); }

    // log sqrt(det(2 pi A)), principal branch taken factor by factor.
    cplx log_sqrt_det_2pi() const {
        cplx s = 0.0;
        for (Eigen::Index i = 0; i < d_.size(); ++i) s += std::log(std::sqrt(2.0 * kPi * d_(i)));
        return s;
    }
    const CVec& diag() const { return d_; }

private:
    CMat L_;
    CVec d_;
};

inline RMat omega(int modes) {
    RMat w = RMat::Zero(2 * modes, 2 * modes);
    for (int i = 0; i < modes; ++i) {
        w(2 * i, 2 * i + 1) = 1.0;
        w(2 * i + 1, 2 * i) = -1.0;
    }
    return w;
}

inline bool is_real(const CMat& m, double tol = 1e-13) {
    return m.imag().cwiseAbs().maxCoeff() <= tol * std::max(1.0, m.real().cwiseAbs().maxCoeff());
}

// Indices of quadratures (q,p pairs) belonging to the listed modes.
inline std::vector<int> quad_indices(const std::vector<int>& modes) {
    std::vector<int> idx;
    idx.reserve(2 * modes.size());
    for (int m : modes) {
        idx.push_back(2 * m);
        idx.push_back(2 * m + 1);
    }
    return idx;
}

template <class Mat>
Mat select(const Mat& m, const std::vector<int>& rows, const std::vector<int>& cols) {
    Mat out(rows.size(), cols.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = m(rows[i], cols[j]);
    return out;
}

template <class Vec>
Vec select(const Vec& v, const std::vector<int>& rows) {
    Vec out(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) out(i) = v(rows[i]);
    return out;
}

}  // namespace bosonic
