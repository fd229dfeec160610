#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "qch/errors.hpp"

namespace qch {

using Cx = std::complex<double>;
using Vector = Eigen::VectorXcd;
using Matrix = Eigen::MatrixXcd;

constexpr double kDefaultTol = 1e-9;

inline Matrix identity(Eigen::Index d) { return Matrix::Identity(d, d); }

inline Matrix dagger(const Matrix& a) { return a.adjoint(); }

inline Cx hs_inner(const Matrix& a, const Matrix& b) {
    // Hilbert-Schmidt inner product <a,b> = tr(a† b).
    return (a.adjoint() * b).trace();
}

inline Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

inline Vector kron(const Vector& a, const Vector& b) {
    Vector out(a.size() * b.size());
    for (Eigen::Index i = 0; i < a.size(); ++i)
        out.segment(i * b.size(), b.size()) = a(i) * b;
    return out;
}

// Row-major vectorization: vec(A)[(i,j)] = A(i,j) with flat index i*cols+j.
inline Vector vec_row(const Matrix& a) {
    Vector v(a.rows() * a.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) v(i * a.cols() + j) = a(i, j);
    return v;
}

inline Matrix unvec_row(const Vector& v, Eigen::Index rows, Eigen::Index cols) {
    if (v.size() != rows * cols)
        throw ShapeMismatch("unvec of length " + std::to_string(v.size()) + " into " +
                            std::to_string(rows) + "x" + std::to_string(cols));
    Matrix a(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) a(i, j) = v(i * cols + j);
    return a;
}

inline bool is_hermitian(const Matrix& a, double tol = kDefaultTol) {
    if (a.rows() != a.cols()) return false;
    return (a - a.adjoint()).cwiseAbs().maxCoeff() <= tol;
}

inline double min_eigenvalue(const Matrix& hermitian) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(hermitian, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

// Orthogonal projector onto the joint kernel of the given Hermitian operators,
// realized through the eigenspaces of sum C†C with |lambda| <= tol.
inline Matrix kernel_projector(const std::vector<Matrix>& ops, Eigen::Index dim,
                               double tol = kDefaultTol) {
    if (ops.empty()) return identity(dim);
    Matrix gram = Matrix::Zero(dim, dim);
    for (const Matrix& c : ops) {
        if (c.rows() != dim || c.cols() != dim)
            throw DimensionMismatch("constraint is " + std::to_string(c.rows()) + "x" +
                                    std::to_string(c.cols()) + ", space has dim " +
                                    std::to_string(dim));
        gram += c.adjoint() * c;
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(gram);
    double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    Matrix p = Matrix::Zero(dim, dim);
    for (Eigen::Index k = 0; k < dim; ++k) {
        if (std::abs(es.eigenvalues()(k)) <= tol * scale) {
            Vector v = es.eigenvectors().col(k);
            p += v * v.adjoint();
        }
    }
    return p;
}

// Partial trace over a subset of tensor factors. `dims` lists the factor
// dimensions in order; `keep` marks the factors that survive.
inline Matrix partial_trace(const Matrix& rho, const std::vector<Eigen::Index>& dims,
                            const std::vector<bool>& keep) {
    Eigen::Index total = 1;
    for (Eigen::Index d : dims) total *= d;
    if (rho.rows() != total || rho.cols() != total)
        throw DimensionMismatch("partial_trace: operator dim " + std::to_string(rho.rows()) +
                                " vs factor product " + std::to_string(total));
    if (keep.size() != dims.size())
        throw DimensionMismatch("partial_trace: keep mask length mismatch");

    Eigen::Index kept = 1, traced = 1;
    for (std::size_t f = 0; f < dims.size(); ++f) (keep[f] ? kept : traced) *= dims[f];

    // strides for (kept-index, traced-index) -> full flat index
    const std::size_t nf = dims.size();
    std::vector<Eigen::Index> stride(nf);
    Eigen::Index acc = 1;
    for (std::size_t f = nf; f-- > 0;) {
        stride[f] = acc;
        acc *= dims[f];
    }
    // kept/traced multi-indices decompose last factor first, matching the
    // row-major layout of the full index
    auto flat = [&](Eigen::Index ik, Eigen::Index it) {
        Eigen::Index idx = 0;
        for (std::size_t f = nf; f-- > 0;) {
            Eigen::Index d = dims[f];
            if (keep[f]) {
                idx += (ik % d) * stride[f];
                ik /= d;
            } else {
                idx += (it % d) * stride[f];
                it /= d;
            }
        }
        return idx;
    };
    Matrix out = Matrix::Zero(kept, kept);
    for (Eigen::Index i = 0; i < kept; ++i)
        for (Eigen::Index j = 0; j < kept; ++j) {
            Cx s = 0.0;
            for (Eigen::Index t = 0; t < traced; ++t) s += rho(flat(i, t), flat(j, t));
            out(i, j) = s;
        }
    return out;
}

// von Neumann entropy of a Hermitian PSD matrix; eigenvalues below `floor`
// contribute nothing. Natural log.
inline double von_neumann_entropy(const Matrix& rho, double floor = 1e-12) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(rho, Eigen::EigenvaluesOnly);
    double s = 0.0;
    for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k) {
        double lam = es.eigenvalues()(k);
        if (lam > floor) s -= lam * std::log(lam);
    }
    return s;
}

// Entanglement entropy across a bipartition of a pure state vector,
// amplitudes reshaped as (dim_left x dim_right). Utility for cut checks.
inline double cut_entropy(const Vector& psi, Eigen::Index dim_left, Eigen::Index dim_right) {
    Matrix m = unvec_row(psi, dim_left, dim_right);
    double n2 = m.squaredNorm();
    if (n2 <= 0.0) throw ZeroNormError("cut_entropy of a null vector");
    Eigen::JacobiSVD<Matrix> svd(m / std::sqrt(n2));
    double s = 0.0;
    for (Eigen::Index k = 0; k < svd.singularValues().size(); ++k) {
        double p = svd.singularValues()(k);
        p *= p;
        if (p > 1e-12) s -= p * std::log(p);
    }
    return s;
}

inline Eigen::Index schmidt_rank(const Vector& psi, Eigen::Index dim_left,
                                 Eigen::Index dim_right, double tol = kDefaultTol) {
    Matrix m = unvec_row(psi, dim_left, dim_right);
    Eigen::JacobiSVD<Matrix> svd(m);
    double scale = svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
    if (scale == 0.0) return 0;
    Eigen::Index r = 0;
    for (Eigen::Index k = 0; k < svd.singularValues().size(); ++k)
        if (svd.singularValues()(k) > tol * scale) ++r;
    return r;
}

// Dense rank-3 array with explicit (left, right, phys) dims. Row-major-style
// flat storage, last index fastest.
class Tensor3 {
public:
    Tensor3() : d0_(0), d1_(0), d2_(0) {}
    Tensor3(Eigen::Index d0, Eigen::Index d1, Eigen::Index d2)
        : d0_(d0), d1_(d1), d2_(d2), data_(static_cast<std::size_t>(d0 * d1 * d2), Cx(0, 0)) {}

    static Tensor3 delta(Eigen::Index d) {
        // identity projector coefficients: M[i][j][k] = delta_ij delta_jk
        Tensor3 t(d, d, d);
        for (Eigen::Index i = 0; i < d; ++i) t(i, i, i) = 1.0;
        return t;
    }

    Eigen::Index dim0() const { return d0_; }
    Eigen::Index dim1() const { return d1_; }
    Eigen::Index dim2() const { return d2_; }

    Cx& operator()(Eigen::Index i, Eigen::Index j, Eigen::Index k) {
        return data_[static_cast<std::size_t>((i * d1_ + j) * d2_ + k)];
    }
    Cx operator()(Eigen::Index i, Eigen::Index j, Eigen::Index k) const {
        return data_[static_cast<std::size_t>((i * d1_ + j) * d2_ + k)];
    }

    // slice with fixed physical index: (left x right) matrix
    Matrix phys_slice(Eigen::Index k) const {
        Matrix m(d0_, d1_);
        for (Eigen::Index i = 0; i < d0_; ++i)
            for (Eigen::Index j = 0; j < d1_; ++j) m(i, j) = (*this)(i, j, k);
        return m;
    }

    const std::vector<Cx>& data() const { return data_; }
    std::vector<Cx>& data() { return data_; }

private:
    Eigen::Index d0_, d1_, d2_;
    std::vector<Cx> data_;
};

// Rank-4 array (left, right, phys, rung) used by glued-network node tensors.
class Tensor4 {
public:
    Tensor4() : d0_(0), d1_(0), d2_(0), d3_(0) {}
    Tensor4(Eigen::Index d0, Eigen::Index d1, Eigen::Index d2, Eigen::Index d3)
        : d0_(d0), d1_(d1), d2_(d2), d3_(d3),
          data_(static_cast<std::size_t>(d0 * d1 * d2 * d3), Cx(0, 0)) {}

    // record-independent lift of a rank-3 tensor
    static Tensor4 extend(const Tensor3& v, Eigen::Index rung_dim) {
        Tensor4 t(v.dim0(), v.dim1(), v.dim2(), rung_dim);
        for (Eigen::Index i = 0; i < v.dim0(); ++i)
            for (Eigen::Index j = 0; j < v.dim1(); ++j)
                for (Eigen::Index k = 0; k < v.dim2(); ++k)
                    for (Eigen::Index l = 0; l < rung_dim; ++l) t(i, j, k, l) = v(i, j, k);
        return t;
    }

    Eigen::Index dim0() const { return d0_; }
    Eigen::Index dim1() const { return d1_; }
    Eigen::Index dim2() const { return d2_; }
    Eigen::Index dim3() const { return d3_; }

    Cx& operator()(Eigen::Index i, Eigen::Index j, Eigen::Index k, Eigen::Index l) {
        return data_[static_cast<std::size_t>(((i * d1_ + j) * d2_ + k) * d3_ + l)];
    }
    Cx operator()(Eigen::Index i, Eigen::Index j, Eigen::Index k, Eigen::Index l) const {
        return data_[static_cast<std::size_t>(((i * d1_ + j) * d2_ + k) * d3_ + l)];
    }

    Tensor3 rung_slice(Eigen::Index l) const {
        Tensor3 t(d0_, d1_, d2_);
        for (Eigen::Index i = 0; i < d0_; ++i)
            for (Eigen::Index j = 0; j < d1_; ++j)
                for (Eigen::Index k = 0; k < d2_; ++k) t(i, j, k) = (*this)(i, j, k, l);
        return t;
    }

    const std::vector<Cx>& data() const { return data_; }
    std::vector<Cx>& data() { return data_; }

private:
    Eigen::Index d0_, d1_, d2_, d3_;
    std::vector<Cx> data_;
};

}  // namespace qch
