#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "qch/errors.hpp"
#include "qch/linalg.hpp"

// Finite-dimensional states and CPTP channels with channel-state duality.
//
// Conventions used throughout (and by every file format):
//   * Choi index order is (input ⊗ output): flat index (i,a) = i*dim_out + a.
//     choi(φ) = Σ_ij e_ij ⊗ φ(e_ij), built on the *unnormalized* reference
//     pair Σ_i |i⟩⊗|i⟩, so tr choi = dim_in for every trace-preserving map.
//   * The fixed basis is the computational basis. `vector_evolution_operator`
//     exposes the φ̌† action on kets for single-Kraus (rank-1 Choi) channels.

namespace qch {

struct StateVector {
    Vector amplitudes;
    bool normalized = false;

    Eigen::Index dim() const { return amplitudes.size(); }
    double norm() const { return amplitudes.norm(); }
    StateVector normalize() const {
        double n = norm();
        if (n <= 0.0) throw ZeroNormError("normalizing a null state");
        return StateVector{amplitudes / n, true};
    }
};

struct DensityMatrix {
    Matrix matrix;
    bool normalized = true;

    Eigen::Index dim() const { return matrix.rows(); }
    static DensityMatrix pure(const Vector& psi) {
        return DensityMatrix{psi * psi.adjoint(), std::abs(psi.squaredNorm() - 1.0) < 1e-12};
    }
};

inline void check_density(const DensityMatrix& rho, double tol = kDefaultTol) {
    if (rho.matrix.rows() != rho.matrix.cols())
        throw DimensionMismatch("density matrix is not square");
    if (!is_hermitian(rho.matrix, tol)) throw NonHermitianError("density matrix");
    if (min_eigenvalue(rho.matrix) < -tol)
        throw Error(ErrorCategory::numeric, "density matrix is not PSD");
    if (rho.normalized && std::abs(rho.matrix.trace().real() - 1.0) > tol)
        throw Error(ErrorCategory::numeric, "density matrix trace != 1");
}

struct KrausChannel {
    Eigen::Index dim_in = 0;
    Eigen::Index dim_out = 0;
    std::vector<Matrix> kraus;

    static KrausChannel identity_channel(Eigen::Index d) {
        return KrausChannel{d, d, {identity(d)}};
    }
    static KrausChannel unitary(const Matrix& u) {
        return KrausChannel{u.cols(), u.rows(), {u}};
    }
    // Kraus set {e_ij/sqrt(d)}: sends every state to 1/d
    static KrausChannel depolarizing(Eigen::Index d) {
        KrausChannel ch{d, d, {}};
        double s = 1.0 / std::sqrt(static_cast<double>(d));
        for (Eigen::Index i = 0; i < d; ++i)
            for (Eigen::Index j = 0; j < d; ++j) {
                Matrix k = Matrix::Zero(d, d);
                k(i, j) = s;
                ch.kraus.push_back(k);
            }
        return ch;
    }
};

struct ChoiMatrix {
    Eigen::Index dim_in = 0;
    Eigen::Index dim_out = 0;
    Matrix matrix;  // (dim_in*dim_out) square, index order (input ⊗ output)
};

inline void check_channel_shapes(const KrausChannel& ch) {
    if (ch.kraus.empty()) throw ShapeMismatch("channel has no Kraus operators");
    for (std::size_t k = 0; k < ch.kraus.size(); ++k)
        if (ch.kraus[k].rows() != ch.dim_out || ch.kraus[k].cols() != ch.dim_in)
            throw ShapeMismatch("Kraus operator " + std::to_string(k) + " is " +
                                std::to_string(ch.kraus[k].rows()) + "x" +
                                std::to_string(ch.kraus[k].cols()) + ", expected " +
                                std::to_string(ch.dim_out) + "x" + std::to_string(ch.dim_in));
}

inline DensityMatrix apply_channel(const KrausChannel& ch, const DensityMatrix& rho) {
    check_channel_shapes(ch);
    if (rho.dim() != ch.dim_in)
        throw DimensionMismatch("channel expects dim " + std::to_string(ch.dim_in) +
                                ", state has dim " + std::to_string(rho.dim()));
    Matrix out = Matrix::Zero(ch.dim_out, ch.dim_out);
    for (const Matrix& k : ch.kraus) out += k * rho.matrix * k.adjoint();
    return DensityMatrix{out, rho.normalized};
}

inline Matrix apply_channel_raw(const KrausChannel& ch, const Matrix& a) {
    Matrix out = Matrix::Zero(ch.dim_out, ch.dim_out);
    for (const Matrix& k : ch.kraus) out += k * a * k.adjoint();
    return out;
}

inline ChoiMatrix choi_of_channel(const KrausChannel& ch) {
    check_channel_shapes(ch);
    const Eigen::Index din = ch.dim_in, dout = ch.dim_out;
    Matrix c = Matrix::Zero(din * dout, din * dout);
    for (const Matrix& k : ch.kraus) {
        Vector v(din * dout);  // v[(i,a)] = K(a,i): vectorized Σ_i |i⟩⊗K|i⟩
        for (Eigen::Index i = 0; i < din; ++i)
            for (Eigen::Index a = 0; a < dout; ++a) v(i * dout + a) = k(a, i);
        c += v * v.adjoint();
    }
    return ChoiMatrix{din, dout, std::move(c)};
}

struct CptpReport {
    bool cp = false;
    bool tp = false;
    double max_violation = 0.0;
};

inline CptpReport verify_cptp(const KrausChannel& ch, double tol = kDefaultTol) {
    check_channel_shapes(ch);
    CptpReport rep;
    double min_eig = min_eigenvalue(choi_of_channel(ch).matrix);
    rep.cp = min_eig >= -tol;  // true by construction up to roundoff
    Matrix acc = Matrix::Zero(ch.dim_in, ch.dim_in);
    for (const Matrix& k : ch.kraus) acc += k.adjoint() * k;
    double tp_violation = (acc - identity(ch.dim_in)).cwiseAbs().maxCoeff();
    rep.tp = tp_violation <= tol;
    rep.max_violation = std::max(tp_violation, std::max(0.0, -min_eig));
    return rep;
}

inline CptpReport verify_cptp(const ChoiMatrix& choi, double tol = kDefaultTol) {
    if (choi.matrix.rows() != choi.dim_in * choi.dim_out || choi.matrix.rows() != choi.matrix.cols())
        throw ShapeMismatch("Choi matrix dims");
    CptpReport rep;
    double min_eig = min_eigenvalue(choi.matrix);
    rep.cp = min_eig >= -tol;
    // TP: partial trace over the output factor must be the input identity
    std::vector<Eigen::Index> dims{choi.dim_in, choi.dim_out};
    Matrix in_marginal = partial_trace(choi.matrix, dims, {true, false});
    double tp_violation = (in_marginal - identity(choi.dim_in)).cwiseAbs().maxCoeff();
    rep.tp = tp_violation <= tol;
    rep.max_violation = std::max(tp_violation, std::max(0.0, -min_eig));
    return rep;
}

// Kraus extraction by eigendecomposition; eigenvalues below tol are dropped,
// so the reported rank depends on the tolerance.
inline KrausChannel channel_of_choi(const ChoiMatrix& choi, double tol = kDefaultTol) {
    if (choi.matrix.rows() != choi.dim_in * choi.dim_out)
        throw ShapeMismatch("Choi matrix dims");
    if (!is_hermitian(choi.matrix, std::sqrt(tol)))
        throw NotCompletelyPositive("Choi matrix is not Hermitian");
    Eigen::SelfAdjointEigenSolver<Matrix> es(choi.matrix);
    double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    if (es.eigenvalues().minCoeff() < -tol * scale)
        throw NotCompletelyPositive("Choi matrix has eigenvalue " +
                                    std::to_string(es.eigenvalues().minCoeff()));
    KrausChannel ch{choi.dim_in, choi.dim_out, {}};
    for (Eigen::Index r = 0; r < es.eigenvalues().size(); ++r) {
        double lam = es.eigenvalues()(r);
        if (lam <= tol * scale) continue;
        Vector v = std::sqrt(lam) * es.eigenvectors().col(r);
        Matrix k(choi.dim_out, choi.dim_in);
        for (Eigen::Index i = 0; i < choi.dim_in; ++i)
            for (Eigen::Index a = 0; a < choi.dim_out; ++a) k(a, i) = v(i * choi.dim_out + a);
        ch.kraus.push_back(std::move(k));
    }
    if (ch.kraus.empty()) ch.kraus.push_back(Matrix::Zero(choi.dim_out, choi.dim_in));
    return ch;
}

inline Eigen::Index choi_rank(const ChoiMatrix& choi, double tol = kDefaultTol) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(choi.matrix, Eigen::EigenvaluesOnly);
    double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    Eigen::Index r = 0;
    for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k)
        if (es.eigenvalues()(k) > tol * scale) ++r;
    return r;
}

// ch2 ∘ ch1 with Kraus set {K2 K1}.
inline KrausChannel compose_channels(const KrausChannel& ch2, const KrausChannel& ch1) {
    check_channel_shapes(ch1);
    check_channel_shapes(ch2);
    if (ch1.dim_out != ch2.dim_in)
        throw DimensionMismatch("compose: " + std::to_string(ch1.dim_out) + " -> " +
                                std::to_string(ch2.dim_in));
    KrausChannel out{ch1.dim_in, ch2.dim_out, {}};
    for (const Matrix& k2 : ch2.kraus)
        for (const Matrix& k1 : ch1.kraus) out.kraus.push_back(k2 * k1);
    return out;
}

// Global-phase canonicalization: the first row-major entry with modulus at
// least half the maximum is made real positive. Channels determine their
// Kraus operator only up to a phase, so every operator recovered from a Choi
// state is reported in this form. The half-max rule keeps the pivot stable
// under roundoff even when several entries share the maximal modulus
// (unitaries always tie).
inline Matrix canonical_phase(Matrix a) {
    double peak = a.cwiseAbs().maxCoeff();
    if (peak <= 0.0) return a;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            if (std::abs(a(i, j)) >= 0.5 * peak) {
                Cx pivot = a(i, j);
                a *= std::abs(pivot) / pivot;
                return a;
            }
        }
    return a;
}

// The φ̌† action on state vectors. Well-defined when the Choi matrix has rank
// one (single Kraus operator up to equivalence); for higher rank the caller
// must opt into the principal-component reading.
inline Matrix vector_evolution_operator(const KrausChannel& ch, double tol = kDefaultTol,
                                        bool allow_principal = false) {
    ChoiMatrix choi = choi_of_channel(ch);
    Eigen::SelfAdjointEigenSolver<Matrix> es(choi.matrix);
    double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    Eigen::Index rank = 0;
    for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k)
        if (es.eigenvalues()(k) > tol * scale) ++rank;
    if (rank > 1 && !allow_principal)
        throw NotCompletelyPositive(
            "vector evolution needs a rank-1 Choi state (channel has rank " +
            std::to_string(rank) + ")");
    Eigen::Index top = es.eigenvalues().size() - 1;
    Vector v = std::sqrt(std::max(0.0, es.eigenvalues()(top))) * es.eigenvectors().col(top);
    Matrix a(ch.dim_out, ch.dim_in);  // v[(i,o)] = A(o,i)
    for (Eigen::Index i = 0; i < ch.dim_in; ++i)
        for (Eigen::Index o = 0; o < ch.dim_out; ++o) a(o, i) = v(i * ch.dim_out + o);
    return canonical_phase(std::move(a));
}

// Re-express a channel in user-supplied orthonormal bases (columns of b_in /
// b_out are the new basis kets). The duality itself always works on the fixed
// computational basis; this is the hook for sites that carry their own frame.
inline KrausChannel rebase_channel(const KrausChannel& ch, const Matrix& b_in,
                                   const Matrix& b_out, double tol = kDefaultTol) {
    check_channel_shapes(ch);
    if (b_in.rows() != ch.dim_in || b_in.cols() != ch.dim_in || b_out.rows() != ch.dim_out ||
        b_out.cols() != ch.dim_out)
        throw DimensionMismatch("basis matrices must be square on the channel dims");
    if ((b_in.adjoint() * b_in - identity(ch.dim_in)).cwiseAbs().maxCoeff() > tol ||
        (b_out.adjoint() * b_out - identity(ch.dim_out)).cwiseAbs().maxCoeff() > tol)
        throw NonOrthonormalBasis("basis columns are not orthonormal");
    KrausChannel out{ch.dim_in, ch.dim_out, {}};
    for (const Matrix& k : ch.kraus) out.kraus.push_back(b_out.adjoint() * k * b_in);
    return out;
}

// --- subspace-preserving channels and gluing --------------------------------

struct SubspaceSplit {
    Matrix Ps1, Ps2;  // source projectors
    Matrix Pt1, Pt2;  // target projectors

    Eigen::Index dim_source() const { return Ps1.rows(); }
    Eigen::Index dim_target() const { return Pt1.rows(); }

    // coordinate-block split: first d1 basis vectors form block 1
    static SubspaceSplit blocks(Eigen::Index s1, Eigen::Index s2, Eigen::Index t1,
                                Eigen::Index t2) {
        SubspaceSplit sp;
        sp.Ps1 = Matrix::Zero(s1 + s2, s1 + s2);
        sp.Ps2 = Matrix::Zero(s1 + s2, s1 + s2);
        sp.Pt1 = Matrix::Zero(t1 + t2, t1 + t2);
        sp.Pt2 = Matrix::Zero(t1 + t2, t1 + t2);
        sp.Ps1.topLeftCorner(s1, s1).setIdentity();
        sp.Ps2.bottomRightCorner(s2, s2).setIdentity();
        sp.Pt1.topLeftCorner(t1, t1).setIdentity();
        sp.Pt2.bottomRightCorner(t2, t2).setIdentity();
        return sp;
    }
};

inline void check_split(const SubspaceSplit& sp, double tol = kDefaultTol) {
    auto check_pair = [&](const Matrix& p1, const Matrix& p2, const std::string& side) {
        if (p1.rows() != p1.cols() || p2.rows() != p2.cols() || p1.rows() != p2.rows())
            throw ShapeMismatch("split projectors on the " + side);
        if (!is_hermitian(p1, tol) || !is_hermitian(p2, tol))
            throw NonHermitianError("split projector on the " + side);
        if ((p1 * p1 - p1).cwiseAbs().maxCoeff() > tol ||
            (p2 * p2 - p2).cwiseAbs().maxCoeff() > tol)
            throw ShapeMismatch("split projector on the " + side + " is not idempotent");
        if ((p1 * p2).cwiseAbs().maxCoeff() > tol)
            throw ShapeMismatch("split projectors on the " + side + " are not orthogonal");
        if ((p1 + p2 - identity(p1.rows())).cwiseAbs().maxCoeff() > tol)
            throw ShapeMismatch("split projectors on the " + side + " do not sum to 1");
    };
    check_pair(sp.Ps1, sp.Ps2, "source");
    check_pair(sp.Pt1, sp.Pt2, "target");
}

namespace detail {

// deterministic isometry (dim x rank) onto a projector's range
inline Matrix range_isometry(const Matrix& projector) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(projector);
    std::vector<Eigen::Index> cols;
    for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k)
        if (es.eigenvalues()(k) > 0.5) cols.push_back(k);
    Matrix w(projector.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) w.col(static_cast<Eigen::Index>(c)) =
        es.eigenvectors().col(cols[c]);
    return w;
}

}  // namespace detail

// tr(P_ti φ(Q)) == tr(P_si Q) for all Q, checked on the matrix-unit basis.
inline bool check_subspace_preserving(const KrausChannel& ch, const SubspaceSplit& sp,
                                      double tol = kDefaultTol) {
    check_split(sp, tol);
    if (sp.dim_source() != ch.dim_in || sp.dim_target() != ch.dim_out)
        throw DimensionMismatch("split dims vs channel dims");
    const Eigen::Index d = ch.dim_in;
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) {
            Matrix q = Matrix::Zero(d, d);
            q(i, j) = 1.0;
            Matrix out = apply_channel_raw(ch, q);
            Cx lhs1 = (sp.Pt1 * out).trace(), rhs1 = (sp.Ps1 * q).trace();
            Cx lhs2 = (sp.Pt2 * out).trace(), rhs2 = (sp.Ps2 * q).trace();
            if (std::abs(lhs1 - rhs1) > tol || std::abs(lhs2 - rhs2) > tol) return false;
        }
    return true;
}

// φ_i(Q) = P_ti φ(P_si Q P_si) P_ti expressed on the block's own coordinates.
inline KrausChannel restrict_channel(const KrausChannel& ch, const SubspaceSplit& sp,
                                     int block) {
    check_split(sp);
    if (block != 1 && block != 2)
        throw Error(ErrorCategory::model, "restrict_channel: block must be 1 or 2");
    if (sp.dim_source() != ch.dim_in || sp.dim_target() != ch.dim_out)
        throw DimensionMismatch("split dims vs channel dims");
    Matrix ws = detail::range_isometry(block == 1 ? sp.Ps1 : sp.Ps2);
    Matrix wt = detail::range_isometry(block == 1 ? sp.Pt1 : sp.Pt2);
    KrausChannel out{ws.cols(), wt.cols(), {}};
    for (const Matrix& k : ch.kraus) out.kraus.push_back(wt.adjoint() * k * ws);
    return out;
}

// Gluing of two channels over an orthogonal split: Kraus operators are the
// paired direct sums A_k ⊕ B_k (shorter list padded with zeros). The glued
// channel is CPTP, subspace preserving, keeps inter-block coherence where the
// pairing allows (gluing identities gives the full identity), and its
// restrictions recover the inputs exactly.
inline KrausChannel glue_channels(const KrausChannel& ch1, const KrausChannel& ch2,
                                  const SubspaceSplit& sp) {
    check_split(sp);
    check_channel_shapes(ch1);
    check_channel_shapes(ch2);
    Matrix ws1 = detail::range_isometry(sp.Ps1), ws2 = detail::range_isometry(sp.Ps2);
    Matrix wt1 = detail::range_isometry(sp.Pt1), wt2 = detail::range_isometry(sp.Pt2);
    if (ch1.dim_in != ws1.cols() || ch1.dim_out != wt1.cols())
        throw DimensionMismatch("ch1 does not match block 1 of the split");
    if (ch2.dim_in != ws2.cols() || ch2.dim_out != wt2.cols())
        throw DimensionMismatch("ch2 does not match block 2 of the split");
    KrausChannel out{sp.dim_source(), sp.dim_target(), {}};
    std::size_t terms = std::max(ch1.kraus.size(), ch2.kraus.size());
    for (std::size_t k = 0; k < terms; ++k) {
        Matrix c = Matrix::Zero(sp.dim_target(), sp.dim_source());
        if (k < ch1.kraus.size()) c += wt1 * ch1.kraus[k] * ws1.adjoint();
        if (k < ch2.kraus.size()) c += wt2 * ch2.kraus[k] * ws2.adjoint();
        out.kraus.push_back(std::move(c));
    }
    return out;
}

}  // namespace qch
