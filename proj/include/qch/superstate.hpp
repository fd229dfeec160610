#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "qch/channels.hpp"
#include "qch/errors.hpp"
#include "qch/history_mps.hpp"
#include "qch/linalg.hpp"

// Single-history states as superstates and their superdensity operators.
//
// The superstate route starts from the n-1 maximally entangled reference
// pairs on the causal links, evolves each pair's target half through the
// channel, and applies the per-event projectors as operators on the full
// pair space. Up to normalization this reproduces the dense MPS contraction.
//
// The superdensity operator lives on the per-step auxiliary record spaces
// (d² levels each). Its entries are the sandwich traces
//   ϱ[i⃗,j⃗] ∝ tr( B_{n,i_n} Φ_{n-1}[ ... Φ_1[ B_{1,i_1} ρ B_{1,j_1}† ] ... ] B_{n,j_n}† )
// with B_{l,i} = X_i (the step's Hilbert-Schmidt-orthonormal basis operator),
// left-multiplied by the event-state projector |ψ^(l)⟩⟨ψ^(l)| when the
// history carries event states. With event states the record marginals
// factorize and single-Kraus histories give a pure (rank-1) ϱ; without them
// and with unitary channels the entries are the plain U-conjugation traces.

namespace qch {

struct SuperdensityOperator {
    std::vector<Eigen::Index> step_dims;  // auxiliary record dims per step (d_l²)
    Matrix matrix;                        // Hermitian, PSD, unit trace

    Eigen::Index dim() const { return matrix.rows(); }
};

// {e_ab / 1} matrix units: Hilbert-Schmidt-orthonormal operator basis.
inline std::vector<Matrix> matrix_unit_basis(Eigen::Index d) {
    std::vector<Matrix> xs;
    xs.reserve(static_cast<std::size_t>(d * d));
    for (Eigen::Index a = 0; a < d; ++a)
        for (Eigen::Index b = 0; b < d; ++b) {
            Matrix e = Matrix::Zero(d, d);
            e(a, b) = 1.0;
            xs.push_back(std::move(e));
        }
    return xs;
}

inline void check_operator_basis(const std::vector<Matrix>& basis, Eigen::Index d,
                                 double tol = 1e-9) {
    if (static_cast<Eigen::Index>(basis.size()) != d * d)
        throw NonOrthonormalBasis("need " + std::to_string(d * d) + " operators, got " +
                                  std::to_string(basis.size()));
    for (std::size_t i = 0; i < basis.size(); ++i) {
        if (basis[i].rows() != d || basis[i].cols() != d)
            throw NonOrthonormalBasis("basis operator " + std::to_string(i) + " has wrong dims");
        for (std::size_t j = 0; j < basis.size(); ++j) {
            Cx g = hs_inner(basis[i], basis[j]);
            double want = i == j ? 1.0 : 0.0;
            if (std::abs(g - Cx(want, 0.0)) > tol)
                throw NonOrthonormalBasis("Gram defect at (" + std::to_string(i) + "," +
                                          std::to_string(j) + ")");
        }
    }
}

// Coefficients of U in an HS-orthonormal operator basis: c_i = tr(X_i† U),
// so that Σ_i c_i X_i reconstructs U.
inline Vector operator_basis_expand(const Matrix& u, const std::vector<Matrix>& basis,
                                    double tol = 1e-9) {
    if (basis.empty()) throw NonOrthonormalBasis("empty basis");
    check_operator_basis(basis, basis[0].rows(), tol);
    if (u.rows() != basis[0].rows() || u.cols() != basis[0].cols())
        throw DimensionMismatch("operator does not match the basis dims");
    Vector c(static_cast<Eigen::Index>(basis.size()));
    for (std::size_t i = 0; i < basis.size(); ++i)
        c(static_cast<Eigen::Index>(i)) = hs_inner(basis[i], u);
    return c;
}

inline Matrix operator_basis_reconstruct(const Vector& c, const std::vector<Matrix>& basis) {
    if (c.size() != static_cast<Eigen::Index>(basis.size()))
        throw DimensionMismatch("coefficient count vs basis size");
    Matrix u = Matrix::Zero(basis[0].rows(), basis[0].cols());
    for (std::size_t i = 0; i < basis.size(); ++i) u += c(static_cast<Eigen::Index>(i)) * basis[i];
    return u;
}

namespace detail {

// contract one factor of a flat tensor-product vector with a matrix
// map(out_dim, factor_dim); the factor is replaced by the map's output index.
inline Vector contract_factor(const Vector& v, const std::vector<Eigen::Index>& dims,
                              std::size_t factor, const Matrix& map) {
    Eigen::Index before = 1, after = 1;
    for (std::size_t f = 0; f < factor; ++f) before *= dims[f];
    for (std::size_t f = factor + 1; f < dims.size(); ++f) after *= dims[f];
    const Eigen::Index dn = dims[factor], dm = map.rows();
    if (map.cols() != dn) throw ShapeMismatch("factor contraction dims");
    Vector out = Vector::Zero(before * dm * after);
    for (Eigen::Index b = 0; b < before; ++b)
        for (Eigen::Index o = 0; o < dm; ++o)
            for (Eigen::Index a = 0; a < after; ++a) {
                Cx s = 0.0;
                for (Eigen::Index i = 0; i < dn; ++i)
                    s += map(o, i) * v((b * dn + i) * after + a);
                out((b * dm + o) * after + a) = s;
            }
    return out;
}

// contract two adjacent factors (b, a) with a rank-3 tensor M(b, a, k)
inline Vector contract_factor_pair(const Vector& v, const std::vector<Eigen::Index>& dims,
                                   std::size_t factor, const Tensor3& m) {
    Eigen::Index before = 1, after = 1;
    for (std::size_t f = 0; f < factor; ++f) before *= dims[f];
    for (std::size_t f = factor + 2; f < dims.size(); ++f) after *= dims[f];
    const Eigen::Index db = dims[factor], da = dims[factor + 1], dk = m.dim2();
    if (m.dim0() != db || m.dim1() != da) throw ShapeMismatch("pair contraction dims");
    Vector out = Vector::Zero(before * dk * after);
    for (Eigen::Index pre = 0; pre < before; ++pre)
        for (Eigen::Index k = 0; k < dk; ++k)
            for (Eigen::Index post = 0; post < after; ++post) {
                Cx s = 0.0;
                for (Eigen::Index b = 0; b < db; ++b)
                    for (Eigen::Index a = 0; a < da; ++a)
                        s += m(b, a, k) * v(((pre * db + b) * da + a) * after + post);
                out((pre * dk + k) * after + post) = s;
            }
    return out;
}

}  // namespace detail

// Normalized superstate of a single history, evaluated on the full pair
// space: reference pairs -> channel-evolved bond states -> β projections.
inline StateVector build_superstate(const HistorySpec& spec, double tol = kDefaultTol) {
    const std::size_t n = spec.length();
    if (n == 0) throw ShapeMismatch("history needs at least one site");
    HistoryMPS mps = assemble_history_mps(spec, tol);  // validates shapes, builds bonds
    if (n == 1) {
        Vector psi(spec.phys_dims[0]);
        for (Eigen::Index k = 0; k < spec.phys_dims[0]; ++k) psi(k) = mps.nodes[0](0, 0, k);
        double nrm = psi.norm();
        if (nrm <= tol) throw ZeroNormError("single-site superstate has zero norm");
        return StateVector{psi / nrm, true};
    }
    for (const auto& b : mps.bonds)
        if (!b.pure())
            throw Error(ErrorCategory::model, "superstate needs rank-1 bond states");

    // evolved reference pairs, factor order (a_1, b_2, a_2, b_3, ..., b_n)
    Vector big(1);
    big(0) = 1.0;
    std::vector<Eigen::Index> dims;
    for (std::size_t l = 0; l + 1 < n; ++l) {
        big = kron(big, vec_row(mps.bonds[l].E));
        dims.push_back(mps.bonds[l].dim_left);
        dims.push_back(mps.bonds[l].dim_right);
    }
    // β_1: first pair's source half -> physical site 1
    {
        const Tensor3& v = mps.nodes[0];  // (1, d, d)
        Matrix b1(v.dim2(), v.dim1());
        for (Eigen::Index k = 0; k < v.dim2(); ++k)
            for (Eigen::Index a = 0; a < v.dim1(); ++a) b1(k, a) = v(0, a, k);
        big = detail::contract_factor(big, dims, 0, b1);
        dims[0] = v.dim2();
    }
    // interior β's glue pair (l-1)'s target half to pair l's source half
    for (std::size_t l = 1; l + 1 < n; ++l) {
        std::size_t factor = l;  // after l contractions: [k_1..k_l, b_{l+1}, a_{l+1}, ...]
        big = detail::contract_factor_pair(big, dims, factor, mps.nodes[l]);
        std::vector<Eigen::Index> nd(dims.begin(), dims.begin() + static_cast<long>(factor));
        nd.push_back(mps.nodes[l].dim2());
        nd.insert(nd.end(), dims.begin() + static_cast<long>(factor) + 2, dims.end());
        dims = std::move(nd);
    }
    // β_n: last pair's target half -> physical site n
    {
        const Tensor3& v = mps.nodes[n - 1];  // (d, 1, d)
        Matrix bn(v.dim2(), v.dim0());
        for (Eigen::Index k = 0; k < v.dim2(); ++k)
            for (Eigen::Index b = 0; b < v.dim0(); ++b) bn(k, b) = v(b, 0, k);
        big = detail::contract_factor(big, dims, dims.size() - 1, bn);
    }
    double nrm = big.norm();
    if (nrm <= tol) throw ZeroNormError("history superstate has zero norm");
    return StateVector{big / nrm, true};
}

// Superdensity operator of a single history on the n-fold record space.
// `op_bases` supplies one complete HS-orthonormal basis per step (matrix
// units by default); `rho0` is the initial reference density (maximally
// mixed by default). Event states of the history, when present, insert the
// per-step projector in front of each basis operator.
inline SuperdensityOperator build_superdensity(
    const HistorySpec& spec, const std::vector<std::vector<Matrix>>& op_bases = {},
    std::optional<DensityMatrix> rho0 = std::nullopt, double tol = kDefaultTol,
    Eigen::Index record_cap = 1 << 10) {
    const std::size_t n = spec.length();
    if (n == 0) throw ShapeMismatch("history needs at least one site");
    if (!op_bases.empty() && op_bases.size() != n)
        throw NonOrthonormalBasis("need one operator basis per step");
    if (!spec.event_states.empty() && spec.event_states.size() != n)
        throw ShapeMismatch("event_states must cover every site");
    Eigen::Index record_total = 1;
    for (std::size_t l = 0; l < n; ++l) record_total *= spec.phys_dims[l] * spec.phys_dims[l];
    if (record_total > record_cap)
        throw SizeCapError("record space has dim " + std::to_string(record_total) + " > cap " +
                           std::to_string(record_cap));

    std::vector<std::vector<Matrix>> bases;
    for (std::size_t l = 0; l < n; ++l) {
        std::vector<Matrix> b = op_bases.empty() ? matrix_unit_basis(spec.phys_dims[l])
                                                 : op_bases[l];
        check_operator_basis(b, spec.phys_dims[l], std::max(tol, 1e-9));
        if (!spec.event_states.empty() && spec.event_states[l]) {
            Vector psi = *spec.event_states[l];
            double nrm = psi.norm();
            if (nrm <= 0.0) throw ZeroNormError("event state at step " + std::to_string(l + 1));
            psi /= nrm;
            Matrix proj = psi * psi.adjoint();
            for (Matrix& x : b) x = proj * x;
        }
        bases.push_back(std::move(b));
    }

    Matrix rho = rho0 ? rho0->matrix
                      : Matrix(identity(spec.phys_dims[0]) /
                               static_cast<double>(spec.phys_dims[0]));
    if (rho.rows() != spec.phys_dims[0])
        throw DimensionMismatch("initial density dim vs first site dim");

    // layered recursion: carry B_{l,i} Φ_{l-1}[...] B_{l,j}† for all record pairs
    std::vector<Matrix> layer;  // indexed by flat record pair (i⃗, j⃗)
    {
        const auto& b1 = bases[0];
        layer.reserve(b1.size() * b1.size());
        for (std::size_t i = 0; i < b1.size(); ++i)
            for (std::size_t j = 0; j < b1.size(); ++j)
                layer.push_back(b1[i] * rho * b1[j].adjoint());
    }
    Eigen::Index rec_dim = static_cast<Eigen::Index>(bases[0].size());
    for (std::size_t l = 1; l < n; ++l) {
        const KrausChannel& ch = spec.channels[l - 1];
        const auto& bl = bases[l];
        Eigen::Index next_rec = rec_dim * static_cast<Eigen::Index>(bl.size());
        std::vector<Matrix> next;
        next.reserve(static_cast<std::size_t>(next_rec * next_rec));
        std::vector<Matrix> evolved(layer.size());
        for (std::size_t t = 0; t < layer.size(); ++t) evolved[t] = apply_channel_raw(ch, layer[t]);
        for (Eigen::Index ip = 0; ip < rec_dim; ++ip)
            for (std::size_t i = 0; i < bl.size(); ++i)
                for (Eigen::Index jp = 0; jp < rec_dim; ++jp)
                    for (std::size_t j = 0; j < bl.size(); ++j) {
                        const Matrix& mid = evolved[static_cast<std::size_t>(ip * rec_dim + jp)];
                        next.push_back(bl[i] * mid * bl[j].adjoint());
                    }
        layer = std::move(next);
        rec_dim = next_rec;
    }

    SuperdensityOperator out;
    for (std::size_t l = 0; l < n; ++l)
        out.step_dims.push_back(spec.phys_dims[l] * spec.phys_dims[l]);
    out.matrix = Matrix(rec_dim, rec_dim);
    for (Eigen::Index i = 0; i < rec_dim; ++i)
        for (Eigen::Index j = 0; j < rec_dim; ++j)
            out.matrix(i, j) = layer[static_cast<std::size_t>(i * rec_dim + j)].trace();
    Cx tr = out.matrix.trace();
    if (std::abs(tr) <= tol) throw ZeroNormError("superdensity has zero trace");
    out.matrix /= tr;
    return out;
}

// von Neumann entropy of the reduction to the chosen steps (0-based).
// Returned in nats; divide by log 2 for bits.
inline double spacetime_entropy(const SuperdensityOperator& rho,
                                const std::vector<std::size_t>& steps) {
    std::vector<bool> keep(rho.step_dims.size(), false);
    for (std::size_t s : steps) {
        if (s >= rho.step_dims.size())
            throw DimensionMismatch("step " + std::to_string(s + 1) + " out of range");
        keep[s] = true;
    }
    Matrix reduced = partial_trace(rho.matrix, rho.step_dims, keep);
    return von_neumann_entropy(reduced);
}

inline double entropy_bits(double nats) { return nats / std::log(2.0); }

}  // namespace qch
