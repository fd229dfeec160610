#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qch/channels.hpp"
#include "qch/errors.hpp"
#include "qch/linalg.hpp"

// Tensor networks for quantum causal histories.
//
// A history of n events carries one node tensor per site and one bond tensor
// per causal link. Bond coefficients come from channel-state duality in the
// ket convention: the bond state of a channel with operator action A on kets
// is Σ_i |i⟩ ⊗ A|i⟩, i.e. E = Aᵀ on the fixed basis. Node tensors are the
// projector coefficients M (left bond, right bond, physical); boundary sites
// carry (bond, physical) matrices, identity by default, so the dense state of
// an identity chain is the unnormalized Σ_i |i,i,...,i⟩.
//
// Dense coefficients (the MPS contraction):
//   T(k_1..k_n) = Σ V¹(a_1,k_1) E¹(a_1,b_2) V²(b_2,a_2,k_2) ... Vⁿ(b_n,k_n)
// summed over all bond indices. History states are kept unnormalized.

namespace qch {

struct BondTensor {
    Eigen::Index dim_left = 0, dim_right = 0;
    Eigen::Index choi_rank = 1;
    Matrix E;        // pure-bond coefficient matrix; only valid when rank 1
    Matrix doubled;  // (dl² x dr²) doubled-bond form, valid for any rank

    bool pure() const { return choi_rank == 1; }
};

using NodeTensor = Tensor3;  // (left bond, right bond, physical); dummy dims are 1

struct HistoryMPS {
    std::vector<NodeTensor> nodes;
    std::vector<BondTensor> bonds;
    std::vector<Vector> event_states;  // per-site |ψ^(l)⟩, normalized at use

    std::size_t length() const { return nodes.size(); }
    std::vector<Eigen::Index> physical_dims() const {
        std::vector<Eigen::Index> d;
        d.reserve(nodes.size());
        for (const auto& v : nodes) d.push_back(v.dim2());
        return d;
    }
    Eigen::Index dense_dim() const {
        Eigen::Index p = 1;
        for (const auto& v : nodes) p *= v.dim2();
        return p;
    }
    bool all_bonds_pure() const {
        for (const auto& b : bonds)
            if (!b.pure()) return false;
        return true;
    }
};

// --- bond and projector construction ----------------------------------------

inline BondTensor build_bond_tensor(const KrausChannel& ch, double tol = kDefaultTol) {
    CptpReport rep = verify_cptp(ch, tol);
    if (!rep.cp) throw NotCompletelyPositive("bond channel fails CP");
    if (!rep.tp)
        throw Error(ErrorCategory::numeric,
                    "bond channel fails trace preservation by " + std::to_string(rep.max_violation));
    ChoiMatrix choi = choi_of_channel(ch);
    BondTensor bond;
    bond.dim_left = ch.dim_in;
    bond.dim_right = ch.dim_out;
    bond.choi_rank = choi_rank(choi, tol);
    // doubled-bond form: D[(i,j),(a,b)] = C[(i,a),(j,b)]
    const Eigen::Index di = ch.dim_in, doo = ch.dim_out;
    bond.doubled = Matrix(di * di, doo * doo);
    for (Eigen::Index i = 0; i < di; ++i)
        for (Eigen::Index j = 0; j < di; ++j)
            for (Eigen::Index a = 0; a < doo; ++a)
                for (Eigen::Index b = 0; b < doo; ++b)
                    bond.doubled(i * di + j, a * doo + b) = choi.matrix(i * doo + a, j * doo + b);
    if (bond.pure()) bond.E = vector_evolution_operator(ch, tol).transpose();
    return bond;
}

inline Tensor3 build_projector(const Tensor3& coeffs) {
    for (const Cx& c : coeffs.data())
        if (!std::isfinite(c.real()) || !std::isfinite(c.imag()))
            throw ShapeMismatch("projector coefficients must be finite");
    return coeffs;
}

// --- assembly ----------------------------------------------------------------

struct HistorySpec {
    std::vector<Eigen::Index> phys_dims;            // n >= 1 site dimensions
    std::vector<KrausChannel> channels;             // n-1 causal evolutions
    std::vector<Tensor3> projectors;                // interior M tensors; empty = identities
    std::optional<Matrix> boundary_first;           // (bond x phys); identity by default
    std::optional<Matrix> boundary_last;            // (bond x phys); identity by default
    std::vector<std::optional<Vector>> event_states;  // optional per-site states

    std::size_t length() const { return phys_dims.size(); }
};

namespace detail {

inline Vector uniform_state(Eigen::Index d) {
    return Vector::Constant(d, Cx(1.0 / std::sqrt(static_cast<double>(d)), 0.0));
}

}  // namespace detail

inline HistoryMPS assemble_history_mps(const HistorySpec& spec, double tol = kDefaultTol) {
    const std::size_t n = spec.length();
    if (n == 0) throw ShapeMismatch("history needs at least one site");
    if (spec.channels.size() != n - 1)
        throw ShapeMismatch("expected " + std::to_string(n - 1) + " channels, got " +
                            std::to_string(spec.channels.size()));
    for (std::size_t l = 0; l + 1 < n; ++l) {
        if (spec.channels[l].dim_in != spec.phys_dims[l] ||
            spec.channels[l].dim_out != spec.phys_dims[l + 1])
            throw ShapeMismatch("channel " + std::to_string(l) + " maps dim " +
                                std::to_string(spec.channels[l].dim_in) + "->" +
                                std::to_string(spec.channels[l].dim_out) + " but sites " +
                                std::to_string(l + 1) + "," + std::to_string(l + 2) + " have dims " +
                                std::to_string(spec.phys_dims[l]) + "," +
                                std::to_string(spec.phys_dims[l + 1]));
    }
    const std::size_t n_interior = n >= 2 ? n - 2 : 0;
    if (!spec.projectors.empty() && spec.projectors.size() != n_interior)
        throw ShapeMismatch("expected " + std::to_string(n_interior) + " interior projectors, got " +
                            std::to_string(spec.projectors.size()));
    if (!spec.event_states.empty() && spec.event_states.size() != n)
        throw ShapeMismatch("event_states must cover every site");

    HistoryMPS mps;
    mps.nodes.reserve(n);
    for (std::size_t l = 0; l < n; ++l) {
        const Eigen::Index d = spec.phys_dims[l];
        if (n == 1) {
            // single site: the boundary row is the site state (reference Σ|i⟩ default)
            Tensor3 v(1, 1, d);
            if (spec.boundary_first) {
                const Matrix& m = *spec.boundary_first;
                if (m.rows() != 1 || m.cols() != d)
                    throw ShapeMismatch("single-site boundary must be 1x" + std::to_string(d));
                for (Eigen::Index k = 0; k < d; ++k) v(0, 0, k) = m(0, k);
            } else {
                for (Eigen::Index k = 0; k < d; ++k) v(0, 0, k) = 1.0;
            }
            mps.nodes.push_back(std::move(v));
        } else if (l == 0) {
            Matrix m = spec.boundary_first.value_or(identity(d));
            if (m.rows() != d || m.cols() != d)
                throw ShapeMismatch("first boundary tensor must be " + std::to_string(d) + "x" +
                                    std::to_string(d));
            Tensor3 v(1, d, d);
            for (Eigen::Index a = 0; a < d; ++a)
                for (Eigen::Index k = 0; k < d; ++k) v(0, a, k) = m(a, k);
            mps.nodes.push_back(std::move(v));
        } else if (l + 1 == n) {
            Matrix m = spec.boundary_last.value_or(identity(d));
            if (m.rows() != d || m.cols() != d)
                throw ShapeMismatch("last boundary tensor must be " + std::to_string(d) + "x" +
                                    std::to_string(d));
            Tensor3 v(d, 1, d);
            for (Eigen::Index b = 0; b < d; ++b)
                for (Eigen::Index k = 0; k < d; ++k) v(b, 0, k) = m(b, k);
            mps.nodes.push_back(std::move(v));
        } else {
            Tensor3 v = spec.projectors.empty() ? Tensor3::delta(d)
                                                : build_projector(spec.projectors[l - 1]);
            if (v.dim0() != d || v.dim1() != d || v.dim2() != d)
                throw ShapeMismatch("projector at site " + std::to_string(l + 1) + " has dims (" +
                                    std::to_string(v.dim0()) + "," + std::to_string(v.dim1()) +
                                    "," + std::to_string(v.dim2()) + "), site dim is " +
                                    std::to_string(d));
            mps.nodes.push_back(std::move(v));
        }
    }
    mps.bonds.reserve(n - 1);
    for (std::size_t l = 0; l + 1 < n; ++l) mps.bonds.push_back(build_bond_tensor(spec.channels[l], tol));
    mps.event_states.reserve(n);
    for (std::size_t l = 0; l < n; ++l) {
        if (!spec.event_states.empty() && spec.event_states[l]) {
            if (spec.event_states[l]->size() != spec.phys_dims[l])
                throw ShapeMismatch("event state at site " + std::to_string(l + 1));
            mps.event_states.push_back(*spec.event_states[l]);
        } else {
            mps.event_states.push_back(detail::uniform_state(spec.phys_dims[l]));
        }
    }
    return mps;
}

// --- contraction ---------------------------------------------------------

constexpr Eigen::Index kDefaultDenseCap = Eigen::Index(1) << 20;

inline StateVector contract_dense(const HistoryMPS& mps, Eigen::Index cap = kDefaultDenseCap) {
    if (!mps.all_bonds_pure())
        throw Error(ErrorCategory::model,
                    "history has mixed (rank>1) bonds; use contract_dense_density");
    Eigen::Index total = mps.dense_dim();
    if (total > cap)
        throw SizeCapError("dense state has dim " + std::to_string(total) + " > cap " +
                           std::to_string(cap));
    // running table P(prefix physical index, open bond index)
    Matrix p(1, 1);
    p(0, 0) = 1.0;
    Eigen::Index prefix = 1;
    for (std::size_t l = 0; l < mps.length(); ++l) {
        const Tensor3& v = mps.nodes[l];
        Matrix q = Matrix::Zero(prefix * v.dim2(), v.dim1());
        for (Eigen::Index k = 0; k < v.dim2(); ++k) {
            Matrix slice = v.phys_slice(k);  // (left x right)
            Matrix contrib = p * slice;      // (prefix x right)
            for (Eigen::Index r = 0; r < prefix; ++r) q.row(r * v.dim2() + k) += contrib.row(r);
        }
        prefix *= v.dim2();
        p = std::move(q);
        if (l + 1 < mps.length()) p = p * mps.bonds[l].E;
    }
    StateVector out;
    out.amplitudes = p.col(0);
    out.normalized = false;
    return out;
}

// Doubled-layer contraction: returns the dense history density matrix. Works
// for any bond rank; for pure bonds it equals |h⟩⟨h| of contract_dense.
inline Matrix contract_dense_density(const HistoryMPS& mps, Eigen::Index cap = kDefaultDenseCap) {
    Eigen::Index total = mps.dense_dim();
    if (total * total > cap * cap || total > cap)
        throw SizeCapError("dense density has dim " + std::to_string(total));
    Matrix p(1, 1);  // P((ket prefix, bra prefix), (ket bond, bra bond)) flattened
    p(0, 0) = 1.0;
    Eigen::Index prefix = 1;
    for (std::size_t l = 0; l < mps.length(); ++l) {
        const Tensor3& v = mps.nodes[l];
        const Eigen::Index d = v.dim2(), br = v.dim1();
        Matrix q = Matrix::Zero(prefix * d * prefix * d, br * br);
        for (Eigen::Index k = 0; k < d; ++k)
            for (Eigen::Index kb = 0; kb < d; ++kb) {
                Matrix slice = v.phys_slice(k);
                Matrix sliceb = v.phys_slice(kb).conjugate();
                Matrix lift = kron(slice, sliceb);  // (bl*bl x br*br)
                Matrix contrib = p * lift;          // (prefix² x br²)
                for (Eigen::Index r = 0; r < prefix; ++r)
                    for (Eigen::Index rb = 0; rb < prefix; ++rb)
                        q.row((r * d + k) * (prefix * d) + (rb * d + kb)) +=
                            contrib.row(r * prefix + rb);
            }
        prefix *= d;
        p = std::move(q);
        if (l + 1 < mps.length()) p = p * mps.bonds[l].doubled;
    }
    Matrix rho(total, total);
    for (Eigen::Index i = 0; i < total; ++i)
        for (Eigen::Index j = 0; j < total; ++j) rho(i, j) = p(i * total + j, 0);
    return rho;
}

inline StateVector normalize(const StateVector& s) { return s.normalize(); }

// ⟨h|η₁...η_n|h⟩: the totally contracted (M-chain)†(M-chain). Computed by the
// transfer sweep over doubled bonds, so it also covers mixed bonds (where it
// is the trace of the history density matrix).
inline double history_weight(const HistoryMPS& mps) {
    Eigen::RowVectorXcd p(1);
    p(0) = 1.0;
    for (std::size_t l = 0; l < mps.length(); ++l) {
        const Tensor3& v = mps.nodes[l];
        const Eigen::Index bl = v.dim0(), br = v.dim1();
        Eigen::RowVectorXcd q = Eigen::RowVectorXcd::Zero(br * br);
        for (Eigen::Index k = 0; k < v.dim2(); ++k) {
            Matrix w = v.phys_slice(k);
            for (Eigen::Index a = 0; a < br; ++a)
                for (Eigen::Index ab = 0; ab < br; ++ab) {
                    Cx s = 0.0;
                    for (Eigen::Index b = 0; b < bl; ++b)
                        for (Eigen::Index bb = 0; bb < bl; ++bb)
                            s += p(b * bl + bb) * w(b, a) * std::conj(w(bb, ab));
                    q(a * br + ab) += s;
                }
        }
        p = std::move(q);
        if (l + 1 < mps.length()) p = p * mps.bonds[l].doubled;
    }
    double w = p(0).real();
    if (w < -kDefaultTol)
        throw NegativeWeightError("contracted weight " + std::to_string(w));
    return std::max(0.0, w);
}

// --- amplitudes ----------------------------------------------------------

// ⟨ψ_n| A_{n-1} ... A_1 |ψ_1⟩ for explicit vector-evolution operators.
inline Cx transition_amplitude(const std::vector<Matrix>& ops, const Vector& psi1,
                               const Vector& psin) {
    Vector cur = psi1;
    for (std::size_t l = 0; l < ops.size(); ++l) {
        if (ops[l].cols() != cur.size())
            throw DimensionMismatch("evolution operator " + std::to_string(l) + " expects dim " +
                                    std::to_string(ops[l].cols()));
        cur = ops[l] * cur;
    }
    if (psin.size() != cur.size())
        throw DimensionMismatch("final state has dim " + std::to_string(psin.size()) +
                                ", chain produces dim " + std::to_string(cur.size()));
    return psin.dot(cur);  // Eigen dot conjugates the left argument
}

// Channel form: each φ̌† is taken from the rank-1 Choi state (canonical phase:
// largest-magnitude operator entry real positive). Rank>1 channels need the
// explicit opt-in and then use the principal Choi component.
inline Cx transition_amplitude(const std::vector<KrausChannel>& channels, const Vector& psi1,
                               const Vector& psin, double tol = kDefaultTol,
                               bool allow_principal = false) {
    std::vector<Matrix> ops;
    ops.reserve(channels.size());
    for (const auto& ch : channels) ops.push_back(vector_evolution_operator(ch, tol, allow_principal));
    return transition_amplitude(ops, psi1, psin);
}

struct HistoryTerm {
    HistoryMPS mps;
    std::vector<KrausChannel> channels;
    Vector psi_first;
    Vector psi_last;
};

// Σ_γ sqrt(⟨h_γ|η...η|h_γ⟩) ⟨ψ_n|E_γ|ψ_1⟩. With unit weights this reduces to
// the plain sum over histories.
inline Cx weighted_sum_amplitude(const std::vector<HistoryTerm>& histories,
                                 double tol = kDefaultTol) {
    Cx total = 0.0;
    for (const HistoryTerm& h : histories) {
        double w = history_weight(h.mps);
        total += std::sqrt(w) * transition_amplitude(h.channels, h.psi_first, h.psi_last, tol);
    }
    return total;
}

// Π_s ⟨ψ̂^(s)|O_s|ψ̂^(s)⟩ × ⟨h|η...η|h⟩ with normalized event states; sites
// without an operator contribute through the weight alone.
inline Cx correlation_function(const HistoryMPS& mps,
                               const std::map<std::size_t, Matrix>& ops) {
    Cx product = 1.0;
    for (const auto& [site, op] : ops) {
        if (site >= mps.length())
            throw DimensionMismatch("operator site " + std::to_string(site + 1) +
                                    " beyond history length");
        const Vector& raw = mps.event_states[site];
        double nrm = raw.norm();
        if (nrm <= 0.0) throw ZeroNormError("event state at site " + std::to_string(site + 1));
        Vector psi = raw / nrm;
        if (op.rows() != psi.size() || op.cols() != psi.size())
            throw DimensionMismatch("operator at site " + std::to_string(site + 1) + " is " +
                                    std::to_string(op.rows()) + "x" + std::to_string(op.cols()) +
                                    ", site dim " + std::to_string(psi.size()));
        product *= psi.dot(op * psi);
    }
    return product * history_weight(mps);
}

// --- glued networks (entangled histories) ---------------------------------

// Rung pairs must connect sites of the same complete acausal set; that is
// the caller's attestation (checked with causet::check_complete_pair), this
// module only records the placement.
struct RungSpec {
    std::size_t site1 = 0, site2 = 0;  // 0-based sites in h1 and h2
    Matrix pair_state;                 // R(l,m), inter-history entangled pair coefficients
};

struct GluedNetwork {
    HistoryMPS h1, h2;
    std::vector<RungSpec> rungs;
    // extended node tensors at each rung end; default extension repeats the
    // node tensor for every record value (record-independent)
    std::vector<Tensor4> ext1, ext2;

    Eigen::Index record_dim1() const {
        Eigen::Index r = 1;
        for (const auto& rs : rungs) r *= rs.pair_state.rows();
        return r;
    }
    Eigen::Index record_dim2() const {
        Eigen::Index r = 1;
        for (const auto& rs : rungs) r *= rs.pair_state.cols();
        return r;
    }
};

// Maximal rung pair Σ_l |l⟩|l⟩ between sites of the two given dims.
inline Matrix maximal_rung_state(Eigen::Index d1, Eigen::Index d2) {
    Matrix r = Matrix::Zero(d1, d2);
    for (Eigen::Index l = 0; l < std::min(d1, d2); ++l) r(l, l) = 1.0;
    return r;
}

inline GluedNetwork glue_history_networks(
    const HistoryMPS& h1, const HistoryMPS& h2,
    const std::vector<std::pair<std::size_t, std::size_t>>& rung_pairs,
    const std::vector<Matrix>& rung_states = {},
    const std::vector<Tensor4>& extensions1 = {}, const std::vector<Tensor4>& extensions2 = {}) {
    if (!rung_states.empty() && rung_states.size() != rung_pairs.size())
        throw ShapeMismatch("one rung state per rung pair");
    if (!extensions1.empty() && extensions1.size() != rung_pairs.size())
        throw ShapeMismatch("one node extension per rung pair (history 1)");
    if (!extensions2.empty() && extensions2.size() != rung_pairs.size())
        throw ShapeMismatch("one node extension per rung pair (history 2)");

    GluedNetwork g;
    g.h1 = h1;
    g.h2 = h2;
    std::vector<bool> used1(h1.length(), false), used2(h2.length(), false);
    for (std::size_t a = 0; a < rung_pairs.size(); ++a) {
        auto [s1, s2] = rung_pairs[a];
        if (s1 >= h1.length() || s2 >= h2.length())
            throw RungSiteError("rung " + std::to_string(a) + " names sites " +
                                std::to_string(s1 + 1) + "," + std::to_string(s2 + 1));
        if (used1[s1] || used2[s2])
            throw RungSiteError("at most one rung per site (site " + std::to_string(s1 + 1) +
                                "/" + std::to_string(s2 + 1) + " reused)");
        used1[s1] = used2[s2] = true;
        RungSpec rs;
        rs.site1 = s1;
        rs.site2 = s2;
        rs.pair_state = rung_states.empty()
                            ? maximal_rung_state(h1.nodes[s1].dim2(), h2.nodes[s2].dim2())
                            : rung_states[a];
        Tensor4 e1 = extensions1.empty()
                         ? Tensor4::extend(h1.nodes[s1], rs.pair_state.rows())
                         : extensions1[a];
        Tensor4 e2 = extensions2.empty()
                         ? Tensor4::extend(h2.nodes[s2], rs.pair_state.cols())
                         : extensions2[a];
        if (e1.dim0() != h1.nodes[s1].dim0() || e1.dim1() != h1.nodes[s1].dim1() ||
            e1.dim2() != h1.nodes[s1].dim2() || e1.dim3() != rs.pair_state.rows())
            throw ShapeMismatch("extension at h1 site " + std::to_string(s1 + 1));
        if (e2.dim0() != h2.nodes[s2].dim0() || e2.dim1() != h2.nodes[s2].dim1() ||
            e2.dim2() != h2.nodes[s2].dim2() || e2.dim3() != rs.pair_state.cols())
            throw ShapeMismatch("extension at h2 site " + std::to_string(s2 + 1));
        g.rungs.push_back(std::move(rs));
        g.ext1.push_back(std::move(e1));
        g.ext2.push_back(std::move(e2));
    }
    return g;
}

namespace detail {

// dense chain coefficients with rung-site nodes sliced at fixed record values
inline Vector sliced_chain_dense(const HistoryMPS& h, const std::vector<Tensor4>& exts,
                                 const std::vector<std::size_t>& sites,
                                 const std::vector<Eigen::Index>& records, Eigen::Index cap) {
    HistoryMPS tmp = h;
    for (std::size_t a = 0; a < sites.size(); ++a)
        tmp.nodes[sites[a]] = exts[a].rung_slice(records[a]);
    return contract_dense(tmp, cap).amplitudes;
}

}  // namespace detail

// Dense glued state; index layout [h1 physical][h1 records l⃗][h2 physical]
// [h2 records m⃗], records in rung order, amplitude Π_a R^a(l_a, m_a) ·
// T1(k⃗₁; l⃗) · T2(k⃗₂; m⃗). The rung pair states live on the record factors.
inline StateVector contract_dense(const GluedNetwork& g, Eigen::Index cap = kDefaultDenseCap) {
    const Eigen::Index d1 = g.h1.dense_dim(), d2 = g.h2.dense_dim();
    const Eigen::Index r1 = g.record_dim1(), r2 = g.record_dim2();
    Eigen::Index total = d1 * r1 * d2 * r2;
    if (total > cap) throw SizeCapError("glued dense state has dim " + std::to_string(total));

    std::vector<std::size_t> sites1, sites2;
    for (const auto& rs : g.rungs) {
        sites1.push_back(rs.site1);
        sites2.push_back(rs.site2);
    }
    const std::size_t nr = g.rungs.size();

    // enumerate record assignments, mixed radix (last rung fastest)
    auto decode = [&](Eigen::Index flat, bool first_side) {
        std::vector<Eigen::Index> rec(nr);
        for (std::size_t a = nr; a-- > 0;) {
            Eigen::Index dim = first_side ? g.rungs[a].pair_state.rows()
                                          : g.rungs[a].pair_state.cols();
            rec[a] = flat % dim;
            flat /= dim;
        }
        return rec;
    };
    std::vector<Vector> t1(r1), t2(r2);
    for (Eigen::Index l = 0; l < r1; ++l)
        t1[l] = detail::sliced_chain_dense(g.h1, g.ext1, sites1, decode(l, true), cap);
    for (Eigen::Index m = 0; m < r2; ++m)
        t2[m] = detail::sliced_chain_dense(g.h2, g.ext2, sites2, decode(m, false), cap);

    Vector out = Vector::Zero(total);
    for (Eigen::Index l = 0; l < r1; ++l) {
        auto rec1 = decode(l, true);
        for (Eigen::Index m = 0; m < r2; ++m) {
            auto rec2 = decode(m, false);
            Cx amp = 1.0;
            for (std::size_t a = 0; a < nr; ++a) amp *= g.rungs[a].pair_state(rec1[a], rec2[a]);
            if (amp == Cx(0.0, 0.0)) continue;
            for (Eigen::Index k1 = 0; k1 < d1; ++k1) {
                Cx left = amp * t1[l](k1);
                if (left == Cx(0.0, 0.0)) continue;
                Eigen::Index base = ((k1 * r1 + l) * d2) * r2;
                for (Eigen::Index k2 = 0; k2 < d2; ++k2)
                    out(base + k2 * r2 + m) += left * t2[m](k2);
            }
        }
    }
    return StateVector{std::move(out), false};
}

// Contract every rung's two record factors with the family member ⟨j_a|⟨j_a|;
// result lives on H1 ⊗ H2.
inline Vector project_rung_family(const GluedNetwork& g, const StateVector& dense,
                                  const std::vector<Eigen::Index>& family) {
    if (family.size() != g.rungs.size())
        throw ShapeMismatch("one family index per rung");
    const Eigen::Index d1 = g.h1.dense_dim(), d2 = g.h2.dense_dim();
    const Eigen::Index r1 = g.record_dim1(), r2 = g.record_dim2();
    if (dense.amplitudes.size() != d1 * r1 * d2 * r2)
        throw ShapeMismatch("dense vector does not match the glued network");
    Eigen::Index l = 0, m = 0;
    for (std::size_t a = 0; a < g.rungs.size(); ++a) {
        if (family[a] >= g.rungs[a].pair_state.rows() ||
            family[a] >= g.rungs[a].pair_state.cols())
            throw RungSiteError("family index out of range at rung " + std::to_string(a));
        l = l * g.rungs[a].pair_state.rows() + family[a];
        m = m * g.rungs[a].pair_state.cols() + family[a];
    }
    Vector out(d1 * d2);
    for (Eigen::Index k1 = 0; k1 < d1; ++k1)
        for (Eigen::Index k2 = 0; k2 < d2; ++k2)
            out(k1 * d2 + k2) = dense.amplitudes(((k1 * r1 + l) * d2 + k2) * r2 + m);
    return out;
}

// Residual of the claim that the record-projected glued state factorizes with
// the chosen branch collinear to its single-history dense state.
inline double branch_recovery_residual(const GluedNetwork& g, int branch,
                                       const std::vector<Eigen::Index>& family,
                                       Eigen::Index cap = kDefaultDenseCap) {
    StateVector dense = contract_dense(g, cap);
    Vector proj = project_rung_family(g, dense, family);
    const Eigen::Index d1 = g.h1.dense_dim(), d2 = g.h2.dense_dim();
    Vector href = contract_dense(branch == 1 ? g.h1 : g.h2, cap).amplitudes;
    double hn2 = href.squaredNorm();
    if (hn2 <= 0.0) throw ZeroNormError("reference history contracts to zero");
    Matrix m = branch == 1 ? unvec_row(proj, d1, d2) : unvec_row(proj, d1, d2).transpose();
    // subtract the rank-1 component along href column by column
    Matrix residual = m - href * (href.adjoint() * m) / hn2;
    double denom = m.norm();
    return denom == 0.0 ? 0.0 : residual.norm() / denom;
}

// State reordered for the inter-history cut: [h1 phys + h1 records] vs
// [h2 phys + h2 records]; with the canonical layout that is the identity.
inline double rung_cut_entropy(const GluedNetwork& g, const StateVector& dense) {
    return cut_entropy(dense.amplitudes, g.h1.dense_dim() * g.record_dim1(),
                       g.h2.dense_dim() * g.record_dim2());
}

inline Eigen::Index rung_cut_schmidt_rank(const GluedNetwork& g, const StateVector& dense,
                                          double tol = kDefaultTol) {
    return schmidt_rank(dense.amplitudes, g.h1.dense_dim() * g.record_dim1(),
                        g.h2.dense_dim() * g.record_dim2(), tol);
}

// --- holographic coarse-graining -------------------------------------------

// A trunk chain with extra incoming branches. Each branch carries a source
// state and the channel evolving it into the attachment site's space; its
// evolved state sits as a standalone tensor factor (it does not feed the
// next causal step).
struct BranchAttachment {
    std::size_t site = 0;  // 0-based trunk site
    KrausChannel channel;
    Vector source_state;
};

struct BranchedHistory {
    HistorySpec trunk;
    std::vector<BranchAttachment> branches;
};

inline Vector evolved_branch_state(const BranchAttachment& b, double tol = kDefaultTol) {
    if (b.source_state.size() != b.channel.dim_in)
        throw DimensionMismatch("branch source state dim " + std::to_string(b.source_state.size()) +
                                " vs channel input dim " + std::to_string(b.channel.dim_in));
    return vector_evolution_operator(b.channel, tol) * b.source_state;
}

// Dense layout: [trunk physical][evolved branch states in order].
inline StateVector contract_dense(const BranchedHistory& bh, Eigen::Index cap = kDefaultDenseCap,
                                  double tol = kDefaultTol) {
    Vector acc = contract_dense(assemble_history_mps(bh.trunk, tol), cap).amplitudes;
    for (const auto& b : bh.branches) {
        acc = kron(acc, evolved_branch_state(b, tol));
        if (acc.size() > cap) throw SizeCapError("branched dense state exceeds cap");
    }
    return StateVector{std::move(acc), false};
}

struct HoloResult {
    BranchedHistory remaining;            // the network with the branch removed
    HistoryMPS chain;                     // trunk as a plain history chain
    std::vector<StateVector> bulk_states;  // evolved states left out at the event
};

// Drop the incoming branch `dropped_branch` (index among the attachments at
// `event_site`); the evolved source states become bulk states and the chain
// through the event keeps its projector unchanged.
inline HoloResult holographic_coarse_grain(const BranchedHistory& bh, std::size_t event_site,
                                           std::size_t dropped_branch = 0,
                                           double tol = kDefaultTol) {
    if (event_site >= bh.trunk.length())
        throw UnknownEventError("site " + std::to_string(event_site + 1) + " beyond trunk");
    std::vector<std::size_t> here;
    for (std::size_t i = 0; i < bh.branches.size(); ++i)
        if (bh.branches[i].site == event_site) here.push_back(i);
    if (here.empty())
        throw BranchCountError("event at site " + std::to_string(event_site + 1) +
                               " has a single incoming branch; nothing to coarse-grain");
    if (dropped_branch >= here.size())
        throw BranchCountError("branch index " + std::to_string(dropped_branch) + " of " +
                               std::to_string(here.size()) + " at site " +
                               std::to_string(event_site + 1));
    HoloResult res;
    res.remaining = bh;
    std::size_t victim = here[dropped_branch];
    res.bulk_states.push_back(
        StateVector{evolved_branch_state(bh.branches[victim], tol), false});
    res.remaining.branches.erase(res.remaining.branches.begin() +
                                 static_cast<std::ptrdiff_t>(victim));
    res.chain = assemble_history_mps(res.remaining.trunk, tol);
    return res;
}

}  // namespace qch
