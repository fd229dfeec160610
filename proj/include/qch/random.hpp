#pragma once

#include <random>
#include <utility>
#include <vector>

#include "qch/causet.hpp"
#include "qch/channels.hpp"
#include "qch/history_mps.hpp"
#include "qch/linalg.hpp"

// Seeded generators for desk-scale fuzzing: Ginibre matrices, Haar-ish
// unitaries via QR, Stinespring CPTP channels, histories, causet pair sets.

namespace qch {

using Rng = std::mt19937_64;

inline Cx random_gaussian(Rng& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    return Cx(g(rng), g(rng));
}

inline Matrix random_ginibre(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = random_gaussian(rng);
    return m;
}

inline Vector random_state(Rng& rng, Eigen::Index d, bool normalized = true) {
    Vector v(d);
    for (Eigen::Index i = 0; i < d; ++i) v(i) = random_gaussian(rng);
    if (normalized) v /= v.norm();
    return v;
}

// Haar-ish unitary in canonical phase (so the channel built from it reports
// exactly this operator back).
inline Matrix random_unitary(Rng& rng, Eigen::Index d) {
    Matrix g = random_ginibre(rng, d, d);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ();
    Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index i = 0; i < d; ++i) {
        Cx diag = r(i, i);
        q.col(i) *= diag == Cx(0.0, 0.0) ? 1.0 : diag / std::abs(diag);
    }
    return canonical_phase(std::move(q));
}

inline Matrix random_hermitian(Rng& rng, Eigen::Index d) {
    Matrix g = random_ginibre(rng, d, d);
    return (g + g.adjoint()) / 2.0;
}

inline DensityMatrix random_density(Rng& rng, Eigen::Index d) {
    Matrix g = random_ginibre(rng, d, d);
    Matrix rho = g * g.adjoint();
    rho /= rho.trace();
    return DensityMatrix{rho, true};
}

// Stinespring dilation: isometry from a QR of a Ginibre block, Kraus ops from
// the environment slices.
inline KrausChannel random_cptp_channel(Rng& rng, Eigen::Index dim_in, Eigen::Index dim_out,
                                        Eigen::Index kraus_rank = 0) {
    if (kraus_rank <= 0) {
        std::uniform_int_distribution<Eigen::Index> kr(1, dim_in * dim_out);
        kraus_rank = kr(rng);
    }
    // the Stinespring isometry needs dim_out * rank >= dim_in
    kraus_rank = std::max(kraus_rank, (dim_in + dim_out - 1) / dim_out);
    Matrix g = random_ginibre(rng, dim_out * kraus_rank, dim_in);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ();
    Matrix iso = q.leftCols(dim_in);  // (dim_out * rank) x dim_in, isometric
    KrausChannel ch{dim_in, dim_out, {}};
    for (Eigen::Index e = 0; e < kraus_rank; ++e)
        ch.kraus.push_back(iso.middleRows(e * dim_out, dim_out));
    return ch;
}

inline Tensor3 random_tensor3(Rng& rng, Eigen::Index d0, Eigen::Index d1, Eigen::Index d2) {
    Tensor3 t(d0, d1, d2);
    double norm2 = 0.0;
    for (Cx& c : t.data()) {
        c = random_gaussian(rng);
        norm2 += std::norm(c);
    }
    // unit Frobenius norm keeps random histories at O(1) scale
    double scale = norm2 > 0 ? 1.0 / std::sqrt(norm2) : 1.0;
    for (Cx& c : t.data()) c *= scale;
    return t;
}

// Random history over unitary (rank-1 bond) channels with random projectors,
// boundaries and event states.
inline HistorySpec random_history_spec(Rng& rng, std::size_t n_max = 6, Eigen::Index d_max = 3,
                                       bool random_boundaries = true) {
    std::uniform_int_distribution<std::size_t> nd(1, n_max);
    std::uniform_int_distribution<Eigen::Index> dd(1, d_max);
    HistorySpec spec;
    std::size_t n = nd(rng);
    for (std::size_t l = 0; l < n; ++l) spec.phys_dims.push_back(dd(rng));
    for (std::size_t l = 0; l + 1 < n; ++l) {
        Matrix w = random_unitary(rng, std::max(spec.phys_dims[l], spec.phys_dims[l + 1]));
        // rectangular channels: isometric slice when the dims differ
        if (spec.phys_dims[l] == spec.phys_dims[l + 1]) {
            spec.channels.push_back(KrausChannel::unitary(w));
        } else if (spec.phys_dims[l] < spec.phys_dims[l + 1]) {
            spec.channels.push_back(
                KrausChannel{spec.phys_dims[l], spec.phys_dims[l + 1],
                             {canonical_phase(w.leftCols(spec.phys_dims[l]))}});
        } else {
            // contract with a random isometry in the other direction is not
            // TP; fall back to matching dims
            spec.phys_dims[l + 1] = spec.phys_dims[l];
            spec.channels.push_back(
                KrausChannel::unitary(random_unitary(rng, spec.phys_dims[l])));
        }
    }
    for (std::size_t l = 1; l + 1 < n; ++l)
        spec.projectors.push_back(random_tensor3(rng, spec.phys_dims[l], spec.phys_dims[l],
                                                 spec.phys_dims[l]));
    if (n >= 2 && random_boundaries) {
        Matrix bf = random_ginibre(rng, spec.phys_dims[0], spec.phys_dims[0]);
        Matrix bl = random_ginibre(rng, spec.phys_dims[n - 1], spec.phys_dims[n - 1]);
        spec.boundary_first = Matrix(bf / bf.norm());
        spec.boundary_last = Matrix(bl / bl.norm());
    }
    for (std::size_t l = 0; l < n; ++l)
        spec.event_states.push_back(random_state(rng, spec.phys_dims[l]));
    return spec;
}

// Random relation pair set over `n` events; may contain cycles (callers fuzz
// the validator with it).
inline std::pair<std::vector<Event>, std::vector<std::pair<Event, Event>>> random_relation_set(
    Rng& rng, std::size_t n, double edge_prob) {
    std::vector<Event> events;
    for (std::size_t i = 0; i < n; ++i) events.push_back(Event{"e" + std::to_string(i), 0});
    std::vector<std::pair<Event, Event>> pairs;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b) {
            if (a == b) continue;
            if (u(rng) < edge_prob) pairs.emplace_back(events[a], events[b]);
        }
    return {std::move(events), std::move(pairs)};
}

}  // namespace qch
