#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "qch/history_mps.hpp"
#include "qch/random.hpp"
#include "support/oracles.hpp"

using namespace qch;

namespace {

HistorySpec identity_chain(std::size_t n, Eigen::Index d) {
    HistorySpec spec;
    for (std::size_t l = 0; l < n; ++l) spec.phys_dims.push_back(d);
    for (std::size_t l = 0; l + 1 < n; ++l)
        spec.channels.push_back(KrausChannel::identity_channel(d));
    return spec;
}

double max_abs_diff(const Vector& a, const std::vector<Cx>& b) {
    REQUIRE(static_cast<std::size_t>(a.size()) == b.size());
    double worst = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(a(i) - b[static_cast<std::size_t>(i)]));
    return worst;
}

}  // namespace

TEST_CASE("bond tensors from channel-state duality") {
    SECTION("identity channel gives the identity coefficient matrix") {
        BondTensor b = build_bond_tensor(KrausChannel::identity_channel(2));
        REQUIRE(b.pure());
        CHECK((b.E - identity(2)).cwiseAbs().maxCoeff() < 1e-12);
    }
    SECTION("unitary channel gives E = U^T") {
        Rng rng(2);
        Matrix u = random_unitary(rng, 3);
        BondTensor b = build_bond_tensor(KrausChannel::unitary(u));
        REQUIRE(b.pure());
        CHECK((b.E - u.transpose()).cwiseAbs().maxCoeff() < 1e-10);
    }
    SECTION("mixed channels flag rank > 1 and keep the doubled form") {
        BondTensor b = build_bond_tensor(KrausChannel::depolarizing(2));
        CHECK_FALSE(b.pure());
        CHECK(b.choi_rank == 4);
        CHECK(b.doubled.rows() == 4);
        // doubled form of a pure bond factorizes as E ⊗ conj(E) reshuffled
        BondTensor p = build_bond_tensor(KrausChannel::identity_channel(2));
        for (Eigen::Index i = 0; i < 2; ++i)
            for (Eigen::Index j = 0; j < 2; ++j)
                for (Eigen::Index a = 0; a < 2; ++a)
                    for (Eigen::Index bb = 0; bb < 2; ++bb)
                        CHECK(std::abs(p.doubled(i * 2 + j, a * 2 + bb) -
                                       p.E(i, a) * std::conj(p.E(j, bb))) < 1e-12);
    }
    SECTION("non-TP channels are rejected") {
        KrausChannel half{2, 2, {identity(2) * 0.5}};
        CHECK_THROWS(build_bond_tensor(half));
    }
    SECTION("rank-1 bond coefficients vectorize the Choi state") {
        Rng rng(44);
        for (int t = 0; t < 10; ++t) {
            Matrix u = random_unitary(rng, 3);
            KrausChannel ch = KrausChannel::unitary(u);
            BondTensor b = build_bond_tensor(ch);
            Vector v = vec_row(b.E);
            CHECK((v * v.adjoint() - choi_of_channel(ch).matrix).cwiseAbs().maxCoeff() < 1e-12);
        }
    }
}

TEST_CASE("projector construction") {
    Tensor3 delta = Tensor3::delta(2);
    CHECK(build_projector(delta)(0, 0, 0) == Cx(1, 0));
    CHECK(build_projector(delta)(0, 1, 0) == Cx(0, 0));
    Tensor3 bad(2, 2, 2);
    bad(0, 0, 0) = Cx(std::numeric_limits<double>::infinity(), 0);
    CHECK_THROWS_AS(build_projector(bad), ShapeMismatch);
}

TEST_CASE("assembly and dense contraction") {
    SECTION("identity chain contracts to the GHZ form") {
        HistoryMPS mps = assemble_history_mps(identity_chain(3, 2));
        Vector dense = contract_dense(mps).amplitudes;
        REQUIRE(dense.size() == 8);
        for (Eigen::Index i = 0; i < 8; ++i) {
            double expect = (i == 0 || i == 7) ? 1.0 : 0.0;
            CHECK(std::abs(dense(i) - Cx(expect, 0)) < 1e-12);
        }
    }
    SECTION("single site returns the site state") {
        HistorySpec spec;
        spec.phys_dims = {3};
        Matrix row(1, 3);
        row << Cx(0.2, 0.1), Cx(0, 0), Cx(-1, 0);
        spec.boundary_first = row;
        Vector dense = contract_dense(assemble_history_mps(spec)).amplitudes;
        CHECK(std::abs(dense(0) - Cx(0.2, 0.1)) < 1e-14);
        CHECK(std::abs(dense(2) - Cx(-1, 0)) < 1e-14);
    }
    SECTION("two sites with a unitary bond give sum_i |i> ⊗ U|i>") {
        Rng rng(4);
        Matrix u = random_unitary(rng, 2);
        HistorySpec spec;
        spec.phys_dims = {2, 2};
        spec.channels.push_back(KrausChannel::unitary(u));
        Vector dense = contract_dense(assemble_history_mps(spec)).amplitudes;
        for (Eigen::Index i = 0; i < 2; ++i)
            for (Eigen::Index a = 0; a < 2; ++a)
                CHECK(std::abs(dense(i * 2 + a) - u(a, i)) < 1e-10);
    }
    SECTION("shape errors") {
        HistorySpec spec = identity_chain(3, 2);
        spec.projectors.push_back(Tensor3::delta(3));  // wrong dim
        CHECK_THROWS_AS(assemble_history_mps(spec), ShapeMismatch);
        HistorySpec spec2 = identity_chain(2, 2);
        spec2.channels[0] = KrausChannel::identity_channel(3);
        CHECK_THROWS_AS(assemble_history_mps(spec2), ShapeMismatch);
    }
    SECTION("size cap") {
        HistorySpec spec = identity_chain(8, 3);
        CHECK_THROWS_AS(contract_dense(assemble_history_mps(spec), 100), SizeCapError);
    }
}

TEST_CASE("MPS contraction equals the direct sum evaluation") {
    Rng rng(6);
    for (int t = 0; t < 60; ++t) {
        HistorySpec spec = random_history_spec(rng, 5, 3);
        HistoryMPS mps = assemble_history_mps(spec);
        Vector dense = contract_dense(mps).amplitudes;
        oracle::DenseHistory od = oracle::dense_history(spec);
        CHECK(max_abs_diff(dense, od.coeffs) < 1e-9);
    }
}

TEST_CASE("history weight") {
    SECTION("identity chain weighs exactly 2") {
        HistoryMPS mps = assemble_history_mps(identity_chain(3, 2));
        CHECK(std::abs(history_weight(mps) - 2.0) < 1e-12);
    }
    SECTION("a zero projector kills the weight") {
        HistorySpec spec = identity_chain(3, 2);
        spec.projectors.push_back(Tensor3(2, 2, 2));  // zero tensor
        CHECK(history_weight(assemble_history_mps(spec)) == Catch::Approx(0.0).margin(1e-12));
    }
    SECTION("matches the dense norm square on random histories") {
        Rng rng(8);
        for (int t = 0; t < 40; ++t) {
            HistorySpec spec = random_history_spec(rng, 5, 3);
            HistoryMPS mps = assemble_history_mps(spec);
            double dense_w = oracle::weight(oracle::dense_history(spec));
            CHECK(history_weight(mps) == Catch::Approx(dense_w).margin(1e-9));
        }
    }
    SECTION("invariant under a global phase on any single projector") {
        Rng rng(10);
        HistorySpec spec = random_history_spec(rng, 5, 3);
        while (spec.length() < 3) spec = random_history_spec(rng, 5, 3);
        double w0 = history_weight(assemble_history_mps(spec));
        Cx phase = std::polar(1.0, 1.234);
        for (Cx& c : spec.projectors[0].data()) c *= phase;
        double w1 = history_weight(assemble_history_mps(spec));
        CHECK(w0 == Catch::Approx(w1).margin(1e-9));
    }
}

TEST_CASE("transition amplitudes") {
    Rng rng(12);
    SECTION("identity chain on a normalized state gives 1") {
        Vector psi = random_state(rng, 2);
        std::vector<KrausChannel> chain = {KrausChannel::identity_channel(2),
                                           KrausChannel::identity_channel(2)};
        CHECK(std::abs(transition_amplitude(chain, psi, psi) - Cx(1, 0)) < 1e-10);
    }
    SECTION("single unitary gives <psi2|U|psi1>") {
        Matrix u = random_unitary(rng, 3);
        Vector p1 = random_state(rng, 3), p2 = random_state(rng, 3);
        Cx amp = transition_amplitude({KrausChannel::unitary(u)}, p1, p2);
        CHECK(std::abs(amp - p2.dot(u * p1)) < 1e-10);
    }
    SECTION("a chain of two rotations equals the composed rotation") {
        // real rotations stay in canonical phase under composition
        auto rot = [](double th) {
            Matrix r(2, 2);
            r << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
            return r;
        };
        Matrix r1 = rot(0.2), r2 = rot(0.3);
        Vector p1 = random_state(rng, 2), p2 = random_state(rng, 2);
        Cx chain = transition_amplitude({KrausChannel::unitary(r1), KrausChannel::unitary(r2)},
                                        p1, p2);
        Cx composed = transition_amplitude({KrausChannel::unitary(Matrix(r2 * r1))}, p1, p2);
        CHECK(std::abs(chain - composed) < 1e-12);
    }
    SECTION("dimension mismatch") {
        Vector p1 = random_state(rng, 3), p2 = random_state(rng, 2);
        CHECK_THROWS_AS(transition_amplitude({KrausChannel::identity_channel(2)}, p1, p2),
                        DimensionMismatch);
    }
}

TEST_CASE("weighted sum over histories") {
    Rng rng(14);
    SECTION("unit weight reduces to the plain amplitude") {
        HistorySpec spec = identity_chain(3, 2);
        // identity chain weighs 2: scale the projector so the weight is 1
        Tensor3 m = Tensor3::delta(2);
        for (Cx& c : m.data()) c /= std::sqrt(std::sqrt(2.0));
        spec.projectors.push_back(m);
        // boundary scaling shares the remaining factor
        spec.boundary_first = Matrix(identity(2) / std::sqrt(std::sqrt(2.0)));
        HistoryTerm term;
        term.mps = assemble_history_mps(spec);
        REQUIRE(history_weight(term.mps) == Catch::Approx(1.0).margin(1e-12));
        term.channels = spec.channels;
        term.psi_first = random_state(rng, 2);
        term.psi_last = random_state(rng, 2);
        Cx expect = transition_amplitude(term.channels, term.psi_first, term.psi_last);
        CHECK(std::abs(weighted_sum_amplitude({term}) - expect) < 1e-12);

        // two copies double the sum
        CHECK(std::abs(weighted_sum_amplitude({term, term}) - 2.0 * expect) < 1e-12);
    }
    SECTION("two distinct histories against dense evaluation") {
        for (int t = 0; t < 10; ++t) {
            std::vector<HistoryTerm> terms;
            Cx expect = 0.0;
            for (int h = 0; h < 2; ++h) {
                HistorySpec spec = random_history_spec(rng, 4, 3);
                HistoryTerm term;
                term.mps = assemble_history_mps(spec);
                term.channels = spec.channels;
                term.psi_first = random_state(rng, spec.phys_dims.front());
                term.psi_last = random_state(rng, spec.phys_dims.back());
                // independent evaluation: dense-oracle weight, hand-composed operators
                double w = oracle::weight(oracle::dense_history(spec));
                Vector cur = term.psi_first;
                for (const auto& ch : spec.channels) cur = ch.kraus[0] * cur;
                expect += std::sqrt(w) * term.psi_last.dot(cur);
                terms.push_back(std::move(term));
            }
            CHECK(std::abs(weighted_sum_amplitude(terms) - expect) < 1e-9);
        }
    }
}

TEST_CASE("correlation functions") {
    Rng rng(16);
    SECTION("identity operators reproduce the weight exactly") {
        HistorySpec spec = random_history_spec(rng, 5, 3);
        HistoryMPS mps = assemble_history_mps(spec);
        std::map<std::size_t, Matrix> ops;
        for (std::size_t s = 0; s < mps.length(); ++s) ops[s] = identity(mps.nodes[s].dim2());
        Cx corr = correlation_function(mps, ops);
        CHECK(std::abs(corr - Cx(history_weight(mps), 0)) < 1e-12);
    }
    SECTION("an operator annihilating the event state zeroes the correlation") {
        HistorySpec spec = identity_chain(3, 2);
        spec.event_states.assign(3, std::nullopt);
        Vector e0(2);
        e0 << 1, 0;
        spec.event_states[1] = e0;
        HistoryMPS mps = assemble_history_mps(spec);
        Matrix o = Matrix::Zero(2, 2);
        o(1, 1) = 1.0;  // <e0|o|e0> = 0
        std::map<std::size_t, Matrix> ops{{1, o}};
        CHECK(std::abs(correlation_function(mps, ops)) < 1e-12);
    }
    SECTION("factorized product form matches the dense sandwich") {
        // histories whose projectors factor into per-site states make the
        // two-operator correlation equal the dense expectation
        for (int t = 0; t < 10; ++t) {
            Eigen::Index d = 2;
            std::size_t n = 4;
            HistorySpec spec = identity_chain(n, d);
            std::vector<Vector> site_states;
            for (std::size_t l = 0; l < n; ++l) site_states.push_back(random_state(rng, d, false));
            // boundary rows: bond index uniform, physical the site state
            Matrix bf(d, d), bl(d, d);
            for (Eigen::Index a = 0; a < d; ++a)
                for (Eigen::Index k = 0; k < d; ++k) {
                    bf(a, k) = site_states[0](k) / std::sqrt(double(d));
                    bl(a, k) = site_states[n - 1](k) / std::sqrt(double(d));
                }
            spec.boundary_first = bf;
            spec.boundary_last = bl;
            for (std::size_t l = 1; l + 1 < n; ++l) {
                Tensor3 m(d, d, d);
                for (Eigen::Index i = 0; i < d; ++i)
                    for (Eigen::Index j = 0; j < d; ++j)
                        for (Eigen::Index k = 0; k < d; ++k)
                            m(i, j, k) = site_states[l](k) / double(d);
                spec.projectors.push_back(m);
            }
            spec.event_states.clear();
            for (std::size_t l = 0; l < n; ++l) spec.event_states.push_back(site_states[l]);
            HistoryMPS mps = assemble_history_mps(spec);

            std::map<std::size_t, Matrix> ops;
            ops[1] = random_hermitian(rng, d);
            ops[3] = random_hermitian(rng, d);
            Cx lhs = correlation_function(mps, ops);
            // dense sandwich with normalized event-state projectors elsewhere
            oracle::DenseHistory od = oracle::dense_history(spec);
            std::map<std::size_t, Matrix> sandwich_ops = ops;
            for (std::size_t l = 0; l < n; ++l) {
                if (sandwich_ops.count(l)) continue;
                Vector psi = site_states[l] / site_states[l].norm();
                sandwich_ops[l] = psi * psi.adjoint();
            }
            Cx rhs = oracle::sandwich(od, sandwich_ops);
            CHECK(std::abs(lhs - rhs) < 1e-9);
        }
    }
    SECTION("dimension errors") {
        HistoryMPS mps = assemble_history_mps(identity_chain(2, 2));
        std::map<std::size_t, Matrix> ops{{0, identity(3)}};
        CHECK_THROWS_AS(correlation_function(mps, ops), DimensionMismatch);
        std::map<std::size_t, Matrix> far{{7, identity(2)}};
        CHECK_THROWS_AS(correlation_function(mps, far), DimensionMismatch);
    }
}

TEST_CASE("glued networks") {
    Rng rng(18);
    SECTION("no rungs: plain tensor product") {
        HistoryMPS h1 = assemble_history_mps(identity_chain(2, 2));
        HistoryMPS h2 = assemble_history_mps(identity_chain(2, 2));
        GluedNetwork g = glue_history_networks(h1, h2, {});
        Vector dense = contract_dense(g).amplitudes;
        Vector expect = kron(contract_dense(h1).amplitudes, contract_dense(h2).amplitudes);
        CHECK((dense - expect).cwiseAbs().maxCoeff() < 1e-12);
    }
    SECTION("maximal rung between identity pairs recovers each branch") {
        HistoryMPS h1 = assemble_history_mps(identity_chain(2, 2));
        HistoryMPS h2 = assemble_history_mps(identity_chain(2, 2));
        GluedNetwork g = glue_history_networks(h1, h2, {{1, 1}});
        CHECK(branch_recovery_residual(g, 1, {0}) < 1e-9);
        CHECK(branch_recovery_residual(g, 2, {1}) < 1e-9);
        // the maximal rung entangles the two sides
        StateVector dense = contract_dense(g);
        CHECK(rung_cut_schmidt_rank(g, dense) == 2);
        CHECK(rung_cut_entropy(g, dense) == Catch::Approx(std::log(2.0)).margin(1e-9));
    }
    SECTION("product rung states leave the cut separable") {
        HistoryMPS h1 = assemble_history_mps(identity_chain(2, 2));
        HistoryMPS h2 = assemble_history_mps(identity_chain(2, 2));
        Matrix product = Matrix::Zero(2, 2);
        product(0, 1) = 1.0;  // |0><1| -> |0> ⊗ |1| record pair, unentangled
        GluedNetwork g = glue_history_networks(h1, h2, {{1, 1}}, {product});
        StateVector dense = contract_dense(g);
        CHECK(rung_cut_schmidt_rank(g, dense) == 1);
        CHECK(rung_cut_entropy(g, dense) == Catch::Approx(0.0).margin(1e-9));
    }
    SECTION("rung bookkeeping errors") {
        HistoryMPS h1 = assemble_history_mps(identity_chain(2, 2));
        HistoryMPS h2 = assemble_history_mps(identity_chain(2, 2));
        CHECK_THROWS_AS(glue_history_networks(h1, h2, {{5, 0}}), RungSiteError);
        CHECK_THROWS_AS(glue_history_networks(h1, h2, {{0, 0}, {0, 1}}), RungSiteError);
        GluedNetwork g = glue_history_networks(h1, h2, {{1, 1}});
        CHECK_THROWS_AS(project_rung_family(g, contract_dense(g), {5}), RungSiteError);
    }
    SECTION("random rung configurations keep branch recovery") {
        for (int t = 0; t < 10; ++t) {
            HistorySpec s1 = random_history_spec(rng, 3, 2);
            HistorySpec s2 = random_history_spec(rng, 3, 2);
            HistoryMPS h1 = assemble_history_mps(s1);
            HistoryMPS h2 = assemble_history_mps(s2);
            if (contract_dense(h1).amplitudes.norm() < 1e-6 ||
                contract_dense(h2).amplitudes.norm() < 1e-6)
                continue;
            std::uniform_int_distribution<std::size_t> u1(0, h1.length() - 1),
                u2(0, h2.length() - 1);
            std::size_t site1 = u1(rng), site2 = u2(rng);
            Eigen::Index r1 = h1.nodes[site1].dim2(), r2 = h2.nodes[site2].dim2();
            Matrix rung = random_ginibre(rng, r1, r2);
            rung(0, 0) = 1.0;  // keep the projected family member populated
            GluedNetwork g = glue_history_networks(h1, h2, {{site1, site2}}, {rung});
            CHECK(branch_recovery_residual(g, 1, {0}) < 1e-9);
            CHECK(branch_recovery_residual(g, 2, {0}) < 1e-9);
        }
    }
}

TEST_CASE("mixed-bond histories use the density path") {
    HistorySpec spec = identity_chain(2, 2);
    spec.channels[0] = KrausChannel::depolarizing(2);
    HistoryMPS mps = assemble_history_mps(spec);
    REQUIRE_FALSE(mps.all_bonds_pure());
    CHECK_THROWS(contract_dense(mps));
    Matrix rho = contract_dense_density(mps);
    CHECK(is_hermitian(rho, 1e-9));
    CHECK(min_eigenvalue(rho) > -1e-9);
    // weight generalizes to the density trace
    CHECK(history_weight(mps) == Catch::Approx(rho.trace().real()).margin(1e-9));

    // on pure chains the density path is the outer product of the pure path
    HistorySpec pure = identity_chain(3, 2);
    HistoryMPS pm = assemble_history_mps(pure);
    Vector dense = contract_dense(pm).amplitudes;
    Matrix outer = dense * dense.adjoint();
    CHECK((contract_dense_density(pm) - outer).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("holographic coarse-graining") {
    Rng rng(20);
    SECTION("the worked four-event pattern") {
        // trunk r1 <= q <= p2 with a second incoming branch r2 at q
        BranchedHistory bh;
        bh.trunk = identity_chain(3, 2);
        Vector src(2);
        src << 1, 0;
        bh.branches.push_back({1, KrausChannel::identity_channel(2), src});

        HoloResult res = holographic_coarse_grain(bh, 1);
        CHECK(res.chain.length() == 3);
        REQUIRE(res.bulk_states.size() == 1);
        CHECK((res.bulk_states[0].amplitudes - src).norm() < 1e-10);
        CHECK(res.remaining.branches.empty());
        // removing the branch leaves the trunk chain intact
        Vector trunk = contract_dense(assemble_history_mps(bh.trunk)).amplitudes;
        CHECK((contract_dense(res.chain).amplitudes - trunk).norm() < 1e-10);
    }
    SECTION("single-parent events cannot be coarse-grained") {
        BranchedHistory bh;
        bh.trunk = identity_chain(3, 2);
        CHECK_THROWS_AS(holographic_coarse_grain(bh, 1), BranchCountError);
        bh.branches.push_back({2, KrausChannel::identity_channel(2), Vector::Ones(2)});
        CHECK_THROWS_AS(holographic_coarse_grain(bh, 1), BranchCountError);  // wrong site
        CHECK_THROWS_AS(holographic_coarse_grain(bh, 2, 3), BranchCountError);
    }
    SECTION("evolved bulk states and the dense factorization") {
        Matrix u = random_unitary(rng, 2);
        BranchedHistory bh;
        bh.trunk = identity_chain(2, 2);
        Vector src = random_state(rng, 2);
        bh.branches.push_back({0, KrausChannel::unitary(u), src});
        Vector dense = contract_dense(bh).amplitudes;
        Vector expect = kron(contract_dense(assemble_history_mps(bh.trunk)).amplitudes,
                             Vector(u * src));
        CHECK((dense - expect).norm() < 1e-10);
        HoloResult res = holographic_coarse_grain(bh, 0);
        CHECK((res.bulk_states[0].amplitudes - u * src).norm() < 1e-10);
    }
}
