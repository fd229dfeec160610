#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "qch/discretization.hpp"
#include "qch/random.hpp"

using namespace qch;

namespace {

Matrix sigma_z() {
    Matrix m(2, 2);
    m << 1, 0, 0, -1;
    return m;
}
Matrix sigma_x() {
    Matrix m(2, 2);
    m << 0, 1, 1, 0;
    return m;
}
Matrix proj1() {
    Matrix m = Matrix::Zero(2, 2);
    m(1, 1) = 1.0;
    return m;
}

Graph wedge_graph() {
    Graph g;
    g.nodes = {{"x1", 2}, {"xo", 2}, {"x2", 2}};
    g.edges = {{"x1", "xo"}, {"xo", "x2"}};
    return g;
}

Vector plus_state() {
    Vector v(2);
    v << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
    return v;
}
Vector zero_state() {
    Vector v(2);
    v << 1, 0;
    return v;
}

}  // namespace

TEST_CASE("group averaging projectors") {
    SECTION("no constraints: identity") {
        Matrix p = group_average_projector({}, 4);
        CHECK((p - identity(4)).cwiseAbs().maxCoeff() < 1e-12);
    }
    SECTION("diag(0,1) selects the first basis vector") {
        Matrix c = Matrix::Zero(2, 2);
        c(1, 1) = 1.0;
        Matrix p = group_average_projector({c}, 2);
        Matrix expect = Matrix::Zero(2, 2);
        expect(0, 0) = 1.0;
        CHECK((p - expect).cwiseAbs().maxCoeff() < 1e-12);
    }
    SECTION("two commuting diagonal constraints intersect kernels") {
        Matrix c1 = Matrix::Zero(4, 4), c2 = Matrix::Zero(4, 4);
        c1(1, 1) = 1.0;  // kernel spans {0, 2, 3}
        c2(2, 2) = 2.0;  // kernel spans {0, 1, 3}
        Matrix p = group_average_projector({c1, c2}, 4);
        // eigen-decomposition oracle: the intersection spans {0, 3}
        Matrix expect = Matrix::Zero(4, 4);
        expect(0, 0) = expect(3, 3) = 1.0;
        CHECK((p - expect).cwiseAbs().maxCoeff() < 1e-12);
    }
    SECTION("non-Hermitian constraints are rejected") {
        Matrix c = Matrix::Zero(2, 2);
        c(0, 1) = 1.0;
        CHECK_THROWS_AS(group_average_projector({c}, 2), NonHermitianError);
    }
    SECTION("projector laws on random constraint sets") {
        Rng rng(23);
        for (int t = 0; t < 15; ++t) {
            std::vector<Matrix> cs;
            for (int k = 0; k < 2; ++k) {
                Matrix h = random_hermitian(rng, 6);
                cs.push_back(h * h.adjoint());  // PSD with a nontrivial kernel sometimes
            }
            Matrix p = group_average_projector(cs, 6);
            CHECK((p * p - p).cwiseAbs().maxCoeff() < 1e-12);
            CHECK((p - p.adjoint()).cwiseAbs().maxCoeff() < 1e-12);
            for (const Matrix& c : cs) CHECK((c * p).cwiseAbs().maxCoeff() < 1e-6);
        }
    }
}

TEST_CASE("kinematical space extension") {
    SECTION("equal spaces embed as the identity") {
        Graph g = wedge_graph();
        ExtendedSpaces ext = extend_kinematical_spaces(g, g);
        CHECK(ext.common.size() == 3);
        CHECK((ext.embed_k - identity(8)).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((ext.embed_k1 - identity(8)).cwiseAbs().maxCoeff() < 1e-12);
    }
    SECTION("the wedge-to-edge move spans all three configurations") {
        Graph gk = wedge_graph();
        Graph gk1 = apply_local_move(gk, GraphMove{MoveKind::pachner_2_1, {"x1", "xo", "x2"}});
        REQUIRE(gk1.nodes.size() == 2);
        ExtendedSpaces ext = extend_kinematical_spaces(gk, gk1);
        CHECK(ext.common.size() == 3);  // covers {x1, xo, x2}
        CHECK(ext.embed_k.rows() == 8);
        CHECK(ext.embed_k1.cols() == 4);
        // cylindrical consistency: embeddings preserve the Gram matrix
        CHECK((ext.embed_k.adjoint() * ext.embed_k - identity(8)).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((ext.embed_k1.adjoint() * ext.embed_k1 - identity(4)).cwiseAbs().maxCoeff() < 1e-12);
    }
    SECTION("a non-unit fill state breaks the inner products") {
        Graph gk = wedge_graph();
        Graph gk1 = apply_local_move(gk, GraphMove{MoveKind::pachner_2_1, {"x1", "xo", "x2"}});
        std::map<std::string, Vector> fills{{"xo", Vector::Ones(2)}};  // norm sqrt(2)
        CHECK_THROWS_AS(extend_kinematical_spaces(gk1, gk, {}, fills), InconsistentEmbedding);
    }
    SECTION("renames must stay injective and dimensions must agree") {
        Graph gk = wedge_graph();
        Graph gk1 = wedge_graph();
        CHECK_THROWS_AS(extend_kinematical_spaces(gk, gk1, {{"x1", "x2"}, {"xo", "x2"}}),
                        InconsistentEmbedding);
        gk1.nodes[0].dim = 3;
        CHECK_THROWS_AS(extend_kinematical_spaces(gk, gk1), InconsistentEmbedding);
    }
}

TEST_CASE("graph rewriting moves") {
    Graph g = wedge_graph();
    SECTION("the wedge collapses to an edge") {
        Graph out = apply_local_move(g, GraphMove{MoveKind::pachner_2_1, {"x1", "xo", "x2"}});
        CHECK(out.nodes.size() == 2);
        CHECK(out.has_edge("x1", "x2"));
        CHECK_FALSE(out.find("xo"));
    }
    SECTION("identity relabeling is an isomorphism") {
        GraphMove mv{MoveKind::identity};
        mv.relabel = {{"x1", "y1"}, {"xo", "yo"}, {"x2", "y2"}};
        Graph out = apply_local_move(g, mv);
        CHECK(out.nodes.size() == g.nodes.size());
        CHECK(out.has_edge("y1", "yo"));
        CHECK(out.has_edge("yo", "y2"));
    }
    SECTION("fine splits add k-1 nodes") {
        GraphMove mv{MoveKind::fine, {"xo"}};
        mv.added_nodes = {{"xa", 2}, {"xb", 2}};
        Graph out = apply_local_move(g, mv);
        CHECK(out.nodes.size() == 4);
        CHECK(out.has_edge("x1", "xa"));
        CHECK(out.has_edge("xa", "xb"));
    }
    SECTION("coarse merges") {
        GraphMove mv{MoveKind::coarse, {"x1", "xo"}};
        mv.merged_id = "xm";
        Graph out = apply_local_move(g, mv);
        CHECK(out.nodes.size() == 2);
        CHECK(out.has_edge("x2", "xm"));
        auto pos = out.find("xm");
        REQUIRE(pos);
        CHECK(out.nodes[*pos].dim == 4);  // product of the merged dims
    }
    SECTION("unknown nodes are rejected") {
        CHECK_THROWS_AS(apply_local_move(g, GraphMove{MoveKind::fine, {"zz"}}), UnknownNodeError);
    }
    SECTION("node-count bookkeeping across a move sequence") {
        Graph cur = wedge_graph();
        long delta = 0;
        GraphMove fine{MoveKind::fine, {"xo"}};
        fine.added_nodes = {{"xa", 2}, {"xb", 2}};
        cur = apply_local_move(cur, fine);
        delta += 1;  // +k-1
        cur = apply_local_move(cur, GraphMove{MoveKind::pachner_2_1, {"x1", "xa", "xb"}});
        delta -= 1;
        GraphMove coarse{MoveKind::coarse, {"x1", "xb"}};
        cur = apply_local_move(cur, coarse);
        delta -= 1;
        CHECK(static_cast<long>(cur.nodes.size()) ==
              static_cast<long>(wedge_graph().nodes.size()) + delta);
    }
}

TEST_CASE("physical state updating") {
    Graph g = wedge_graph();
    Vector psi0 = kron(kron(plus_state(), zero_state()), plus_state());

    SECTION("no constraints, unitary propagator: norm preserved") {
        Rng rng(25);
        DiscretizationState s{0, g, {}, psi0};
        MoveOperators mo;
        mo.graph_move.kind = MoveKind::identity;
        mo.propagator = random_unitary(rng, 8);
        DiscretizationState out = update_physical_state(s, mo);
        CHECK(out.physical_state.norm() == Catch::Approx(psi0.norm()).margin(1e-9));
        CHECK(out.step == 1);
    }
    SECTION("a constraint cutting the state strictly shrinks the norm") {
        DiscretizationState s{0, g, {}, psi0};
        MoveOperators mo;
        mo.graph_move.kind = MoveKind::identity;
        // constraint |1><1| on x1: the plus state has weight on both levels
        mo.added_k = {kron(proj1(), identity(4))};
        DiscretizationState out = update_physical_state(s, mo);
        CHECK(out.physical_state.norm() < psi0.norm() - 1e-3);
        CHECK(out.physical_state.norm() > 0.0);
    }
    SECTION("a state entirely outside the kernel is rejected") {
        DiscretizationState s{0, g, {}, psi0};
        MoveOperators mo;
        mo.graph_move.kind = MoveKind::identity;
        // kernel of |0><0| on xo is xo=|1>, but the state has xo=|0>
        Matrix proj0 = Matrix::Zero(2, 2);
        proj0(0, 0) = 1.0;
        mo.added_k = {kron(identity(2), kron(proj0, identity(2)))};
        CHECK_THROWS_AS(update_physical_state(s, mo), NullStateError);
    }
    SECTION("the physical state lands in the next constraint kernel") {
        DiscretizationState s{0, g, {}, psi0};
        MoveOperators mo;
        mo.graph_move.kind = MoveKind::pachner_2_1;
        mo.graph_move.nodes = {"x1", "xo", "x2"};
        mo.constraints_next = {kron(proj1(), identity(2))};  // on the 2-node space
        DiscretizationState out = update_physical_state(s, mo);
        Matrix p = group_average_projector(out.constraints, out.graph.kin_dim());
        CHECK((p * out.physical_state - out.physical_state).norm() < 1e-9);
    }
}

TEST_CASE("propagation from an initial kinematical state") {
    Graph g = wedge_graph();
    Rng rng(27);
    SECTION("zero moves: the group-averaged projection") {
        Scenario sc;
        sc.graph = g;
        sc.constraints = {kron(proj1(), identity(4))};
        sc.initial_kin_state = kron(kron(plus_state(), zero_state()), plus_state());
        auto traj = propagate_from_initial(sc);
        REQUIRE(traj.size() == 1);
        Matrix p = group_average_projector(sc.constraints, 8);
        CHECK((traj[0].state.physical_state - p * sc.initial_kin_state).norm() < 1e-12);
    }
    SECTION("two unitary steps equal the composed propagator") {
        Matrix u1 = random_unitary(rng, 8), u2 = random_unitary(rng, 8);
        Scenario sc;
        sc.graph = g;
        sc.initial_kin_state = kron(kron(plus_state(), zero_state()), plus_state());
        MoveOperators m1, m2;
        m1.graph_move.kind = m2.graph_move.kind = MoveKind::identity;
        m1.propagator = u1;
        m2.propagator = u2;
        sc.moves = {m1, m2};
        auto traj = propagate_from_initial(sc);
        Scenario composed = sc;
        MoveOperators mc;
        mc.graph_move.kind = MoveKind::identity;
        mc.propagator = Matrix(u2 * u1);
        composed.moves = {mc};
        auto traj2 = propagate_from_initial(composed);
        CHECK((traj.back().state.physical_state - traj2.back().state.physical_state).norm() <
              1e-9);
    }
    SECTION("a null-state step reports its move index") {
        Scenario sc;
        sc.graph = g;
        sc.initial_kin_state = kron(kron(plus_state(), zero_state()), plus_state());
        MoveOperators ok;
        ok.graph_move.kind = MoveKind::identity;
        MoveOperators bad;
        bad.graph_move.kind = MoveKind::identity;
        Matrix proj0 = Matrix::Zero(2, 2);
        proj0(0, 0) = 1.0;
        bad.added_k = {kron(identity(2), kron(proj0, identity(2)))};
        sc.moves = {ok, bad};
        try {
            propagate_from_initial(sc);
            FAIL("expected NullStateError");
        } catch (const NullStateError& e) {
            CHECK(std::string(e.what()).find("move index 1") != std::string::npos);
        }
    }
}

TEST_CASE("move unitarity classification") {
    Graph g = wedge_graph();
    Vector psi0 = kron(kron(plus_state(), zero_state()), plus_state());
    Matrix oz = kron(sigma_z(), identity(4));   // observable on x1
    Matrix ox_xo = kron(identity(2), kron(sigma_x(), identity(2)));

    SECTION("no added constraints: unitary") {
        DiscretizationState s{0, g, {}, psi0};
        MoveOperators mo;
        mo.graph_move.kind = MoveKind::identity;
        auto rep = classify_move_unitarity(s, mo, {oz, ox_xo});
        CHECK(rep.unitary);
        CHECK(rep.witnesses.empty());
    }
    SECTION("constraints commuting with the observables stay unitary") {
        // physical subspace: xo = |0>; the added constraint reuses it, so the
        // projector acts as the identity on physical states
        Matrix c_xo = kron(identity(2), kron(proj1(), identity(2)));
        DiscretizationState s{0, g, {c_xo}, Vector(group_average_projector({c_xo}, 8) * psi0)};
        MoveOperators mo;
        mo.graph_move.kind = MoveKind::identity;
        mo.added_k = {c_xo};
        auto rep = classify_move_unitarity(s, mo, {oz});
        CHECK(rep.unitary);
    }
    SECTION("a non-commuting constraint is witnessed") {
        Matrix c_xo = kron(identity(2), kron(proj1(), identity(2)));
        DiscretizationState s{0, g, {}, psi0};
        MoveOperators mo;
        mo.graph_move.kind = MoveKind::identity;
        mo.added_k = {c_xo};
        auto rep = classify_move_unitarity(s, mo, {ox_xo});
        CHECK_FALSE(rep.unitary);
        REQUIRE_FALSE(rep.witnesses.empty());
        CHECK(rep.witnesses[0].commutator_norm > 1e-3);
    }
}

TEST_CASE("light cones") {
    Graph g = wedge_graph();
    SECTION("disjoint supports with identity moves stay unbounded") {
        Scenario sc;
        sc.graph = g;
        sc.initial_kin_state = kron(kron(plus_state(), zero_state()), plus_state());
        for (int k = 0; k < 4; ++k) {
            MoveOperators mo;
            mo.graph_move.kind = MoveKind::identity;
            sc.moves.push_back(mo);
        }
        auto traj = propagate_from_initial(sc);
        LightconeResult res = lightcone_radius(traj, {"x1", sigma_z()}, {"x2", sigma_x()});
        CHECK_FALSE(res.bounded);
        for (double e : res.expectations) CHECK(e < 1e-9);
    }
    SECTION("unitary trajectories preserve the commutator expectation") {
        Rng rng(29);
        Scenario sc;
        sc.graph = g;
        // real initial state: the sigma_y expectation on x1 starts at zero
        sc.initial_kin_state = kron(kron(plus_state(), zero_state()), plus_state());
        for (int k = 0; k < 4; ++k) {
            MoveOperators mo;
            mo.graph_move.kind = MoveKind::identity;
            // real rotations on xo ⊗ x2 leave x1 untouched
            double th = 0.2 + 0.1 * k;
            Matrix r(2, 2);
            r << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
            mo.propagator = kron(identity(2), kron(r, r));
            sc.moves.push_back(mo);
        }
        auto traj = propagate_from_initial(sc);
        LightconeResult res = lightcone_radius(traj, {"x1", sigma_z()}, {"x1", sigma_x()});
        CHECK_FALSE(res.bounded);
        for (std::size_t n = 1; n < res.expectations.size(); ++n)
            CHECK(std::abs(res.expectations[n] - res.expectations[0]) < 1e-9);
    }
    SECTION("a phase-injecting non-unitary move bounds the cone") {
        Scenario sc;
        sc.graph = g;
        sc.initial_kin_state = kron(kron(plus_state(), zero_state()), plus_state());
        sc.probes = {{{"x1", sigma_z()}, {"x1", sigma_x()}}};
        for (int k = 0; k < 3; ++k) {
            MoveOperators mo;
            mo.graph_move.kind = MoveKind::identity;
            sc.moves.push_back(mo);
        }
        MoveOperators pach;
        pach.graph_move.kind = MoveKind::pachner_2_1;
        pach.graph_move.nodes = {"x1", "xo", "x2"};
        Matrix s_gate = Matrix::Zero(2, 2);
        s_gate(0, 0) = 1.0;
        s_gate(1, 1) = Cx(0, 1);
        pach.propagator = kron(s_gate, identity(4));
        pach.added_k = {kron(identity(2), kron(proj1(), identity(2)))};
        sc.moves.push_back(pach);
        auto traj = propagate_from_initial(sc);
        LightconeResult res = lightcone_radius(traj, {"x1", sigma_z()}, {"x1", sigma_x()});
        REQUIRE(res.bounded);
        CHECK(res.radius == 3);
        // the trajectory records classify the identity moves unitary and the
        // projecting Pachner move non-unitary
        for (std::size_t n = 1; n + 1 < traj.size(); ++n) CHECK(traj[n].record.unitary_flag);
        CHECK_FALSE(traj.back().record.unitary_flag);
    }
}

TEST_CASE("horizon detection") {
    SECTION("all-matched networks have no horizon") {
        MoveNetwork net;
        net.nodes = {{"a0", 0}, {"a1", 1}, {"a2", 2}};
        net.links = {{"a0", "a1", true}, {"a1", "a2", true}};
        CHECK(detect_horizon_events(net).empty());
    }
    SECTION("a broken link marks the horizon event and its region") {
        MoveNetwork net;
        net.nodes = {{"a0", 0}, {"b0", 0}, {"a1", 1}, {"b1", 1}, {"a2", 2}, {"b2", 2}};
        net.links = {{"a0", "a1", true},
                     {"b0", "b1", true},
                     {"a1", "a2", true},
                     {"b1", "b2", false}};
        auto hs = detect_horizon_events(net);
        REQUIRE(hs.size() == 1);
        CHECK(hs[0].event == "b1");
        CHECK(hs[0].region == std::vector<std::string>{"b0", "b1"});
    }
    SECTION("independent broken links give disjoint regions") {
        MoveNetwork net;
        net.nodes = {{"a0", 0}, {"b0", 0}, {"c0", 0}, {"a1", 1}, {"b1", 1}, {"c1", 1},
                     {"a2", 2}, {"b2", 2}, {"c2", 2}};
        net.links = {{"a0", "a1", true}, {"b0", "b1", true}, {"c0", "c1", true},
                     {"a1", "a2", true}, {"b1", "b2", false}, {"c1", "c2", false}};
        auto hs = detect_horizon_events(net);
        REQUIRE(hs.size() == 2);
        CHECK(hs[0].event == "b1");
        CHECK(hs[1].event == "c1");
        std::set<std::string> r1(hs[0].region.begin(), hs[0].region.end());
        for (const auto& r : hs[1].region) CHECK(r1.count(r) == 0);
    }
}
