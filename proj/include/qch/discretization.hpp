#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "qch/errors.hpp"
#include "qch/linalg.hpp"

// Constrained quantum systems on temporally varying discretizations.
//
// The discretized space is a graph whose nodes each carry a configuration
// factor; the kinematical space is the ordered tensor product of those
// factors. Physical states are selected by the group averaging projector,
// realized in finite dimension as the orthogonal projector onto the joint
// constraint kernel. A local move rewrites the graph, aligns the two
// kinematical spaces inside a common extension, and updates the physical
// state through the pipeline
//
//     u  →  P'_k  →  P_{k/k+1}  →  P'_{k+1}  →  ∫dx° (old-factor contraction)
//
// applied right to left as an operator product (the ordering is data and can
// be permuted). Integration over removed configurations is contraction with
// the normalized uniform covector on those factors.

namespace qch {

struct KinNode {
    std::string id;
    Eigen::Index dim = 2;
};

struct Graph {
    std::vector<KinNode> nodes;
    std::vector<std::pair<std::string, std::string>> edges;

    Eigen::Index kin_dim() const {
        Eigen::Index d = 1;
        for (const auto& n : nodes) d *= n.dim;
        return d;
    }
    std::optional<std::size_t> find(const std::string& id) const {
        for (std::size_t i = 0; i < nodes.size(); ++i)
            if (nodes[i].id == id) return i;
        return std::nullopt;
    }
    bool has_edge(const std::string& a, const std::string& b) const {
        for (const auto& [x, y] : edges)
            if ((x == a && y == b) || (x == b && y == a)) return true;
        return false;
    }
};

// --- group averaging ---------------------------------------------------------

inline Matrix group_average_projector(const std::vector<Matrix>& constraints, Eigen::Index dim,
                                      double tol = kDefaultTol) {
    for (std::size_t i = 0; i < constraints.size(); ++i)
        if (!is_hermitian(constraints[i], std::max(tol, 1e-9)))
            throw NonHermitianError("constraint " + std::to_string(i));
    return kernel_projector(constraints, dim, tol);
}

// --- graph moves ---------------------------------------------------------

enum class MoveKind { pachner_2_1, coarse, fine, identity };

inline std::string move_kind_name(MoveKind k) {
    switch (k) {
        case MoveKind::pachner_2_1: return "pachner_2_1";
        case MoveKind::coarse: return "coarse";
        case MoveKind::fine: return "fine";
        case MoveKind::identity: return "identity";
    }
    return "?";
}

struct GraphMove {
    MoveKind kind = MoveKind::identity;
    std::vector<std::string> nodes;       // affected nodes (order matters for pachner)
    std::vector<KinNode> added_nodes;     // fine replacements
    std::string merged_id;                // coarse target id
    Eigen::Index merged_dim = 0;          // 0 = product of merged dims
    std::map<std::string, std::string> relabel;  // identity move bijection
};

// Rewrites the graph. Surviving nodes keep their order; new nodes are
// appended, which fixes the factor order of the next kinematical space.
inline Graph apply_local_move(const Graph& g, const GraphMove& move) {
    for (const auto& id : move.nodes)
        if (!g.find(id)) throw UnknownNodeError("'" + id + "'");
    Graph out = g;
    auto drop_node = [&](const std::string& id) {
        out.nodes.erase(std::remove_if(out.nodes.begin(), out.nodes.end(),
                                       [&](const KinNode& n) { return n.id == id; }),
                        out.nodes.end());
        out.edges.erase(std::remove_if(out.edges.begin(), out.edges.end(),
                                       [&](const auto& e) {
                                           return e.first == id || e.second == id;
                                       }),
                        out.edges.end());
    };
    auto neighbors = [&](const std::string& id) {
        std::vector<std::string> ns;
        for (const auto& [a, b] : g.edges) {
            if (a == id) ns.push_back(b);
            if (b == id) ns.push_back(a);
        }
        return ns;
    };
    switch (move.kind) {
        case MoveKind::pachner_2_1: {
            // wedge (x1 - xo - x2) collapses to the edge x1 - x2
            if (move.nodes.size() != 3)
                throw UnknownNodeError("pachner_2_1 names (x1, xo, x2)");
            const std::string &x1 = move.nodes[0], &xo = move.nodes[1], &x2 = move.nodes[2];
            drop_node(xo);
            if (!out.has_edge(x1, x2)) out.edges.emplace_back(x1, x2);
            return out;
        }
        case MoveKind::coarse: {
            if (move.nodes.size() < 2) throw UnknownNodeError("coarse merges >= 2 nodes");
            Eigen::Index d = move.merged_dim;
            if (d == 0) {
                d = 1;
                for (const auto& id : move.nodes) d *= g.nodes[*g.find(id)].dim;
            }
            std::set<std::string> merged(move.nodes.begin(), move.nodes.end());
            std::set<std::string> nbrs;
            for (const auto& id : move.nodes)
                for (const auto& n : neighbors(id))
                    if (!merged.count(n)) nbrs.insert(n);
            for (const auto& id : move.nodes) drop_node(id);
            std::string mid = move.merged_id.empty() ? move.nodes[0] + "+" : move.merged_id;
            out.nodes.push_back(KinNode{mid, d});
            for (const auto& n : nbrs) out.edges.emplace_back(n, mid);
            return out;
        }
        case MoveKind::fine: {
            if (move.nodes.size() != 1) throw UnknownNodeError("fine splits exactly one node");
            if (move.added_nodes.size() < 2)
                throw UnknownNodeError("fine needs >= 2 replacement nodes");
            auto nbrs = neighbors(move.nodes[0]);
            drop_node(move.nodes[0]);
            for (const auto& nn : move.added_nodes) {
                out.nodes.push_back(nn);
                for (const auto& n : nbrs) out.edges.emplace_back(n, nn.id);
            }
            // the replacements form a wedge among themselves
            for (std::size_t i = 0; i + 1 < move.added_nodes.size(); ++i)
                out.edges.emplace_back(move.added_nodes[i].id, move.added_nodes[i + 1].id);
            return out;
        }
        case MoveKind::identity: {
            std::set<std::string> images;
            for (const auto& [from, to] : move.relabel) {
                if (!g.find(from)) throw UnknownNodeError("'" + from + "'");
                if (!images.insert(to).second)
                    throw UnknownNodeError("relabeling is not one-to-one at '" + to + "'");
            }
            for (auto& n : out.nodes) {
                auto it = move.relabel.find(n.id);
                if (it != move.relabel.end()) n.id = it->second;
            }
            for (auto& [a, b] : out.edges) {
                auto ia = move.relabel.find(a);
                if (ia != move.relabel.end()) a = ia->second;
                auto ib = move.relabel.find(b);
                if (ib != move.relabel.end()) b = ib->second;
            }
            return out;
        }
    }
    throw UnknownNodeError("unreachable move kind");
}

// --- kinematical space extension ------------------------------------------

struct ExtendedSpaces {
    std::vector<KinNode> common;  // step-k factors first, then the new ones
    Matrix embed_k;               // isometry H_k -> common
    Matrix embed_k1;              // isometry H_{k+1} -> common
};

namespace detail {

inline Vector normalized_uniform(Eigen::Index d) {
    return Vector::Constant(d, Cx(1.0 / std::sqrt(static_cast<double>(d)), 0.0));
}

// multi-index decomposition over node dims, last factor fastest
inline std::vector<Eigen::Index> split_index(Eigen::Index flat, const std::vector<KinNode>& ns) {
    std::vector<Eigen::Index> idx(ns.size());
    for (std::size_t f = ns.size(); f-- > 0;) {
        idx[f] = flat % ns[f].dim;
        flat /= ns[f].dim;
    }
    return idx;
}

}  // namespace detail

// Embeds both spaces into their union. Shared configurations are identified
// by id through `rename` (step-k id -> step-k+1 id, missing ids identical).
// Factors absent on one side are filled with the given unit reference state
// (normalized uniform by default); the isometry property of both embeddings
// is the cylindrical-consistency check.
inline ExtendedSpaces extend_kinematical_spaces(
    const Graph& gk, const Graph& gk1, const std::map<std::string, std::string>& rename = {},
    const std::map<std::string, Vector>& fill_states = {}, double tol = kDefaultTol) {
    auto renamed = [&](const std::string& id) {
        auto it = rename.find(id);
        return it == rename.end() ? id : it->second;
    };
    {
        std::set<std::string> images;
        for (const auto& [from, to] : rename) {
            if (!gk.find(from)) throw InconsistentEmbedding("rename source '" + from + "'");
            if (!images.insert(to).second)
                throw InconsistentEmbedding("rename identifies two configurations with '" + to + "'");
        }
    }
    ExtendedSpaces ext;
    for (const auto& n : gk.nodes) {
        auto j = gk1.find(renamed(n.id));
        if (j && gk1.nodes[*j].dim != n.dim)
            throw InconsistentEmbedding("configuration '" + n.id + "' changes dim " +
                                        std::to_string(n.dim) + " -> " +
                                        std::to_string(gk1.nodes[*j].dim));
        ext.common.push_back(KinNode{renamed(n.id), n.dim});
    }
    for (const auto& n : gk1.nodes) {
        bool shared = false;
        for (const auto& m : gk.nodes)
            if (renamed(m.id) == n.id) shared = true;
        if (!shared) ext.common.push_back(n);
    }
    {
        std::set<std::string> ids;
        for (const auto& n : ext.common)
            if (!ids.insert(n.id).second)
                throw InconsistentEmbedding("duplicate configuration '" + n.id + "'");
    }

    auto fill_for = [&](const std::string& id, Eigen::Index d) {
        auto it = fill_states.find(id);
        if (it == fill_states.end()) return detail::normalized_uniform(d);
        if (it->second.size() != d)
            throw InconsistentEmbedding("fill state for '" + id + "' has dim " +
                                        std::to_string(it->second.size()));
        return it->second;
    };

    Eigen::Index cdim = 1;
    for (const auto& n : ext.common) cdim *= n.dim;

    auto build_embed = [&](const std::vector<KinNode>& side,
                           const std::vector<std::string>& side_ids_in_common) {
        Eigen::Index sdim = 1;
        for (const auto& n : side) sdim *= n.dim;
        Matrix e = Matrix::Zero(cdim, sdim);
        // position of each common factor in the side layout (or -1 = filled)
        std::vector<long> pos(ext.common.size(), -1);
        for (std::size_t cf = 0; cf < ext.common.size(); ++cf)
            for (std::size_t sf = 0; sf < side.size(); ++sf)
                if (side_ids_in_common[sf] == ext.common[cf].id) pos[cf] = static_cast<long>(sf);
        for (Eigen::Index ci = 0; ci < cdim; ++ci) {
            auto cidx = detail::split_index(ci, ext.common);
            Cx amp = 1.0;
            Eigen::Index si = 0;
            std::vector<Eigen::Index> sidx(side.size(), -1);
            for (std::size_t cf = 0; cf < ext.common.size(); ++cf) {
                if (pos[cf] >= 0)
                    sidx[static_cast<std::size_t>(pos[cf])] = cidx[cf];
                else
                    amp *= fill_for(ext.common[cf].id, ext.common[cf].dim)(cidx[cf]);
            }
            for (std::size_t sf = 0; sf < side.size(); ++sf) si = si * side[sf].dim + sidx[sf];
            e(ci, si) += amp;
        }
        return e;
    };

    std::vector<std::string> k_ids, k1_ids;
    for (const auto& n : gk.nodes) k_ids.push_back(renamed(n.id));
    for (const auto& n : gk1.nodes) k1_ids.push_back(n.id);
    ext.embed_k = build_embed(gk.nodes, k_ids);
    ext.embed_k1 = build_embed(gk1.nodes, k1_ids);

    // Gram check: embeddings must preserve inner products exactly
    auto isometric = [&](const Matrix& e) {
        return (e.adjoint() * e - identity(e.cols())).cwiseAbs().maxCoeff() <= std::sqrt(tol);
    };
    if (!isometric(ext.embed_k) || !isometric(ext.embed_k1))
        throw InconsistentEmbedding("embedding does not preserve the physical inner product");
    return ext;
}

// --- physical state updating ------------------------------------------------

enum class UpdateStage { propagate, project_added_k, project_preserved, project_added_k1,
                         integrate_old };

inline std::vector<UpdateStage> default_update_order() {
    return {UpdateStage::propagate, UpdateStage::project_added_k, UpdateStage::project_preserved,
            UpdateStage::project_added_k1, UpdateStage::integrate_old};
}

struct MoveOperators {
    GraphMove graph_move;
    std::optional<Matrix> propagator;      // u on the extended space; identity if absent
    std::vector<Matrix> added_k;           // C'_k on the extended space
    std::vector<Matrix> added_k1;          // C'_{k+1} on the extended space
    std::vector<Matrix> preserved;         // C_{k/k+1} on the extended space
    std::vector<Matrix> constraints_next;  // next step's constraint set, on the new space
    std::map<std::string, Vector> fill_states;
    std::vector<UpdateStage> order;        // pipeline stage order as data; default if empty
};

struct DiscretizationState {
    int step = 0;
    Graph graph;
    std::vector<Matrix> constraints;  // Hermitian, on the current kinematical space
    Vector physical_state;            // unnormalized; norms carry the physics
};

inline DiscretizationState update_physical_state(const DiscretizationState& s,
                                                 const MoveOperators& move,
                                                 double tol = kDefaultTol) {
    if (s.physical_state.size() != s.graph.kin_dim())
        throw DimensionMismatch("state dim vs kinematical dim");
    Graph next = apply_local_move(s.graph, move.graph_move);
    const std::map<std::string, std::string>& rename = move.graph_move.relabel;
    ExtendedSpaces ext = extend_kinematical_spaces(s.graph, next, rename, move.fill_states, tol);
    Eigen::Index cdim = ext.embed_k.rows();

    auto on_extended = [&](const Matrix& m, const char* what) {
        if (m.rows() != cdim || m.cols() != cdim)
            throw DimensionMismatch(std::string(what) + " must live on the extended space (dim " +
                                    std::to_string(cdim) + ")");
        return m;
    };

    Matrix pk_added = group_average_projector(move.added_k, cdim, tol);
    Matrix pk_preserved = group_average_projector(move.preserved, cdim, tol);
    Matrix pk1_added = group_average_projector(move.added_k1, cdim, tol);
    for (const auto& c : move.added_k) on_extended(c, "C'_k");
    for (const auto& c : move.preserved) on_extended(c, "C_{k/k+1}");
    for (const auto& c : move.added_k1) on_extended(c, "C'_{k+1}");

    Vector psi = ext.embed_k * s.physical_state;
    // the move must not annihilate the evolving part of the state
    double selected = (pk_added * psi).norm();
    if (selected <= tol * std::max(1.0, psi.norm()))
        throw NullStateError("P'_k annihilates the physical state at step " +
                             std::to_string(s.step));

    // old configurations to integrate out: step-k factors absent at step k+1
    std::vector<bool> keep(ext.common.size(), true);
    std::vector<Eigen::Index> dims;
    for (std::size_t f = 0; f < ext.common.size(); ++f) {
        dims.push_back(ext.common[f].dim);
        if (!next.find(ext.common[f].id)) keep[f] = false;
    }

    bool integrated = false;
    std::vector<UpdateStage> order = move.order.empty() ? default_update_order() : move.order;
    for (UpdateStage stage : order) {
        switch (stage) {
            case UpdateStage::propagate:
                if (move.propagator) psi = on_extended(*move.propagator, "propagator") * psi;
                break;
            case UpdateStage::project_added_k: psi = pk_added * psi; break;
            case UpdateStage::project_preserved: psi = pk_preserved * psi; break;
            case UpdateStage::project_added_k1: psi = pk1_added * psi; break;
            case UpdateStage::integrate_old: {
                // contract removed factors with the normalized uniform covector
                Eigen::Index kept_dim = 1, old_dim = 1;
                for (std::size_t f = 0; f < ext.common.size(); ++f)
                    (keep[f] ? kept_dim : old_dim) *= dims[f];
                Vector reduced = Vector::Zero(kept_dim);
                for (Eigen::Index ci = 0; ci < psi.size(); ++ci) {
                    auto idx = detail::split_index(ci, ext.common);
                    Eigen::Index ki = 0;
                    Cx w = 1.0;
                    for (std::size_t f = 0; f < ext.common.size(); ++f) {
                        if (keep[f])
                            ki = ki * dims[f] + idx[f];
                        else
                            w *= detail::normalized_uniform(dims[f])(idx[f]);
                    }
                    reduced(ki) += std::conj(w) * psi(ci);
                }
                psi = std::move(reduced);
                integrated = true;
                break;
            }
        }
    }
    if (!integrated)
        throw Error(ErrorCategory::model, "update order misses the old-configuration integration");

    DiscretizationState out;
    out.step = s.step + 1;
    out.graph = std::move(next);
    out.constraints = move.constraints_next;
    // final group averaging keeps the physical-state invariant structural
    Matrix pnext = group_average_projector(out.constraints, out.graph.kin_dim(), tol);
    out.physical_state = pnext * psi;
    return out;
}

// --- trajectories -------------------------------------------------------------

struct EventOperator {
    std::string node;
    Matrix op;  // on the node's configuration factor
};

inline Matrix embed_event_operator(const Graph& g, const EventOperator& eo) {
    auto pos = g.find(eo.node);
    if (!pos) throw UnknownNodeError("'" + eo.node + "'");
    if (eo.op.rows() != g.nodes[*pos].dim || eo.op.cols() != g.nodes[*pos].dim)
        throw DimensionMismatch("operator on '" + eo.node + "' is " + std::to_string(eo.op.rows()) +
                                "x" + std::to_string(eo.op.cols()) + ", factor dim " +
                                std::to_string(g.nodes[*pos].dim));
    Matrix acc = Matrix::Identity(1, 1);
    for (std::size_t f = 0; f < g.nodes.size(); ++f)
        acc = kron(acc, f == *pos ? eo.op : identity(g.nodes[f].dim));
    return acc;
}

struct MoveRecord {
    MoveKind kind = MoveKind::identity;
    std::vector<std::string> affected;
    bool unitary_flag = true;
};

struct UnitarityWitness {
    std::size_t observable = 0;
    std::size_t constraint = 0;
    double commutator_norm = 0.0;
};

struct UnitarityReport {
    bool unitary = true;
    std::vector<UnitarityWitness> witnesses;
    double max_gram_violation = 0.0;
};

// Unitary iff all [O, C'_k] vanish and the move preserves physical inner
// products on a spanning set of the current physical subspace.
inline UnitarityReport classify_move_unitarity(const DiscretizationState& s,
                                               const MoveOperators& move,
                                               const std::vector<Matrix>& observables,
                                               double tol = 1e-9) {
    UnitarityReport rep;
    Graph next = apply_local_move(s.graph, move.graph_move);
    ExtendedSpaces ext =
        extend_kinematical_spaces(s.graph, next, move.graph_move.relabel, move.fill_states, tol);
    Eigen::Index cdim = ext.embed_k.rows();
    for (std::size_t io = 0; io < observables.size(); ++io) {
        if (observables[io].rows() != cdim)
            throw DimensionMismatch("observable " + std::to_string(io) +
                                    " must live on the extended space");
        if (!is_hermitian(observables[io], 1e-9))
            throw NonHermitianError("observable " + std::to_string(io));
        for (std::size_t ic = 0; ic < move.added_k.size(); ++ic) {
            double nrm =
                (observables[io] * move.added_k[ic] - move.added_k[ic] * observables[io])
                    .cwiseAbs()
                    .maxCoeff();
            if (nrm > tol) rep.witnesses.push_back({io, ic, nrm});
        }
    }
    // Gram preservation over a spanning physical basis
    Matrix pphys = group_average_projector(s.constraints, s.graph.kin_dim(), tol);
    Eigen::SelfAdjointEigenSolver<Matrix> es(pphys);
    std::vector<Vector> basis;
    for (Eigen::Index c = 0; c < es.eigenvalues().size(); ++c)
        if (es.eigenvalues()(c) > 0.5) basis.push_back(es.eigenvectors().col(c));
    std::vector<Vector> mapped;
    for (const Vector& b : basis) {
        DiscretizationState probe = s;
        probe.physical_state = b;
        try {
            mapped.push_back(update_physical_state(probe, move, tol).physical_state);
        } catch (const NullStateError&) {
            mapped.push_back(Vector::Zero(next.kin_dim()));
        }
    }
    for (std::size_t i = 0; i < basis.size(); ++i)
        for (std::size_t j = 0; j < basis.size(); ++j) {
            Cx before = basis[i].dot(basis[j]);
            Cx after = mapped[i].dot(mapped[j]);
            rep.max_gram_violation = std::max(rep.max_gram_violation, std::abs(before - after));
        }
    rep.unitary = rep.witnesses.empty() && rep.max_gram_violation <= tol;
    return rep;
}

// Classify against event-supported observables: each probe is embedded into
// the move's extended space; probes on events that no longer exist there are
// skipped (the Gram condition still applies).
inline UnitarityReport classify_move_with_probes(const DiscretizationState& s,
                                                 const MoveOperators& move,
                                                 const std::vector<EventOperator>& probes,
                                                 double tol = 1e-9) {
    Graph next = apply_local_move(s.graph, move.graph_move);
    ExtendedSpaces ext =
        extend_kinematical_spaces(s.graph, next, move.graph_move.relabel, move.fill_states, tol);
    Graph common;
    common.nodes = ext.common;
    std::vector<Matrix> observables;
    for (const EventOperator& p : probes)
        if (common.find(p.node)) observables.push_back(embed_event_operator(common, p));
    return classify_move_unitarity(s, move, observables, tol);
}

struct TrajectoryStep {
    DiscretizationState state;
    MoveRecord record;  // record of the move that produced this state
};

struct Scenario {
    Graph graph;
    std::vector<Matrix> constraints;  // step-0 constraints
    Vector initial_kin_state;
    std::vector<std::pair<EventOperator, EventOperator>> probes;  // lightcone probes
    std::vector<MoveOperators> moves;
};

// Folds the moves from an initial kinematical state: the step-0 physical
// state is its group-averaged projection, then each move updates it. The
// per-move records carry the unitarity verdict against the scenario probes.
inline std::vector<TrajectoryStep> propagate_from_initial(const Scenario& sc,
                                                          double tol = kDefaultTol) {
    if (sc.initial_kin_state.size() != sc.graph.kin_dim())
        throw DimensionMismatch("initial state dim vs kinematical dim");
    DiscretizationState s;
    s.step = 0;
    s.graph = sc.graph;
    s.constraints = sc.constraints;
    Matrix p0 = group_average_projector(sc.constraints, sc.graph.kin_dim(), tol);
    s.physical_state = p0 * sc.initial_kin_state;
    std::vector<TrajectoryStep> out;
    out.push_back({s, MoveRecord{MoveKind::identity, {}, true}});
    std::vector<EventOperator> probe_ops;
    for (const auto& [o1, o2] : sc.probes) {
        probe_ops.push_back(o1);
        probe_ops.push_back(o2);
    }
    for (std::size_t m = 0; m < sc.moves.size(); ++m) {
        MoveRecord rec;
        rec.kind = sc.moves[m].graph_move.kind;
        rec.affected = sc.moves[m].graph_move.nodes;
        rec.unitary_flag = classify_move_with_probes(s, sc.moves[m], probe_ops, tol).unitary;
        try {
            s = update_physical_state(s, sc.moves[m], tol);
        } catch (const NullStateError& e) {
            throw NullStateError(std::string(e.what()) + " (move index " + std::to_string(m) + ")");
        }
        out.push_back({s, rec});
    }
    return out;
}

struct LightconeResult {
    bool bounded = false;
    long radius = -1;  // last separated step count (first exceedance minus one)
    std::vector<double> expectations;
};

// Scans |⟨[O1,O2]⟩| along the trajectory using normalized states. The radius
// is the minimal n with an expectation above tol, minus one; unbounded if the
// commutator expectation never rises above tol.
inline LightconeResult lightcone_radius(const std::vector<TrajectoryStep>& trajectory,
                                        const EventOperator& o1, const EventOperator& o2,
                                        double tol = 1e-6) {
    LightconeResult res;
    for (std::size_t n = 0; n < trajectory.size(); ++n) {
        const DiscretizationState& s = trajectory[n].state;
        Matrix a = embed_event_operator(s.graph, o1);
        Matrix b = embed_event_operator(s.graph, o2);
        double nrm = s.physical_state.norm();
        if (nrm <= 0.0) {
            res.expectations.push_back(0.0);
            continue;
        }
        Vector psi = s.physical_state / nrm;
        Cx expct = psi.dot((a * b - b * a) * psi);
        res.expectations.push_back(std::abs(expct));
        if (!res.bounded && std::abs(expct) > tol) {
            res.bounded = true;
            res.radius = static_cast<long>(n) - 1;
        }
    }
    return res;
}

// --- horizon detection -------------------------------------------------------

struct MoveNetNode {
    std::string id;
    int step = 0;
};

struct MoveNetLink {
    std::string from, to;
    bool matched = true;  // false = unmatched constraints, the light cone breaks
};

struct MoveNetwork {
    std::vector<MoveNetNode> nodes;
    std::vector<MoveNetLink> links;
};

struct HorizonReport {
    std::string event;
    std::vector<std::string> region;  // horizon-bounded causal past
};

// An event is a horizon candidate when the succession of local light cones
// stops there: it is not on the final slice and has no outgoing matched link.
// The bounded region is its matched-link past minus the past of the final
// slice.
inline std::vector<HorizonReport> detect_horizon_events(const MoveNetwork& net) {
    std::map<std::string, int> step;
    for (const auto& n : net.nodes) step[n.id] = n.step;
    int max_step = 0;
    for (const auto& n : net.nodes) max_step = std::max(max_step, n.step);

    std::map<std::string, std::vector<std::string>> matched_out, matched_in;
    for (const auto& l : net.links) {
        if (!step.count(l.from)) throw UnknownNodeError("'" + l.from + "'");
        if (!step.count(l.to)) throw UnknownNodeError("'" + l.to + "'");
        if (l.matched) {
            matched_out[l.from].push_back(l.to);
            matched_in[l.to].push_back(l.from);
        }
    }
    auto matched_past = [&](const std::vector<std::string>& seeds) {
        std::set<std::string> seen(seeds.begin(), seeds.end());
        std::vector<std::string> stack(seeds.begin(), seeds.end());
        while (!stack.empty()) {
            std::string cur = stack.back();
            stack.pop_back();
            for (const auto& p : matched_in[cur])
                if (seen.insert(p).second) stack.push_back(p);
        }
        return seen;
    };

    std::vector<std::string> final_slice;
    for (const auto& n : net.nodes)
        if (n.step == max_step) final_slice.push_back(n.id);
    std::set<std::string> reaches_infinity = matched_past(final_slice);

    std::vector<HorizonReport> out;
    for (const auto& n : net.nodes) {
        if (n.step == max_step) continue;
        if (!matched_out[n.id].empty()) continue;
        HorizonReport rep;
        rep.event = n.id;
        for (const auto& p : matched_past({n.id}))
            if (!reaches_infinity.count(p)) rep.region.push_back(p);
        std::sort(rep.region.begin(), rep.region.end());
        out.push_back(std::move(rep));
    }
    std::sort(out.begin(), out.end(),
              [](const HorizonReport& a, const HorizonReport& b) { return a.event < b.event; });
    return out;
}

}  // namespace qch
