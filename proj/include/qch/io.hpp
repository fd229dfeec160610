#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "qch/causet.hpp"
#include "qch/channels.hpp"
#include "qch/discretization.hpp"
#include "qch/errors.hpp"
#include "qch/history_mps.hpp"
#include "qch/linalg.hpp"

// File formats and exports. Complex numbers are [re, im] pairs, matrices are
// row-major nested arrays, all JSON keys canonical (alphabetical), so
// serialize -> parse round trips are bit-exact. Sites and steps are 1-based
// in files and messages, 0-based in code.

namespace qch::io {

using json = nlohmann::json;

// --- low-level readers (JSON-pointer error locations) ------------------------

inline const json& expect(const json& j, const char* key, const std::string& ptr) {
    if (!j.is_object()) throw SchemaError(ptr, "expected an object");
    auto it = j.find(key);
    if (it == j.end()) throw SchemaError(ptr + "/" + key, "missing field");
    return *it;
}

inline Cx parse_complex(const json& j, const std::string& ptr) {
    if (j.is_number()) return Cx(j.get<double>(), 0.0);
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        throw SchemaError(ptr, "complex numbers are [re, im]");
    return Cx(j[0].get<double>(), j[1].get<double>());
}

inline Vector parse_vector(const json& j, const std::string& ptr) {
    if (!j.is_array()) throw SchemaError(ptr, "expected an array of complex entries");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i)
        v(static_cast<Eigen::Index>(i)) = parse_complex(j[i], ptr + "/" + std::to_string(i));
    return v;
}

inline Matrix parse_matrix(const json& j, const std::string& ptr) {
    if (!j.is_array() || j.empty()) throw SchemaError(ptr, "expected a non-empty array of rows");
    std::size_t cols = 0;
    Matrix m;
    for (std::size_t r = 0; r < j.size(); ++r) {
        std::string rp = ptr + "/" + std::to_string(r);
        if (!j[r].is_array()) throw SchemaError(rp, "expected a row array");
        if (r == 0) {
            cols = j[r].size();
            if (cols == 0) throw SchemaError(rp, "empty row");
            m = Matrix(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
        } else if (j[r].size() != cols) {
            throw SchemaError(rp, "ragged matrix row (expected " + std::to_string(cols) +
                                      " entries)");
        }
        for (std::size_t c = 0; c < cols; ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                parse_complex(j[r][c], rp + "/" + std::to_string(c));
    }
    return m;
}

inline Tensor3 parse_tensor3(const json& j, const std::string& ptr) {
    if (!j.is_array() || j.empty()) throw SchemaError(ptr, "expected a rank-3 nested array");
    std::size_t d1 = 0, d2 = 0;
    Tensor3 t;
    for (std::size_t i = 0; i < j.size(); ++i) {
        std::string ip = ptr + "/" + std::to_string(i);
        if (!j[i].is_array() || j[i].empty()) throw SchemaError(ip, "expected a nested array");
        if (i == 0) {
            d1 = j[i].size();
            if (!j[i][0].is_array() || j[i][0].empty())
                throw SchemaError(ip + "/0", "expected a nested array");
            d2 = j[i][0].size();
            t = Tensor3(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(d1),
                        static_cast<Eigen::Index>(d2));
        } else if (j[i].size() != d1) {
            throw SchemaError(ip, "ragged tensor");
        }
        for (std::size_t a = 0; a < d1; ++a) {
            std::string ap = ip + "/" + std::to_string(a);
            if (!j[i][a].is_array() || j[i][a].size() != d2) throw SchemaError(ap, "ragged tensor");
            for (std::size_t b = 0; b < d2; ++b)
                t(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a),
                  static_cast<Eigen::Index>(b)) =
                    parse_complex(j[i][a][b], ap + "/" + std::to_string(b));
        }
    }
    return t;
}

// --- writers --------------------------------------------------------------

inline json dump_complex(const Cx& c) { return json::array({c.real(), c.imag()}); }

inline json dump_vector(const Vector& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(dump_complex(v(i)));
    return out;
}

inline json dump_matrix(const Matrix& m) {
    json out = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(dump_complex(m(r, c)));
        out.push_back(std::move(row));
    }
    return out;
}

inline json dump_tensor3(const Tensor3& t) {
    json out = json::array();
    for (Eigen::Index i = 0; i < t.dim0(); ++i) {
        json plane = json::array();
        for (Eigen::Index a = 0; a < t.dim1(); ++a) {
            json row = json::array();
            for (Eigen::Index b = 0; b < t.dim2(); ++b) row.push_back(dump_complex(t(i, a, b)));
            plane.push_back(std::move(row));
        }
        out.push_back(std::move(plane));
    }
    return out;
}

// --- causets -----------------------------------------------------------------

inline Event parse_event_label(const std::string& s) {
    auto pos = s.rfind('#');
    if (pos == std::string::npos || pos + 1 >= s.size()) return Event{s, 0};
    std::size_t copy = 0;
    for (std::size_t i = pos + 1; i < s.size(); ++i) {
        if (s[i] < '0' || s[i] > '9') return Event{s, 0};
        copy = copy * 10 + static_cast<std::size_t>(s[i] - '0');
    }
    return Event{s.substr(0, pos), copy};
}

inline Causet parse_causet(const json& j, const std::string& ptr = "") {
    const json& ev = expect(j, "events", ptr);
    if (!ev.is_array()) throw SchemaError(ptr + "/events", "expected an array");
    std::vector<Event> events;
    for (std::size_t i = 0; i < ev.size(); ++i) {
        if (!ev[i].is_string())
            throw SchemaError(ptr + "/events/" + std::to_string(i), "event labels are strings");
        events.push_back(parse_event_label(ev[i].get<std::string>()));
    }
    std::vector<std::pair<Event, Event>> pairs;
    const json& rel = expect(j, "relations", ptr);
    if (!rel.is_array()) throw SchemaError(ptr + "/relations", "expected an array");
    for (std::size_t i = 0; i < rel.size(); ++i) {
        std::string rp = ptr + "/relations/" + std::to_string(i);
        if (!rel[i].is_array() || rel[i].size() != 2 || !rel[i][0].is_string() ||
            !rel[i][1].is_string())
            throw SchemaError(rp, "relations are [from, to] label pairs");
        pairs.emplace_back(parse_event_label(rel[i][0].get<std::string>()),
                           parse_event_label(rel[i][1].get<std::string>()));
    }
    try {
        return validate_causet(std::move(events), pairs);
    } catch (const UnknownEventError& e) {
        throw SchemaError(ptr + "/relations", e.what());
    }
}

inline json dump_causet(const Causet& c) {
    json ev = json::array();
    for (const Event& e : c.events()) ev.push_back(e.label());
    json rel = json::array();
    for (auto& [a, b] : c.covers())
        rel.push_back(json::array({c.events()[a].label(), c.events()[b].label()}));
    return json{{"events", std::move(ev)}, {"relations", std::move(rel)}};
}

// --- channels -----------------------------------------------------------------

inline KrausChannel parse_channel(const json& j, const std::string& ptr = "") {
    KrausChannel ch;
    const json& din = expect(j, "dim_in", ptr);
    const json& dout = expect(j, "dim_out", ptr);
    if (!din.is_number_integer() || !dout.is_number_integer())
        throw SchemaError(ptr, "dim_in/dim_out must be integers");
    ch.dim_in = din.get<Eigen::Index>();
    ch.dim_out = dout.get<Eigen::Index>();
    if (ch.dim_in <= 0 || ch.dim_out <= 0) throw SchemaError(ptr, "dims must be positive");
    const json& kr = expect(j, "kraus", ptr);
    if (!kr.is_array() || kr.empty()) throw SchemaError(ptr + "/kraus", "expected operators");
    for (std::size_t k = 0; k < kr.size(); ++k) {
        std::string kp = ptr + "/kraus/" + std::to_string(k);
        Matrix m = parse_matrix(kr[k], kp);
        if (m.rows() != ch.dim_out || m.cols() != ch.dim_in)
            throw SchemaError(kp, "Kraus operator must be dim_out x dim_in (" +
                                      std::to_string(ch.dim_out) + "x" +
                                      std::to_string(ch.dim_in) + ")");
        ch.kraus.push_back(std::move(m));
    }
    return ch;
}

inline json dump_channel(const KrausChannel& ch) {
    json kr = json::array();
    for (const Matrix& k : ch.kraus) kr.push_back(dump_matrix(k));
    return json{{"dim_in", ch.dim_in}, {"dim_out", ch.dim_out}, {"kraus", std::move(kr)}};
}

inline ChoiMatrix parse_choi(const json& j, const std::string& ptr = "") {
    ChoiMatrix c;
    c.dim_in = expect(j, "dim_in", ptr).get<Eigen::Index>();
    c.dim_out = expect(j, "dim_out", ptr).get<Eigen::Index>();
    c.matrix = parse_matrix(expect(j, "choi", ptr), ptr + "/choi");
    if (c.matrix.rows() != c.dim_in * c.dim_out || c.matrix.rows() != c.matrix.cols())
        throw SchemaError(ptr + "/choi", "Choi matrix must be (dim_in*dim_out) square");
    return c;
}

inline json dump_choi(const ChoiMatrix& c) {
    return json{{"choi", dump_matrix(c.matrix)}, {"dim_in", c.dim_in}, {"dim_out", c.dim_out}};
}

// --- histories -----------------------------------------------------------------

inline HistorySpec parse_history(const json& j, const std::string& ptr = "") {
    HistorySpec spec;
    const json& sites = expect(j, "sites", ptr);
    if (!sites.is_array() || sites.empty())
        throw SchemaError(ptr + "/sites", "expected a non-empty site array");
    for (std::size_t s = 0; s < sites.size(); ++s) {
        std::string sp = ptr + "/sites/" + std::to_string(s);
        spec.phys_dims.push_back(expect(sites[s], "dim", sp).get<Eigen::Index>());
        if (spec.phys_dims.back() <= 0) throw SchemaError(sp + "/dim", "dims must be positive");
        if (sites[s].contains("event_state"))
            spec.event_states.push_back(parse_vector(sites[s]["event_state"], sp + "/event_state"));
        else
            spec.event_states.push_back(std::nullopt);
    }
    if (j.contains("channels")) {
        const json& chs = j["channels"];
        if (!chs.is_array()) throw SchemaError(ptr + "/channels", "expected an array");
        for (std::size_t k = 0; k < chs.size(); ++k)
            spec.channels.push_back(parse_channel(chs[k], ptr + "/channels/" + std::to_string(k)));
    }
    if (spec.channels.size() + 1 != spec.phys_dims.size())
        throw SchemaError(ptr + "/channels", "need one channel per causal link (" +
                                                 std::to_string(spec.phys_dims.size() - 1) + ")");
    for (std::size_t l = 0; l + 1 < spec.phys_dims.size(); ++l)
        if (spec.channels[l].dim_in != spec.phys_dims[l] ||
            spec.channels[l].dim_out != spec.phys_dims[l + 1])
            throw SchemaError(ptr + "/channels/" + std::to_string(l),
                              "channel dims disagree with sites " + std::to_string(l + 1) +
                                  " and " + std::to_string(l + 2));
    if (j.contains("projectors")) {
        const json& ms = j["projectors"];
        if (!ms.is_array()) throw SchemaError(ptr + "/projectors", "expected an array");
        for (std::size_t m = 0; m < ms.size(); ++m)
            spec.projectors.push_back(parse_tensor3(ms[m], ptr + "/projectors/" + std::to_string(m)));
    }
    if (j.contains("boundary_first"))
        spec.boundary_first = parse_matrix(j["boundary_first"], ptr + "/boundary_first");
    if (j.contains("boundary_last"))
        spec.boundary_last = parse_matrix(j["boundary_last"], ptr + "/boundary_last");
    return spec;
}

inline json dump_history(const HistorySpec& spec) {
    json sites = json::array();
    for (std::size_t s = 0; s < spec.phys_dims.size(); ++s) {
        json site{{"dim", spec.phys_dims[s]}};
        if (s < spec.event_states.size() && spec.event_states[s])
            site["event_state"] = dump_vector(*spec.event_states[s]);
        sites.push_back(std::move(site));
    }
    json out{{"sites", std::move(sites)}};
    json chs = json::array();
    for (const auto& ch : spec.channels) chs.push_back(dump_channel(ch));
    out["channels"] = std::move(chs);
    if (!spec.projectors.empty()) {
        json ms = json::array();
        for (const auto& m : spec.projectors) ms.push_back(dump_tensor3(m));
        out["projectors"] = std::move(ms);
    }
    if (spec.boundary_first) out["boundary_first"] = dump_matrix(*spec.boundary_first);
    if (spec.boundary_last) out["boundary_last"] = dump_matrix(*spec.boundary_last);
    return out;
}

struct GlueSpec {
    HistorySpec h1, h2;
    std::vector<std::pair<std::size_t, std::size_t>> rung_pairs;  // 0-based
    std::vector<Matrix> rung_states;  // empty entries -> maximal
};

inline GlueSpec parse_glue(const json& j, const std::string& ptr = "") {
    GlueSpec g;
    g.h1 = parse_history(expect(j, "h1", ptr), ptr + "/h1");
    g.h2 = parse_history(expect(j, "h2", ptr), ptr + "/h2");
    const json& rungs = expect(j, "rungs", ptr);
    if (!rungs.is_array()) throw SchemaError(ptr + "/rungs", "expected an array");
    bool any_state = false;
    for (std::size_t r = 0; r < rungs.size(); ++r)
        if (rungs[r].contains("state")) any_state = true;
    for (std::size_t r = 0; r < rungs.size(); ++r) {
        std::string rp = ptr + "/rungs/" + std::to_string(r);
        std::size_t s1 = expect(rungs[r], "site1", rp).get<std::size_t>();
        std::size_t s2 = expect(rungs[r], "site2", rp).get<std::size_t>();
        if (s1 == 0 || s2 == 0) throw SchemaError(rp, "sites are 1-based");
        g.rung_pairs.emplace_back(s1 - 1, s2 - 1);
        if (any_state) {
            if (!rungs[r].contains("state"))
                throw SchemaError(rp, "either all rungs carry states or none");
            g.rung_states.push_back(parse_matrix(rungs[r]["state"], rp + "/state"));
        }
    }
    return g;
}

inline json dump_glue(const GlueSpec& g) {
    json rungs = json::array();
    for (std::size_t r = 0; r < g.rung_pairs.size(); ++r) {
        json entry{{"site1", g.rung_pairs[r].first + 1}, {"site2", g.rung_pairs[r].second + 1}};
        if (r < g.rung_states.size()) entry["state"] = dump_matrix(g.rung_states[r]);
        rungs.push_back(std::move(entry));
    }
    return json{{"h1", dump_history(g.h1)}, {"h2", dump_history(g.h2)}, {"rungs", std::move(rungs)}};
}

struct BranchedSpec {
    BranchedHistory network;
};

inline json dump_branched(const BranchedSpec& b) {
    json branches = json::array();
    for (const auto& at : b.network.branches)
        branches.push_back(json{{"channel", dump_channel(at.channel)},
                                {"site", at.site + 1},
                                {"state", dump_vector(at.source_state)}});
    return json{{"branches", std::move(branches)}, {"trunk", dump_history(b.network.trunk)}};
}

inline BranchedSpec parse_branched(const json& j, const std::string& ptr = "") {
    BranchedSpec b;
    b.network.trunk = parse_history(expect(j, "trunk", ptr), ptr + "/trunk");
    const json& brs = expect(j, "branches", ptr);
    if (!brs.is_array()) throw SchemaError(ptr + "/branches", "expected an array");
    for (std::size_t i = 0; i < brs.size(); ++i) {
        std::string bp = ptr + "/branches/" + std::to_string(i);
        BranchAttachment at;
        std::size_t site = expect(brs[i], "site", bp).get<std::size_t>();
        if (site == 0 || site > b.network.trunk.length())
            throw SchemaError(bp + "/site", "site out of range (1-based)");
        at.site = site - 1;
        at.channel = parse_channel(expect(brs[i], "channel", bp), bp + "/channel");
        at.source_state = parse_vector(expect(brs[i], "state", bp), bp + "/state");
        b.network.branches.push_back(std::move(at));
    }
    return b;
}

// --- discretization scenarios --------------------------------------------------

inline Graph parse_graph(const json& j, const std::string& ptr) {
    Graph g;
    const json& ns = expect(j, "nodes", ptr);
    if (!ns.is_array() || ns.empty()) throw SchemaError(ptr + "/nodes", "expected nodes");
    for (std::size_t i = 0; i < ns.size(); ++i) {
        std::string np = ptr + "/nodes/" + std::to_string(i);
        KinNode n;
        n.id = expect(ns[i], "id", np).get<std::string>();
        n.dim = expect(ns[i], "dim", np).get<Eigen::Index>();
        if (n.dim <= 0) throw SchemaError(np + "/dim", "dims must be positive");
        g.nodes.push_back(std::move(n));
    }
    if (j.contains("edges")) {
        const json& es = j["edges"];
        for (std::size_t i = 0; i < es.size(); ++i) {
            std::string ep = ptr + "/edges/" + std::to_string(i);
            if (!es[i].is_array() || es[i].size() != 2) throw SchemaError(ep, "edges are pairs");
            g.edges.emplace_back(es[i][0].get<std::string>(), es[i][1].get<std::string>());
        }
    }
    return g;
}

inline json dump_graph(const Graph& g) {
    json ns = json::array();
    for (const auto& n : g.nodes) ns.push_back(json{{"dim", n.dim}, {"id", n.id}});
    json es = json::array();
    for (const auto& [a, b] : g.edges) es.push_back(json::array({a, b}));
    return json{{"edges", std::move(es)}, {"nodes", std::move(ns)}};
}

inline std::vector<Matrix> parse_matrix_list(const json& j, const std::string& ptr) {
    std::vector<Matrix> out;
    if (!j.is_array()) throw SchemaError(ptr, "expected an array of matrices");
    for (std::size_t i = 0; i < j.size(); ++i)
        out.push_back(parse_matrix(j[i], ptr + "/" + std::to_string(i)));
    return out;
}

inline EventOperator parse_event_operator(const json& j, const std::string& ptr) {
    EventOperator eo;
    eo.node = expect(j, "node", ptr).get<std::string>();
    eo.op = parse_matrix(expect(j, "matrix", ptr), ptr + "/matrix");
    return eo;
}

inline Scenario parse_scenario(const json& j, const std::string& ptr = "") {
    Scenario sc;
    sc.graph = parse_graph(expect(j, "graph", ptr), ptr + "/graph");
    if (j.contains("constraints"))
        sc.constraints = parse_matrix_list(j["constraints"], ptr + "/constraints");
    sc.initial_kin_state = parse_vector(expect(j, "initial_state", ptr), ptr + "/initial_state");
    if (sc.initial_kin_state.size() != sc.graph.kin_dim())
        throw SchemaError(ptr + "/initial_state",
                          "state dim " + std::to_string(sc.initial_kin_state.size()) +
                              " vs kinematical dim " + std::to_string(sc.graph.kin_dim()));
    if (j.contains("probes")) {
        const json& ps = j["probes"];
        for (std::size_t i = 0; i < ps.size(); ++i) {
            std::string pp = ptr + "/probes/" + std::to_string(i);
            sc.probes.emplace_back(parse_event_operator(expect(ps[i], "o1", pp), pp + "/o1"),
                                   parse_event_operator(expect(ps[i], "o2", pp), pp + "/o2"));
        }
    }
    if (j.contains("moves")) {
        const json& ms = j["moves"];
        for (std::size_t i = 0; i < ms.size(); ++i) {
            std::string mp = ptr + "/moves/" + std::to_string(i);
            MoveOperators mo;
            const json& mv = expect(ms[i], "move", mp);
            std::string kind = expect(mv, "kind", mp + "/move").get<std::string>();
            if (kind == "pachner_2_1")
                mo.graph_move.kind = MoveKind::pachner_2_1;
            else if (kind == "coarse")
                mo.graph_move.kind = MoveKind::coarse;
            else if (kind == "fine")
                mo.graph_move.kind = MoveKind::fine;
            else if (kind == "identity")
                mo.graph_move.kind = MoveKind::identity;
            else
                throw SchemaError(mp + "/move/kind", "unknown move kind '" + kind + "'");
            if (mv.contains("nodes"))
                for (const auto& n : mv["nodes"]) mo.graph_move.nodes.push_back(n.get<std::string>());
            if (mv.contains("added_nodes"))
                for (std::size_t a = 0; a < mv["added_nodes"].size(); ++a) {
                    std::string ap = mp + "/move/added_nodes/" + std::to_string(a);
                    mo.graph_move.added_nodes.push_back(
                        KinNode{expect(mv["added_nodes"][a], "id", ap).get<std::string>(),
                                expect(mv["added_nodes"][a], "dim", ap).get<Eigen::Index>()});
                }
            if (mv.contains("merged_id")) mo.graph_move.merged_id = mv["merged_id"].get<std::string>();
            if (mv.contains("merged_dim")) mo.graph_move.merged_dim = mv["merged_dim"].get<Eigen::Index>();
            if (mv.contains("relabel"))
                for (auto it = mv["relabel"].begin(); it != mv["relabel"].end(); ++it)
                    mo.graph_move.relabel[it.key()] = it.value().get<std::string>();
            if (ms[i].contains("propagator"))
                mo.propagator = parse_matrix(ms[i]["propagator"], mp + "/propagator");
            if (ms[i].contains("added_k"))
                mo.added_k = parse_matrix_list(ms[i]["added_k"], mp + "/added_k");
            if (ms[i].contains("added_k1"))
                mo.added_k1 = parse_matrix_list(ms[i]["added_k1"], mp + "/added_k1");
            if (ms[i].contains("preserved"))
                mo.preserved = parse_matrix_list(ms[i]["preserved"], mp + "/preserved");
            if (ms[i].contains("constraints_next"))
                mo.constraints_next =
                    parse_matrix_list(ms[i]["constraints_next"], mp + "/constraints_next");
            if (ms[i].contains("fills"))
                for (auto it = ms[i]["fills"].begin(); it != ms[i]["fills"].end(); ++it)
                    mo.fill_states[it.key()] = parse_vector(it.value(), mp + "/fills/" + it.key());
            sc.moves.push_back(std::move(mo));
        }
    }
    return sc;
}

inline json dump_matrix_list(const std::vector<Matrix>& ms) {
    json out = json::array();
    for (const Matrix& m : ms) out.push_back(dump_matrix(m));
    return out;
}

inline json dump_scenario(const Scenario& sc) {
    json out{{"graph", dump_graph(sc.graph)},
             {"initial_state", dump_vector(sc.initial_kin_state)}};
    if (!sc.constraints.empty()) out["constraints"] = dump_matrix_list(sc.constraints);
    if (!sc.probes.empty()) {
        json probes = json::array();
        for (const auto& [o1, o2] : sc.probes)
            probes.push_back(json{{"o1", json{{"matrix", dump_matrix(o1.op)}, {"node", o1.node}}},
                                  {"o2", json{{"matrix", dump_matrix(o2.op)}, {"node", o2.node}}}});
        out["probes"] = std::move(probes);
    }
    json moves = json::array();
    for (const auto& mo : sc.moves) {
        json mv{{"kind", move_kind_name(mo.graph_move.kind)}};
        if (!mo.graph_move.nodes.empty()) mv["nodes"] = mo.graph_move.nodes;
        if (!mo.graph_move.added_nodes.empty()) {
            json add = json::array();
            for (const auto& n : mo.graph_move.added_nodes)
                add.push_back(json{{"dim", n.dim}, {"id", n.id}});
            mv["added_nodes"] = std::move(add);
        }
        if (!mo.graph_move.merged_id.empty()) mv["merged_id"] = mo.graph_move.merged_id;
        if (mo.graph_move.merged_dim > 0) mv["merged_dim"] = mo.graph_move.merged_dim;
        if (!mo.graph_move.relabel.empty()) mv["relabel"] = mo.graph_move.relabel;
        json entry{{"move", std::move(mv)}};
        if (mo.propagator) entry["propagator"] = dump_matrix(*mo.propagator);
        if (!mo.added_k.empty()) entry["added_k"] = dump_matrix_list(mo.added_k);
        if (!mo.added_k1.empty()) entry["added_k1"] = dump_matrix_list(mo.added_k1);
        if (!mo.preserved.empty()) entry["preserved"] = dump_matrix_list(mo.preserved);
        if (!mo.constraints_next.empty())
            entry["constraints_next"] = dump_matrix_list(mo.constraints_next);
        if (!mo.fill_states.empty()) {
            json fills = json::object();
            for (const auto& [id, v] : mo.fill_states) fills[id] = dump_vector(v);
            entry["fills"] = std::move(fills);
        }
        moves.push_back(std::move(entry));
    }
    if (!moves.empty()) out["moves"] = std::move(moves);
    return out;
}

inline MoveNetwork parse_movenet(const json& j, const std::string& ptr = "") {
    MoveNetwork net;
    const json& ns = expect(j, "nodes", ptr);
    for (std::size_t i = 0; i < ns.size(); ++i) {
        std::string np = ptr + "/nodes/" + std::to_string(i);
        net.nodes.push_back(MoveNetNode{expect(ns[i], "id", np).get<std::string>(),
                                        expect(ns[i], "step", np).get<int>()});
    }
    const json& ls = expect(j, "links", ptr);
    for (std::size_t i = 0; i < ls.size(); ++i) {
        std::string lp = ptr + "/links/" + std::to_string(i);
        MoveNetLink l;
        l.from = expect(ls[i], "from", lp).get<std::string>();
        l.to = expect(ls[i], "to", lp).get<std::string>();
        l.matched = ls[i].value("matched", true);
        net.links.push_back(std::move(l));
    }
    return net;
}

inline json dump_movenet(const MoveNetwork& net) {
    json ns = json::array();
    for (const auto& n : net.nodes) ns.push_back(json{{"id", n.id}, {"step", n.step}});
    json ls = json::array();
    for (const auto& l : net.links)
        ls.push_back(json{{"from", l.from}, {"matched", l.matched}, {"to", l.to}});
    return json{{"links", std::move(ls)}, {"nodes", std::move(ns)}};
}

// --- typed spec detection ------------------------------------------------------

using ParsedSpec = std::variant<Causet, KrausChannel, ChoiMatrix, HistorySpec, GlueSpec,
                                BranchedSpec, Scenario, MoveNetwork>;

inline json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError(path, "cannot open file");
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw SchemaError(path, std::string("invalid JSON: ") + e.what());
    }
    return j;
}

inline ParsedSpec parse_spec(const json& j) {
    if (j.contains("events")) return parse_causet(j);
    if (j.contains("kraus")) return parse_channel(j);
    if (j.contains("choi")) return parse_choi(j);
    if (j.contains("h1")) return parse_glue(j);
    if (j.contains("trunk")) return parse_branched(j);
    if (j.contains("initial_state")) return parse_scenario(j);
    if (j.contains("links")) return parse_movenet(j);
    if (j.contains("sites")) return parse_history(j);
    throw SchemaError("", "unrecognized spec (no events/kraus/choi/sites/... key)");
}

inline ParsedSpec parse_spec_file(const std::string& path) {
    return parse_spec(load_json_file(path));
}

// --- DOT export ------------------------------------------------------------------

inline std::string dot_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '"' || c == '\\') out.push_back('\\');
        out.push_back(c);
    }
    return out;
}

inline std::string export_dot(const Causet& c) {
    std::ostringstream os;
    os << "digraph causet {\n  rankdir=BT;\n";
    for (const Event& e : c.events())
        os << "  \"" << dot_escape(e.label()) << "\";\n";
    for (auto& [a, b] : c.covers())
        os << "  \"" << dot_escape(c.events()[a].label()) << "\" -> \""
           << dot_escape(c.events()[b].label()) << "\";\n";
    // internal-order copies: dashed, same rank
    std::map<std::string, std::vector<Event>> copies;
    for (const Event& e : c.events())
        if (e.copy_index > 0) copies[e.id].push_back(e);
    for (auto& [id, evs] : copies) {
        if (evs.size() < 2) continue;
        std::sort(evs.begin(), evs.end());
        os << "  { rank=same;";
        for (const Event& e : evs) os << " \"" << dot_escape(e.label()) << "\";";
        os << " }\n";
        for (std::size_t i = 0; i + 1 < evs.size(); ++i)
            os << "  \"" << dot_escape(evs[i].label()) << "\" -> \""
               << dot_escape(evs[i + 1].label()) << "\" [style=dashed, arrowhead=empty];\n";
    }
    os << "}\n";
    return os.str();
}

inline std::string export_dot(const HistoryMPS& mps, const std::string& prefix = "v") {
    std::ostringstream os;
    os << "digraph history {\n  rankdir=LR;\n";
    for (std::size_t l = 0; l < mps.length(); ++l)
        os << "  " << prefix << l + 1 << " [shape=box, label=\"M(" << l + 1 << ") d="
           << mps.nodes[l].dim2() << "\"];\n";
    for (std::size_t l = 0; l + 1 < mps.length(); ++l)
        os << "  " << prefix << l + 1 << " -> " << prefix << l + 2 << " [label=\"E("
           << mps.bonds[l].dim_left << "x" << mps.bonds[l].dim_right
           << (mps.bonds[l].pure() ? "" : ", mixed") << ")\"];\n";
    os << "}\n";
    return os.str();
}

inline std::string export_dot(const GluedNetwork& g) {
    std::ostringstream os;
    os << "digraph glued {\n  rankdir=LR;\n";
    auto chain = [&](const HistoryMPS& h, const std::string& p) {
        for (std::size_t l = 0; l < h.length(); ++l)
            os << "  " << p << l + 1 << " [shape=box, label=\"" << p << " M(" << l + 1
               << ")\"];\n";
        for (std::size_t l = 0; l + 1 < h.length(); ++l)
            os << "  " << p << l + 1 << " -> " << p << l + 2 << ";\n";
    };
    chain(g.h1, "a");
    chain(g.h2, "b");
    for (std::size_t r = 0; r < g.rungs.size(); ++r)
        os << "  a" << g.rungs[r].site1 + 1 << " -> b" << g.rungs[r].site2 + 1
           << " [style=dashed, dir=none, label=\"xi" << r + 1 << "\"];\n";
    os << "}\n";
    return os.str();
}

inline std::string export_dot(const MoveNetwork& net) {
    std::ostringstream os;
    os << "digraph moves {\n  rankdir=LR;\n";
    std::map<int, std::vector<std::string>> slices;
    for (const auto& n : net.nodes) slices[n.step].push_back(n.id);
    for (auto& [step, ids] : slices) {
        os << "  { rank=same;";
        for (const auto& id : ids) os << " \"" << dot_escape(id) << "\";";
        os << " }\n";
    }
    for (const auto& l : net.links)
        os << "  \"" << dot_escape(l.from) << "\" -> \"" << dot_escape(l.to) << "\""
           << (l.matched ? "" : " [style=dashed, label=\"broken\"]") << ";\n";
    os << "}\n";
    return os.str();
}

// --- pipeline ----------------------------------------------------------------

struct PipelineStep {
    std::string command;
    json args;
};

struct PipelineSpec {
    double tol = kDefaultTol;
    Eigen::Index cap = kDefaultDenseCap;
    std::uint64_t seed = 0;
    bool overwrite = false;
    std::vector<PipelineStep> steps;
};

inline PipelineSpec parse_pipeline(const json& j, const std::string& ptr = "") {
    PipelineSpec p;
    p.tol = j.value("tol", kDefaultTol);
    p.cap = j.value("cap", kDefaultDenseCap);
    p.seed = j.value("seed", std::uint64_t(0));
    p.overwrite = j.value("overwrite", false);
    const json& steps = expect(j, "steps", ptr);
    if (!steps.is_array()) throw SchemaError(ptr + "/steps", "expected an array");
    for (std::size_t i = 0; i < steps.size(); ++i) {
        std::string sp = ptr + "/steps/" + std::to_string(i);
        PipelineStep st;
        st.command = expect(steps[i], "command", sp).get<std::string>();
        st.args = steps[i].value("args", json::object());
        p.steps.push_back(std::move(st));
    }
    return p;
}

inline std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string file_checksum(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return "missing";
    std::ostringstream ss;
    ss << in.rdbuf();
    std::ostringstream hex;
    hex << std::hex << fnv1a(ss.str());
    return hex.str();
}

struct StepResult {
    bool ok = true;
    std::string message;
    std::vector<std::string> outputs;  // files written
};

// Executes steps in order through the supplied command executor; stops at the
// first failure unless keep_going.
inline json run_pipeline(const PipelineSpec& spec,
                         const std::function<StepResult(const PipelineStep&, const PipelineSpec&)>& exec,
                         bool keep_going = false) {
    json report = json::array();
    bool failed = false;
    for (std::size_t i = 0; i < spec.steps.size(); ++i) {
        const auto& st = spec.steps[i];
        json entry{{"command", st.command}, {"step", i}};
        auto t0 = std::chrono::steady_clock::now();
        StepResult res;
        try {
            res = exec(st, spec);
        } catch (const Error& e) {
            res.ok = false;
            res.message = e.what();
        } catch (const std::exception& e) {
            res.ok = false;
            res.message = e.what();
        }
        auto t1 = std::chrono::steady_clock::now();
        entry["wall_ms"] = std::chrono::duration<double, std::milli>(t1 - t0).count();
        entry["ok"] = res.ok;
        if (!res.message.empty()) entry["message"] = res.message;
        json outs = json::array();
        for (const auto& path : res.outputs)
            outs.push_back(json{{"checksum", file_checksum(path)}, {"path", path}});
        entry["outputs"] = std::move(outs);
        report.push_back(std::move(entry));
        if (!res.ok) {
            failed = true;
            if (!keep_going) break;
        }
    }
    return json{{"failed", failed}, {"steps", std::move(report)}};
}

}  // namespace qch::io
