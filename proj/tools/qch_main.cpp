// qch — quantum causal histories as tensor networks.
//
// Subcommands: validate | choi | kraus | mps | amplitude | sum | glue |
// holomap | evolve | lightcone | horizon | superstate | export-dot | pipeline.
// Exit codes: 0 success, 2 schema error, 3 numerical-invariant failure,
// 4 model error. QCH_TOL overrides the default tolerance.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "qch/qch.hpp"

namespace {

using nlohmann::json;
using namespace qch;

struct GlobalOpts {
    double tol = kDefaultTol;
    Eigen::Index cap = kDefaultDenseCap;
    bool force = false;
};

void write_output(const std::string& path, const std::string& text, bool force,
                  std::vector<std::string>* outputs) {
    if (!force && std::filesystem::exists(path))
        throw Error(ErrorCategory::model,
                    "refusing to overwrite '" + path + "' (use --force)");
    std::ofstream out(path);
    if (!out) throw Error(ErrorCategory::model, "cannot write '" + path + "'");
    out << text;
    if (outputs) outputs->push_back(path);
}

void emit(const json& j, const json& args, const GlobalOpts& g,
          std::vector<std::string>* outputs) {
    std::string text = j.dump(2) + "\n";
    if (args.contains("output"))
        write_output(args["output"].get<std::string>(), text, g.force, outputs);
    else
        std::cout << text;
}

Vector load_state(const std::string& path) {
    json j = io::load_json_file(path);
    if (j.is_array()) return io::parse_vector(j, path);
    if (j.contains("amplitudes")) return io::parse_vector(j["amplitudes"], path + "/amplitudes");
    throw SchemaError(path, "expected a state vector (array or {\"amplitudes\": ...})");
}

json state_json(const StateVector& s) {
    return json{{"amplitudes", io::dump_vector(s.amplitudes)},
                {"dim", s.amplitudes.size()},
                {"normalized", s.normalized}};
}

// --- command handlers (shared by the CLI and the pipeline runner) -----------

json cmd_validate(const json& args, const GlobalOpts& g, std::vector<std::string>* outputs) {
    json j = io::load_json_file(args.at("input").get<std::string>());
    Causet c = io::parse_causet(j);
    json out{{"events", c.size()}};
    std::size_t nrel = 0;
    for (const Event& a : c.events())
        for (const Event& b : c.events())
            if (!(a == b) && c.leq(a, b)) ++nrel;
    out["relations_closed"] = nrel;
    out["covers"] = c.covers().size();
    if (args.contains("dot"))
        write_output(args["dot"].get<std::string>(), io::export_dot(c), g.force, outputs);
    return out;
}

json cmd_choi(const json& args, const GlobalOpts& g, std::vector<std::string>*) {
    json j = io::load_json_file(args.at("input").get<std::string>());
    KrausChannel ch = io::parse_channel(j);
    CptpReport rep = verify_cptp(ch, g.tol);
    if (!rep.cp || !rep.tp)
        throw Error(ErrorCategory::numeric,
                    "channel is not CPTP (max violation " + std::to_string(rep.max_violation) + ")");
    return io::dump_choi(choi_of_channel(ch));
}

json cmd_kraus(const json& args, const GlobalOpts& g, std::vector<std::string>*) {
    json j = io::load_json_file(args.at("input").get<std::string>());
    ChoiMatrix choi = io::parse_choi(j);
    return io::dump_channel(channel_of_choi(choi, g.tol));
}

json cmd_mps_build(const json& args, const GlobalOpts& g, std::vector<std::string>* outputs) {
    HistorySpec spec = io::parse_history(io::load_json_file(args.at("input").get<std::string>()));
    HistoryMPS mps = assemble_history_mps(spec, g.tol);
    json ranks = json::array();
    for (const auto& b : mps.bonds) ranks.push_back(b.choi_rank);
    json dims = json::array();
    for (auto d : mps.physical_dims()) dims.push_back(d);
    json out{{"bond_ranks", std::move(ranks)},
             {"physical_dims", std::move(dims)},
             {"sites", mps.length()}};
    if (args.contains("dot"))
        write_output(args["dot"].get<std::string>(), io::export_dot(mps), g.force, outputs);
    return out;
}

json cmd_mps_contract(const json& args, const GlobalOpts& g, std::vector<std::string>*) {
    HistorySpec spec = io::parse_history(io::load_json_file(args.at("input").get<std::string>()));
    HistoryMPS mps = assemble_history_mps(spec, g.tol);
    return state_json(contract_dense(mps, g.cap));
}

json cmd_mps_weight(const json& args, const GlobalOpts& g, std::vector<std::string>*) {
    HistorySpec spec = io::parse_history(io::load_json_file(args.at("input").get<std::string>()));
    return json{{"weight", history_weight(assemble_history_mps(spec, g.tol))}};
}

json cmd_amplitude(const json& args, const GlobalOpts& g, std::vector<std::string>*) {
    HistorySpec spec = io::parse_history(io::load_json_file(args.at("input").get<std::string>()));
    Vector psi1 = load_state(args.at("first").get<std::string>());
    Vector psin = load_state(args.at("last").get<std::string>());
    Cx a = transition_amplitude(spec.channels, psi1, psin, g.tol,
                                args.value("principal", false));
    return json{{"amplitude", io::dump_complex(a)}};
}

json cmd_sum(const json& args, const GlobalOpts& g, std::vector<std::string>*) {
    json j = io::load_json_file(args.at("input").get<std::string>());
    const json& hs = io::expect(j, "histories", "");
    std::vector<HistoryTerm> terms;
    for (std::size_t i = 0; i < hs.size(); ++i) {
        std::string hp = "/histories/" + std::to_string(i);
        HistoryTerm t;
        HistorySpec spec = io::parse_history(io::expect(hs[i], "history", hp), hp + "/history");
        t.mps = assemble_history_mps(spec, g.tol);
        t.channels = spec.channels;
        t.psi_first = io::parse_vector(io::expect(hs[i], "psi_first", hp), hp + "/psi_first");
        t.psi_last = io::parse_vector(io::expect(hs[i], "psi_last", hp), hp + "/psi_last");
        terms.push_back(std::move(t));
    }
    Cx a = weighted_sum_amplitude(terms, g.tol);
    return json{{"amplitude", io::dump_complex(a)}, {"terms", terms.size()}};
}

json cmd_correlate(const json& args, const GlobalOpts& g, std::vector<std::string>*) {
    HistorySpec spec = io::parse_history(io::load_json_file(args.at("input").get<std::string>()));
    HistoryMPS mps = assemble_history_mps(spec, g.tol);
    json ops_j = io::load_json_file(args.at("ops").get<std::string>());
    std::map<std::size_t, Matrix> ops;
    for (std::size_t i = 0; i < ops_j.size(); ++i) {
        std::string op = "/" + std::to_string(i);
        std::size_t site = io::expect(ops_j[i], "site", op).get<std::size_t>();
        if (site == 0) throw SchemaError(op + "/site", "sites are 1-based");
        ops[site - 1] = io::parse_matrix(io::expect(ops_j[i], "matrix", op), op + "/matrix");
    }
    return json{{"value", io::dump_complex(correlation_function(mps, ops))}};
}

json cmd_glue(const json& args, const GlobalOpts& g, std::vector<std::string>* outputs) {
    io::GlueSpec gs = io::parse_glue(io::load_json_file(args.at("input").get<std::string>()));
    GluedNetwork net = glue_history_networks(assemble_history_mps(gs.h1, g.tol),
                                             assemble_history_mps(gs.h2, g.tol), gs.rung_pairs,
                                             gs.rung_states);
    StateVector dense = contract_dense(net, g.cap);
    json out{{"dim", dense.amplitudes.size()},
             {"rungs", net.rungs.size()},
             {"rung_cut_entropy", rung_cut_entropy(net, dense)},
             {"rung_cut_schmidt_rank", rung_cut_schmidt_rank(net, dense, g.tol)}};
    if (args.value("check", false) && !net.rungs.empty()) {
        std::vector<Eigen::Index> family(net.rungs.size(), 0);
        out["branch1_recovery_residual"] = branch_recovery_residual(net, 1, family, g.cap);
        out["branch2_recovery_residual"] = branch_recovery_residual(net, 2, family, g.cap);
    }
    if (args.contains("state"))
        write_output(args["state"].get<std::string>(), state_json(dense).dump(2) + "\n", g.force,
                     outputs);
    if (args.contains("dot"))
        write_output(args["dot"].get<std::string>(), io::export_dot(net), g.force, outputs);
    return out;
}

json cmd_holomap(const json& args, const GlobalOpts& g, std::vector<std::string>*) {
    io::BranchedSpec bs =
        io::parse_branched(io::load_json_file(args.at("input").get<std::string>()));
    std::size_t site = args.at("site").get<std::size_t>();
    if (site == 0) throw SchemaError("/site", "sites are 1-based");
    HoloResult res = holographic_coarse_grain(bs.network, site - 1,
                                              args.value("branch", std::size_t(0)), g.tol);
    json bulk = json::array();
    for (const auto& s : res.bulk_states) bulk.push_back(io::dump_vector(s.amplitudes));
    return json{{"bulk_states", std::move(bulk)},
                {"chain_sites", res.chain.length()},
                {"remaining_branches", res.remaining.branches.size()}};
}

json cmd_evolve(const json& args, const GlobalOpts& g, std::vector<std::string>* outputs) {
    Scenario sc = io::parse_scenario(io::load_json_file(args.at("input").get<std::string>()));
    std::vector<TrajectoryStep> traj = propagate_from_initial(sc, g.tol);
    std::ostringstream log;
    for (std::size_t n = 0; n < traj.size(); ++n) {
        const auto& st = traj[n].state;
        json line{{"step", st.step},
                  {"norm", st.physical_state.norm()},
                  {"move", move_kind_name(traj[n].record.kind)},
                  {"unitary_flag", traj[n].record.unitary_flag},
                  {"nodes", st.graph.nodes.size()}};
        json comms = json::array();
        for (const auto& [o1, o2] : sc.probes) {
            LightconeResult lr = lightcone_radius({traj[n]}, o1, o2, g.tol);
            comms.push_back(lr.expectations.empty() ? 0.0 : lr.expectations[0]);
        }
        line["commutator_expectations"] = std::move(comms);
        log << line.dump() << "\n";
    }
    if (args.contains("log"))
        write_output(args["log"].get<std::string>(), log.str(), g.force, outputs);
    else
        std::cout << log.str();
    const auto& fin = traj.back().state;
    return json{{"final_norm", fin.physical_state.norm()},
                {"final_state", io::dump_vector(fin.physical_state)},
                {"graph", io::dump_graph(fin.graph)},
                {"steps", traj.size() - 1}};
}

json cmd_lightcone(const json& args, const GlobalOpts& g, std::vector<std::string>*) {
    Scenario sc = io::parse_scenario(io::load_json_file(args.at("input").get<std::string>()));
    if (sc.probes.empty()) throw SchemaError("/probes", "scenario declares no probes");
    std::size_t probe = args.value("probe", std::size_t(1));
    if (probe == 0 || probe > sc.probes.size())
        throw SchemaError("/probes", "probe index out of range (1-based)");
    std::vector<TrajectoryStep> traj = propagate_from_initial(sc, g.tol);
    double lc_tol = args.value("lc_tol", 1e-6);
    LightconeResult res =
        lightcone_radius(traj, sc.probes[probe - 1].first, sc.probes[probe - 1].second, lc_tol);
    json exps = json::array();
    for (double e : res.expectations) exps.push_back(e);
    json out{{"bounded", res.bounded}, {"expectations", std::move(exps)}};
    if (res.bounded) out["radius"] = res.radius;
    return out;
}

json cmd_horizon(const json& args, const GlobalOpts&, std::vector<std::string>*) {
    MoveNetwork net = io::parse_movenet(io::load_json_file(args.at("input").get<std::string>()));
    json hs = json::array();
    for (const auto& h : detect_horizon_events(net)) {
        json region = json::array();
        for (const auto& r : h.region) region.push_back(r);
        hs.push_back(json{{"event", h.event}, {"region", std::move(region)}});
    }
    return json{{"horizons", std::move(hs)}};
}

json cmd_superstate_build(const json& args, const GlobalOpts& g, std::vector<std::string>*) {
    HistorySpec spec = io::parse_history(io::load_json_file(args.at("input").get<std::string>()));
    return state_json(build_superstate(spec, g.tol));
}

json cmd_superstate_density(const json& args, const GlobalOpts& g, std::vector<std::string>*) {
    HistorySpec spec = io::parse_history(io::load_json_file(args.at("input").get<std::string>()));
    SuperdensityOperator rho = build_superdensity(spec, {}, std::nullopt, g.tol);
    json dims = json::array();
    for (auto d : rho.step_dims) dims.push_back(d);
    return json{{"matrix", io::dump_matrix(rho.matrix)}, {"step_dims", std::move(dims)}};
}

json cmd_superstate_entropy(const json& args, const GlobalOpts& g, std::vector<std::string>*) {
    HistorySpec spec = io::parse_history(io::load_json_file(args.at("input").get<std::string>()));
    SuperdensityOperator rho = build_superdensity(spec, {}, std::nullopt, g.tol);
    std::vector<std::size_t> steps;
    if (args.contains("steps")) {
        for (const auto& s : args["steps"]) {
            std::size_t v = s.get<std::size_t>();
            if (v == 0) throw SchemaError("/steps", "steps are 1-based");
            steps.push_back(v - 1);
        }
    } else {
        for (std::size_t s = 0; s < rho.step_dims.size(); ++s) steps.push_back(s);
    }
    double nats = spacetime_entropy(rho, steps);
    return json{{"bits", entropy_bits(nats)}, {"nats", nats}};
}

json cmd_export_dot(const json& args, const GlobalOpts& g, std::vector<std::string>* outputs) {
    io::ParsedSpec spec = io::parse_spec_file(args.at("input").get<std::string>());
    std::string dot;
    if (std::holds_alternative<Causet>(spec)) {
        dot = io::export_dot(std::get<Causet>(spec));
    } else if (std::holds_alternative<HistorySpec>(spec)) {
        dot = io::export_dot(assemble_history_mps(std::get<HistorySpec>(spec), g.tol));
    } else if (std::holds_alternative<io::GlueSpec>(spec)) {
        const auto& gs = std::get<io::GlueSpec>(spec);
        dot = io::export_dot(glue_history_networks(assemble_history_mps(gs.h1, g.tol),
                                                   assemble_history_mps(gs.h2, g.tol),
                                                   gs.rung_pairs, gs.rung_states));
    } else if (std::holds_alternative<MoveNetwork>(spec)) {
        dot = io::export_dot(std::get<MoveNetwork>(spec));
    } else {
        throw SchemaError("", "no DOT rendering for this spec type");
    }
    if (args.contains("output"))
        write_output(args["output"].get<std::string>(), dot, g.force, outputs);
    else
        std::cout << dot;
    return json();
}

using Handler = json (*)(const json&, const GlobalOpts&, std::vector<std::string>*);

const std::map<std::string, Handler>& handlers() {
    static const std::map<std::string, Handler> h = {
        {"validate", cmd_validate},
        {"choi", cmd_choi},
        {"kraus", cmd_kraus},
        {"mps-build", cmd_mps_build},
        {"mps-contract", cmd_mps_contract},
        {"mps-weight", cmd_mps_weight},
        {"amplitude", cmd_amplitude},
        {"sum", cmd_sum},
        {"correlate", cmd_correlate},
        {"glue", cmd_glue},
        {"holomap", cmd_holomap},
        {"evolve", cmd_evolve},
        {"lightcone", cmd_lightcone},
        {"horizon", cmd_horizon},
        {"superstate-build", cmd_superstate_build},
        {"superstate-density", cmd_superstate_density},
        {"superstate-entropy", cmd_superstate_entropy},
        {"export-dot", cmd_export_dot},
    };
    return h;
}

json cmd_pipeline(const json& args, const GlobalOpts& g, std::vector<std::string>*) {
    json j = io::load_json_file(args.at("input").get<std::string>());
    io::PipelineSpec spec = io::parse_pipeline(j);
    bool keep_going = args.value("keep_going", false);
    auto exec = [&](const io::PipelineStep& st, const io::PipelineSpec& ps) {
        io::StepResult res;
        auto it = handlers().find(st.command);
        if (it == handlers().end())
            throw SchemaError("/steps", "unknown pipeline command '" + st.command + "'");
        GlobalOpts local = g;
        local.tol = ps.tol;
        local.cap = ps.cap;
        local.force = ps.overwrite;
        json out = it->second(st.args, local, &res.outputs);
        if (st.args.contains("output") && !out.is_null()) {
            write_output(st.args["output"].get<std::string>(), out.dump(2) + "\n", local.force,
                         &res.outputs);
        }
        res.message = "done";
        return res;
    };
    return io::run_pipeline(spec, exec, keep_going);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"quantum causal histories as tensor networks"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand

    GlobalOpts global;
    if (const char* env = std::getenv("QCH_TOL")) global.tol = std::atof(env);
    app.add_option("--tol", global.tol, "numerical tolerance")->capture_default_str();
    app.add_option("--cap", global.cap, "dense-contraction size cap")->capture_default_str();
    app.add_flag("--force", global.force, "allow overwriting output files");

    // every leaf command collects its args into a json object and dispatches
    json args;
    std::string run_command;
    auto leaf = [&](CLI::App* cmd, const std::string& name) {
        cmd->callback([&, name]() { run_command = name; });
        return cmd;
    };
    auto add_input = [&](CLI::App* cmd) {
        auto* opt = cmd->add_option_function<std::string>(
            "input", [&](const std::string& v) { args["input"] = v; }, "input JSON file");
        opt->required();
        return cmd;
    };
    auto add_output = [&](CLI::App* cmd) {
        cmd->add_option_function<std::string>(
            "-o,--output", [&](const std::string& v) { args["output"] = v; }, "output file");
        return cmd;
    };
    auto add_dot = [&](CLI::App* cmd) {
        cmd->add_option_function<std::string>(
            "--dot", [&](const std::string& v) { args["dot"] = v; }, "DOT export file");
        return cmd;
    };

    add_dot(add_output(add_input(leaf(app.add_subcommand("validate", "validate a causet file"),
                                      "validate"))));
    add_output(add_input(leaf(app.add_subcommand("choi", "Kraus channel -> Choi matrix"), "choi")));
    add_output(add_input(leaf(app.add_subcommand("kraus", "Choi matrix -> Kraus channel"), "kraus")));

    auto* mps = app.add_subcommand("mps", "history tensor networks");
    mps->require_subcommand(1);
    add_dot(add_output(add_input(leaf(mps->add_subcommand("build", "assemble and report"),
                                      "mps-build"))));
    add_output(add_input(leaf(mps->add_subcommand("contract", "dense state"), "mps-contract")));
    add_output(add_input(leaf(mps->add_subcommand("weight", "history weight"), "mps-weight")));
    {
        auto* c = add_output(add_input(leaf(mps->add_subcommand("amplitude", "transition amplitude"),
                                            "amplitude")));
        c->add_option_function<std::string>(
             "--first", [&](const std::string& v) { args["first"] = v; }, "initial state file")
            ->required();
        c->add_option_function<std::string>(
             "--last", [&](const std::string& v) { args["last"] = v; }, "final state file")
            ->required();
        c->add_flag_function("--principal",
                             [&](std::int64_t) { args["principal"] = true; },
                             "allow rank>1 channels via the principal Choi component");
    }
    {
        auto* c = add_output(add_input(leaf(mps->add_subcommand("correlate", "correlation function"),
                                            "correlate")));
        c->add_option_function<std::string>(
             "--ops", [&](const std::string& v) { args["ops"] = v; }, "site-operator JSON file")
            ->required();
    }
    {
        auto* c = add_output(add_input(leaf(mps->add_subcommand("glue", "glue two histories"),
                                            "glue")));
        add_dot(c);
        c->add_flag_function("--check",
                             [&](std::int64_t) { args["check"] = true; },
                             "report branch recovery residuals");
        c->add_option_function<std::string>(
            "--state", [&](const std::string& v) { args["state"] = v; }, "dense state output file");
    }
    {
        auto* c = add_output(add_input(leaf(mps->add_subcommand("holomap", "holographic map"),
                                            "holomap")));
        c->add_option_function<std::size_t>(
             "--site", [&](std::size_t v) { args["site"] = v; }, "event site (1-based)")
            ->required();
        c->add_option_function<std::size_t>(
            "--branch", [&](std::size_t v) { args["branch"] = v; }, "branch index (0-based)");
    }

    // top-level aliases
    {
        auto* c = add_output(add_input(leaf(app.add_subcommand("amplitude", "transition amplitude"),
                                            "amplitude")));
        c->add_option_function<std::string>(
             "--first", [&](const std::string& v) { args["first"] = v; }, "initial state file")
            ->required();
        c->add_option_function<std::string>(
             "--last", [&](const std::string& v) { args["last"] = v; }, "final state file")
            ->required();
        c->add_flag_function("--principal",
                             [&](std::int64_t) { args["principal"] = true; },
                             "allow rank>1 channels via the principal Choi component");
    }
    add_output(add_input(leaf(app.add_subcommand("sum", "weighted sum over histories"), "sum")));
    {
        auto* c = add_output(add_input(leaf(app.add_subcommand("glue", "glue two histories"),
                                            "glue")));
        add_dot(c);
        c->add_flag_function("--check",
                             [&](std::int64_t) { args["check"] = true; },
                             "report branch recovery residuals");
        c->add_option_function<std::string>(
            "--state", [&](const std::string& v) { args["state"] = v; }, "dense state output file");
    }
    {
        auto* c = add_output(add_input(leaf(app.add_subcommand("holomap", "holographic map"),
                                            "holomap")));
        c->add_option_function<std::size_t>(
             "--site", [&](std::size_t v) { args["site"] = v; }, "event site (1-based)")
            ->required();
        c->add_option_function<std::size_t>(
            "--branch", [&](std::size_t v) { args["branch"] = v; }, "branch index (0-based)");
    }
    {
        auto* c = add_output(add_input(leaf(app.add_subcommand("evolve", "run a scenario"),
                                            "evolve")));
        c->add_option_function<std::string>(
            "--log", [&](const std::string& v) { args["log"] = v; }, "per-step JSONL log file");
    }
    {
        auto* c = add_output(add_input(leaf(app.add_subcommand("lightcone", "light-cone radius"),
                                            "lightcone")));
        c->add_option_function<std::size_t>(
            "--probe", [&](std::size_t v) { args["probe"] = v; }, "probe index (1-based)");
        c->add_option_function<double>(
            "--lc-tol", [&](double v) { args["lc_tol"] = v; }, "expectation threshold");
    }
    add_output(add_input(leaf(app.add_subcommand("horizon", "detect horizon events"), "horizon")));

    auto* super = app.add_subcommand("superstate", "superstates and spacetime entropy");
    super->require_subcommand(1);
    add_output(add_input(leaf(super->add_subcommand("build", "normalized superstate"),
                              "superstate-build")));
    add_output(add_input(leaf(super->add_subcommand("density", "superdensity operator"),
                              "superstate-density")));
    {
        auto* c = add_output(add_input(leaf(super->add_subcommand("entropy", "spacetime entropy"),
                                            "superstate-entropy")));
        c->add_option_function<std::vector<std::size_t>>(
            "--steps", [&](const std::vector<std::size_t>& v) { args["steps"] = v; },
            "steps to keep (1-based; default all)");
    }

    add_output(add_input(leaf(app.add_subcommand("export-dot", "render a spec as DOT"),
                              "export-dot")));
    {
        auto* c = add_output(add_input(leaf(app.add_subcommand("pipeline", "run a pipeline spec"),
                                            "pipeline")));
        c->add_flag_function("--keep-going",
                             [&](std::int64_t) { args["keep_going"] = true; },
                             "continue past failing steps");
    }

    CLI11_PARSE(app, argc, argv);

    try {
        json out;
        if (run_command == "pipeline") {
            out = cmd_pipeline(args, global, nullptr);
            json emit_args = args;
            emit(out, emit_args, global, nullptr);
            return out.value("failed", false) ? 1 : 0;
        }
        auto it = handlers().find(run_command);
        if (it == handlers().end()) {
            std::cerr << "unknown command\n";
            return 1;
        }
        std::vector<std::string> outputs;
        out = it->second(args, global, &outputs);
        if (!out.is_null()) emit(out, args, global, &outputs);
        return 0;
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
