#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>

#include "qch/causet.hpp"
#include "qch/random.hpp"
#include "support/oracles.hpp"

using namespace qch;

namespace {

Event ev(const std::string& id, std::size_t copy = 0) { return Event{id, copy}; }

// the worked causet: r below q1..q4 below p1..p3
std::pair<std::vector<Event>, std::vector<std::pair<Event, Event>>> diamond_fixture() {
    std::vector<Event> events = {ev("r"),  ev("q1"), ev("q2"), ev("q3"),
                                 ev("q4"), ev("p1"), ev("p2"), ev("p3")};
    std::vector<std::pair<Event, Event>> pairs = {
        {ev("r"), ev("q1")},  {ev("r"), ev("q2")},  {ev("r"), ev("q3")},  {ev("r"), ev("q4")},
        {ev("q1"), ev("p1")}, {ev("q3"), ev("p1")}, {ev("q2"), ev("p2")}, {ev("q3"), ev("p2")},
        {ev("q1"), ev("p3")}, {ev("q4"), ev("p3")}};
    return {events, pairs};
}

std::set<Event> names(std::initializer_list<const char*> ids) {
    std::set<Event> s;
    for (const char* id : ids) s.insert(ev(id));
    return s;
}

}  // namespace

TEST_CASE("validate_causet builds the closed relation") {
    auto [events, pairs] = diamond_fixture();
    Causet c = validate_causet(events, pairs);
    REQUIRE(c.size() == 8);
    // closure: r precedes everything, reflexivity everywhere
    for (const Event& e : c.events()) {
        CHECK(c.leq(ev("r"), e));
        CHECK(c.leq(e, e));
    }
    CHECK(c.leq(ev("q1"), ev("p1")));
    CHECK_FALSE(c.leq(ev("q1"), ev("p2")));
}

TEST_CASE("validate_causet rejects closed timelike curves") {
    CHECK_THROWS_AS(validate_causet({ev("a"), ev("b")}, {{ev("a"), ev("b")}, {ev("b"), ev("a")}}),
                    CycleError);
    CHECK_THROWS_AS(validate_causet({ev("a"), ev("b"), ev("c")},
                                    {{ev("a"), ev("b")}, {ev("b"), ev("c")}, {ev("c"), ev("a")}}),
                    CycleError);
    CHECK_THROWS_AS(validate_causet({ev("a")}, {{ev("a"), ev("zzz")}}), UnknownEventError);
    // single event, no pairs: reflexive only
    Causet c = validate_causet({ev("solo")}, {});
    CHECK(c.leq(ev("solo"), ev("solo")));
}

TEST_CASE("causal cones follow the reflexive convention") {
    auto [events, pairs] = diamond_fixture();
    Causet c = validate_causet(events, pairs);
    CHECK(causal_cone(c, ev("p1"), Direction::past) == names({"p1", "q1", "q3", "r"}));
    // brute-force reachability over the raw pairs agrees
    auto fwd = oracle::reachable(events, pairs, ev("r"), true);
    CHECK(causal_cone(c, ev("r"), Direction::future) == fwd);
    CHECK(fwd.size() == 8);

    Causet solo = validate_causet({ev("e")}, {});
    CHECK(causal_cone(solo, ev("e"), Direction::past) == names({"e"}));
    CHECK_THROWS_AS(causal_cone(c, ev("nope"), Direction::past), UnknownEventError);
}

TEST_CASE("past and future cones intersect in the event alone") {
    Rng rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        auto [events, pairs] = random_relation_set(rng, 8, 0.15);
        Causet c;
        try {
            c = validate_causet(events, pairs);
        } catch (const CycleError&) {
            continue;
        }
        for (const Event& p : c.events()) {
            auto past = causal_cone(c, p, Direction::past);
            auto fut = causal_cone(c, p, Direction::future);
            std::set<Event> inter;
            std::set_intersection(past.begin(), past.end(), fut.begin(), fut.end(),
                                  std::inserter(inter, inter.begin()));
            CHECK(inter == std::set<Event>{p});
        }
    }
}

TEST_CASE("enumerate_histories lists the maximal chains") {
    auto [events, pairs] = diamond_fixture();
    Causet c = validate_causet(events, pairs);

    auto past_p1 = enumerate_histories(c, ev("p1"), Direction::past);
    REQUIRE(past_p1.size() == 2);
    CHECK(past_p1[0].chain == std::vector<Event>{ev("r"), ev("q1"), ev("p1")});
    CHECK(past_p1[1].chain == std::vector<Event>{ev("r"), ev("q3"), ev("p1")});

    auto past_p2 = enumerate_histories(c, ev("p2"), Direction::past);
    REQUIRE(past_p2.size() == 2);
    CHECK(past_p2[0].chain == std::vector<Event>{ev("r"), ev("q2"), ev("p2")});
    CHECK(past_p2[1].chain == std::vector<Event>{ev("r"), ev("q3"), ev("p2")});

    Causet solo = validate_causet({ev("e")}, {});
    auto h = enumerate_histories(solo, ev("e"), Direction::future);
    REQUIRE(h.size() == 1);
    CHECK(h[0].chain == std::vector<Event>{ev("e")});
}

TEST_CASE("enumerated chains are maximal (brute force, |C| <= 10)") {
    Rng rng(17);
    for (int trial = 0; trial < 25; ++trial) {
        auto [events, pairs] = random_relation_set(rng, 10, 0.12);
        Causet c;
        try {
            c = validate_causet(events, pairs);
        } catch (const CycleError&) {
            continue;
        }
        for (const Event& p : c.events()) {
            for (Direction dir : {Direction::past, Direction::future}) {
                for (const History& h : enumerate_histories(c, p, dir))
                    CHECK(oracle::chain_is_maximal(c, h, p, dir));
            }
        }
    }
}

TEST_CASE("chain enumeration cap fails loudly") {
    // a ladder of binary branches has 2^k maximal chains
    std::vector<Event> events;
    std::vector<std::pair<Event, Event>> pairs;
    events.push_back(ev("s0"));
    for (int k = 0; k < 6; ++k) {
        std::string cur = "s" + std::to_string(k), nxt = "s" + std::to_string(k + 1);
        std::string mid_a = "a" + std::to_string(k), mid_b = "b" + std::to_string(k);
        events.push_back(ev(mid_a));
        events.push_back(ev(mid_b));
        events.push_back(ev(nxt));
        pairs.push_back({ev(cur), ev(mid_a)});
        pairs.push_back({ev(cur), ev(mid_b)});
        pairs.push_back({ev(mid_a), ev(nxt)});
        pairs.push_back({ev(mid_b), ev(nxt)});
    }
    Causet c = validate_causet(events, pairs);
    CHECK(enumerate_histories(c, ev("s6"), Direction::past).size() == 64);
    CHECK_THROWS_AS(enumerate_histories(c, ev("s6"), Direction::past, 10), ChainLimitError);
}

TEST_CASE("complete pairs") {
    auto [events, pairs] = diamond_fixture();
    Causet c = validate_causet(events, pairs);
    AcausalSet A{names({"q1", "q2", "q3", "q4"})};
    AcausalSet B{names({"p1", "p2", "p3"})};
    CHECK(check_complete_pair(c, A, B));

    // the history r <= q3 <= p1 misses {q1, q2}
    AcausalSet A2{names({"q1", "q2"})};
    CHECK_FALSE(check_complete_pair(c, A2, B));

    Causet solo = validate_causet({ev("e")}, {});
    AcausalSet E{names({"e"})};
    CHECK(check_complete_pair(solo, E, E));

    // reflexivity: every history through a member passes through it
    CHECK(check_complete_pair(c, A, A));
    CHECK(check_complete_pair(c, B, B));

    // non-acausal input is rejected by value
    AcausalSet bad{names({"r", "q1"})};
    CHECK_FALSE(check_complete_pair(c, bad, B));
}

TEST_CASE("causal complement") {
    auto [events, pairs] = diamond_fixture();
    Causet c = validate_causet(events, pairs);

    // independent check: q1 is related to r, p1, p3 and itself only
    std::set<Event> expected;
    for (const Event& e : c.events())
        if (!c.related(e, ev("q1"))) expected.insert(e);
    CHECK(expected == names({"q2", "q3", "q4", "p2"}));
    CHECK(causal_complement(c, {ev("q1")}) == expected);

    auto completion = causal_complement(c, {ev("q1")}, true);
    CHECK(completion.count(ev("q1")) == 1);

    std::set<Event> all(c.events().begin(), c.events().end());
    CHECK(causal_complement(c, all).empty());

    // A ⊆ A'' for acausal A
    std::set<Event> A = names({"q1", "q2"});
    auto close = causal_complement(c, A, true);
    for (const Event& a : A) CHECK(close.count(a) == 1);
}

TEST_CASE("disjointify splits shared events into ordered copies") {
    // two histories through the same r <= q spine
    std::vector<Event> events = {ev("r"), ev("q"), ev("p1"), ev("p2")};
    std::vector<std::pair<Event, Event>> pairs = {
        {ev("r"), ev("q")}, {ev("q"), ev("p1")}, {ev("q"), ev("p2")}};
    Causet c = validate_causet(events, pairs);
    History h1{{ev("r"), ev("q"), ev("p1")}};
    History h2{{ev("r"), ev("q"), ev("p2")}};

    auto [dc, dh] = disjointify(c, {h1, h2});
    REQUIRE(dh.size() == 2);
    CHECK(dh[0].chain == std::vector<Event>{ev("r", 1), ev("q", 1), ev("p1")});
    CHECK(dh[1].chain == std::vector<Event>{ev("r", 2), ev("q", 2), ev("p2")});
    CHECK(dc.internally_precedes(ev("r", 1), ev("r", 2)));
    CHECK(dc.internally_precedes(ev("q", 1), ev("q", 2)));
    CHECK_FALSE(dc.related(ev("q", 1), ev("q", 2)));  // internal order is not causal
    // copies keep the causal relations of the original
    CHECK(dc.leq(ev("r", 2), ev("p2")));
    CHECK(dc.leq(ev("q", 1), ev("p1")));

    // pairwise disjoint
    for (const Event& e : dh[0].chain) CHECK_FALSE(dh[1].contains(e));

    // quotienting the copy index recovers the originals
    auto quotient = [](const History& h) {
        std::vector<Event> out;
        for (const Event& e : h.chain) out.push_back(Event{e.id, 0});
        return out;
    };
    CHECK(quotient(dh[0]) == h1.chain);
    CHECK(quotient(dh[1]) == h2.chain);
}

TEST_CASE("disjointify leaves single histories alone and handles three-way sharing") {
    auto [events, pairs] = diamond_fixture();
    Causet c = validate_causet(events, pairs);
    History h{{ev("r"), ev("q1"), ev("p1")}};
    auto [c1, one] = disjointify(c, {h});
    CHECK(one[0].chain == h.chain);
    CHECK(c1.size() == c.size());

    History a{{ev("r"), ev("q1"), ev("p1")}};
    History b{{ev("r"), ev("q2"), ev("p2")}};
    History d{{ev("r"), ev("q4"), ev("p3")}};
    auto [c3, three] = disjointify(c, {a, b, d});
    std::set<Event> seen;
    std::size_t total = 0;
    for (const History& hh : three)
        for (const Event& e : hh.chain) {
            CHECK(seen.insert(e).second);  // exhaustive pairwise-disjointness check
            ++total;
        }
    CHECK(total == 9);
    // r was shared three ways
    CHECK(c3.has(ev("r", 1)));
    CHECK(c3.has(ev("r", 2)));
    CHECK(c3.has(ev("r", 3)));
    CHECK_FALSE(c3.has(ev("r")));
}

TEST_CASE("graining moves") {
    auto [events, pairs] = diamond_fixture();
    Causet c = validate_causet(events, pairs);
    AcausalSet A{names({"p1", "p2", "p3"})};

    SECTION("coarse merges within the set") {
        GrainingArgs args;
        args.targets = {ev("p1"), ev("p2")};
        args.merged_id = "p12";
        auto out = graining_move(c, A, GrainingKind::coarse, args);
        CHECK(out.set.members == names({"p12", "p3"}));
        CHECK(out.causet.leq(ev("q1"), ev("p12")));  // inherits p1's past
        CHECK(out.causet.leq(ev("q2"), ev("p12")));  // and p2's
        // coarse then a matching fine restores the cardinality
        GrainingArgs back;
        back.targets = {ev("p12")};
        back.replacements = {ev("pa"), ev("pb")};
        auto out2 = graining_move(out.causet, out.set, GrainingKind::fine, back);
        CHECK(out2.set.members.size() == A.members.size());
    }

    SECTION("identity relabeling keeps cardinality") {
        GrainingArgs args;
        args.relabel = {{"p1", "u1"}, {"p2", "u2"}, {"p3", "u3"}};
        auto out = graining_move(c, A, GrainingKind::identity, args);
        CHECK(out.set.members == names({"u1", "u2", "u3"}));
        CHECK(out.set.members.size() == A.members.size());
        CHECK(out.causet.leq(ev("q1"), ev("u1")));
    }

    SECTION("fine replacement must stay acausal") {
        // replacing p1 by the existing related pair {q1, p3} breaks acausality
        AcausalSet single{names({"p1"})};
        GrainingArgs args;
        args.targets = {ev("p1")};
        args.replacements = {ev("q1"), ev("p3")};
        CHECK_THROWS_AS(graining_move(c, single, GrainingKind::fine, args), AcausalityViolation);
        // fresh replacements inherit p1's relations and stay acausal
        GrainingArgs fresh;
        fresh.targets = {ev("p1")};
        fresh.replacements = {ev("n1"), ev("n2")};
        auto out = graining_move(c, single, GrainingKind::fine, fresh);
        CHECK(out.set.members == names({"n1", "n2"}));
        CHECK(out.causet.leq(ev("q1"), ev("n1")));
        CHECK_FALSE(out.causet.related(ev("n1"), ev("n2")));
    }

    SECTION("unknown events are rejected") {
        GrainingArgs args;
        args.targets = {ev("p1"), ev("zz")};
        CHECK_THROWS_AS(graining_move(c, A, GrainingKind::coarse, args), UnknownEventError);
    }
}
