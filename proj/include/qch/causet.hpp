#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "qch/errors.hpp"

// Finite causal sets: events with a reflexive, antisymmetric, transitive
// precedence relation. The relation is always stored as its transitive
// closure; input pair lists may be a covering (Hasse) set.

namespace qch {

struct Event {
    std::string id;
    std::size_t copy_index = 0;  // 0 = original, >0 = internal-causality copy

    bool operator==(const Event& o) const { return id == o.id && copy_index == o.copy_index; }
    bool operator<(const Event& o) const {
        return id != o.id ? id < o.id : copy_index < o.copy_index;
    }
    std::string label() const {
        return copy_index == 0 ? id : id + "#" + std::to_string(copy_index);
    }
};

struct History {
    std::vector<Event> chain;  // totally ordered, minimal element first

    bool contains(const Event& e) const {
        return std::find(chain.begin(), chain.end(), e) != chain.end();
    }
};

struct AcausalSet {
    std::set<Event> members;
};

enum class Direction { past, future };

class Causet {
public:
    Causet() = default;

    const std::vector<Event>& events() const { return events_; }
    std::size_t size() const { return events_.size(); }

    std::size_t index_of(const Event& e) const {
        auto it = index_.find(e);
        if (it == index_.end()) throw UnknownEventError("no event '" + e.label() + "'");
        return it->second;
    }
    bool has(const Event& e) const { return index_.count(e) != 0; }

    bool leq(const Event& a, const Event& b) const {
        return rel_[index_of(a)][index_of(b)];
    }
    bool related(const Event& a, const Event& b) const { return leq(a, b) || leq(b, a); }

    // strict internal order among copies of one event (copy i precedes copy j)
    bool internally_precedes(const Event& a, const Event& b) const {
        return a.id == b.id && a.copy_index != 0 && b.copy_index != 0 &&
               a.copy_index < b.copy_index;
    }
    bool has_copies() const {
        for (const Event& e : events_)
            if (e.copy_index > 0) return true;
        return false;
    }

    // covering relation (transitive reduction); used for history enumeration
    // and DOT export
    std::vector<std::pair<std::size_t, std::size_t>> covers() const {
        std::vector<std::pair<std::size_t, std::size_t>> out;
        const std::size_t n = events_.size();
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = 0; b < n; ++b) {
                if (a == b || !rel_[a][b]) continue;
                bool covered = true;
                for (std::size_t m = 0; m < n; ++m) {
                    if (m == a || m == b) continue;
                    if (rel_[a][m] && rel_[m][b]) {
                        covered = false;
                        break;
                    }
                }
                if (covered) out.emplace_back(a, b);
            }
        return out;
    }

    friend Causet validate_causet(std::vector<Event> events,
                                  const std::vector<std::pair<Event, Event>>& relation_pairs);
    friend std::pair<Causet, std::vector<History>> disjointify(const Causet& c,
                                                               const std::vector<History>& hs);

private:
    std::vector<Event> events_;
    std::map<Event, std::size_t> index_;
    std::vector<std::vector<bool>> rel_;  // rel_[a][b] == (a <= b), closed

    void rebuild_index() {
        index_.clear();
        for (std::size_t i = 0; i < events_.size(); ++i) index_[events_[i]] = i;
        if (index_.size() != events_.size())
            throw CycleError("duplicate event labels");  // unreachable via public API
    }
};

// Floyd-Warshall closure, then the axiom checks. Reflexive pairs are
// auto-added; a closure that relates two distinct events both ways is a
// closed timelike curve and rejected.
inline Causet validate_causet(std::vector<Event> events,
                              const std::vector<std::pair<Event, Event>>& relation_pairs) {
    Causet c;
    c.events_ = std::move(events);
    {
        std::set<Event> seen;
        for (const Event& e : c.events_)
            if (!seen.insert(e).second)
                throw CycleError("duplicate event '" + e.label() + "' in event list");
    }
    c.rebuild_index();
    const std::size_t n = c.events_.size();
    c.rel_.assign(n, std::vector<bool>(n, false));
    for (std::size_t i = 0; i < n; ++i) c.rel_[i][i] = true;

    for (const auto& [a, b] : relation_pairs) {
        auto ia = c.index_.find(a);
        auto ib = c.index_.find(b);
        if (ia == c.index_.end()) throw UnknownEventError("relation names '" + a.label() + "'");
        if (ib == c.index_.end()) throw UnknownEventError("relation names '" + b.label() + "'");
        c.rel_[ia->second][ib->second] = true;
    }
    for (std::size_t m = 0; m < n; ++m)
        for (std::size_t a = 0; a < n; ++a) {
            if (!c.rel_[a][m]) continue;
            for (std::size_t b = 0; b < n; ++b)
                if (c.rel_[m][b]) c.rel_[a][b] = true;
        }
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b)
            if (c.rel_[a][b] && c.rel_[b][a])
                throw CycleError("closed timelike curve through '" + c.events_[a].label() +
                                 "' and '" + c.events_[b].label() + "'");
    return c;
}

// Cone includes p itself (reflexive convention).
inline std::set<Event> causal_cone(const Causet& c, const Event& p, Direction dir) {
    c.index_of(p);  // membership check
    std::set<Event> out;
    for (std::size_t i = 0; i < c.size(); ++i) {
        bool in = dir == Direction::past ? c.leq(c.events()[i], p) : c.leq(p, c.events()[i]);
        if (in) out.insert(c.events()[i]);
    }
    return out;
}

namespace detail {

inline void enumerate_chains(const Causet& c,
                             const std::vector<std::vector<std::size_t>>& step,
                             std::size_t at, std::vector<std::size_t>& stack,
                             std::vector<std::vector<std::size_t>>& out, std::size_t limit) {
    stack.push_back(at);
    if (step[at].empty()) {
        if (out.size() >= limit)
            throw ChainLimitError("more than " + std::to_string(limit) + " maximal chains");
        out.push_back(stack);
    } else {
        for (std::size_t nxt : step[at]) enumerate_chains(c, step, nxt, stack, out, limit);
    }
    stack.pop_back();
}

}  // namespace detail

// All maximal chains ending (past) or starting (future) at p, each listed
// from its minimal element upward; deterministic lexicographic order.
inline std::vector<History> enumerate_histories(const Causet& c, const Event& p, Direction dir,
                                                std::size_t limit = 1000000) {
    std::size_t ip = c.index_of(p);
    auto covers = c.covers();
    // step[a] = covering neighbours of a in the walking direction
    std::vector<std::vector<std::size_t>> step(c.size());
    for (auto& [a, b] : covers) {
        if (dir == Direction::past)
            step[b].push_back(a);  // walk downward
        else
            step[a].push_back(b);
    }
    for (auto& s : step) std::sort(s.begin(), s.end());

    std::vector<std::vector<std::size_t>> raw;
    std::vector<std::size_t> stack;
    detail::enumerate_chains(c, step, ip, stack, raw, limit);

    std::vector<History> out;
    out.reserve(raw.size());
    for (auto& r : raw) {
        History h;
        if (dir == Direction::past) std::reverse(r.begin(), r.end());
        for (std::size_t i : r) h.chain.push_back(c.events()[i]);
        out.push_back(std::move(h));
    }
    std::sort(out.begin(), out.end(), [](const History& x, const History& y) {
        return x.chain < y.chain;
    });
    return out;
}

inline bool is_acausal(const Causet& c, const AcausalSet& a) {
    for (const Event& x : a.members)
        for (const Event& y : a.members) {
            if (x == y) continue;
            if (c.related(x, y)) return false;
        }
    for (const Event& x : a.members) c.index_of(x);  // membership check
    return true;
}

// A <= B as acausal sets: A meets every past history of every b in B and B
// meets every future history of every a in A. Both sets must be acausal.
inline bool check_complete_pair(const Causet& c, const AcausalSet& A, const AcausalSet& B,
                                std::size_t limit = 1000000) {
    for (const Event& e : A.members) c.index_of(e);
    for (const Event& e : B.members) c.index_of(e);
    if (!is_acausal(c, A) || !is_acausal(c, B)) return false;
    auto meets = [](const History& h, const AcausalSet& s) {
        for (const Event& e : h.chain)
            if (s.members.count(e)) return true;
        return false;
    };
    for (const Event& b : B.members)
        for (const History& h : enumerate_histories(c, b, Direction::past, limit))
            if (!meets(h, A)) return false;
    for (const Event& a : A.members)
        for (const History& h : enumerate_histories(c, a, Direction::future, limit))
            if (!meets(h, B)) return false;
    return true;
}

// X' = events spacelike to all of X; with completion, X'' = (X')'.
inline std::set<Event> causal_complement(const Causet& c, const std::set<Event>& X,
                                         bool completion = false) {
    for (const Event& e : X) c.index_of(e);
    auto complement = [&](const std::set<Event>& S) {
        std::set<Event> out;
        for (const Event& e : c.events()) {
            bool spacelike = true;
            for (const Event& x : S)
                if (c.related(e, x)) {
                    spacelike = false;
                    break;
                }
            if (spacelike) out.insert(e);
        }
        return out;
    };
    std::set<Event> prime = complement(X);
    return completion ? complement(prime) : prime;
}

// Internal causality: every event shared by k > 1 of the given histories is
// split into copies ordered by the copy index; the histories become pairwise
// disjoint and quotienting copy indices recovers the originals. Copies are
// handed out by (lexicographic id of each history's minimal event, input
// position).
inline std::pair<Causet, std::vector<History>> disjointify(const Causet& c,
                                                           const std::vector<History>& hs) {
    for (const History& h : hs)
        for (const Event& e : h.chain) c.index_of(e);

    // history processing order for the copy tie-break
    std::vector<std::size_t> order(hs.size());
    for (std::size_t i = 0; i < hs.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        const std::string& mx = hs[x].chain.empty() ? std::string() : hs[x].chain.front().id;
        const std::string& my = hs[y].chain.empty() ? std::string() : hs[y].chain.front().id;
        return mx != my ? mx < my : x < y;
    });

    std::map<Event, std::size_t> share_count;
    for (const History& h : hs)
        for (const Event& e : h.chain) ++share_count[e];

    // assign a copy index per (event, history) for shared events
    std::map<Event, std::size_t> next_copy;
    std::map<std::pair<Event, std::size_t>, Event> replacement;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        std::size_t hi = order[rank];
        for (const Event& e : hs[hi].chain) {
            if (share_count[e] <= 1) continue;
            std::size_t k = ++next_copy[e];
            replacement[{e, hi}] = Event{e.id, k};
        }
    }

    Causet out;
    std::vector<std::pair<Event, Event>> pairs;  // relations to re-validate
    std::map<Event, std::vector<Event>> expansion;
    for (const Event& e : c.events()) {
        if (share_count.count(e) && share_count[e] > 1) {
            for (std::size_t k = 1; k <= next_copy[e]; ++k)
                expansion[e].push_back(Event{e.id, k});
        } else {
            expansion[e].push_back(e);
        }
    }
    std::vector<Event> new_events;
    for (const Event& e : c.events())
        for (const Event& x : expansion[e]) new_events.push_back(x);
    // copies inherit all causal relations of the original; distinct copies of
    // one event stay causally unrelated (their order is internal only)
    for (const Event& a : c.events())
        for (const Event& b : c.events()) {
            if (a == b || !c.leq(a, b)) continue;
            for (const Event& xa : expansion[a])
                for (const Event& xb : expansion[b]) pairs.emplace_back(xa, xb);
        }
    out = validate_causet(std::move(new_events), pairs);

    std::vector<History> out_h = hs;
    for (std::size_t hi = 0; hi < hs.size(); ++hi)
        for (std::size_t pos = 0; pos < hs[hi].chain.size(); ++pos) {
            auto it = replacement.find({hs[hi].chain[pos], hi});
            if (it != replacement.end()) out_h[hi].chain[pos] = it->second;
        }
    return {std::move(out), std::move(out_h)};
}

// --- graining moves on acausal sets (coarse / fine / identity) -------------

enum class GrainingKind { coarse, fine, identity };

struct GrainingArgs {
    // coarse: merge `targets` (within A) into an event labeled `merged_id`
    // fine: replace `targets[0]` by `replacements` (existing or fresh ids)
    // identity: relabel per `relabel` bijection
    std::vector<Event> targets;
    std::string merged_id;
    std::vector<Event> replacements;
    std::map<std::string, std::string> relabel;
};

struct GrainingOutcome {
    Causet causet;  // ambient causet after the move
    AcausalSet set;
};

inline GrainingOutcome graining_move(const Causet& c, const AcausalSet& A, GrainingKind kind,
                                     const GrainingArgs& args) {
    if (!is_acausal(c, A)) throw AcausalityViolation("input set is not acausal");

    auto rebuild = [&](const std::vector<Event>& events,
                       const std::vector<std::pair<Event, Event>>& pairs) {
        return validate_causet(events, pairs);
    };
    auto relation_pairs = [&](const Causet& k) {
        std::vector<std::pair<Event, Event>> pairs;
        for (const Event& a : k.events())
            for (const Event& b : k.events())
                if (!(a == b) && k.leq(a, b)) pairs.emplace_back(a, b);
        return pairs;
    };

    switch (kind) {
        case GrainingKind::coarse: {
            if (args.targets.size() < 2)
                throw AcausalityViolation("coarse-graining needs at least two events");
            for (const Event& t : args.targets)
                if (!A.members.count(t))
                    throw UnknownEventError("'" + t.label() + "' not in the acausal set");
            std::string mid = args.merged_id;
            if (mid.empty()) {
                for (const Event& t : args.targets)
                    mid += (mid.empty() ? "" : "=") + t.label();
            }
            Event merged{mid, 0};
            // merged event inherits the union of pasts and futures
            std::vector<Event> events;
            for (const Event& e : c.events())
                if (std::find(args.targets.begin(), args.targets.end(), e) ==
                    args.targets.end())
                    events.push_back(e);
            events.push_back(merged);
            std::vector<std::pair<Event, Event>> pairs;
            auto is_target = [&](const Event& e) {
                return std::find(args.targets.begin(), args.targets.end(), e) !=
                       args.targets.end();
            };
            for (const Event& a : c.events())
                for (const Event& b : c.events()) {
                    if (a == b || !c.leq(a, b)) continue;
                    Event na = is_target(a) ? merged : a;
                    Event nb = is_target(b) ? merged : b;
                    if (na == nb) continue;
                    pairs.emplace_back(na, nb);
                }
            Causet nc = rebuild(events, pairs);
            AcausalSet ns;
            for (const Event& e : A.members)
                if (!is_target(e)) ns.members.insert(e);
            ns.members.insert(merged);
            if (!is_acausal(nc, ns)) throw AcausalityViolation("merged set is not acausal");
            return GrainingOutcome{std::move(nc), std::move(ns)};
        }
        case GrainingKind::fine: {
            if (args.targets.size() != 1)
                throw AcausalityViolation("fine-graining replaces exactly one event");
            const Event& t = args.targets[0];
            if (!A.members.count(t))
                throw UnknownEventError("'" + t.label() + "' not in the acausal set");
            if (args.replacements.empty())
                throw AcausalityViolation("fine-graining needs a replacement set");
            std::vector<Event> events;
            std::vector<std::pair<Event, Event>> pairs = relation_pairs(c);
            for (const Event& e : c.events())
                if (!(e == t)) events.push_back(e);
            for (const Event& r : args.replacements) {
                if (c.has(r)) continue;  // existing event, keeps its relations
                events.push_back(r);
                // fresh events inherit the replaced event's relations
                for (const Event& e : c.events()) {
                    if (e == t) continue;
                    if (c.leq(e, t)) pairs.emplace_back(e, r);
                    if (c.leq(t, e)) pairs.emplace_back(r, e);
                }
            }
            std::vector<std::pair<Event, Event>> kept;
            for (auto& [a, b] : pairs)
                if (!(a == t) && !(b == t)) kept.push_back({a, b});
            Causet nc = rebuild(events, kept);
            AcausalSet ns;
            for (const Event& e : A.members)
                if (!(e == t)) ns.members.insert(e);
            for (const Event& r : args.replacements) ns.members.insert(r);
            if (!is_acausal(nc, ns))
                throw AcausalityViolation("replacement set breaks acausality");
            return GrainingOutcome{std::move(nc), std::move(ns)};
        }
        case GrainingKind::identity: {
            for (const Event& e : A.members)
                if (!args.relabel.count(e.label()))
                    throw UnknownEventError("relabeling misses '" + e.label() + "'");
            std::set<std::string> images;
            for (const auto& [from, to] : args.relabel)
                if (!images.insert(to).second)
                    throw AcausalityViolation("relabeling is not one-to-one at '" + to + "'");
            auto rename = [&](const Event& e) {
                auto it = args.relabel.find(e.label());
                return it == args.relabel.end() ? e : Event{it->second, 0};
            };
            std::vector<Event> events;
            for (const Event& e : c.events()) events.push_back(rename(e));
            std::vector<std::pair<Event, Event>> pairs;
            for (const Event& a : c.events())
                for (const Event& b : c.events())
                    if (!(a == b) && c.leq(a, b)) pairs.emplace_back(rename(a), rename(b));
            Causet nc = rebuild(events, pairs);
            AcausalSet ns;
            for (const Event& e : A.members) ns.members.insert(rename(e));
            if (ns.members.size() != A.members.size())
                throw AcausalityViolation("relabeling collapsed events");
            return GrainingOutcome{std::move(nc), std::move(ns)};
        }
    }
    throw Error(ErrorCategory::model, "unreachable graining kind");
}

}  // namespace qch
