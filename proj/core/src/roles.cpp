#include "sdattn/roles.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace sdattn {

std::size_t SegmentMap::total_tokens() const {
    std::size_t n = 0;
    for (const Segment& s : segments) n += s.length;
    return n;
}

int SegmentMap::max_seg(int node) const {
    int best = -1;
    for (std::size_t i = 0; i < segments.size(); ++i)
        if (segments[i].owner == node) best = static_cast<int>(i);
    return best;
}

void SegmentMap::validate() const {
    if (segments.empty()) throw std::invalid_argument("SegmentMap: needs at least one segment");
    std::size_t pos = 0;
    for (const Segment& s : segments) {
        if (s.first_pos != pos) throw std::invalid_argument("SegmentMap: spans must be contiguous");
        if (s.length == 0) throw std::invalid_argument("SegmentMap: empty segment");
        pos += s.length;
    }
    if (segments.back().owner != coordinator)
        throw std::invalid_argument("SegmentMap: final segment must be the coordinator's query");
}

bool DomainPlan::holds(std::size_t seg) const {
    return std::find(segments.begin(), segments.end(), seg) != segments.end();
}

const DomainPlan& RolePlan::domain(std::uint16_t id) const {
    for (const DomainPlan& d : domains)
        if (d.id == id) return d;
    throw std::invalid_argument("RolePlan: unknown domain id");
}

int RolePlan::compute_of(std::uint16_t id) const { return domain(id).compute_node; }

bool RolePlan::is_compute_node(int node) const {
    for (const DomainPlan& d : domains)
        if (d.compute_node == node) return true;
    return false;
}

std::vector<std::uint16_t> RolePlan::domains_for(int inquirer, std::size_t upto_segment) const {
    std::set<std::uint16_t> ids;
    for (const auto& [key, dom] : route)
        if (key.first == inquirer && key.second < upto_segment) ids.insert(dom);
    return {ids.begin(), ids.end()};
}

std::vector<std::uint16_t> RolePlan::coordinator_domains(const SegmentMap& map) const {
    return domains_for(coordinator, map.segments.size() - 1);
}

RolePlan plan_roles(const SegmentMap& map, const std::vector<int>& node_ids) {
    map.validate();
    if (node_ids.size() < 3)
        throw std::invalid_argument("plan_roles: at least three independent nodes required");
    for (const Segment& s : map.segments)
        if (std::find(node_ids.begin(), node_ids.end(), s.owner) == node_ids.end())
            throw std::invalid_argument("plan_roles: segment owner not among nodes");

    RolePlan plan;
    plan.coordinator = map.coordinator;

    // Every cross-node attention need: (inquirer, prior segment). The
    // coordinator's decode reuses its query-prefill routes, so the final
    // segment's needs cover both.
    std::vector<std::pair<int, std::size_t>> needs;
    for (std::size_t i = 1; i < map.segments.size(); ++i) {
        const int inquirer = map.segments[i].owner;
        for (std::size_t j = 0; j < i; ++j)
            if (map.segments[j].owner != inquirer) needs.emplace_back(inquirer, j);
    }
    std::sort(needs.begin(), needs.end());
    needs.erase(std::unique(needs.begin(), needs.end()), needs.end());

    // Compute-node preference order per the maxSeg rule.
    std::vector<int> preference;
    std::vector<int> free_nodes;
    for (int n : node_ids)
        if (map.max_seg(n) < 0) free_nodes.push_back(n);
    if (!free_nodes.empty()) {
        preference.push_back(*std::min_element(free_nodes.begin(), free_nodes.end()));
    } else {
        std::vector<int> owners;  // non-coordinator owners
        for (int n : node_ids)
            if (n != map.coordinator) owners.push_back(n);
        std::sort(owners.begin(), owners.end());
        if (owners.size() < 2)
            throw std::invalid_argument("plan_roles: no eligible compute pair");
        int e1 = -1;
        for (int n : owners)
            if (map.max_seg(n) == 0) { e1 = n; break; }
        if (e1 < 0) {
            // Two smallest maxSeg owners.
            std::vector<int> by_maxseg = owners;
            std::stable_sort(by_maxseg.begin(), by_maxseg.end(), [&](int a, int b) {
                return map.max_seg(a) < map.max_seg(b);
            });
            preference.push_back(by_maxseg[0]);
            preference.push_back(by_maxseg[1]);
        } else {
            // e1 owns only the first segment and is never an inquirer; the
            // second compute node is the latest non-coordinator owner.
            preference.push_back(e1);
            int e2 = -1;
            for (int n : owners) {
                if (n == e1) continue;
                if (e2 < 0 || map.max_seg(n) > map.max_seg(e2) ||
                    (map.max_seg(n) == map.max_seg(e2) && n < e2))
                    e2 = n;
            }
            if (e2 >= 0) preference.push_back(e2);
        }
        // Bootstrap: the coordinator is idle as an inquirer until the final
        // segment, so it can compute for earlier prefills the pair cannot
        // serve.
        preference.push_back(map.coordinator);
    }

    std::map<int, std::uint16_t> domain_of_node;
    auto domain_for = [&](int compute) -> DomainPlan& {
        auto it = domain_of_node.find(compute);
        if (it == domain_of_node.end()) {
            DomainPlan d;
            d.id = static_cast<std::uint16_t>(plan.domains.size() + 1);
            d.compute_node = compute;
            plan.domains.push_back(d);
            domain_of_node[compute] = d.id;
            return plan.domains.back();
        }
        return plan.domains[it->second - 1];
    };

    for (const auto& [inquirer, seg] : needs) {
        const int owner = map.segments[seg].owner;
        int chosen = -1;
        for (int cand : preference) {
            if (cand == inquirer || cand == owner) continue;
            // The coordinator may only compute for needs that arise before
            // its own query prefill; every need is, except its own, which
            // the first two candidates always cover.
            chosen = cand;
            break;
        }
        if (chosen < 0) throw std::invalid_argument("plan_roles: no role-safe compute node");
        DomainPlan& d = domain_for(chosen);
        if (!d.holds(seg)) d.segments.push_back(seg);
        plan.route[{inquirer, seg}] = d.id;
    }
    for (DomainPlan& d : plan.domains) std::sort(d.segments.begin(), d.segments.end());
    return plan;
}

std::vector<std::string> audit_plan(const RolePlan& plan, const SegmentMap& map) {
    std::vector<std::string> bad;
    for (const DomainPlan& d : plan.domains) {
        for (std::size_t seg : d.segments)
            if (map.segments[seg].owner == d.compute_node)
                bad.push_back("domain " + std::to_string(d.id) +
                              " stores a segment owned by its compute node");
        if (d.compute_node == plan.coordinator) {
            // Coordinator-computed bootstrap domains must never serve the
            // coordinator itself (checked below via routes), and must not be
            // needed during its query prefill; routes enforce both.
        }
    }
    for (const auto& [key, dom] : plan.route) {
        if (plan.compute_of(dom) == key.first)
            bad.push_back("inquirer " + std::to_string(key.first) +
                          " routed to a domain it computes");
        if (!plan.domain(dom).holds(key.second))
            bad.push_back("route points at a domain that does not hold the segment");
    }
    return bad;
}

}  // namespace sdattn
