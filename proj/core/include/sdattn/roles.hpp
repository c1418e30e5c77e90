#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace sdattn {

/// One contiguous token span owned by a single node. The final segment is
/// always the query and its owner is the request coordinator.
struct Segment {
    std::size_t first_pos = 0;
    std::size_t length = 0;
    int owner = -1;
};

struct SegmentMap {
    std::vector<Segment> segments;
    int coordinator = -1;

    std::size_t total_tokens() const;
    /// Highest segment index owned by the node, or -1 when it owns none.
    int max_seg(int node) const;
    void validate() const;
};

/// One compute domain: a keyless compute node plus the set of segments
/// whose scrambled KV is stored with it. Every participant routing through
/// the domain shares its key set; the compute node never does.
struct DomainPlan {
    std::uint16_t id = 0;
    int compute_node = -1;
    std::vector<std::size_t> segments;  // indices into SegmentMap

    bool holds(std::size_t seg) const;
};

struct RolePlan {
    std::vector<DomainPlan> domains;
    /// (inquirer node, prior segment index) -> domain id serving that need.
    std::map<std::pair<int, std::size_t>, std::uint16_t> route;
    int coordinator = -1;

    const DomainPlan& domain(std::uint16_t id) const;
    int compute_of(std::uint16_t id) const;
    bool is_compute_node(int node) const;
    /// Distinct domains the inquirer queries across the given prior
    /// segments, in id order.
    std::vector<std::uint16_t> domains_for(int inquirer, std::size_t upto_segment) const;
    /// Domains serving the coordinator's query prefill and decode.
    std::vector<std::uint16_t> coordinator_domains(const SegmentMap& map) const;
};

/// Compute-node selection per the maxSeg rule:
///  - a node owning no segment becomes the single permanent compute node;
///  - else the owner of only the first segment computes for all later
///    segments, with a second domain covering the first segment assigned to
///    the owner of the latest non-coordinator segment;
///  - else the two non-coordinator owners with smallest maxSeg compute for
///    each other's segments.
/// Early-prefill needs that none of the primary pair can serve role-safely
/// (an inquirer may never query a domain it computes, and a compute node
/// may never store its own segments) fall back to a bootstrap domain
/// computed by the coordinator, which is idle as an inquirer until the
/// final segment. This replicates the first segment's KV once; with all
/// nodes owning context there is provably no zero-replication assignment.
/// Requires at least three nodes.
RolePlan plan_roles(const SegmentMap& map, const std::vector<int>& node_ids);

/// Empty result means the plan satisfies role safety: no domain computes
/// over its own compute node's segments, and no inquirer routes to a domain
/// it computes.
std::vector<std::string> audit_plan(const RolePlan& plan, const SegmentMap& map);

}  // namespace sdattn
