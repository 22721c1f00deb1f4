#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mgwave {

struct Edge {
    std::string id;
    int first = -1;  // canonical chart origin (lexicographically smaller vertex id)
    int second = -1;
    double length = 0.0;
    std::string length_text;  // decimal literal as written in the graph file
};

/// A point on the metric graph: an edge and an offset measured from the
/// edge's first endpoint.
struct GraphPoint {
    int edge = -1;
    double offset = 0.0;
};

/// Star subgraph around `hub` whose edges all end at controlled leaves
/// except the stem.
struct Sheaf {
    int hub = -1;
    std::vector<int> leaf_edges;
    std::vector<int> leaves;
    int stem_edge = -1;
    int stem_far = -1;  // endpoint of the stem that is not the hub
};

/// Per-edge space-time band { D + d(x,g0) <= t <= T - D + d(x,g0) }.
struct EdgeBand {
    int edge = -1;
    double d_first = 0.0;   // d(first endpoint, gamma0)
    double d_second = 0.0;  // d(second endpoint, gamma0)
    double length = 0.0;

    double distance_at(double offset) const;
};

struct RecoveryDomain {
    double eccentricity = 0.0;
    double horizon = 0.0;
    std::vector<EdgeBand> bands;

    double t_min(int edge, double offset) const;
    double t_max(int edge, double offset) const;
    bool contains(int edge, double offset, double t, double tol = 0.0) const;
};

/// Immutable metric tree with a distinguished root leaf gamma0 (Dirichlet,
/// unobserved); all other leaves form the controlled set.
class MetricGraph {
public:
    MetricGraph(std::vector<std::string> vertex_ids, std::vector<Edge> edges,
                const std::string& gamma0_id);

    /// Parse the JSON graph document and validate it.
    static MetricGraph parse(std::string_view text);
    static MetricGraph load(const std::string& path);

    int vertex_count() const { return static_cast<int>(vertex_ids_.size()); }
    int edge_count() const { return static_cast<int>(edges_.size()); }
    const std::string& vertex_id(int v) const { return vertex_ids_.at(v); }
    int vertex_index(std::string_view id) const;
    int edge_index(std::string_view id) const;
    const Edge& edge(int e) const { return edges_.at(e); }
    const std::vector<Edge>& edges() const { return edges_; }

    std::span<const int> incident(int v) const { return incident_.at(v); }
    int degree(int v) const { return static_cast<int>(incident_.at(v).size()); }
    bool is_leaf(int v) const { return degree(v) == 1; }
    int other_end(int e, int v) const;
    /// Offset of vertex v in the chart of edge e (0 or length).
    double offset_of(int e, int v) const;

    const std::vector<int>& leaves() const { return leaves_; }
    const std::vector<int>& controlled() const { return controlled_; }
    const std::vector<int>& internal_vertices() const { return internal_; }
    int gamma0() const { return gamma0_; }
    bool is_controlled(int v) const;

    double vertex_distance(int u, int v) const { return dist_[u * vertex_count() + v]; }
    double distance(const GraphPoint& p, const GraphPoint& r) const;
    double distance(const GraphPoint& p, int v) const;

    /// Edges along the unique path from u to v, in order.
    std::vector<int> path_edges(int u, int v) const;

    /// D(gamma0): max distance from a controlled leaf to gamma0.
    double eccentricity() const;
    /// Same, but for an arbitrary leaf as root.
    double eccentricity(int root_leaf) const;

    std::vector<Sheaf> find_sheaves() const;

    RecoveryDomain recovery_domain(double horizon) const;

    GraphPoint vertex_point(int v) const;
    /// Vertex id when the point sits on an endpoint (within tol).
    std::optional<int> vertex_of(const GraphPoint& p, double tol = 1e-12) const;
    void check_point(const GraphPoint& p) const;

private:
    void validate();
    void compute_distances();

    std::vector<std::string> vertex_ids_;
    std::vector<Edge> edges_;
    std::vector<std::vector<int>> incident_;
    std::vector<int> leaves_;
    std::vector<int> controlled_;
    std::vector<int> internal_;
    std::vector<double> dist_;
    std::vector<int> next_hop_;  // next_hop_[u*V+v]: edge leaving u toward v
    int gamma0_ = -1;
};

} // namespace mgwave
