#include "mgwave/metric_graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <queue>
#include <sstream>

#include <json.hpp>

#include "mgwave/error.hpp"

namespace mgwave {

namespace {

double parse_length(const std::string& text, const std::string& edge_id) {
    // decimal literal: optional sign, digits, optional fraction, optional exponent
    double value = 0.0;
    const char* begin = text.data();
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(begin, end, value, std::chars_format::general);
    if (ec != std::errc() || ptr != end || text.empty()) {
        throw ConfigError("edge '" + edge_id + "': length '" + text + "' is not a decimal literal");
    }
    return value;
}

struct DisjointSet {
    std::vector<int> parent;
    explicit DisjointSet(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }
    bool unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        parent[a] = b;
        return true;
    }
};

} // namespace

double EdgeBand::distance_at(double offset) const {
    // distance to gamma0 is linear along an edge of a tree
    return d_first + (d_second - d_first) * (offset / length);
}

double RecoveryDomain::t_min(int edge, double offset) const {
    return eccentricity + bands.at(edge).distance_at(offset);
}

double RecoveryDomain::t_max(int edge, double offset) const {
    return horizon - eccentricity + bands.at(edge).distance_at(offset);
}

bool RecoveryDomain::contains(int edge, double offset, double t, double tol) const {
    return t >= t_min(edge, offset) - tol && t <= t_max(edge, offset) + tol;
}

MetricGraph::MetricGraph(std::vector<std::string> vertex_ids, std::vector<Edge> edges,
                         const std::string& gamma0_id)
    : vertex_ids_(std::move(vertex_ids)), edges_(std::move(edges)) {
    gamma0_ = vertex_index(gamma0_id);
    validate();
    compute_distances();
}

MetricGraph MetricGraph::parse(std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("malformed graph document: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("vertices") || !doc.contains("edges") ||
        !doc.contains("gamma0")) {
        throw ConfigError("malformed graph document: expected keys vertices, edges, gamma0");
    }
    std::vector<std::string> vertices;
    for (const auto& v : doc.at("vertices")) {
        if (!v.is_string()) throw ConfigError("malformed graph document: vertex ids must be strings");
        vertices.push_back(v.get<std::string>());
    }
    std::vector<std::string> sorted = vertices;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw ConfigError("malformed graph document: duplicate vertex id");
    }
    auto index_of = [&](const std::string& id) {
        auto it = std::find(vertices.begin(), vertices.end(), id);
        if (it == vertices.end()) throw ConfigError("unknown vertex id '" + id + "'");
        return static_cast<int>(it - vertices.begin());
    };

    std::vector<Edge> edges;
    for (const auto& e : doc.at("edges")) {
        if (!e.is_object() || !e.contains("id") || !e.contains("ends") || !e.contains("length")) {
            throw ConfigError("malformed graph document: edge needs id, ends, length");
        }
        Edge edge;
        edge.id = e.at("id").is_string() ? e.at("id").get<std::string>() : e.at("id").dump();
        const auto& ends = e.at("ends");
        if (!ends.is_array() || ends.size() != 2 || !ends[0].is_string() || !ends[1].is_string()) {
            throw ConfigError("edge '" + edge.id + "': ends must be two vertex ids");
        }
        std::string a = ends[0].get<std::string>();
        std::string b = ends[1].get<std::string>();
        if (a == b) throw ConfigError("edge '" + edge.id + "': self-loop; cycle detected");
        if (b < a) std::swap(a, b);
        edge.first = index_of(a);
        edge.second = index_of(b);
        const auto& len = e.at("length");
        if (len.is_string()) {
            edge.length_text = len.get<std::string>();
        } else if (len.is_number()) {
            edge.length_text = len.dump();
        } else {
            throw ConfigError("edge '" + edge.id + "': length must be a decimal string");
        }
        edge.length = parse_length(edge.length_text, edge.id);
        edges.push_back(std::move(edge));
    }
    if (!doc.at("gamma0").is_string()) throw ConfigError("gamma0 must be a vertex id");
    return MetricGraph(std::move(vertices), std::move(edges), doc.at("gamma0").get<std::string>());
}

MetricGraph MetricGraph::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open graph file '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    try {
        return parse(buffer.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

int MetricGraph::vertex_index(std::string_view id) const {
    auto it = std::find(vertex_ids_.begin(), vertex_ids_.end(), id);
    if (it == vertex_ids_.end()) throw ConfigError("unknown vertex id '" + std::string(id) + "'");
    return static_cast<int>(it - vertex_ids_.begin());
}

int MetricGraph::edge_index(std::string_view id) const {
    for (int e = 0; e < edge_count(); ++e) {
        if (edges_[e].id == id) return e;
    }
    throw ConfigError("unknown edge id '" + std::string(id) + "'");
}

void MetricGraph::validate() {
    const int nv = vertex_count();
    if (nv < 2 || edges_.empty()) throw ConfigError("graph needs at least one edge");
    incident_.assign(nv, {});
    DisjointSet components(nv);
    for (int e = 0; e < edge_count(); ++e) {
        auto& edge = edges_[e];
        if (!(edge.length > 0.0) || !std::isfinite(edge.length)) {
            throw ConfigError("edge '" + edge.id + "': length must be > 0");
        }
        if (edge.first < 0 || edge.first >= nv || edge.second < 0 || edge.second >= nv) {
            throw ConfigError("edge '" + edge.id + "': endpoint out of range");
        }
        if (vertex_ids_[edge.second] < vertex_ids_[edge.first]) std::swap(edge.first, edge.second);
        if (!components.unite(edge.first, edge.second)) {
            throw ConfigError("cycle detected at edge '" + edge.id + "'");
        }
        incident_[edge.first].push_back(e);
        incident_[edge.second].push_back(e);
    }
    for (int v = 0; v < nv; ++v) {
        if (components.find(v) != components.find(0)) {
            throw ConfigError("graph is not connected (vertex '" + vertex_ids_[v] + "')");
        }
    }
    for (int v = 0; v < nv; ++v) {
        const int deg = degree(v);
        if (deg == 1) {
            leaves_.push_back(v);
        } else if (deg == 2) {
            throw ConfigError("vertex '" + vertex_ids_[v] +
                              "' has degree 2; merge its edges before loading");
        } else {
            internal_.push_back(v);
        }
    }
    if (!is_leaf(gamma0_)) throw ConfigError("gamma0 '" + vertex_ids_[gamma0_] + "' is not a leaf");
    for (int v : leaves_) {
        if (v != gamma0_) controlled_.push_back(v);
    }
}

void MetricGraph::compute_distances() {
    const int nv = vertex_count();
    dist_.assign(static_cast<size_t>(nv) * nv, std::numeric_limits<double>::infinity());
    next_hop_.assign(static_cast<size_t>(nv) * nv, -1);
    for (int src = 0; src < nv; ++src) {
        // BFS over the tree; record parent edge to reconstruct first hops
        std::vector<int> parent_edge(nv, -1);
        std::vector<char> seen(nv, 0);
        std::queue<int> todo;
        dist_[src * nv + src] = 0.0;
        seen[src] = 1;
        todo.push(src);
        while (!todo.empty()) {
            int u = todo.front();
            todo.pop();
            for (int e : incident_[u]) {
                int w = other_end(e, u);
                if (seen[w]) continue;
                seen[w] = 1;
                parent_edge[w] = e;
                dist_[src * nv + w] = dist_[src * nv + u] + edges_[e].length;
                todo.push(w);
            }
        }
        // first hop from src toward v: walk back from v
        for (int v = 0; v < nv; ++v) {
            if (v == src) continue;
            int cur = v;
            int e = parent_edge[cur];
            while (other_end(e, cur) != src) {
                cur = other_end(e, cur);
                e = parent_edge[cur];
            }
            next_hop_[src * nv + v] = e;
        }
    }
}

int MetricGraph::other_end(int e, int v) const {
    const Edge& edge = edges_.at(e);
    if (edge.first == v) return edge.second;
    if (edge.second == v) return edge.first;
    throw std::invalid_argument("vertex not incident to edge");
}

double MetricGraph::offset_of(int e, int v) const {
    const Edge& edge = edges_.at(e);
    if (edge.first == v) return 0.0;
    if (edge.second == v) return edge.length;
    throw std::invalid_argument("vertex not incident to edge");
}

bool MetricGraph::is_controlled(int v) const {
    return std::find(controlled_.begin(), controlled_.end(), v) != controlled_.end();
}

void MetricGraph::check_point(const GraphPoint& p) const {
    if (p.edge < 0 || p.edge >= edge_count()) throw std::invalid_argument("point edge out of range");
    const double l = edges_[p.edge].length;
    if (!(p.offset >= -1e-12 * l && p.offset <= l * (1 + 1e-12))) {
        throw std::invalid_argument("point offset outside edge");
    }
}

double MetricGraph::distance(const GraphPoint& p, int v) const {
    check_point(p);
    const Edge& edge = edges_[p.edge];
    return std::min(p.offset + vertex_distance(edge.first, v),
                    edge.length - p.offset + vertex_distance(edge.second, v));
}

double MetricGraph::distance(const GraphPoint& p, const GraphPoint& r) const {
    check_point(p);
    check_point(r);
    if (p.edge == r.edge) return std::abs(p.offset - r.offset);
    const Edge& ep = edges_[p.edge];
    return std::min(p.offset + distance(r, ep.first),
                    ep.length - p.offset + distance(r, ep.second));
}

std::vector<int> MetricGraph::path_edges(int u, int v) const {
    std::vector<int> path;
    const int nv = vertex_count();
    while (u != v) {
        int e = next_hop_[u * nv + v];
        path.push_back(e);
        u = other_end(e, u);
    }
    return path;
}

double MetricGraph::eccentricity() const { return eccentricity(gamma0_); }

double MetricGraph::eccentricity(int root_leaf) const {
    double best = -1.0;
    for (int v : leaves_) {
        if (v == root_leaf) continue;
        best = std::max(best, vertex_distance(v, root_leaf));
    }
    if (best < 0.0) throw ConfigError("controlled leaf set is empty");
    return best;
}

std::vector<Sheaf> MetricGraph::find_sheaves() const {
    std::vector<Sheaf> out;
    for (int v : internal_) {
        Sheaf sheaf;
        sheaf.hub = v;
        int others = 0;
        for (int e : incident_[v]) {
            int w = other_end(e, v);
            if (is_leaf(w) && w != gamma0_) {
                sheaf.leaf_edges.push_back(e);
                sheaf.leaves.push_back(w);
            } else {
                ++others;
                sheaf.stem_edge = e;
                sheaf.stem_far = w;
            }
        }
        if (others == 1) out.push_back(std::move(sheaf));
    }
    return out;
}

RecoveryDomain MetricGraph::recovery_domain(double horizon) const {
    const double ecc = eccentricity();
    if (!(horizon > 2.0 * ecc)) {
        throw ConfigError("observation time too short: T must exceed 2 D(gamma0)");
    }
    RecoveryDomain dom;
    dom.eccentricity = ecc;
    dom.horizon = horizon;
    for (int e = 0; e < edge_count(); ++e) {
        EdgeBand band;
        band.edge = e;
        band.d_first = vertex_distance(edges_[e].first, gamma0_);
        band.d_second = vertex_distance(edges_[e].second, gamma0_);
        band.length = edges_[e].length;
        dom.bands.push_back(band);
    }
    return dom;
}

GraphPoint MetricGraph::vertex_point(int v) const {
    int e = incident_.at(v).front();
    return {e, offset_of(e, v)};
}

std::optional<int> MetricGraph::vertex_of(const GraphPoint& p, double tol) const {
    check_point(p);
    const Edge& edge = edges_[p.edge];
    if (std::abs(p.offset) <= tol) return edge.first;
    if (std::abs(p.offset - edge.length) <= tol) return edge.second;
    return std::nullopt;
}

} // namespace mgwave
