#pragma once

#include <random>
#include <string>
#include <vector>

#include "mgwave/metric_graph.hpp"

namespace testsupport {

inline mgwave::MetricGraph interval(double l) {
    return mgwave::MetricGraph({"u", "v"}, {{"e", 0, 1, l, std::to_string(l)}}, "v");
}

// Star with hub "c"; leaf i is "z<i>" on edge "e<i>". The last edge is the
// stem toward gamma0 unless gamma0 is given explicitly.
inline mgwave::MetricGraph star(const std::vector<double>& lengths, int gamma0_edge = -1) {
    std::vector<std::string> ids{"c"};
    std::vector<mgwave::Edge> edges;
    for (size_t i = 0; i < lengths.size(); ++i) {
        ids.push_back("z" + std::to_string(i + 1));
        edges.push_back({"e" + std::to_string(i + 1), 0, static_cast<int>(i + 1), lengths[i],
                         std::to_string(lengths[i])});
    }
    if (gamma0_edge < 0) gamma0_edge = static_cast<int>(lengths.size()) - 1;
    return mgwave::MetricGraph(ids, edges, ids[gamma0_edge + 1]);
}

// Random tree without degree-2 vertices; leaf "r" is gamma0.
inline mgwave::MetricGraph random_tree(std::mt19937& rng, int max_edges) {
    std::uniform_real_distribution<double> len(0.3, 2.0);
    std::vector<std::string> ids{"r", "c"};
    std::vector<std::pair<int, int>> ends{{0, 1}};
    std::vector<int> degree{1, 1};
    auto add = [&](int parent) {
        ids.push_back("n" + std::to_string(ids.size()));
        degree.push_back(1);
        ends.push_back({parent, static_cast<int>(ids.size()) - 1});
        ++degree[parent];
    };
    add(1);
    add(1);
    while (static_cast<int>(ends.size()) + 2 <= max_edges) {
        int v = std::uniform_int_distribution<int>(1, static_cast<int>(ids.size()) - 1)(rng);
        if (degree[v] == 1) {
            add(v);
            add(v);
        } else {
            add(v);
        }
        if (std::uniform_int_distribution<int>(0, 3)(rng) == 0) break;
    }
    std::vector<mgwave::Edge> edges;
    for (size_t i = 0; i < ends.size(); ++i) {
        double l = len(rng);
        edges.push_back({"e" + std::to_string(i), ends[i].first, ends[i].second, l, std::to_string(l)});
    }
    return mgwave::MetricGraph(ids, edges, "r");
}

} // namespace testsupport
