#include <doctest.h>

#include <functional>
#include <random>

#include "mgwave/error.hpp"
#include "mgwave/metric_graph.hpp"
#include "support.hpp"

using namespace mgwave;

namespace {

const char* kStar = R"({
  "vertices": ["c", "z1", "z2", "z3"],
  "edges": [
    {"id": "e1", "ends": ["c", "z1"], "length": "2"},
    {"id": "e2", "ends": ["c", "z2"], "length": "1"},
    {"id": "e3", "ends": ["z3", "c"], "length": "5"}
  ],
  "gamma0": "z3"
})";

std::string message_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const std::exception& e) {
        return e.what();
    }
    return {};
}

// Path length by exhaustive DFS over simple paths.
double brute_vertex_distance(const MetricGraph& g, int u, int v) {
    double best = -1.0;
    std::vector<char> seen(g.vertex_count(), 0);
    std::function<void(int, double)> walk = [&](int w, double acc) {
        if (w == v) {
            if (best < 0 || acc < best) best = acc;
            return;
        }
        seen[w] = 1;
        for (int e : g.incident(w)) {
            int n = g.other_end(e, w);
            if (!seen[n]) walk(n, acc + g.edge(e).length);
        }
        seen[w] = 0;
    };
    walk(u, 0.0);
    return best;
}

double brute_distance(const MetricGraph& g, const GraphPoint& p, const GraphPoint& r) {
    if (p.edge == r.edge) return std::abs(p.offset - r.offset);
    const Edge& a = g.edge(p.edge);
    const Edge& b = g.edge(r.edge);
    double best = 1e300;
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            int va = i ? a.second : a.first;
            int vb = j ? b.second : b.first;
            double da = i ? a.length - p.offset : p.offset;
            double db = j ? b.length - r.offset : r.offset;
            best = std::min(best, da + brute_vertex_distance(g, va, vb) + db);
        }
    }
    return best;
}

} // namespace

TEST_CASE("single edge parses to an interval") {
    auto g = MetricGraph::parse(R"({"vertices":["u","v"],"edges":[{"id":"e","ends":["v","u"],"length":"1"}],"gamma0":"v"})");
    CHECK(g.edge_count() == 1);
    CHECK(g.controlled().size() == 1);
    CHECK(g.vertex_id(g.controlled()[0]) == "u");
    CHECK(g.vertex_id(g.edge(0).first) == "u");
    CHECK(g.eccentricity() == doctest::Approx(1.0));
    CHECK(g.find_sheaves().empty());
}

TEST_CASE("3-star (2,1,5)") {
    auto g = MetricGraph::parse(kStar);
    CHECK(g.leaves().size() == 3);
    CHECK(g.vertex_id(g.edge(2).first) == "c");
    int z1 = g.vertex_index("z1");
    int z3 = g.vertex_index("z3");
    CHECK(g.vertex_distance(z1, z3) == doctest::Approx(7.0));
    CHECK(g.distance(g.vertex_point(z1), g.vertex_point(z3)) == doctest::Approx(7.0));
    CHECK(g.eccentricity() == doctest::Approx(7.0));
    auto sheaves = g.find_sheaves();
    REQUIRE(sheaves.size() == 1);
    CHECK(sheaves[0].stem_edge == g.edge_index("e3"));
    CHECK(sheaves[0].stem_far == z3);
    CHECK(sheaves[0].leaves.size() == 2);
}

TEST_CASE("symmetric star eccentricity") {
    auto g = testsupport::star({1, 1, 1});
    CHECK(g.eccentricity() == doctest::Approx(2.0));
}

TEST_CASE("numeric lengths are accepted") {
    auto g = MetricGraph::parse(R"({"vertices":["a","b"],"edges":[{"id":"e","ends":["a","b"],"length":0.25}],"gamma0":"b"})");
    CHECK(g.edge(0).length == 0.25);
}

TEST_CASE("validation errors") {
    CHECK(message_of([] {
              MetricGraph::parse(R"({"vertices":["a","b","c","d"],"edges":[
                {"id":"1","ends":["a","b"],"length":"1"},{"id":"2","ends":["b","c"],"length":"1"},
                {"id":"3","ends":["c","a"],"length":"1"},{"id":"4","ends":["a","d"],"length":"1"}],
                "gamma0":"d"})");
          }).find("cycle detected") != std::string::npos);
    CHECK(message_of([] {
              MetricGraph::parse(R"({"vertices":["a","b"],"edges":[{"id":"e","ends":["a","b"],"length":"0"}],"gamma0":"b"})");
          }).find("length must be > 0") != std::string::npos);
    CHECK(message_of([] {
              MetricGraph::parse(R"({"vertices":["c","x","y","z"],"edges":[
                {"id":"1","ends":["c","x"],"length":"1"},{"id":"2","ends":["c","y"],"length":"1"},
                {"id":"3","ends":["c","z"],"length":"1"}],"gamma0":"c"})");
          }).find("not a leaf") != std::string::npos);
    CHECK(message_of([] {
              MetricGraph::parse(R"({"vertices":["a","b","c"],"edges":[
                {"id":"1","ends":["a","b"],"length":"1"},{"id":"2","ends":["b","c"],"length":"1"}],"gamma0":"c"})");
          }).find("degree 2") != std::string::npos);
    CHECK(message_of([] {
              MetricGraph::parse(R"({"vertices":["a","b","c","d"],"edges":[
                {"id":"1","ends":["a","b"],"length":"1"},{"id":"2","ends":["c","d"],"length":"1"}],"gamma0":"b"})");
          }).find("cycle") == std::string::npos);
    CHECK_THROWS_AS(MetricGraph::parse("{not json"), ConfigError);
    CHECK_THROWS_AS(MetricGraph::parse(R"({"vertices":["a","b"],"edges":[{"id":"e","ends":["a","b"],"length":"1,5"}],"gamma0":"b"})"),
                    ConfigError);
}

TEST_CASE("caterpillar has three sheaves") {
    std::vector<std::string> ids{"g0", "c", "h1", "h2", "h3", "a1", "a2", "b1", "b2", "d1", "d2"};
    auto e = [](std::string id, int a, int b) { return Edge{id, a, b, 1.0, "1"}; };
    MetricGraph g(ids,
                  {e("r", 0, 1), e("s1", 1, 2), e("s2", 1, 3), e("s3", 1, 4), e("1", 2, 5), e("2", 2, 6),
                   e("3", 3, 7), e("4", 3, 8), e("5", 4, 9), e("6", 4, 10)},
                  "g0");
    auto sheaves = g.find_sheaves();
    REQUIRE(sheaves.size() == 3);
    CHECK(g.vertex_id(sheaves[0].hub) == "h1");
    CHECK(g.vertex_id(sheaves[2].hub) == "h3");
    for (const auto& s : sheaves) CHECK(g.vertex_id(s.stem_far) == "c");
}

TEST_CASE("recovery domain on the interval") {
    auto g = testsupport::interval(1.0);
    auto dom = g.recovery_domain(3.0);
    // chart from u: d(x, gamma0) = 1 - x, band {2 - x <= t <= 3 - x}
    for (double x : {0.0, 0.3, 1.0}) {
        CHECK(dom.t_min(0, x) == doctest::Approx(2.0 - x));
        CHECK(dom.t_max(0, x) == doctest::Approx(3.0 - x));
    }
    CHECK(dom.t_min(0, 1.0) == doctest::Approx(1.0));
    CHECK(message_of([&] { g.recovery_domain(2.0); }).find("observation time too short") !=
          std::string::npos);
}

TEST_CASE("property: distance matches brute force on random trees") {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 60; ++trial) {
        auto g = testsupport::random_tree(rng, 8);
        CHECK(g.edge_count() <= 8);
        CHECK(!g.find_sheaves().empty());
        std::vector<GraphPoint> pts;
        for (int k = 0; k < 6; ++k) {
            int e = std::uniform_int_distribution<int>(0, g.edge_count() - 1)(rng);
            pts.push_back({e, unit(rng) * g.edge(e).length});
        }
        for (const auto& p : pts) {
            CHECK(g.distance(p, p) == doctest::Approx(0.0));
            for (const auto& r : pts) {
                double d = g.distance(p, r);
                CHECK(d >= 0.0);
                CHECK(d == doctest::Approx(brute_distance(g, p, r)));
                CHECK(d == doctest::Approx(g.distance(r, p)));
                for (const auto& s : pts) CHECK(d <= g.distance(p, s) + g.distance(s, r) + 1e-12);
            }
        }
        const double T = 2.0 * g.eccentricity() + 0.7;
        auto dom = g.recovery_domain(T);
        for (int e = 0; e < g.edge_count(); ++e) {
            double x = unit(rng) * g.edge(e).length;
            CHECK(dom.t_max(e, x) - dom.t_min(e, x) == doctest::Approx(T - 2.0 * g.eccentricity()));
        }
        for (int u = 0; u < g.vertex_count(); ++u) {
            for (int v = 0; v < g.vertex_count(); ++v) {
                double sum = 0.0;
                for (int e : g.path_edges(u, v)) sum += g.edge(e).length;
                CHECK(sum == doctest::Approx(g.vertex_distance(u, v)));
            }
        }
    }
}
