#include "config.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "mgwave/error.hpp"

namespace mgcli {

using mgwave::ConfigError;
using nlohmann::json;

std::string resolve_path(const std::string& base_dir, const std::string& path) {
    std::filesystem::path p(path);
    if (p.is_absolute()) return p.string();
    return (std::filesystem::path(base_dir) / p).lexically_normal().string();
}

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        cell.erase(0, cell.find_first_not_of(" \t\r"));
        cell.erase(cell.find_last_not_of(" \t\r") + 1);
        out.push_back(cell);
    }
    return out;
}

double to_double(const std::string& s, const std::string& where) {
    try {
        size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(where + ": '" + s + "' is not a number");
    }
}

// index of the cell containing v and the weight of its right end
std::pair<size_t, double> locate(const std::vector<double>& axis, double v) {
    if (axis.size() == 1) return {0, 0.0};
    auto it = std::upper_bound(axis.begin(), axis.end(), v);
    size_t i = it == axis.begin() ? 0 : static_cast<size_t>(it - axis.begin()) - 1;
    i = std::min(i, axis.size() - 2);
    double w = (v - axis[i]) / (axis[i + 1] - axis[i]);
    return {i, std::clamp(w, 0.0, 1.0)};
}

template <class T>
T get(const json& obj, const std::string& key, const std::string& where, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + ": key '" + key + "' has the wrong type");
    }
}

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + ": expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!allowed.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
    }
}

const std::set<std::string> kCommands{"simulate", "vertex_trace", "rays", "dtn", "recover", "calibrate"};

} // namespace

// ---------------------------------------------------------------- coefficients

Coefficient Coefficient::parse(const std::string& spec, const std::string& base_dir, const mgwave::MetricGraph& g,
                               bool time_dependent) {
    Coefficient c;
    c.spec_ = spec;
    c.g_ = &g;
    if (spec.rfind("table:", 0) != 0) {
        c.expr_ = Expr::parse(spec);
        if (!time_dependent && c.expr_->uses_t()) throw ConfigError("potential '" + spec + "' must not depend on t");
        // constant zero is recognised so the solvers can skip the term
        if (!c.expr_->uses_t() && spec.find_first_not_of(" 0.") == std::string::npos) c.zero_ = true;
        return c;
    }
    const std::string path = resolve_path(base_dir, spec.substr(6));
    std::istringstream in(read_file(path));
    std::string line;
    std::getline(in, line);
    const auto header = split_csv(line);
    const std::vector<std::string> want = time_dependent ? std::vector<std::string>{"edge", "x", "t", "value"}
                                                         : std::vector<std::string>{"edge", "x", "value"};
    if (header != want) {
        std::string expect;
        for (const auto& w : want) expect += (expect.empty() ? "" : ",") + w;
        throw ConfigError(path + ":1: expected header " + expect);
    }
    std::map<int, std::map<std::pair<double, double>, double>> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = path + ":" + std::to_string(lineno);
        auto cells = split_csv(line);
        if (cells.size() != want.size()) throw ConfigError(where + ": expected " + std::to_string(want.size()) + " columns");
        int e = g.edge_index(cells[0]);
        if (e < 0) throw ConfigError(where + ": unknown edge '" + cells[0] + "'");
        const double x = to_double(cells[1], where);
        const double t = time_dependent ? to_double(cells[2], where) : 0.0;
        rows[e][{x, t}] = to_double(cells.back(), where);
    }
    for (int e = 0; e < g.edge_count(); ++e) {
        if (!rows.count(e)) throw ConfigError(path + ": no rows for edge '" + g.edge(e).id + "'");
        Table tab;
        std::set<double> xs, ts;
        for (const auto& [key, v] : rows[e]) {
            xs.insert(key.first);
            ts.insert(key.second);
        }
        tab.x.assign(xs.begin(), xs.end());
        if (time_dependent) tab.t.assign(ts.begin(), ts.end());
        const size_t nt = time_dependent ? tab.t.size() : 1;
        if (rows[e].size() != tab.x.size() * nt) {
            throw ConfigError(path + ": edge '" + g.edge(e).id + "' is not a full tensor grid in (x, t)");
        }
        for (const auto& [key, v] : rows[e]) tab.v.push_back(v);  // map order is x-major
        c.tables_[e] = std::move(tab);
    }
    return c;
}

double Coefficient::operator()(int edge, double x, double t) const {
    if (expr_) {
        const double d = g_->distance(mgwave::GraphPoint{edge, x}, g_->gamma0());
        return (*expr_)(Vars{x, t, d});
    }
    const Table& tab = tables_.at(edge);
    auto [i, wx] = locate(tab.x, x);
    if (tab.t.empty()) {
        const double left = tab.v[i];
        return tab.x.size() == 1 ? left : (1 - wx) * left + wx * tab.v[i + 1];
    }
    const size_t nt = tab.t.size();
    auto [j, wt] = locate(tab.t, t);
    auto at = [&](size_t a, size_t b) { return tab.v[std::min(a, tab.x.size() - 1) * nt + std::min(b, nt - 1)]; };
    return (1 - wx) * ((1 - wt) * at(i, j) + wt * at(i, j + 1)) + wx * ((1 - wt) * at(i + 1, j) + wt * at(i + 1, j + 1));
}

// ---------------------------------------------------------------- run config

json RunConfig::read_json(const std::string& path) {
    const std::string text = read_file(path);
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        // nlohmann reports a byte offset; turn it into line:column
        size_t line = 1, col = 1;
        for (size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ConfigError(path + ":" + std::to_string(line) + ":" + std::to_string(col) + ": malformed config");
    }
    return doc;
}

std::string config_dir(const std::string& path) {
    std::string base = std::filesystem::path(path).parent_path().string();
    return base.empty() ? "." : base;
}

RunConfig RunConfig::load(const std::string& path) { return from_json(read_json(path), path, config_dir(path)); }

RunConfig RunConfig::from_json(const json& doc, const std::string& source, const std::string& base_dir) {
    RunConfig c;
    c.source = source;
    c.base_dir = base_dir;
    const std::string w = c.where();
    std::set<std::string> top{"graph", "q", "a", "solver", "probe", "recon", "seed", "out"};
    top.insert(kCommands.begin(), kCommands.end());
    check_keys(doc, top, w);
    if (!doc.contains("graph")) throw ConfigError(w + ": missing key 'graph'");
    if (doc["graph"].is_string()) {
        c.graph_path = resolve_path(base_dir, doc["graph"].get<std::string>());
        if (!std::filesystem::exists(c.graph_path)) throw ConfigError(w + ": graph file " + c.graph_path + " not found");
    } else if (doc["graph"].is_object()) {
        c.graph_inline = doc["graph"];
    } else {
        throw ConfigError(w + ": 'graph' must be a path or an inline graph object");
    }
    c.q = get<std::string>(doc, "q", w, c.q);
    c.has_a = doc.contains("a");
    c.a = get<std::string>(doc, "a", w, c.a);
    c.seed = get<unsigned>(doc, "seed", w, c.seed);
    c.out = get<std::string>(doc, "out", w, c.out);
    if (doc.contains("solver")) {
        const json& s = doc["solver"];
        check_keys(s, {"dx", "cfl", "T", "blowup_bound"}, w + ": solver");
        c.dx = get<double>(s, "dx", w, c.dx);
        c.cfl = get<double>(s, "cfl", w, c.cfl);
        c.T = get<double>(s, "T", w, c.T);
        c.blowup_bound = get<double>(s, "blowup_bound", w, c.blowup_bound);
    }
    if (doc.contains("probe")) {
        const json& p = doc["probe"];
        check_keys(p, {"h", "b", "eps", "auto_ladder", "agreement", "max_halvings"}, w + ": probe");
        c.h = get<double>(p, "h", w, c.h);
        c.b = get<double>(p, "b", w, c.b);
        c.eps.eps = get<double>(p, "eps", w, c.eps.eps);
        c.eps.auto_ladder = get<bool>(p, "auto_ladder", w, c.eps.auto_ladder);
        c.eps.agreement = get<double>(p, "agreement", w, c.eps.agreement);
        c.eps.max_halvings = get<int>(p, "max_halvings", w, c.eps.max_halvings);
    }
    if (doc.contains("recon")) {
        const json& r = doc["recon"];
        check_keys(r, {"spacing", "delta", "diamond", "missing_tol", "calibration", "workers", "check_median"},
                   w + ": recon");
        c.spacing = get<double>(r, "spacing", w, c.spacing);
        c.delta = get<double>(r, "delta", w, c.delta);
        c.diamond = get<double>(r, "diamond", w, c.diamond);
        c.missing_tol = get<double>(r, "missing_tol", w, c.missing_tol);
        c.calibration = get<std::string>(r, "calibration", w, c.calibration);
        c.workers = get<int>(r, "workers", w, c.workers);
        if (r.contains("check_median")) c.check_median = get<double>(r, "check_median", w, 0.0);
    }
    for (const auto& name : kCommands) {
        if (doc.contains(name)) c.sections[name] = doc[name];
    }
    if (!(c.T > 0.0)) throw ConfigError(w + ": solver.T must be > 0");
    if (!(c.dx > 0.0)) throw ConfigError(w + ": solver.dx must be > 0");
    if (!(c.cfl > 0.0 && c.cfl <= 1.0)) throw ConfigError(w + ": solver.cfl must lie in (0, 1]");
    if (c.calibration != "pipeline" && c.calibration != "volumetric") {
        throw ConfigError(w + ": recon.calibration must be 'pipeline' or 'volumetric'");
    }
    // coefficient strings must parse against the graph
    auto g = c.graph();
    Coefficient::parse(c.q, c.base_dir, g, false);
    Coefficient::parse(c.a, c.base_dir, g, true);
    return c;
}

json RunConfig::to_json() const {
    json j;
    if (!graph_path.empty()) j["graph"] = graph_path;
    else j["graph"] = graph_inline;
    j["q"] = q;
    if (has_a) j["a"] = a;
    j["solver"] = {{"dx", dx}, {"cfl", cfl}, {"T", T}, {"blowup_bound", blowup_bound}};
    j["probe"] = {{"h", h},
                  {"b", b},
                  {"eps", eps.eps},
                  {"auto_ladder", eps.auto_ladder},
                  {"agreement", eps.agreement},
                  {"max_halvings", eps.max_halvings}};
    j["recon"] = {{"spacing", spacing},         {"delta", delta},     {"diamond", diamond},
                  {"missing_tol", missing_tol}, {"calibration", calibration}, {"workers", workers}};
    if (check_median) j["recon"]["check_median"] = *check_median;
    j["seed"] = seed;
    j["out"] = out;
    for (auto it = sections.begin(); it != sections.end(); ++it) j[it.key()] = it.value();
    return j;
}

mgwave::MetricGraph RunConfig::graph() const {
    if (!graph_path.empty()) return mgwave::MetricGraph::load(graph_path);
    return mgwave::MetricGraph::parse(graph_inline.dump());
}

mgwave::ReconOptions RunConfig::recon_options() const {
    mgwave::ReconOptions o;
    o.h = h;
    o.b = b;
    o.eps = eps;
    o.spacing = spacing;
    o.delta = delta;
    o.diamond = diamond;
    o.missing_tol = missing_tol;
    o.calibration = calibration == "volumetric" ? mgwave::CalibrationMode::volumetric : mgwave::CalibrationMode::pipeline;
    o.blowup_bound = blowup_bound;
    o.workers = workers;
    return o;
}

const json& RunConfig::section(const std::string& name) const {
    static const json empty = json::object();
    auto it = sections.find(name);
    return it == sections.end() ? empty : *it;
}

std::vector<PulseSpec> RunConfig::pulses(const std::string& name) const {
    const json& sec = section(name);
    const std::string w = where() + ": " + name;
    std::vector<PulseSpec> out;
    if (!sec.contains("pulses")) throw ConfigError(w + ": missing 'pulses'");
    for (const auto& p : sec["pulses"]) {
        check_keys(p, {"leaf", "center", "h", "b", "amplitude"}, w + ": pulse");
        PulseSpec s;
        if (!p.contains("leaf")) throw ConfigError(w + ": pulse without 'leaf'");
        s.leaf = get<std::string>(p, "leaf", w, "");
        s.center = get<double>(p, "center", w, s.center);
        s.h = get<double>(p, "h", w, s.h);
        s.b = get<double>(p, "b", w, s.b);
        s.amplitude = get<double>(p, "amplitude", w, s.amplitude);
        out.push_back(s);
    }
    return out;
}

} // namespace mgcli
