#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "expr.hpp"
#include "mgwave/metric_graph.hpp"
#include "mgwave/recon.hpp"

namespace mgcli {

/// q(x) or a(x, t): a closed-form expression or a gridded CSV table
/// ("table:path" with columns edge,x[,t],value).
class Coefficient {
public:
    static Coefficient parse(const std::string& spec, const std::string& base_dir, const mgwave::MetricGraph& g,
                             bool time_dependent);
    double operator()(int edge, double x, double t) const;
    bool zero() const { return zero_; }
    const std::string& spec() const { return spec_; }

private:
    struct Table {
        std::vector<double> x, t;  // t empty for q
        std::vector<double> v;     // x-major
    };
    std::string spec_;
    bool zero_ = false;
    const mgwave::MetricGraph* g_ = nullptr;
    std::optional<Expr> expr_;
    std::map<int, Table> tables_;
};

struct PulseSpec {
    std::string leaf;
    double center = 0.5;
    double h = 0.0;  // 0: no carrier, real envelope only
    double b = 0.1;
    double amplitude = 1.0;
};

struct RunConfig {
    std::string source;            // config path, empty when built in memory
    std::string base_dir = ".";
    std::string graph_path;
    nlohmann::json graph_inline;   // used when the graph is given inline
    std::string q = "0";
    std::string a = "0";
    bool has_a = false;
    double dx = 2e-3;
    double cfl = 0.9;
    double T = 0.0;
    double blowup_bound = 50.0;
    double h = 0.01;
    double b = 0.05;
    mgwave::EpsPolicy eps;
    double spacing = 0.0;
    double delta = 0.0;
    double diamond = 1.5;
    double missing_tol = 0.05;
    std::string calibration = "pipeline";
    int workers = 1;
    unsigned seed = 0;
    std::string out = "out";
    nlohmann::json sections;       // command-specific sections keyed by command name
    std::optional<double> check_median;  // recover: required median relative error

    static nlohmann::json read_json(const std::string& path);
    static RunConfig load(const std::string& path);
    static RunConfig from_json(const nlohmann::json& doc, const std::string& source, const std::string& base_dir);
    nlohmann::json to_json() const;

    mgwave::MetricGraph graph() const;
    mgwave::ReconOptions recon_options() const;
    const nlohmann::json& section(const std::string& name) const;
    std::vector<PulseSpec> pulses(const std::string& name) const;
    std::string where() const { return source.empty() ? "config" : source; }
};

std::string config_dir(const std::string& config_path);
std::string resolve_path(const std::string& base_dir, const std::string& path);

} // namespace mgcli
