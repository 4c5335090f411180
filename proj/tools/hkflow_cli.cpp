#include "hkflow/scenarios.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace hkflow;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitBlowup = 3;
constexpr int kExitDefect = 4;

const double kPi = std::acos(-1.0);

// JSON config files: nested objects become subcommand sections, arrays become repeated inputs.
class JsonConfig : public CLI::Config {
public:
    std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

    std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
        std::vector<CLI::ConfigItem> items;
        flatten(json::parse(in), {}, items);
        return items;
    }

private:
    static std::string scalar(const json& v) {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
        return v.dump();
    }

    static void flatten(const json& j, std::vector<std::string> parents, std::vector<CLI::ConfigItem>& items) {
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (it->is_object()) {
                auto p = parents;
                p.push_back(it.key());
                flatten(*it, p, items);
                continue;
            }
            CLI::ConfigItem item;
            item.parents = parents;
            item.name = it.key();
            if (it->is_array())
                for (auto& e : *it) item.inputs.push_back(scalar(e));
            else
                item.inputs.push_back(scalar(*it));
            items.push_back(item);
        }
    }
};

struct Options {
    std::string preset;
    std::string model = "flat";
    double c = 1.0;
    std::string grid;
    std::string scenario;
    double eps = std::numeric_limits<double>::quiet_NaN();
    double dt = 0.0, cfl = 0.0, t_end = 0.0;
    long steps = 0;
    std::uint64_t seed = 0;
    int threads = 0;
    std::string out = ".";
    std::string integrator;
    std::string velocity_form;
    int monitor_every = 0;
    int snap_every = 0;
    int stencil_order = 0;
    std::string check = "both";
    int pairs = 10;
};

void add_common(CLI::App* cmd, Options& o) {
    cmd->add_option("--preset", o.preset, "Preset name (see list-presets)");
    cmd->add_option("--model", o.model, "Ambient model")->check(CLI::IsMember({"flat", "eh"}));
    cmd->add_option("--c", o.c, "Eguchi-Hanson parameter");
    cmd->add_option("--grid", o.grid, "Grid size N1xN2");
    cmd->add_option("--scenario", o.scenario, "Generator: flat-graph, plane, eh-zero-section, eh-perturbation");
    cmd->add_option("--eps", o.eps, "Perturbation amplitude");
    cmd->add_option("--seed", o.seed, "Seed for random potentials and fields");
    cmd->add_option("--threads", o.threads, "Worker threads (1 gives bit-reproducible output)")->check(CLI::NonNegativeNumber);
    cmd->add_option("--out", o.out, "Output directory");
    cmd->add_option("--stencil-order", o.stencil_order, "Finite-difference order")->check(CLI::IsMember({2, 4}));
}

std::string model_name(ModelKind k) { return k == ModelKind::flat_torus ? "flat" : "eh"; }
std::string topology_name(Topology t) { return t == Topology::torus_periodic ? "torus" : "sphere"; }

std::string rho_name(RhoRule r) {
    switch (r) {
    case RhoRule::unit: return "unit";
    case RhoRule::pullback_omega2: return "pullback_omega2";
    case RhoRule::induced_dmu: return "induced_dmu";
    }
    return "?";
}

json to_json(const ScenarioSpec& s) {
    return {{"name", s.name},           {"model", model_name(s.model)},
            {"c", s.c},                 {"topology", topology_name(s.topology)},
            {"n1", s.n1},               {"n2", s.n2},
            {"stencil_order", s.stencil_order},
            {"generator", s.generator}, {"eps", s.eps},
            {"seed", s.seed},           {"rho_rule", rho_name(s.rho_rule)}};
}

json to_json(const FlowConfig& f) {
    return {{"integrator", f.integrator == Integrator::rk4 ? "rk4" : "euler"},
            {"dt_mode", f.dt_mode == DtMode::cfl ? "cfl" : "fixed"},
            {"dt", f.dt},
            {"cfl", f.cfl},
            {"max_steps", f.max_steps},
            {"t_end", f.t_end},
            {"monitor_every", f.monitor_every},
            {"defect_tol", std::isfinite(f.defect_tol) ? json(f.defect_tol) : json(nullptr)},
            {"blowup_A2", f.blowup_A2},
            {"velocity_form", f.velocity_form == VelocityForm::gradient ? "gradient" : "moment"},
            {"converge_tol", f.converge_tol},
            {"polar_filter", f.polar_filter}};
}

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void parse_grid(const std::string& g, int& n1, int& n2) {
    const auto x = g.find('x');
    if (x == std::string::npos) throw CLI::ValidationError("--grid", "expected N1xN2");
    try {
        n1 = std::stoi(g.substr(0, x));
        n2 = std::stoi(g.substr(x + 1));
    } catch (const std::exception&) {
        throw CLI::ValidationError("--grid", "expected N1xN2");
    }
    if (n1 < 4 || n2 < 4) throw CLI::ValidationError("--grid", "each size must be at least 4");
}

// Preset or defaults, then explicit flags on top.
Preset resolve(const CLI::App* cmd, const Options& o) {
    Preset p;
    if (!o.preset.empty()) {
        p = preset(o.preset);
    } else {
        const bool eh = o.model == "eh" || o.scenario.rfind("eh-", 0) == 0;
        p.spec.name = "custom";
        p.spec.model = eh ? ModelKind::eguchi_hanson : ModelKind::flat_torus;
        p.spec.topology = eh ? Topology::sphere_latlong : Topology::torus_periodic;
        p.spec.n1 = eh ? 64 : 32;
        p.spec.n2 = 32;
        p.spec.generator = eh ? "eh-perturbation" : "flat-graph";
        p.spec.eps = eh ? 0.05 : 0.1;
        p.flow.t_end = 0.1;
    }
    if (cmd->count("--model")) {
        p.spec.model = o.model == "eh" ? ModelKind::eguchi_hanson : ModelKind::flat_torus;
        p.spec.topology = o.model == "eh" ? Topology::sphere_latlong : Topology::torus_periodic;
    }
    if (cmd->count("--c")) p.spec.c = o.c;
    if (cmd->count("--grid")) parse_grid(o.grid, p.spec.n1, p.spec.n2);
    if (cmd->count("--scenario")) {
        p.spec.generator = o.scenario;
        if (o.scenario == "plane") p.spec.eps = 0.0;
    }
    if (cmd->count("--eps")) p.spec.eps = o.eps;
    if (cmd->count("--seed")) p.spec.seed = o.seed;
    if (cmd->count("--stencil-order")) p.spec.stencil_order = o.stencil_order;
    if (cmd->get_option_no_throw("--cfl") && cmd->count("--cfl")) {
        p.flow.dt_mode = DtMode::cfl;
        p.flow.cfl = o.cfl;
    }
    if (cmd->get_option_no_throw("--dt") && cmd->count("--dt")) {
        p.flow.dt_mode = DtMode::fixed;
        p.flow.dt = o.dt;
    }
    if (cmd->get_option_no_throw("--t-end") && cmd->count("--t-end")) p.flow.t_end = o.t_end;
    if (cmd->get_option_no_throw("--steps") && cmd->count("--steps")) {
        p.flow.max_steps = o.steps;
        if (!cmd->count("--t-end")) p.flow.t_end = std::numeric_limits<double>::max();
    }
    if (cmd->get_option_no_throw("--monitor-every") && cmd->count("--monitor-every"))
        p.flow.monitor_every = o.monitor_every;
    if (!o.integrator.empty()) p.flow.integrator = o.integrator == "euler" ? Integrator::euler : Integrator::rk4;
    if (!o.velocity_form.empty())
        p.flow.velocity_form = o.velocity_form == "moment" ? VelocityForm::moment : VelocityForm::gradient;
    if (p.spec.model == ModelKind::eguchi_hanson && !(p.spec.c > 0)) throw std::invalid_argument("c must be positive");
    return p;
}

json resolved_config(const std::string& command, const Preset& p, const Options& o) {
    return {{"command", command},  {"preset", o.preset.empty() ? json(nullptr) : json(o.preset)},
            {"scenario", to_json(p.spec)}, {"flow", to_json(p.flow)},
            {"threads", num_threads()},    {"out", o.out},
            {"snap_every", o.snap_every}};
}

fs::path prepare_out(const std::string& dir) {
    fs::path p(dir);
    fs::create_directories(p);
    return p;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << j.dump(2) << "\n";
}

std::string fmt(double v) {
    if (!std::isfinite(v)) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_series(const fs::path& path, const std::vector<MonitorRecord>& series) {
    std::ofstream f(path);
    f << "t,energy,sup_lambda,inf_lambda,sup_A2,max_eta3,max_eta2_defect,psi_max,star_omega_min,s_max,II_dist,"
         "volume\n";
    for (const auto& r : series) {
        const double row[] = {r.t,        r.energy,         r.sup_lambda,     r.inf_lambda, r.sup_A2, r.max_eta3,
                              r.max_eta2_defect, r.psi_max, r.star_omega_min, r.s_max,      r.II_dist, r.volume};
        for (std::size_t k = 0; k < std::size(row); ++k) f << (k ? "," : "") << fmt(row[k]);
        f << "\n";
    }
}

void write_snapshot(const fs::path& path, const AmbientModel& m, const ParamGrid& g, const Immersion& imm) {
    std::vector<NodeGeometry> geo;
    try {
        geo = surface_geometry(m, g, imm);
    } catch (const std::exception&) {
    }
    std::ofstream f(path);
    f << "i,j,chart,x0,x1,x2,x3,lambda,eta1,eta2,eta3,A2\n";
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t n = 0; n < g.size(); ++n) {
        const auto& p = imm.points[n];
        f << g.i_of(n) << "," << g.j_of(n) << "," << chart_name(p.chart);
        for (int k = 0; k < 4; ++k) f << "," << fmt(p.x[k]);
        const bool ok = geo.size() == g.size();
        f << "," << fmt(ok ? geo[n].lambda : nan);
        for (int a = 0; a < 3; ++a) f << "," << fmt(ok ? geo[n].eta[a] : nan);
        f << "," << fmt(ok ? geo[n].normA2 : nan) << "\n";
    }
}

json initial_report(const InitialReport& r) {
    return {{"max_eta3", num(r.max_eta3)},   {"max_eta2_defect", num(r.max_eta2_defect)},
            {"psi_max", num(r.psi_max)},     {"s_max", num(r.s_max)},
            {"one_minus_star_omega", num(r.one_minus_star_omega)}, {"sup_A2", num(r.sup_A2)}};
}

json record_json(const MonitorRecord& r) {
    return {{"step", r.step},
            {"t", r.t},
            {"energy", num(r.energy)},
            {"sup_lambda", num(r.sup_lambda)},
            {"inf_lambda", num(r.inf_lambda)},
            {"sup_A2", num(r.sup_A2)},
            {"max_eta3", num(r.max_eta3)},
            {"max_eta2_defect", num(r.max_eta2_defect)},
            {"psi_max", num(r.psi_max)},
            {"star_omega_min", num(r.star_omega_min)},
            {"s_max", num(r.s_max)},
            {"II_dist", num(r.II_dist)},
            {"volume", num(r.volume)}};
}

int exit_code(FlowStatus s) {
    switch (s) {
    case FlowStatus::reached_t_end:
    case FlowStatus::converged: return kExitOk;
    case FlowStatus::blowup_detected: return kExitBlowup;
    case FlowStatus::defect_exceeded:
    case FlowStatus::degenerate: return kExitDefect;
    }
    return kExitDefect;
}

int cmd_list_presets() {
    for (const auto& name : preset_names()) {
        const Preset p = preset(name);
        std::cout << name << "  [" << model_name(p.spec.model) << ", " << p.spec.n1 << "x" << p.spec.n2 << ", "
                  << p.spec.generator << (p.runs_flow ? ", flow" : "") << "]\n";
        for (const auto& e : p.expected) std::cout << "    - " << e << "\n";
    }
    return kExitOk;
}

int cmd_check_ambient(const CLI::App* cmd, const Options& o) {
    const Preset p = resolve(cmd, o);
    const AmbientModel m = make_model(p.spec);
    const fs::path out = prepare_out(o.out);
    const AmbientReport rep = validate_ambient(m);
    json checks = json::array();
    for (const auto& c : rep.checks)
        checks.push_back({{"name", c.name}, {"residual", c.residual}, {"tolerance", c.tolerance}, {"pass", c.pass}});
    json j = {{"config", resolved_config("check-ambient", p, o)}, {"checks", checks}, {"all_pass", rep.all_pass()}};
    if (!m.is_flat()) {
        j["bolt_curvature"] = extrapolated_bolt_curvature(m);
        j["bolt_curvature_reference"] = -2.0 / std::sqrt(m.c);
    }
    write_json(out / "ambient_report.json", j);
    for (const auto& c : rep.checks)
        std::cout << (c.pass ? "ok   " : "FAIL ") << c.name << "  residual " << c.residual << " (tol " << c.tolerance
                  << ")\n";
    return rep.all_pass() ? kExitOk : kExitCheckFailed;
}

int cmd_flow(const CLI::App* cmd, const Options& o) {
    const Preset p = resolve(cmd, o);
    p.flow.validate();
    const AmbientModel m = make_model(p.spec);
    const State st = build_state(p.spec);
    const fs::path out = prepare_out(o.out);

    long n_monitor = 0, last_snap = -1;
    auto hook = [&](long step, const Immersion& imm) {
        if (step == 0 || (o.snap_every > 0 && n_monitor % o.snap_every == 0)) {
            write_snapshot(out / ("snap_" + std::to_string(step) + ".csv"), m, st.grid, imm);
            last_snap = step;
        }
        ++n_monitor;
    };
    const auto t0 = std::chrono::steady_clock::now();
    const FlowResult res = flow_run(m, st.grid, st.imm, p.flow, hook);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (last_snap != res.steps)
        write_snapshot(out / ("snap_" + std::to_string(res.steps) + ".csv"), m, st.grid, res.final_state);

    write_series(out / "series.csv", res.series);
    json j = {{"config", resolved_config("flow", p, o)},
              {"initial", initial_report(st.report)},
              {"status", status_name(res.status)},
              {"message", res.message},
              {"steps", res.steps},
              {"t_final", res.final_state.time},
              {"runtime_s", secs},
              {"expected", p.expected}};
    if (!res.series.empty()) {
        j["first"] = record_json(res.series.front());
        j["last"] = record_json(res.series.back());
    }
    write_json(out / "summary.json", j);
    std::cout << status_name(res.status) << " after " << res.steps << " steps, t = " << res.final_state.time;
    if (!res.message.empty()) std::cout << " (" << res.message << ")";
    std::cout << "\n";
    return exit_code(res.status);
}

// Smooth random chart-coordinate field on a torus grid.
VariationField random_torus_field(const ParamGrid& g, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    std::array<std::array<double, 4>, 4> coef{};
    for (auto& row : coef)
        for (auto& c : row) c = uni(rng);
    std::vector<Vec4> V(g.size());
    for (std::size_t n = 0; n < g.size(); ++n) {
        const double x = g.x1(g.i_of(n)), y = g.x2(g.j_of(n));
        for (int a = 0; a < 4; ++a)
            V[n][a] = coef[a][0] + coef[a][1] * std::cos(x) + coef[a][2] * std::sin(y) + coef[a][3] * std::cos(x + y);
    }
    return VariationField(V);
}

VariationField frame_field(const AmbientModel& m, const Immersion& imm, int a) {
    std::vector<Vec4> V(imm.points.size());
    for (std::size_t n = 0; n < V.size(); ++n) V[n] = frame_at(m, imm.points[n]).vectors.col(a);
    return VariationField(V);
}

int cmd_variation(const CLI::App* cmd, Options o) {
    if (!cmd->count("--stencil-order")) o.stencil_order = 4;
    Preset p = resolve(cmd, o);
    if (!cmd->count("--stencil-order")) p.spec.stencil_order = 4;
    if (!cmd->count("--grid") && p.spec.topology == Topology::torus_periodic) p.spec.n1 = p.spec.n2 = 128;
    const AmbientModel m = make_model(p.spec);
    const fs::path out = prepare_out(o.out);
    json j = {{"config", resolved_config("variation", p, o)}};
    bool pass = true;

    if (o.check == "first" || o.check == "both") {
        json rows = json::array();
        double worst = 0.0;
        for (int k = 0; k < o.pairs; ++k) {
            ScenarioSpec s = p.spec;
            s.seed = p.spec.seed + 1 + k;
            const State st = build_state(s);
            const VariationField V = st.grid.topology == Topology::torus_periodic
                                         ? random_torus_field(st.grid, 1000 + s.seed)
                                         : frame_field(m, st.imm, k % 4);
            const FirstVariation fv = first_variation(m, st.grid, st.imm, V);
            worst = std::max(worst, fv.rel_err);
            rows.push_back({{"seed", s.seed}, {"analytic", fv.analytic}, {"fd", fv.fd}, {"rel_err", fv.rel_err},
                            {"fd_eps", fv.eps}});
        }
        pass = pass && worst <= 1e-4;
        j["first"] = {{"pairs", rows}, {"max_rel_err", worst}, {"tolerance", 1e-4}, {"pass", worst <= 1e-4}};
        std::cout << "first variation: max rel_err " << worst << " over " << o.pairs << " pairs\n";
    }
    if (o.check == "second" || o.check == "both") {
        ScenarioSpec s = p.spec;
        if (s.model == ModelKind::eguchi_hanson) s.generator = "eh-zero-section";
        else s.generator = "plane";
        const State st = build_state(s);
        const auto geo = surface_geometry(m, st.grid, st.imm);
        json rows = json::array();
        for (int a = 0; a < 4; ++a) {
            const VariationField V = frame_field(m, st.imm, a);
            double tangential = 0.0;
            for (std::size_t n = 0; n < geo.size(); ++n)
                for (int i = 0; i < 2; ++i)
                    tangential = std::max(tangential, std::abs(geo[n].tangent[i].dot(geo[n].gbar * V.V[n])));
            if (tangential > 1e-8) continue;
            const SecondVariation sv = second_variation_critical(m, st.grid, st.imm, V);
            rows.push_back({{"field", "e" + std::to_string(a)}, {"analytic", sv.analytic}, {"fd", sv.fd},
                            {"fd_eps", sv.eps}});
            std::cout << "second variation e" << a << ": analytic " << sv.analytic << ", fd " << sv.fd << "\n";
        }
        j["second"] = {{"state", s.generator}, {"fields", rows}};
        if (s.model == ModelKind::eguchi_hanson) j["second"]["reference_e0"] = -8 * kPi;
    }
    write_json(out / "variation_report.json", j);
    return pass ? kExitOk : kExitCheckFailed;
}

int cmd_stability(const CLI::App* cmd, const Options& o) {
    Preset p = resolve(cmd, o);
    if (o.preset.empty() && !cmd->count("--scenario"))
        p.spec.generator = p.spec.model == ModelKind::eguchi_hanson ? "eh-zero-section" : "plane";
    const AmbientModel m = make_model(p.spec);
    const fs::path out = prepare_out(o.out);
    std::ofstream f(out / "stability_report.csv");
    f << "quantity,r,value,reference\n";
    auto row = [&](const std::string& q, double r, double v, double ref) {
        f << q << "," << fmt(r) << "," << fmt(v) << "," << fmt(ref) << "\n";
    };
    std::vector<double> radii = p.report_radii;
    if (radii.empty() && !m.is_flat()) radii = {std::sqrt(2.0)};
    for (double r : radii) {
        const AmbientPoint q{Chart::eh_radial, Vec4(r * std::pow(m.c, 0.25), 1.0, 0.5, 0.3)};
        const double rr = q.x[0];
        row("R01_coefficient", rr, eh_curvature_forms_at(m, q)(0, 1, 1, 0), -2.0 * m.c / std::pow(rr, 6));
    }
    if (!m.is_flat()) row("bolt_curvature", std::pow(m.c, 0.25), extrapolated_bolt_curvature(m), -2.0 / std::sqrt(m.c));

    const State st = build_state(p.spec);
    const StabilityForm sf = stability_form(m, st.grid, st.imm);
    double maxM = -std::numeric_limits<double>::infinity();
    for (const auto& M : sf.M) maxM = std::max(maxM, M.eigenvalues().real().maxCoeff());
    double IImax = 0.0;
    for (const auto& ng : surface_geometry(m, st.grid, st.imm)) IImax = std::max(IImax, std::sqrt(ng.normA2));
    const bool zero_section = p.spec.generator == "eh-zero-section";
    row("min_eigenvalue", std::numeric_limits<double>::quiet_NaN(), sf.global_min,
        zero_section ? 4.0 / std::sqrt(m.c) : std::numeric_limits<double>::quiet_NaN());
    row("max_eigenvalue", std::numeric_limits<double>::quiet_NaN(), maxM,
        zero_section ? 4.0 / std::sqrt(m.c) : std::numeric_limits<double>::quiet_NaN());
    row("sup_II", std::numeric_limits<double>::quiet_NaN(), IImax, zero_section ? 0.0 : std::numeric_limits<double>::quiet_NaN());
    const bool strongly = sf.global_min > 1e-8;
    f << "verdict,,\"" << (strongly ? "strongly stable" : "not strongly stable") << "\",\n";
    write_json(out / "summary.json", {{"config", resolved_config("stability", p, o)},
                                      {"min_eigenvalue", sf.global_min},
                                      {"verdict", strongly ? "strongly stable" : "not strongly stable"}});
    std::cout << "min eigenvalue " << sf.global_min << ": " << (strongly ? "strongly stable" : "not strongly stable")
              << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hyperkähler flow lab"};
    app.require_subcommand(1);
    for (int k = 1; k + 1 < argc; ++k)
        if (std::string(argv[k]) == "--config" && std::string(argv[k + 1]).ends_with(".json"))
            app.config_formatter(std::make_shared<JsonConfig>());
    app.set_config("--config", "", "TOML or JSON config; sections are subcommand names");

    Options o;
    auto* list = app.add_subcommand("list-presets", "Print the preset catalog");
    auto* check = app.add_subcommand("check-ambient", "Validate the ambient geometry");
    auto* flow = app.add_subcommand("flow", "Run the flow and write monitor series and snapshots");
    auto* var = app.add_subcommand("variation", "First and second variation against finite differences");
    auto* stab = app.add_subcommand("stability", "Stability form and closed-form curvature table");
    for (auto* cmd : {check, flow, var, stab}) add_common(cmd, o);

    auto* dt_opt = flow->add_option("--dt", o.dt, "Fixed time step")->check(CLI::PositiveNumber);
    flow->add_option("--cfl", o.cfl, "CFL factor")->excludes(dt_opt);
    flow->add_option("--steps", o.steps, "Maximum number of steps")->check(CLI::PositiveNumber);
    flow->add_option("--t-end", o.t_end, "Final time")->check(CLI::PositiveNumber);
    flow->add_option("--integrator", o.integrator)->check(CLI::IsMember({"euler", "rk4"}));
    flow->add_option("--velocity-form", o.velocity_form)->check(CLI::IsMember({"gradient", "moment"}));
    flow->add_option("--monitor-every", o.monitor_every, "Steps between monitor records")->check(CLI::PositiveNumber);
    flow->add_option("--snap-every", o.snap_every, "Monitor records between snapshots (0: first and last only)")
        ->check(CLI::NonNegativeNumber);
    var->add_option("--check", o.check)->check(CLI::IsMember({"first", "second", "both"}));
    var->add_option("--pairs", o.pairs, "Random (state, V) pairs for the first variation")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }
    if (o.threads > 0) set_num_threads(o.threads);

    try {
        if (*list) return cmd_list_presets();
        if (*check) return cmd_check_ambient(check, o);
        if (*flow) return cmd_flow(flow, o);
        if (*var) return cmd_variation(var, o);
        if (*stab) return cmd_stability(stab, o);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const NotCritical& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
