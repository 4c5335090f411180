#include "hkflow/scenarios.hpp"

#include <cmath>
#include <random>

namespace hkflow {

namespace {

constexpr double kPi = 3.14159265358979323846;

double trig(bool s, double x) { return s ? std::sin(x) : std::cos(x); }

void fill_report(const AmbientModel& model, State& st) {
    std::vector<NodeGeometry> geo = surface_geometry(model, st.grid, st.imm);
    const SpecialDefects d = special_defects(geo);
    st.report.max_eta3 = d.max_eta3;
    st.report.max_eta2_defect = d.max_eta2_defect;
    for (const auto& ng : geo) st.report.sup_A2 = std::max(st.report.sup_A2, ng.normA2);
    if (!model.is_flat()) {
        const TubularDiagnostics td = tubular_diagnostics(model, st.imm, geo);
        st.report.psi_max = td.psi_max();
        st.report.s_max = td.s_max();
        st.report.one_minus_star_omega = 1.0 - td.star_omega_min();
    }
}

void require_sphere(const ParamGrid& grid) {
    if (grid.topology != Topology::sphere_latlong) throw BadTopology("Eguchi-Hanson surfaces need a sphere grid");
}

}  // namespace

void FourierPotential::validate() const {
    for (const auto& t : terms)
        if (t.k1 != std::round(t.k1) || t.k2 != std::round(t.k2) || !std::isfinite(t.amp))
            throw BadPotential("potential is not periodic: wavenumbers must be integers");
}

double FourierPotential::value(double x1, double x2) const {
    double s = 0.0;
    for (const auto& t : terms) s += t.amp * trig(t.sin1, t.k1 * x1) * trig(t.sin2, t.k2 * x2);
    return s;
}

FourierPotential FourierPotential::cos_cos(double amp, double k1, double k2) {
    FourierPotential p;
    p.terms.push_back({amp, k1, k2, false, false});
    return p;
}

FourierPotential FourierPotential::random(std::uint64_t seed, int kmax, double scale) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    FourierPotential p;
    for (int k1 = 0; k1 <= kmax; ++k1)
        for (int k2 = 0; k2 <= kmax; ++k2) {
            if (k1 == 0 && k2 == 0) continue;
            const double amp = scale * uni(rng) / (1.0 + k1 * k1 + k2 * k2);
            const bool s1 = uni(rng) > 0.0, s2 = uni(rng) > 0.0;
            p.terms.push_back({amp, double(k1), double(k2), s1, s2});
        }
    return p;
}

void SphericalPotential::validate() const {
    for (const auto& t : terms)
        if (t.l < 0 || t.l > 2 || std::abs(t.m) > t.l || !std::isfinite(t.amp))
            throw BadPotential("spherical potential supports degrees 0..2 with |m| <= l");
}

namespace {

// L2-normalization on the unit sphere.
double harmonic_norm(int l, int m) {
    constexpr double kInvPi = 1.0 / kPi;
    if (l == 0) return 0.5 * std::sqrt(kInvPi);
    if (l == 1) return std::sqrt(0.75 * kInvPi);
    if (m == 0) return std::sqrt(5.0 / 16.0 * kInvPi);
    if (std::abs(m) == 1) return std::sqrt(15.0 / 4.0 * kInvPi);
    return std::sqrt(15.0 / 16.0 * kInvPi);
}

}  // namespace

double SphericalPotential::value(double th, double ph) const {
    const double c = std::cos(th), s = std::sin(th);
    double v = 0.0;
    for (const auto& t : terms) {
        double y = 0.0;
        if (t.l == 0) y = 1.0;
        else if (t.l == 1) y = t.m == 0 ? c : s * (t.m > 0 ? std::cos(ph) : std::sin(ph));
        else if (t.m == 0) y = 3 * c * c - 1;
        else if (std::abs(t.m) == 1) y = s * c * (t.m > 0 ? std::cos(ph) : std::sin(ph));
        else y = s * s * (t.m > 0 ? std::cos(2 * ph) : std::sin(2 * ph));
        v += t.amp * harmonic_norm(t.l, t.m) * y;
    }
    return v;
}

Vec2 SphericalPotential::gradient(double th, double ph) const {
    const double c = std::cos(th), s = std::sin(th);
    Vec2 g = Vec2::Zero();
    for (const auto& t : terms) {
        double dth = 0.0, dph = 0.0;
        const double cp = std::cos(ph), sp = std::sin(ph);
        if (t.l == 1) {
            if (t.m == 0) {
                dth = -s;
            } else {
                dth = c * (t.m > 0 ? cp : sp);
                dph = s * (t.m > 0 ? -sp : cp);
            }
        } else if (t.l == 2) {
            if (t.m == 0) {
                dth = -6 * c * s;
            } else if (std::abs(t.m) == 1) {
                dth = (c * c - s * s) * (t.m > 0 ? cp : sp);
                dph = s * c * (t.m > 0 ? -sp : cp);
            } else {
                dth = 2 * s * c * (t.m > 0 ? std::cos(2 * ph) : std::sin(2 * ph));
                dph = s * s * (t.m > 0 ? -2 * std::sin(2 * ph) : 2 * std::cos(2 * ph));
            }
        }
        g += t.amp * harmonic_norm(t.l, t.m) * Vec2(dth, dph);
    }
    return g;
}

SphericalPotential SphericalPotential::y20(double amp) {
    SphericalPotential p;
    p.terms.push_back({2, 0, amp});
    return p;
}

void apply_rho_rule(const AmbientModel& model, ParamGrid& grid, const Immersion& imm, RhoRule rule) {
    if (rule == RhoRule::unit) {
        grid.rho.assign(grid.size(), 1.0);
        return;
    }
    grid.rho.clear();
    const std::vector<FirstOrder> fo = first_order_all(model, grid, imm);
    grid.rho.resize(grid.size());
    for (std::size_t n = 0; n < grid.size(); ++n) {
        grid.rho[n] = rule == RhoRule::induced_dmu ? fo[n].dmu : fo[n].pull[1];
        if (!(grid.rho[n] > 0.0)) throw BadPotential("pulled-back reference form is not positive");
    }
}

State make_flat_lagrangian_graph(const ParamGrid& grid, const FourierPotential& u, double eps, RhoRule rule) {
    u.validate();
    if (!(eps >= 0.0)) throw std::invalid_argument("amplitude must be nonnegative");
    if (grid.topology != Topology::torus_periodic) throw BadTopology("flat graphs need a torus grid");
    const AmbientModel model = AmbientModel::flat();
    State st;
    st.grid = grid;
    std::vector<double> uval(grid.size());
    for (std::size_t n = 0; n < grid.size(); ++n) uval[n] = u.value(grid.x1(grid.i_of(n)), grid.x2(grid.j_of(n)));
    st.imm.points.resize(grid.size());
    for (std::size_t n = 0; n < grid.size(); ++n) {
        // The grid's own difference operators commute, so the discrete graph is exactly Lagrangian.
        const Vec2 du = scalar_gradient(grid, uval, n);
        st.imm.points[n] = AmbientPoint{Chart::flat, Vec4(grid.x1(grid.i_of(n)), grid.x2(grid.j_of(n)), eps * du[0],
                                                           -eps * du[1])};
    }
    apply_rho_rule(model, st.grid, st.imm, rule);
    fill_report(model, st);
    return st;
}

State make_eh_zero_section(double c, const ParamGrid& grid) {
    require_sphere(grid);
    const AmbientModel model = AmbientModel::eguchi_hanson(c);
    State st;
    st.grid = grid;
    st.imm.points.resize(grid.size());
    for (std::size_t n = 0; n < grid.size(); ++n)
        st.imm.points[n] = AmbientPoint{Chart::eh_bolt, Vec4(0.0, 0.0, kPi - grid.x2(grid.j_of(n)), grid.x1(grid.i_of(n)))};
    apply_rho_rule(model, st.grid, st.imm, RhoRule::induced_dmu);
    fill_report(model, st);
    return st;
}

State make_eh_graph_perturbation(double c, const ParamGrid& grid, const SphericalPotential& a, double eps) {
    require_sphere(grid);
    a.validate();
    if (!(eps >= 0.0)) throw std::invalid_argument("amplitude must be nonnegative");
    const AmbientModel model = AmbientModel::eguchi_hanson(c);
    const double s = model.bolt_scale();
    State st;
    st.grid = grid;
    st.imm.points.resize(grid.size());
    for (std::size_t n = 0; n < grid.size(); ++n) {
        const double th = kPi - grid.x2(grid.j_of(n)), ph = grid.x1(grid.i_of(n));
        const Vec2 da = a.gradient(th, ph);
        // Fiber displacement from the orthonormal components of da on the bolt sphere of radius s.
        const Vec4 x(eps * da[1] / (s * std::sin(th)), -eps * da[0] / s, th, ph);
        if (std::hypot(x[0], x[1]) / s > kTubeUMax) throw AmplitudeTooLarge("perturbation leaves the tubular region");
        st.imm.points[n] = AmbientPoint{Chart::eh_bolt, x};
    }
    if (eps == 0.0)
        apply_rho_rule(model, st.grid, st.imm, RhoRule::induced_dmu);
    else
        apply_rho_rule(model, st.grid, st.imm, RhoRule::pullback_omega2);
    fill_report(model, st);
    return st;
}

AmbientModel make_model(const ScenarioSpec& spec) {
    if (spec.model == ModelKind::flat_torus) return AmbientModel::flat();
    if (!(spec.c > 0.0)) throw std::invalid_argument("c must be positive");
    return AmbientModel::eguchi_hanson(spec.c);
}

State build_state(const ScenarioSpec& spec) {
    ParamGrid grid = build_grid(spec.topology, spec.n1, spec.n2, RhoSpec::from_initial_pullback());
    grid.stencil_order = spec.stencil_order;
    if (spec.generator == "flat-graph") {
        const FourierPotential u =
            spec.seed == 0 ? FourierPotential::cos_cos() : FourierPotential::random(spec.seed, 3, 1.0);
        return make_flat_lagrangian_graph(grid, u, spec.eps, spec.rho_rule);
    }
    if (spec.generator == "plane") return make_flat_lagrangian_graph(grid, FourierPotential{}, 0.0, RhoRule::unit);
    if (spec.generator == "eh-zero-section") return make_eh_zero_section(spec.c, grid);
    if (spec.generator == "eh-perturbation")
        return make_eh_graph_perturbation(spec.c, grid, SphericalPotential::y20(), spec.eps);
    throw std::invalid_argument("unknown generator '" + spec.generator + "'");
}

std::vector<std::string> preset_names() {
    return {"ambient-checks", "flat-special", "eh-stability-report", "eh-convergence"};
}

Preset preset(const std::string& name) {
    Preset p;
    p.spec.name = name;
    if (name == "ambient-checks") {
        p.spec.model = ModelKind::eguchi_hanson;
        p.spec.topology = Topology::sphere_latlong;
        p.spec.n1 = 64;
        p.spec.n2 = 32;
        p.spec.generator = "eh-zero-section";
        p.runs_flow = false;
        p.expected = {"every ambient identity check passes in both models"};
        return p;
    }
    if (name == "flat-special") {
        p.spec.model = ModelKind::flat_torus;
        p.spec.topology = Topology::torus_periodic;
        p.spec.n1 = p.spec.n2 = 64;
        p.spec.generator = "flat-graph";
        p.spec.eps = 0.1;
        p.spec.rho_rule = RhoRule::pullback_omega2;
        p.flow.integrator = Integrator::rk4;
        p.flow.dt_mode = DtMode::cfl;
        p.flow.cfl = 0.2;
        p.flow.t_end = 1.0;
        p.flow.monitor_every = 10;
        p.flow.defect_tol = 1e-2;
        p.expected = {"energy non-increasing", "sup_lambda non-increasing", "max_eta3 <= 1e-4",
                      "max_eta2_defect <= 1e-4"};
        return p;
    }
    if (name == "eh-stability-report") {
        p.spec.model = ModelKind::eguchi_hanson;
        p.spec.topology = Topology::sphere_latlong;
        p.spec.n1 = 64;
        p.spec.n2 = 32;
        p.spec.generator = "eh-zero-section";
        p.runs_flow = false;
        p.report_radii = {1.01, 1.1, std::sqrt(2.0), 2.0, 5.0};
        p.expected = {"R01 coefficient -0.25 at r = sqrt(2)", "zero-section stability eigenvalues 4/sqrt(c)"};
        return p;
    }
    if (name == "eh-convergence") {
        p.spec.model = ModelKind::eguchi_hanson;
        p.spec.topology = Topology::sphere_latlong;
        p.spec.n1 = 64;
        p.spec.n2 = 32;
        p.spec.generator = "eh-perturbation";
        p.spec.eps = 0.05;
        p.flow.integrator = Integrator::rk4;
        p.flow.dt_mode = DtMode::cfl;
        p.flow.cfl = 0.25;
        p.flow.t_end = 0.08;
        p.flow.monitor_every = 50;
        p.expected = {"psi_max decreases by 10x", "1 - star_omega_min decreases by 10x", "II_dist decreases by 5x",
                      "log psi_max linear in t with R^2 >= 0.95"};
        return p;
    }
    throw UnknownPreset("unknown preset '" + name + "'");
}

}  // namespace hkflow
