#include "hkflow/scenarios.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace hkflow;

namespace {

const double kPi = std::acos(-1.0);

ParamGrid torus(int n) { return build_grid(Topology::torus_periodic, n, n, RhoSpec::from_initial_pullback()); }
ParamGrid sphere(int n1, int n2) { return build_grid(Topology::sphere_latlong, n1, n2, RhoSpec::from_initial_pullback()); }

bool same_points(const Immersion& a, const Immersion& b) {
    if (a.points.size() != b.points.size()) return false;
    for (std::size_t n = 0; n < a.points.size(); ++n)
        if (a.points[n].chart != b.points[n].chart || a.points[n].x != b.points[n].x) return false;
    return true;
}

}  // namespace

TEST(TestScenarios, FourierPotentialValidation) {
    FourierPotential u;
    u.terms.push_back({1.0, 1.5, 0, false, false});
    EXPECT_THROW(u.validate(), BadPotential);
    EXPECT_THROW(make_flat_lagrangian_graph(torus(16), u, 0.1), BadPotential);
    auto c = FourierPotential::cos_cos(2.0, 1, 2);
    EXPECT_NEAR(c.value(0.3, 0.4), 2.0 * std::cos(0.3) * std::cos(0.8), 1e-15);
}

TEST(TestScenarios, FourierRandomIsDeterministic) {
    auto a = FourierPotential::random(5, 3, 1.0), b = FourierPotential::random(5, 3, 1.0), c = FourierPotential::random(6, 3, 1.0);
    EXPECT_EQ(a.value(0.7, 1.9), b.value(0.7, 1.9));
    EXPECT_NE(a.value(0.7, 1.9), c.value(0.7, 1.9));
    EXPECT_NO_THROW(a.validate());
}

TEST(TestScenarios, ZeroPotentialGivesPlane) {
    auto m = AmbientModel::flat();
    auto st = make_flat_lagrangian_graph(torus(16), FourierPotential{}, 0.3, RhoRule::unit);
    EXPECT_EQ(st.report.max_eta3, 0.0);
    for (auto& ng : surface_geometry(m, st.grid, st.imm)) EXPECT_NEAR(ng.lambda, 1.0, 1e-14);
}

TEST(TestScenarios, GradientGraphIsLagrangianAtAnyGrid) {
    for (int n : {16, 32, 64}) {
        auto st = make_flat_lagrangian_graph(torus(n), FourierPotential::cos_cos(), 0.05);
        EXPECT_LE(st.report.max_eta3, 1e-10) << n;
        EXPECT_LE(st.report.max_eta2_defect, 1e-14) << n;
    }
}

TEST(TestScenarios, LargeAmplitudeGraphStaysLagrangian) {
    auto small = make_flat_lagrangian_graph(torus(32), FourierPotential::cos_cos(), 0.05);
    auto large = make_flat_lagrangian_graph(torus(32), FourierPotential::cos_cos(), 0.5);
    EXPECT_LE(large.report.max_eta3, 1e-10);
    EXPECT_GT(large.report.sup_A2, 10 * small.report.sup_A2);
}

TEST(TestScenarios, ReportIsMeasured) {
    auto m = AmbientModel::flat();
    auto st = make_flat_lagrangian_graph(torus(32), FourierPotential::random(2, 2, 1.0), 0.2, RhoRule::unit);
    auto d = special_defects(surface_geometry(m, st.grid, st.imm));
    EXPECT_EQ(st.report.max_eta3, d.max_eta3);
    EXPECT_EQ(st.report.max_eta2_defect, d.max_eta2_defect);
    EXPECT_GT(st.report.max_eta2_defect, 1e-3);
}

TEST(TestScenarios, TopologyChecks) {
    EXPECT_THROW(make_flat_lagrangian_graph(sphere(16, 8), FourierPotential{}, 0.0), BadTopology);
    EXPECT_THROW(make_eh_zero_section(1.0, torus(16)), BadTopology);
    EXPECT_THROW(make_eh_graph_perturbation(1.0, torus(16), SphericalPotential::y20(), 0.01), BadTopology);
}

TEST(TestScenarios, SphericalHarmonicsOrthonormalAndGradient) {
    auto g = sphere(64, 32);
    for (int l = 0; l <= 2; ++l)
        for (int mm = -l; mm <= l; ++mm) {
            SphericalPotential p;
            p.terms.push_back({l, mm, 1.0});
            double norm = 0.0;
            for (std::size_t n = 0; n < g.size(); ++n) {
                const double th = g.x2(g.j_of(n)), ph = g.x1(g.i_of(n));
                norm += g.weight(n) * std::sin(th) * std::pow(p.value(th, ph), 2);
            }
            EXPECT_NEAR(norm, 1.0, 3e-3) << l << " " << mm;
            const double th = 0.9, ph = 2.2, h = 1e-6;
            const Vec2 grad = p.gradient(th, ph);
            EXPECT_NEAR(grad[0], (p.value(th + h, ph) - p.value(th - h, ph)) / (2 * h), 1e-8);
            EXPECT_NEAR(grad[1], (p.value(th, ph + h) - p.value(th, ph - h)) / (2 * h), 1e-8);
        }
    SphericalPotential bad;
    bad.terms.push_back({3, 0, 1.0});
    EXPECT_THROW(bad.validate(), BadPotential);
}

TEST(TestScenarios, ZeroSectionExamples) {
    auto m = AmbientModel::eguchi_hanson(1.0);
    auto st = make_eh_zero_section(1.0, sphere(64, 32));
    EXPECT_NEAR(volume(m, st.grid, st.imm), kPi, 1e-6);
    double vmax = 0.0;
    for (auto& v : velocity_gradient_form(m, st.grid, st.imm)) vmax = std::max(vmax, v.cwiseAbs().maxCoeff());
    EXPECT_LE(vmax, 1e-8);
    EXPECT_NEAR(stability_form(m, st.grid, st.imm).global_min, 4.0, 1e-6);
    for (auto& ng : surface_geometry(m, st.grid, st.imm)) EXPECT_NEAR(ng.lambda, 1.0, 1e-12);
}

TEST(TestScenarios, PerturbationWithZeroAmplitudeIsZeroSection) {
    auto a = make_eh_graph_perturbation(1.0, sphere(32, 16), SphericalPotential::y20(), 0.0);
    auto b = make_eh_zero_section(1.0, sphere(32, 16));
    EXPECT_TRUE(same_points(a.imm, b.imm));
    EXPECT_EQ(a.grid.rho, b.grid.rho);
}

TEST(TestScenarios, PerturbationDiagnosticsScaleQuadratically) {
    std::vector<InitialReport> r;
    for (double eps : {0.05, 0.025}) {
        auto st = make_eh_graph_perturbation(1.0, sphere(64, 32), SphericalPotential::y20(), eps);
        EXPECT_LE(st.report.max_eta3, 1e-10);
        EXPECT_LE(st.report.psi_max, 10 * eps * eps);
        r.push_back(st.report);
    }
    EXPECT_NEAR(r[0].psi_max / r[1].psi_max, 4.0, 0.1);
    EXPECT_NEAR(r[0].one_minus_star_omega / r[1].one_minus_star_omega, 4.0, 0.5);
    EXPECT_NEAR(r[0].s_max / r[1].s_max, 2.0, 0.2);
}

TEST(TestScenarios, PerturbationLeavingTubeIsRejected) {
    EXPECT_THROW(make_eh_graph_perturbation(1.0, sphere(32, 16), SphericalPotential::y20(), 10.0), AmplitudeTooLarge);
}

TEST(TestScenarios, BuildStateIsBitReproducible) {
    for (const char* gen : {"flat-graph", "eh-perturbation"}) {
        ScenarioSpec s;
        s.generator = gen;
        s.eps = 0.05;
        s.seed = 11;
        s.n1 = 32;
        s.n2 = 16;
        if (std::string(gen) == "eh-perturbation") {
            s.model = ModelKind::eguchi_hanson;
            s.topology = Topology::sphere_latlong;
        } else {
            s.n2 = 32;
        }
        auto a = build_state(s), b = build_state(s);
        EXPECT_TRUE(same_points(a.imm, b.imm)) << gen;
        EXPECT_EQ(a.grid.rho, b.grid.rho);
    }
    ScenarioSpec s;
    s.generator = "flat-graph";
    s.eps = 0.05;
    s.n1 = s.n2 = 16;
    s.seed = 1;
    auto a = build_state(s);
    s.seed = 2;
    EXPECT_FALSE(same_points(a.imm, build_state(s).imm));
}

TEST(TestScenarios, ModelValidation) {
    ScenarioSpec s;
    s.model = ModelKind::eguchi_hanson;
    s.c = -1.0;
    try {
        make_model(s);
        FAIL();
    } catch (const std::invalid_argument& e) {
        EXPECT_EQ(std::string(e.what()), "c must be positive");
    }
    s.generator = "nope";
    s.c = 1.0;
    EXPECT_THROW(build_state(s), std::invalid_argument);
}

TEST(TestScenarios, Presets) {
    auto names = preset_names();
    ASSERT_EQ(names.size(), 4u);
    for (auto& n : names) EXPECT_EQ(preset(n).spec.name, n);
    EXPECT_THROW(preset("nope"), UnknownPreset);

    auto fs = preset("flat-special");
    EXPECT_EQ(fs.spec.model, ModelKind::flat_torus);
    EXPECT_EQ(fs.spec.n1, 64);
    EXPECT_EQ(fs.spec.n2, 64);
    EXPECT_EQ(fs.spec.eps, 0.1);
    EXPECT_EQ(fs.flow.integrator, Integrator::rk4);
    EXPECT_EQ(fs.flow.cfl, 0.2);
    EXPECT_EQ(fs.spec.rho_rule, RhoRule::pullback_omega2);

    auto ec = preset("eh-convergence");
    EXPECT_EQ(ec.spec.c, 1.0);
    EXPECT_EQ(ec.spec.n1, 64);
    EXPECT_EQ(ec.spec.n2, 32);
    EXPECT_EQ(ec.spec.eps, 0.05);
    EXPECT_LE(ec.flow.cfl, 0.25);

    auto sr = preset("eh-stability-report");
    EXPECT_FALSE(sr.runs_flow);
    ASSERT_EQ(sr.report_radii.size(), 5u);
    EXPECT_EQ(sr.report_radii[2], std::sqrt(2.0));
    EXPECT_FALSE(preset("ambient-checks").runs_flow);

    auto st = build_state(fs.spec);
    EXPECT_LE(st.report.max_eta3, 1e-10);
    EXPECT_LE(st.report.max_eta2_defect, 1e-14);
}
