#include "hkflow/scenarios.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace hkflow;

namespace {

const double kPi = std::acos(-1.0);

ParamGrid torus(int n, int order = 2) {
    ParamGrid g = build_grid(Topology::torus_periodic, n, n, RhoSpec::from_initial_pullback());
    g.stencil_order = order;
    return g;
}
ParamGrid sphere(int n1, int n2) { return build_grid(Topology::sphere_latlong, n1, n2, RhoSpec::from_initial_pullback()); }

FourierPotential sin_x1() {
    FourierPotential u;
    u.terms.push_back({1.0, 1, 0, true, false});
    return u;
}

double max_displacement(const Immersion& a, const Immersion& b) {
    double m = 0.0;
    for (std::size_t n = 0; n < a.points.size(); ++n) m = std::max(m, (a.points[n].x - b.points[n].x).cwiseAbs().maxCoeff());
    return m;
}

double max_of(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

FlowConfig fixed(double dt, Integrator integ = Integrator::rk4) {
    FlowConfig c;
    c.dt_mode = DtMode::fixed;
    c.dt = dt;
    c.integrator = integ;
    return c;
}

}  // namespace

TEST(TestFlow, ConfigValidation) {
    FlowConfig c;
    c.cfl = 0.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c.cfl = 1.5;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c.cfl = 1.0;
    EXPECT_NO_THROW(c.validate());
    auto f = fixed(-1.0);
    EXPECT_THROW(f.validate(), std::invalid_argument);
    f.dt = 1e-3;
    f.monitor_every = 0;
    EXPECT_THROW(f.validate(), std::invalid_argument);
}

TEST(TestFlow, ZeroVelocityOnlyAdvancesTime) {
    auto m = AmbientModel::flat();
    auto st = make_flat_lagrangian_graph(torus(16), FourierPotential{}, 0.0, RhoRule::unit);
    for (auto integ : {Integrator::euler, Integrator::rk4}) {
        auto out = flow_step(m, st.grid, st.imm, fixed(1e-3, integ));
        EXPECT_EQ(max_displacement(out, st.imm), 0.0);
        EXPECT_DOUBLE_EQ(out.time, 1e-3);
    }
}

TEST(TestFlow, OneEulerStep) {
    auto m = AmbientModel::flat();
    auto st = make_flat_lagrangian_graph(torus(32), sin_x1(), 0.2, RhoRule::unit);
    const double dt = 1e-4;
    auto V = flow_velocity(m, st.grid, st.imm, VelocityForm::gradient);
    auto out = flow_step(m, st.grid, st.imm, fixed(dt, Integrator::euler));
    double err = 0.0;
    for (std::size_t n = 0; n < V.size(); ++n)
        err = std::max(err, (out.points[n].x - st.imm.points[n].x - dt * V[n]).cwiseAbs().maxCoeff());
    EXPECT_LE(err, 1e-15);
}

TEST(TestFlow, ZeroSectionIsStationary) {
    auto m = AmbientModel::eguchi_hanson(1.0);
    auto st = make_eh_zero_section(1.0, sphere(32, 16));
    FlowConfig cfg;
    Immersion cur = st.imm;
    for (int k = 0; k < 100; ++k) cur = flow_step(m, st.grid, cur, cfg);
    double d = 0.0;
    for (std::size_t n = 0; n < cur.points.size(); ++n)
        d = std::max(d, (eh_embed(m, cur.points[n]) - eh_embed(m, st.imm.points[n])).cwiseAbs().maxCoeff());
    EXPECT_LE(d, 1e-8);
    EXPECT_GT(cur.time, 0.0);
}

TEST(TestFlow, CriticalPointReportsConvergence) {
    auto m = AmbientModel::eguchi_hanson(1.0);
    auto st = make_eh_zero_section(1.0, sphere(32, 16));
    auto r = flow_run(m, st.grid, st.imm, FlowConfig{});
    EXPECT_EQ(r.status, FlowStatus::converged);
    EXPECT_EQ(r.steps, 0);
    ASSERT_FALSE(r.series.empty());
    EXPECT_NEAR(r.series[0].energy, kPi, 1e-3);
    EXPECT_EQ(r.series[0].psi_max, 0.0);
}

TEST(TestFlow, CflLimitOfPlane) {
    auto m = AmbientModel::flat();
    auto st = make_flat_lagrangian_graph(torus(32), FourierPotential{}, 0.0, RhoRule::unit);
    auto geo = surface_geometry(m, st.grid, st.imm);
    const double h = 2 * kPi / 32;
    EXPECT_NEAR(physical_spacing(st.grid, geo), h, 1e-14);
    EXPECT_NEAR(cfl_limit(st.grid, geo), h * h, 1e-14);
}

TEST(TestFlow, PolarFilterRelaxesSphereSpacing) {
    auto m = AmbientModel::eguchi_hanson(1.0);
    auto st = make_eh_zero_section(1.0, sphere(64, 32));
    auto geo = surface_geometry(m, st.grid, st.imm);
    const double raw = physical_spacing(st.grid, geo);
    const double filtered = physical_spacing(st.grid, geo, 0.5);
    EXPECT_NEAR(raw, 0.5 * std::sin(st.grid.x2(0)) * st.grid.dx1, 1e-12);
    EXPECT_GT(filtered, 8 * raw);
}

TEST(TestFlow, PolarFilterKeepsSmoothFieldsAndDampsRingNoise) {
    auto m = AmbientModel::eguchi_hanson(1.0);
    auto st = make_eh_zero_section(1.0, sphere(64, 32));
    const auto& g = st.grid;
    // Chart d/dtheta is a smooth field with longitude wavenumber 1 in the embedding.
    std::vector<Vec4> smooth(g.size(), Vec4(0, 0, 1, 0));
    auto v = smooth;
    apply_polar_filter(m, g, st.imm, v, 0.5);
    double err = 0.0;
    for (std::size_t n = 0; n < v.size(); ++n) err = std::max(err, (v[n] - smooth[n]).norm());
    EXPECT_LE(err, 1e-12);

    std::vector<Vec4> noisy(g.size(), Vec4::Zero());
    for (std::size_t n = 0; n < g.size(); ++n) noisy[n][2] = g.i_of(n) % 2 ? 1.0 : -1.0;
    v = noisy;
    apply_polar_filter(m, g, st.imm, v, 0.5);
    double pole = 0.0, equator = 0.0;
    for (int i = 0; i < g.n1; ++i) {
        pole = std::max(pole, std::abs(v[g.index(i, 0)][2]));
        equator = std::max(equator, std::abs(v[g.index(i, g.n2 / 2)][2] - noisy[g.index(i, g.n2 / 2)][2]));
    }
    EXPECT_LT(pole, 0.05);
    EXPECT_EQ(equator, 0.0);

    auto flat = AmbientModel::flat();
    auto ts = make_flat_lagrangian_graph(torus(16), sin_x1(), 0.2, RhoRule::unit);
    std::vector<Vec4> w(ts.grid.size(), Vec4(1, 2, 3, 4));
    apply_polar_filter(flat, ts.grid, ts.imm, w, 0.5);
    for (auto& x : w) EXPECT_EQ(x, Vec4(1, 2, 3, 4));
}

TEST(TestFlow, NormalizeReflectsAcrossPole) {
    auto m = AmbientModel::eguchi_hanson(1.0);
    Immersion imm;
    imm.points.push_back(AmbientPoint{Chart::eh_bolt, Vec4(0.01, -0.02, -0.1, 0.3)});
    imm.points.push_back(AmbientPoint{Chart::eh_bolt, Vec4(0.0, 0.0, 1.0, 7.0)});
    const Vec6 before = eh_embed(m, imm.points[0]);
    normalize_points(m, imm);
    EXPECT_NEAR(imm.points[0].x[2], 0.1, 1e-15);
    EXPECT_NEAR(imm.points[0].x[3], 0.3 + kPi, 1e-15);
    EXPECT_LE((eh_embed(m, imm.points[0]) - before).norm(), 1e-14);
    EXPECT_NEAR(imm.points[1].x[3], 7.0 - 2 * kPi, 1e-14);
}

TEST(TestFlow, NormalizeSwitchesChartsWithHysteresis) {
    auto m = AmbientModel::eguchi_hanson(1.0);
    Immersion imm;
    const double a = m.bolt_scale();
    imm.points.push_back(AmbientPoint{Chart::eh_bolt, Vec4(a * 1.6, 0, 1.0, 0.5)});
    imm.points.push_back(AmbientPoint{Chart::eh_bolt, Vec4(a * 1.8, 0, 1.0, 0.5)});
    const Vec6 far = eh_embed(m, imm.points[1]);
    normalize_points(m, imm);
    EXPECT_EQ(imm.points[0].chart, Chart::eh_bolt);
    EXPECT_EQ(imm.points[1].chart, Chart::eh_radial);
    EXPECT_LE((eh_embed(m, imm.points[1]) - far).norm(), 1e-12);
}

TEST(TestFlow, FlatSpecialRunIsMonotoneAndKeepsDefectsSmall) {
    auto p = preset("flat-special");
    p.spec.n1 = p.spec.n2 = 32;
    p.flow.t_end = 0.2;
    auto st = build_state(p.spec);
    auto r = flow_run(make_model(p.spec), st.grid, st.imm, p.flow);
    EXPECT_EQ(r.status, FlowStatus::reached_t_end) << r.message;
    ASSERT_GE(r.series.size(), 3u);
    const double E0 = r.series.front().energy;
    for (std::size_t k = 1; k < r.series.size(); ++k) {
        const double dt = (r.series[k].t - r.series[k - 1].t) / std::max<long>(1, r.series[k].step - r.series[k - 1].step);
        const double slack = 10 * std::pow(dt, 4) * std::max(1.0, E0);
        EXPECT_LE(r.series[k].energy, r.series[k - 1].energy + slack);
        EXPECT_LE(r.series[k].sup_lambda, r.series[k - 1].sup_lambda + slack);
        EXPECT_LE(r.series[k].max_eta3, 1e-3);
        EXPECT_LE(r.series[k].max_eta2_defect, 1e-3);
        EXPECT_GT(r.series[k].inf_lambda, 0.0);
        EXPECT_TRUE(std::isnan(r.series[k].psi_max));
    }
    EXPECT_LT(r.series.back().energy, E0);
}

TEST(TestFlow, BlowupDetectedForLargeAmplitude) {
    auto m = AmbientModel::flat();
    auto st = make_flat_lagrangian_graph(torus(32), FourierPotential::cos_cos(1.0, 3, 3), 0.5, RhoRule::unit);
    ASSERT_GT(st.report.sup_A2, 100.0);
    FlowConfig cfg;
    cfg.blowup_A2 = 100.0;
    auto r = flow_run(m, st.grid, st.imm, cfg);
    EXPECT_EQ(r.status, FlowStatus::blowup_detected);
    EXPECT_NE(r.message.find("sup|A|^2"), std::string::npos);
}

TEST(TestFlow, OversizedStepIsRejected) {
    auto m = AmbientModel::flat();
    auto st = make_flat_lagrangian_graph(torus(32), FourierPotential::cos_cos(), 0.1, RhoRule::pullback_omega2);
    EXPECT_THROW(flow_step(m, st.grid, st.imm, fixed(10.0)), StepRejected);
    auto cfg = fixed(10.0);
    auto r = flow_run(m, st.grid, st.imm, cfg);
    EXPECT_EQ(r.status, FlowStatus::blowup_detected);
    EXPECT_NE(r.message.find("unstable step"), std::string::npos);
    for (auto& rec : r.series) EXPECT_TRUE(std::isfinite(rec.energy));
}

TEST(TestFlow, DefectToleranceAborts) {
    auto m = AmbientModel::flat();
    auto st = make_flat_lagrangian_graph(torus(16), FourierPotential::cos_cos(), 0.2, RhoRule::unit);
    FlowConfig cfg;
    cfg.defect_tol = 1e-3;
    auto r = flow_run(m, st.grid, st.imm, cfg);
    EXPECT_EQ(r.status, FlowStatus::defect_exceeded);
}

TEST(TestFlow, TwoFormResidualOfPlaneVanishes) {
    auto m = AmbientModel::flat();
    auto st = make_flat_lagrangian_graph(torus(16), FourierPotential{}, 0.0, RhoRule::unit);
    for (int w = 0; w < 3; ++w) {
        EXPECT_LE(max_of(two_form_rhs(m, st.grid, st.imm, w)), 1e-14);
        EXPECT_LE(max_of(two_form_evolution_residual(m, st.grid, st.imm, w, 1e-3)), 1e-14);
    }
}

TEST(TestFlow, TwoFormResidualConvergesInTime) {
    auto m = AmbientModel::flat();
    // Fourth-order stencils push the spatial part of the residual below the time error.
    auto st = make_flat_lagrangian_graph(torus(64, 4), sin_x1(), 0.2, RhoRule::unit);
    std::vector<double> r;
    for (double dt : {4e-3, 2e-3, 1e-3}) r.push_back(max_of(two_form_evolution_residual(m, st.grid, st.imm, 1, dt)));
    EXPECT_GE(std::log2(r[0] / r[1]), 0.9);
    EXPECT_GE(std::log2(r[1] / r[2]), 0.9);
}

TEST(TestFlow, TwoFormResidualConvergesInSpace) {
    auto m = AmbientModel::flat();
    std::vector<double> r;
    for (int n : {32, 64, 128}) {
        auto st = make_flat_lagrangian_graph(torus(n), sin_x1(), 0.2, RhoRule::unit);
        r.push_back(max_of(two_form_evolution_residual(m, st.grid, st.imm, 1, 1e-7)));
    }
    EXPECT_GE(std::log2(r[0] / r[1]), 1.9);
    EXPECT_GE(std::log2(r[1] / r[2]), 1.9);
}

TEST(TestFlow, EtaThreeRightHandSideVanishesOnSpecialState) {
    auto m = AmbientModel::flat();
    std::vector<double> r;
    for (int n : {32, 64}) {
        auto st = make_flat_lagrangian_graph(torus(n), FourierPotential::cos_cos(), 0.1, RhoRule::pullback_omega2);
        const double other = max_of(two_form_rhs(m, st.grid, st.imm, 1));
        r.push_back(max_of(two_form_rhs(m, st.grid, st.imm, 2)));
        EXPECT_GT(other, 1e-3);
        EXPECT_LE(r.back(), 1e-2 * other);
    }
    EXPECT_LT(r[1], r[0]);
}

TEST(TestFlow, VolumeIdentity) {
    auto m = AmbientModel::flat();
    auto rel_error = [&](int n, int order) {
        auto st = make_flat_lagrangian_graph(torus(n, order), sin_x1(), 0.2, RhoRule::unit);
        auto integrand = [&](const Immersion& imm) {
            auto geo = surface_geometry(m, st.grid, imm);
            double s = 0.0;
            for (std::size_t k = 0; k < geo.size(); ++k) {
                const double H2 = geo[k].Hvec.dot(geo[k].gbar * geo[k].Hvec);
                s -= st.grid.weight(k) * geo[k].dmu * geo[k].lambda * geo[k].lambda * H2;
            }
            return s;
        };
        const double dt = 1e-5;
        auto next = flow_step(m, st.grid, st.imm, fixed(dt));
        const double dvol = (volume(m, st.grid, next) - volume(m, st.grid, st.imm)) / dt;
        const double rhs = 0.5 * (integrand(st.imm) + integrand(next));
        EXPECT_LT(rhs, 0.0);
        return std::abs(dvol - rhs) / std::abs(rhs);
    };
    EXPECT_GE(std::log2(rel_error(32, 2) / rel_error(64, 2)), 1.9);
    EXPECT_LE(rel_error(64, 4), 1e-4);
}
