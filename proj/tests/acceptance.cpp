// Acceptance report: one PASS/FAIL line per criterion.
// Usage: acceptance [--strict] [criterion ...]
// The lines also go to acceptance_report.txt in the working directory.
#include "hkflow/scenarios.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdarg>
#include <cstring>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

using namespace hkflow;

namespace {

const double kPi = std::acos(-1.0);

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

double order(double coarse, double fine) { return std::log2(coarse / fine); }

std::vector<AmbientPoint> random_points(const AmbientModel& m, int n, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<AmbientPoint> pts;
    const double r0 = m.bolt_radius();
    for (int k = 0; k < n; ++k) {
        if (m.is_flat()) {
            pts.push_back({Chart::flat, Vec4(2 * kPi * uni(rng), 2 * kPi * uni(rng), 2 * kPi * uni(rng),
                                             2 * kPi * uni(rng))});
        } else if (k % 2 == 0) {
            pts.push_back({Chart::eh_radial, Vec4(r0 * (1.02 + 5 * uni(rng)), 0.05 + (kPi - 0.1) * uni(rng),
                                                  2 * kPi * uni(rng), 2 * kPi * uni(rng))});
        } else {
            pts.push_back({Chart::eh_bolt, Vec4(0.6 * uni(rng) - 0.3, 0.6 * uni(rng) - 0.3,
                                                0.05 + (kPi - 0.1) * uni(rng), 2 * kPi * uni(rng))});
        }
    }
    return pts;
}

Outcome criterion1() {
    const auto t0 = Clock::now();
    double worst = 0.0;
    const Mat4 Id = Mat4::Identity();
    for (auto m : {AmbientModel::flat(), AmbientModel::eguchi_hanson(1.0)}) {
        for (const auto& p : random_points(m, 1000, 1)) {
            const HyperkahlerTriple t = hyperkahler_at(m, p);
            worst = std::max({worst, (t.I * t.I + Id).cwiseAbs().maxCoeff(), (t.J * t.J + Id).cwiseAbs().maxCoeff(),
                              (t.K * t.K + Id).cwiseAbs().maxCoeff(), (t.I * t.J - t.K).cwiseAbs().maxCoeff()});
            const Mat4 g = metric_at(m, p);
            const auto Js = complex_structures_coord(m, p);
            const auto Ws = kahler_forms_coord(m, p);
            for (int a = 0; a < 3; ++a) {
                worst = std::max(worst, (Js[a] * Js[a] + Id).cwiseAbs().maxCoeff());
                worst = std::max(worst, (Ws[a] - (g * Js[a]).transpose()).cwiseAbs().maxCoeff());
            }
        }
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-12 && secs < 1.0, fmt("max residual %.2e (tol 1e-12), %.3f s (limit 1 s)", worst, secs)};
}

Outcome criterion2() {
    const auto t0 = Clock::now();
    const AmbientReport rep = validate_ambient(AmbientModel::eguchi_hanson(1.0));
    const double secs = seconds_since(t0);
    double so = 0, co = 0, ric = 1e300;
    bool ok = true;
    for (const auto& c : rep.checks) {
        if (c.name == "structure_equation_order") so = c.residual;
        if (c.name == "curvature_forms_order") co = c.residual;
        if (c.name == "ricci_flat") ric = c.residual;
        ok = ok && c.pass;
    }
    const bool pass = ok && so >= 1.9 && co >= 1.9 && ric <= 1e-6 && secs < 10.0;
    return {pass, fmt("structure order %.3f, curvature order %.3f (min 1.9), Ricci %.2e (tol 1e-6), %.2f s", so, co,
                      ric, secs)};
}

Outcome criterion3() {
    const auto m1 = AmbientModel::eguchi_hanson(1.0);
    const double R01 = eh_curvature_forms_at(m1, {Chart::eh_radial, Vec4(std::sqrt(2.0), 1.0, 0.5, 0.3)})(0, 1, 1, 0);
    bool pass = std::abs(R01 + 0.25) <= 1e-12;
    std::string d = fmt("R01 %.15f", R01);
    for (double c : {1.0, 16.0}) {
        const auto m = AmbientModel::eguchi_hanson(c);
        const double bolt = extrapolated_bolt_curvature(m);
        const State st = make_eh_zero_section(c, build_grid(Topology::sphere_latlong, 64, 32,
                                                             RhoSpec::from_initial_pullback()));
        double II = 0.0;
        for (const auto& ng : surface_geometry(m, st.grid, st.imm)) II = std::max(II, std::sqrt(ng.normA2));
        const StabilityForm sf = stability_form(m, st.grid, st.imm);
        double eig = 0.0;
        for (const auto& M : sf.M) {
            Eigen::SelfAdjointEigenSolver<Mat2> es(0.5 * (M + M.transpose()));
            eig = std::max(eig, (es.eigenvalues().array() - 4.0 / std::sqrt(c)).abs().maxCoeff());
        }
        const double berr = std::abs(bolt + 2.0 / std::sqrt(c));
        pass = pass && berr <= 1e-4 && II <= 1e-8 && eig <= 1e-4;
        d += fmt("; c=%g: bolt %.6f (err %.1e), sup|II| %.1e, eig err %.1e", c, bolt, berr, II, eig);
    }
    return {pass, d};
}

// Smooth random coordinate field on a torus grid.
VariationField random_torus_field(const ParamGrid& g, unsigned seed) {
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

Outcome criterion4() {
    const auto t0 = Clock::now();
    const auto flat = AmbientModel::flat();
    double worst = 0.0;
    for (int k = 0; k < 10; ++k) {
        ScenarioSpec s;
        s.generator = "flat-graph";
        s.n1 = s.n2 = 128;
        s.stencil_order = 4;
        s.eps = 0.1;
        s.seed = 1 + k;
        const State st = build_state(s);
        worst = std::max(worst, first_variation(flat, st.grid, st.imm, random_torus_field(st.grid, 1001 + k)).rel_err);
    }
    const auto eh = AmbientModel::eguchi_hanson(1.0);
    const State zs = make_eh_zero_section(1.0, build_grid(Topology::sphere_latlong, 64, 32,
                                                            RhoSpec::from_initial_pullback()));
    std::vector<Vec4> e0(zs.grid.size());
    for (std::size_t n = 0; n < e0.size(); ++n) e0[n] = frame_at(eh, zs.imm.points[n]).vectors.col(0);
    const SecondVariation sv = second_variation_critical(eh, zs.grid, zs.imm, VariationField(e0));
    const double ref = -8 * kPi;
    const double ea = std::abs(sv.analytic - ref) / std::abs(ref), ef = std::abs(sv.fd - ref) / std::abs(ref);
    const double secs = seconds_since(t0);
    const bool pass = worst <= 1e-4 && ea <= 0.01 && ef <= 0.01 && secs < 60.0;
    return {pass, fmt("first variation max rel_err %.2e (tol 1e-4); second variation e0: analytic %.4f, fd %.4f, "
                      "reference %.4f (rel err %.2f, %.2f; tol 0.01); %.1f s",
                      worst, sv.analytic, sv.fd, ref, ea, ef, secs)};
}

Outcome criterion5() {
    const auto m = AmbientModel::flat();
    std::vector<double> err;
    for (int n : {32, 64, 128}) {
        ScenarioSpec s = preset("flat-special").spec;
        s.n1 = s.n2 = n;
        const State st = build_state(s);
        const auto vg = velocity_gradient_form(m, st.grid, st.imm);
        const auto vm = velocity_moment_form(m, st.grid, st.imm);
        double e = 0.0;
        for (std::size_t k = 0; k < vg.size(); ++k) e = std::max(e, (vg[k] - vm[k]).cwiseAbs().maxCoeff());
        err.push_back(e);
    }
    const double o1 = order(err[0], err[1]), o2 = order(err[1], err[2]);
    return {o1 >= 1.9 && o2 >= 1.9,
            fmt("max|v_grad - v_moment| %.2e, %.2e, %.2e; orders %.3f, %.3f (min 1.9)", err[0], err[1], err[2], o1, o2)};
}

struct FlatRun {
    FlowResult res;
    double secs = 0.0;
};

FlatRun run_flat_special(int n) {
    Preset p = preset("flat-special");
    p.spec.n1 = p.spec.n2 = n;
    const State st = build_state(p.spec);
    const auto t0 = Clock::now();
    FlatRun r{flow_run(AmbientModel::flat(), st.grid, st.imm, p.flow), 0.0};
    r.secs = seconds_since(t0);
    return r;
}

Outcome criterion6() {
    const FlatRun a = run_flat_special(64);
    const FlatRun b = run_flat_special(128);
    const auto& s = a.res.series;
    double eta3 = 0.0, eta2 = 0.0;
    for (const auto& r : s) eta3 = std::max(eta3, r.max_eta3), eta2 = std::max(eta2, r.max_eta2_defect);
    int bad_e = 0, bad_l = 0;
    for (std::size_t k = 1; k < s.size(); ++k) {
        const long steps = std::max(1L, s[k].step - s[k - 1].step);
        const double dt = (s[k].t - s[k - 1].t) / steps;
        const double slack = 10 * std::pow(dt, 4);
        if (s[k].energy > s[k - 1].energy + slack) ++bad_e;
        if (s[k].sup_lambda > s[k - 1].sup_lambda + slack) ++bad_l;
    }
    const auto& fa = s.back();
    const auto& fb = b.res.series.back();
    const double r3 = fa.max_eta3 / fb.max_eta3, r2 = fa.max_eta2_defect / fb.max_eta2_defect;
    const bool reached = a.res.status == FlowStatus::reached_t_end && b.res.status == FlowStatus::reached_t_end &&
                         std::abs(fa.t - 1.0) < 1e-12;
    const bool pass =
        reached && eta3 <= 1e-4 && eta2 <= 1e-4 && r3 >= 3.5 && r2 >= 3.5 && bad_e == 0 && bad_l == 0 && a.secs < 300;
    return {pass, fmt("64^2 to t=%.3f in %ld steps: max eta3 %.2e, max eta2 defect %.2e (tol 1e-4); defect ratios "
                      "64->128 %.2f, %.2f (min 3.5); energy/sup_lambda increases %d/%d; %.1f s (128^2: %.1f s)",
                      fa.t, a.res.steps, eta3, eta2, r3, r2, bad_e, bad_l, a.secs, b.secs)};
}

Outcome criterion7() {
    const Preset p = preset("eh-convergence");
    const auto m = make_model(p.spec);
    const State st = build_state(p.spec);
    const auto t0 = Clock::now();
    const FlowResult res = flow_run(m, st.grid, st.imm, p.flow);
    const double secs = seconds_since(t0);
    const auto& s = res.series;
    // transient: the first tenth of the run
    std::size_t k0 = 0;
    while (k0 < s.size() && s[k0].t < 0.1 * p.flow.t_end) ++k0;
    int bad = 0;
    for (std::size_t k = k0 + 1; k < s.size(); ++k) {
        if (s[k].psi_max > s[k - 1].psi_max) ++bad;
        if (s[k].star_omega_min < s[k - 1].star_omega_min) ++bad;
    }
    const double fpsi = s.front().psi_max / s.back().psi_max;
    const double fom = (1 - s.front().star_omega_min) / (1 - s.back().star_omega_min);
    const double fII = s.front().II_dist / s.back().II_dist;
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    const double n = static_cast<double>(s.size() - k0);
    for (std::size_t k = k0; k < s.size(); ++k) {
        const double x = s[k].t, y = std::log(s[k].psi_max);
        sx += x, sy += y, sxx += x * x, sxy += x * y, syy += y * y;
    }
    const double cov = sxy - sx * sy / n, vx = sxx - sx * sx / n, vy = syy - sy * sy / n;
    const double slope = cov / vx, r2 = cov * cov / (vx * vy);
    const bool ok = res.status == FlowStatus::reached_t_end || res.status == FlowStatus::converged;
    const bool pass = ok && bad == 0 && fpsi >= 10 && fom >= 10 && fII >= 5 && slope < 0 && r2 >= 0.95 && secs < 900;
    return {pass, fmt("%s at t=%.3f after %ld steps; decrease factors psi %.1f, 1-*omega %.1f (min 10), II_dist %.2f "
                      "(min 5); monotonicity violations %d; log psi slope %.2f, R^2 %.4f (min 0.95); %.0f s",
                      status_name(res.status), s.back().t, res.steps, fpsi, fom, fII, bad, slope, r2, secs)};
}

Outcome criterion8() {
    const HessianPsiSampling h = sample_hessian_psi(AmbientModel::eguchi_hanson(1.0), 1000, 0.3, 7);
    return {h.samples == 1000 && h.min_ratio > 0,
            fmt("%d samples, max u %.3f, empirical constant min tr Hess(psi)/(s^2+psi) = %.4f", h.samples, h.max_u,
                h.min_ratio)};
}

}  // namespace

int main(int argc, char** argv) {
    bool strict = false;
    std::set<int> only;
    for (int k = 1; k < argc; ++k) {
        if (std::strcmp(argv[k], "--strict") == 0) strict = true;
        else only.insert(std::atoi(argv[k]));
    }
    const std::vector<std::function<Outcome()>> criteria = {criterion1, criterion2, criterion3, criterion4,
                                                            criterion5, criterion6, criterion7, criterion8};
    std::FILE* report = std::fopen("acceptance_report.txt", "w");
    auto emit = [&](const std::string& line) {
        std::printf("%s\n", line.c_str());
        std::fflush(stdout);
        if (report) std::fprintf(report, "%s\n", line.c_str()), std::fflush(report);
    };
    int passed = 0, run = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        const int id = static_cast<int>(k) + 1;
        if (!only.empty() && !only.count(id)) continue;
        Outcome o;
        try {
            o = criteria[k]();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        ++run;
        passed += o.pass;
        emit(fmt("%s criterion %d: ", o.pass ? "PASS" : "FAIL", id) + o.detail);
    }
    emit(fmt("%d/%d criteria pass", passed, run));
    if (report) std::fclose(report);
    return strict && passed != run ? 1 : 0;
}
