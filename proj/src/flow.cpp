#include "hkflow/flow.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace hkflow {

namespace {

constexpr double kPi = 3.14159265358979323846;
// Bolt/radial switch point in u, with 10% hysteresis on either side.
constexpr double kSwitchU = 1.5;
constexpr double kHysteresis = 1.1;
// sup|A|^2 doubling only counts as blow-up above this level.
constexpr double kDoublingFloor = 1.0;

double wrap_2pi(double a) {
    a = std::fmod(a, 2 * kPi);
    return a < 0 ? a + 2 * kPi : a;
}

Immersion advanced(const Immersion& imm, const std::vector<Vec4>& v, double s) {
    Immersion out = imm;
    for (std::size_t n = 0; n < out.points.size(); ++n) out.points[n].x += s * v[n];
    return out;
}

double metric_norm(const Mat4& G, const Vec4& v) { return std::sqrt(v.dot(G * v)); }

std::vector<Vec4> velocity_from(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm,
                                const std::vector<NodeGeometry>& geo, VelocityForm form) {
    if (form == VelocityForm::gradient) return velocity_gradient_form(geo);
    return velocity_moment_form(model, grid, imm);
}

bool filtered(const AmbientModel& model, const ParamGrid& grid, double cut) {
    return cut > 0.0 && !model.is_flat() && grid.topology == Topology::sphere_latlong;
}

std::vector<Vec4> stage_velocity(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm,
                                 const FlowConfig& cfg) {
    std::vector<Vec4> v = flow_velocity(model, grid, imm, cfg.velocity_form);
    apply_polar_filter(model, grid, imm, v, cfg.polar_filter);
    return v;
}

double effective_filter(const AmbientModel& model, const ParamGrid& grid, const FlowConfig& cfg) {
    return filtered(model, grid, cfg.polar_filter) ? cfg.polar_filter : 0.0;
}

Immersion integrate(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm, const FlowConfig& cfg,
                    double dt, const std::vector<Vec4>& k1) {
    Immersion out;
    if (cfg.integrator == Integrator::euler) {
        out = advanced(imm, k1, dt);
    } else {
        const auto k2 = stage_velocity(model, grid, advanced(imm, k1, 0.5 * dt), cfg);
        const auto k3 = stage_velocity(model, grid, advanced(imm, k2, 0.5 * dt), cfg);
        const auto k4 = stage_velocity(model, grid, advanced(imm, k3, dt), cfg);
        out = imm;
        for (std::size_t n = 0; n < out.points.size(); ++n)
            out.points[n].x += dt / 6 * (k1[n] + 2 * k2[n] + 2 * k3[n] + k4[n]);
    }
    out.time = imm.time + dt;
    return out;
}

double sup_A2(const std::vector<NodeGeometry>& geo) {
    double m = 0.0;
    for (const auto& ng : geo) m = std::max(m, ng.normA2);
    return m;
}

// Laplace-Beltrami of a node scalar field in divergence form.
std::vector<double> laplacian(const ParamGrid& grid, const std::vector<NodeGeometry>& geo, const std::vector<double>& f) {
    const std::size_t N = grid.size();
    std::vector<double> q1(N), q2(N), out(N);
    for (std::size_t n = 0; n < N; ++n) {
        const Vec2 df = scalar_gradient(grid, f, n);
        const Vec2 q = geo[n].dmu * (geo[n].g_inv * df);
        q1[n] = q[0];
        q2[n] = q[1];
    }
    for (std::size_t n = 0; n < N; ++n) {
        const double div = scalar_gradient(grid, q1, n, false)[0] + scalar_gradient(grid, q2, n, true)[1];
        out[n] = div / geo[n].dmu;
    }
    return out;
}

}  // namespace

const char* status_name(FlowStatus s) {
    switch (s) {
        case FlowStatus::reached_t_end: return "reached_t_end";
        case FlowStatus::converged: return "converged";
        case FlowStatus::blowup_detected: return "blowup_detected";
        case FlowStatus::degenerate: return "degenerate";
        case FlowStatus::defect_exceeded: return "defect_exceeded";
    }
    return "unknown";
}

void FlowConfig::validate() const {
    if (dt_mode == DtMode::fixed && !(dt > 0.0)) throw std::invalid_argument("dt must be positive");
    if (dt_mode == DtMode::cfl && !(cfl > 0.0 && cfl <= 1.0)) throw std::invalid_argument("cfl factor must lie in (0, 1]");
    if (monitor_every < 1) throw std::invalid_argument("monitor cadence must be at least 1");
    if (!(t_end >= 0.0)) throw std::invalid_argument("t_end must be nonnegative");
}

MonitorRecord monitor(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm) {
    std::vector<NodeGeometry> geo = surface_geometry(model, grid, imm);
    MonitorRecord r;
    r.t = imm.time;
    r.sup_lambda = 0.0;
    r.inf_lambda = std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n < grid.size(); ++n) {
        const auto& ng = geo[n];
        const double w = grid.weight(n);
        r.energy += w * ng.lambda * ng.lambda * grid.rho[n];
        r.volume += w * ng.dmu;
        r.sup_lambda = std::max(r.sup_lambda, ng.lambda);
        r.inf_lambda = std::min(r.inf_lambda, ng.lambda);
        r.sup_A2 = std::max(r.sup_A2, ng.normA2);
    }
    const SpecialDefects d = special_defects(geo);
    r.max_eta3 = d.max_eta3;
    r.max_eta2_defect = d.max_eta2_defect;
    if (!model.is_flat()) {
        try {
            const TubularDiagnostics td = tubular_diagnostics(model, imm, geo);
            r.psi_max = td.psi_max();
            r.star_omega_min = td.star_omega_min();
            r.s_max = td.s_max();
            r.II_dist = td.II_dist_max();
        } catch (const OutsideTube&) {
        }
    }
    return r;
}

std::vector<Vec4> flow_velocity(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm,
                                VelocityForm form) {
    if (form == VelocityForm::gradient) return velocity_gradient_form(model, grid, imm);
    return velocity_moment_form(model, grid, imm);
}

double physical_spacing(const ParamGrid& grid, const std::vector<NodeGeometry>& geo, double polar_filter) {
    const bool sphere = grid.topology == Topology::sphere_latlong && polar_filter > 0.0;
    double h = std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n < geo.size(); ++n) {
        const auto& ng = geo[n];
        double h1 = std::sqrt(ng.g(0, 0)) * grid.dx1;
        if (sphere) {
            const double sj = std::sin(grid.x2(grid.j_of(n)));
            if (sj < polar_filter) h1 *= polar_filter / sj;
        }
        h = std::min({h, h1, std::sqrt(ng.g(1, 1)) * grid.dx2});
    }
    return h;
}

double cfl_limit(const ParamGrid& grid, const std::vector<NodeGeometry>& geo, double polar_filter) {
    const double h = physical_spacing(grid, geo, polar_filter);
    double m = 1.0;
    for (const auto& ng : geo) {
        const double gl = metric_norm(ng.gbar, ng.grad_lambda);
        m = std::max({m, ng.lambda * ng.lambda, ng.lambda * gl / h});
    }
    return h * h / m;
}

void apply_polar_filter(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm, std::vector<Vec4>& v,
                        double cut) {
    if (!filtered(model, grid, cut)) return;
    const int n1 = grid.n1;
    std::vector<Vec6> e(n1), fe(n1);
    std::vector<Mat64> jac(n1);
    std::vector<double> kernel(n1);
    for (int j = 0; j < grid.n2; ++j) {
        const double sj = std::sin(grid.x2(j));
        if (sj >= cut) continue;
        for (int k = 0; k < n1; ++k) {
            double c = 0.0;
            for (int m = 0; m < n1; ++m) {
                const double sm = std::sin(0.5 * m * grid.dx1);
                const double damp = sm == 0.0 ? 1.0 : std::min(1.0, sj * sj / (cut * cut * sm * sm));
                c += damp * std::cos(m * k * grid.dx1);
            }
            kernel[k] = c / n1;
        }
        for (int i = 0; i < n1; ++i) {
            const std::size_t n = grid.index(i, j);
            jac[i] = eh_embed_jacobian(model, imm.points[n], false);
            e[i] = jac[i] * v[n];
        }
        for (int i = 0; i < n1; ++i) {
            fe[i].setZero();
            for (int k = 0; k < n1; ++k) fe[i] += kernel[k] * e[(i - k + n1) % n1];
        }
        for (int i = 0; i < n1; ++i) v[grid.index(i, j)] = jac[i].colPivHouseholderQr().solve(fe[i]);
    }
}

void normalize_points(const AmbientModel& model, Immersion& imm) {
    if (model.is_flat()) return;
    for (auto& p : imm.points) {
        const int t = p.chart == Chart::eh_bolt ? 2 : 1;
        if (p.x[t] < 0.0 || p.x[t] > kPi) {
            p.x[t] = p.x[t] < 0.0 ? -p.x[t] : 2 * kPi - p.x[t];
            p.x[t + 1] += kPi;
            if (p.chart == Chart::eh_bolt) {
                p.x[0] = -p.x[0];
                p.x[1] = -p.x[1];
            } else {
                p.x[3] += kPi;
            }
        }
        p.x[t + 1] = wrap_2pi(p.x[t + 1]);
        if (p.chart == Chart::eh_radial) p.x[3] = wrap_2pi(p.x[3]);
        const double u = eh_u(model, p);
        if (p.chart == Chart::eh_bolt && u > kSwitchU * kHysteresis)
            p = to_chart(model, p, Chart::eh_radial);
        else if (p.chart == Chart::eh_radial && u < kSwitchU / kHysteresis)
            p = to_chart(model, p, Chart::eh_bolt);
    }
}

Immersion flow_step(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm, const FlowConfig& cfg) {
    if (cfg.dt_mode == DtMode::fixed) return flow_step(model, grid, imm, cfg, cfg.dt);
    std::vector<NodeGeometry> geo = surface_geometry(model, grid, imm);
    const double dt = cfg.cfl * cfl_limit(grid, geo, effective_filter(model, grid, cfg));
    std::vector<Vec4> v = velocity_from(model, grid, imm, geo, cfg.velocity_form);
    apply_polar_filter(model, grid, imm, v, cfg.polar_filter);
    Immersion out = integrate(model, grid, imm, cfg, dt, v);
    normalize_points(model, out);
    return out;
}

Immersion flow_step(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm, const FlowConfig& cfg,
                    double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
    std::vector<NodeGeometry> geo = surface_geometry(model, grid, imm);
    std::vector<Vec4> v = velocity_from(model, grid, imm, geo, cfg.velocity_form);
    apply_polar_filter(model, grid, imm, v, cfg.polar_filter);
    const double lim = cfl_limit(grid, geo, effective_filter(model, grid, cfg));
    if (dt > lim * (1 + 1e-12))
        throw StepRejected("dt = " + std::to_string(dt) + " exceeds the stability limit " + std::to_string(lim));
    Immersion out = integrate(model, grid, imm, cfg, dt, v);
    normalize_points(model, out);
    return out;
}

FlowResult flow_run(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm0, const FlowConfig& cfg,
                    const SnapshotHook& on_monitor) {
    cfg.validate();
    FlowResult res;
    Immersion cur = imm0;
    std::deque<double> a2_hist;
    long last_recorded = -1;
    auto record = [&](long step) {
        if (step == last_recorded) return;
        try {
            MonitorRecord r = monitor(model, grid, cur);
            r.step = step;
            res.series.push_back(r);
        } catch (const DegenerateImmersion&) {
        }
        if (on_monitor) on_monitor(step, cur);
        last_recorded = step;
    };
    record(0);
    long step = 0;
    bool done = false;
    while (!done) {
        if (cur.time >= cfg.t_end * (1 - 1e-12)) {
            res.status = FlowStatus::reached_t_end;
            break;
        }
        if (step >= cfg.max_steps) {
            res.status = FlowStatus::reached_t_end;
            res.message = "max_steps reached before t_end";
            break;
        }
        try {
            std::vector<NodeGeometry> geo = surface_geometry(model, grid, cur);
            std::vector<Vec4> v = velocity_from(model, grid, cur, geo, cfg.velocity_form);
            double vsup = 0.0;
            bool finite = true;
            for (std::size_t n = 0; n < grid.size(); ++n) {
                if (!v[n].allFinite()) finite = false;
                else vsup = std::max(vsup, metric_norm(geo[n].gbar, v[n]));
            }
            if (!finite) {
                res.status = FlowStatus::degenerate;
                res.message = "non-finite velocity";
                break;
            }
            if (vsup < cfg.converge_tol) {
                res.status = FlowStatus::converged;
                break;
            }
            const double a2 = sup_A2(geo);
            if (!(a2 <= cfg.blowup_A2)) {
                res.status = FlowStatus::blowup_detected;
                res.message = "sup|A|^2 = " + std::to_string(a2) + " exceeds the threshold";
                break;
            }
            if (a2_hist.size() == 10 && a2 > kDoublingFloor && a2 > 2.0 * a2_hist.front()) {
                res.status = FlowStatus::blowup_detected;
                res.message = "sup|A|^2 doubled within 10 steps";
                break;
            }
            a2_hist.push_back(a2);
            if (a2_hist.size() > 10) a2_hist.pop_front();
            const SpecialDefects d = special_defects(geo);
            if (d.max_eta3 > cfg.defect_tol || d.max_eta2_defect > cfg.defect_tol) {
                res.status = FlowStatus::defect_exceeded;
                res.message = "special-condition defect exceeds defect_tol";
                break;
            }
            apply_polar_filter(model, grid, cur, v, cfg.polar_filter);
            const double lim = cfl_limit(grid, geo, effective_filter(model, grid, cfg));
            double dt = cfg.dt_mode == DtMode::cfl ? cfg.cfl * lim : cfg.dt;
            if (cfg.dt_mode == DtMode::fixed && dt > lim * (1 + 1e-12))
                throw StepRejected("dt = " + std::to_string(dt) + " exceeds the stability limit " + std::to_string(lim));
            dt = std::min(dt, cfg.t_end - cur.time);
            cur = integrate(model, grid, cur, cfg, dt, v);
            normalize_points(model, cur);
            ++step;
        } catch (const StepRejected& e) {
            res.status = FlowStatus::blowup_detected;
            res.message = std::string("unstable step: ") + e.what();
            done = true;
        } catch (const DegenerateImmersion& e) {
            res.status = FlowStatus::degenerate;
            res.message = e.what();
            done = true;
        } catch (const ChartDomain& e) {
            res.status = FlowStatus::degenerate;
            res.message = e.what();
            done = true;
        }
        if (!done && step % cfg.monitor_every == 0) record(step);
    }
    record(step);
    res.final_state = cur;
    res.steps = step;
    return res;
}

std::vector<double> two_form_rhs(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm,
                                 int which_form) {
    if (which_form < 0 || which_form > 2) throw std::invalid_argument("which_form must be 0, 1 or 2");
    std::vector<NodeGeometry> geo = surface_geometry(model, grid, imm);
    const std::size_t N = grid.size();
    std::vector<double> eta(N);
    for (std::size_t n = 0; n < N; ++n) eta[n] = geo[n].eta[which_form];
    const std::vector<double> lap = laplacian(grid, geo, eta);
    std::vector<double> rhs(N);
    parallel_for(N, [&](std::size_t n) {
        const auto& ng = geo[n];
        const AmbientPoint& p = imm.points[n];
        const Mat4 W = kahler_forms_coord(model, p)[which_form];
        auto w = [&](const Vec4& a, const Vec4& b) { return a.dot(W * b); };
        const Mat2 C = tangent_coefficients(ng);
        const auto hO = orthonormal_second_form(ng);
        const Vec4* e = ng.tangent.data();
        const Vec4* nu = ng.normal.data();
        auto second = [&](int i, int j) { return Vec4(hO[0](i, j) * nu[0] + hO[1](i, j) * nu[1]); };
        const double l = ng.lambda;
        const Vec2 el = C * ng.dlambda;  // e_i(lambda)

        double curv = 0.0;
        if (!model.is_flat()) {
            const PointCurvature R(model, p);
            const Mat4 Ginv = ng.gbar.inverse();
            // (R(e_a, e_k) e_k)^N
            auto ricci_normal = [&](const Vec4& a) {
                Vec4 low = Vec4::Zero();
                for (int k = 0; k < 2; ++k)
                    for (int m = 0; m < 4; ++m) low[m] += R(a, e[k], e[k], Vec4::Unit(m));
                const Vec4 v = Ginv * low;
                Vec4 out = Vec4::Zero();
                for (int al = 0; al < 2; ++al) out += v.dot(ng.gbar * nu[al]) * nu[al];
                return out;
            };
            curv = w(ricci_normal(e[0]), e[1]) + w(e[0], ricci_normal(e[1]));
        }
        const double t1 = l * l * (lap[n] + curv + eta[n] * ng.normA2);
        const double t2 = 2 * l * (el[0] * w(ng.Hvec, e[1]) + el[1] * w(e[0], ng.Hvec));
        double t3 = 0.0;
        for (int i = 0; i < 2; ++i) t3 += l * el[i] * (w(second(0, i), e[1]) + w(e[0], second(1, i)));
        double cross = 0.0;
        for (int k = 0; k < 2; ++k) cross += hO[0](k, 0) * hO[1](k, 1) - hO[0](k, 1) * hO[1](k, 0);
        const double t4 = -2 * l * l * w(nu[0], nu[1]) * cross;
        rhs[n] = t1 + t2 + t3 + t4;
    });
    return rhs;
}

std::vector<double> two_form_evolution_residual(const AmbientModel& model, const ParamGrid& grid,
                                                const Immersion& imm, int which_form, double dt) {
    const std::vector<double> rhs = two_form_rhs(model, grid, imm, which_form);
    FlowConfig cfg;
    cfg.integrator = Integrator::rk4;
    Immersion next = integrate(model, grid, imm, cfg, dt, flow_velocity(model, grid, imm, VelocityForm::gradient));
    const std::vector<FirstOrder> a = first_order_all(model, grid, imm);
    const std::vector<FirstOrder> b = first_order_all(model, grid, next);
    std::vector<double> res(grid.size());
    for (std::size_t n = 0; n < grid.size(); ++n) {
        const double d = (b[n].pull[which_form] / b[n].dmu - a[n].pull[which_form] / a[n].dmu) / dt;
        res[n] = std::abs(d - rhs[n]);
    }
    return res;
}

}  // namespace hkflow
