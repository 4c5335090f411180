#include "hkflow/analysis.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <limits>
#include <random>

namespace hkflow {

namespace {

constexpr double kPi = 3.14159265358979323846;

void require_rho(const ParamGrid& grid) {
    if (!grid.rho_ready()) throw std::logic_error("reference density not set on the grid");
}

double max_component(const std::vector<Vec4>& V) {
    double m = 0.0;
    for (const auto& v : V) m = std::max(m, v.cwiseAbs().maxCoeff());
    return m;
}

double energy_only(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm) {
    return energy(model, grid, imm).energy;
}

Vec2 sym_eigenvalues(const Mat2& M) {
    const double m = 0.5 * (M(0, 0) + M(1, 1));
    const double d = std::hypot(0.5 * (M(0, 0) - M(1, 1)), M(0, 1));
    return Vec2(m - d, m + d);
}

AmbientPoint bolt_point(const AmbientModel& model, const AmbientPoint& p) {
    if (model.is_flat()) throw std::invalid_argument("tubular diagnostics need the Eguchi-Hanson model");
    const double u = eh_u(model, p);
    if (!(u <= kTubeUMax)) throw OutsideTube("point outside the tubular region");
    return p.chart == Chart::eh_bolt ? p : to_chart(model, p, Chart::eh_bolt);
}

double psi_bolt(const AmbientModel& model, const Vec4& x) {
    const double u = std::hypot(x[0], x[1]) / model.bolt_scale();
    const double d = eh_fiber_distance(model, u);
    return d * d;
}

Vec4 geodesic_accel(const AmbientModel& model, const Vec4& x, const Vec4& v) {
    return -christoffel_at(model, AmbientPoint{Chart::eh_bolt, x}).contract(v, v);
}

void rk4_geodesic(const AmbientModel& model, Vec4& x, Vec4& v, double h) {
    const Vec4 k1x = v, k1v = geodesic_accel(model, x, v);
    const Vec4 k2x = v + 0.5 * h * k1v, k2v = geodesic_accel(model, x + 0.5 * h * k1x, k2x);
    const Vec4 k3x = v + 0.5 * h * k2v, k3v = geodesic_accel(model, x + 0.5 * h * k2x, k3x);
    const Vec4 k4x = v + h * k3v, k4v = geodesic_accel(model, x + h * k3x, k4x);
    x += h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x);
    v += h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v);
}

}  // namespace

EnergyValue energy(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm) {
    require_rho(grid);
    std::vector<FirstOrder> fo = first_order_all(model, grid, imm);
    EnergyValue e;
    for (std::size_t n = 0; n < grid.size(); ++n) {
        const double w = grid.weight(n), rho = grid.rho[n];
        e.energy += w * fo[n].lambda * fo[n].lambda * rho;
        double s = 0.0;
        for (int a = 0; a < 3; ++a) s += (fo[n].pull[a] / rho) * (fo[n].pull[a] / rho);
        e.from_moments += w * s * rho;
    }
    return e;
}

double volume(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm) {
    std::vector<FirstOrder> fo = first_order_all(model, grid, imm);
    double v = 0.0;
    for (std::size_t n = 0; n < grid.size(); ++n) v += grid.weight(n) * fo[n].dmu;
    return v;
}

VariationField::VariationField(std::vector<Vec4> v) : V(std::move(v)) {
    mask.resize(V.size());
    for (std::size_t n = 0; n < V.size(); ++n) {
        if (!V[n].allFinite()) throw std::invalid_argument("variation field has non-finite components");
        mask[n] = V[n].cwiseAbs().maxCoeff() > 0.0;
    }
}

Immersion displaced(const Immersion& imm, const VariationField& V, double s) {
    Immersion out = imm;
    for (std::size_t n = 0; n < out.points.size(); ++n)
        if (V.mask[n]) out.points[n].x += s * V.V[n];
    return out;
}

FirstVariation first_variation(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm,
                               const VariationField& V) {
    require_rho(grid);
    std::vector<NodeGeometry> geo = surface_geometry(model, grid, imm);
    FirstVariation fv;
    for (std::size_t n = 0; n < grid.size(); ++n) {
        if (!V.mask[n]) continue;
        const auto& ng = geo[n];
        const Vec4 GV = ng.gbar * V.V[n];
        const double l = ng.lambda;
        fv.analytic += grid.weight(n) * grid.rho[n] * (-2.0 * l * ng.grad_lambda.dot(GV) - 2.0 * l * l * ng.Hvec.dot(GV));
    }
    const double vmax = max_component(V.V);
    if (vmax == 0.0) return fv;
    fv.eps = std::cbrt(DBL_EPSILON) / vmax;
    const double ep = energy_only(model, grid, displaced(imm, V, fv.eps));
    const double em = energy_only(model, grid, displaced(imm, V, -fv.eps));
    fv.fd = (ep - em) / (2.0 * fv.eps);
    fv.rel_err = std::abs(fv.analytic - fv.fd) / std::max(std::abs(fv.analytic), 1e-12);
    return fv;
}

Mat2 tangent_coefficients(const NodeGeometry& ng) {
    Mat2 C;
    for (int i = 0; i < 2; ++i) {
        const Vec4 Gt = ng.gbar * ng.tangent[i];
        const Vec2 c = ng.g_inv * Vec2(ng.X[0].dot(Gt), ng.X[1].dot(Gt));
        C(i, 0) = c[0];
        C(i, 1) = c[1];
    }
    return C;
}

std::array<Mat2, 2> orthonormal_second_form(const NodeGeometry& ng) {
    const Mat2 C = tangent_coefficients(ng);
    return {C * ng.h[0] * C.transpose(), C * ng.h[1] * C.transpose()};
}

double curvature_eval(const CurvatureTensor& R, const Vec4& a, const Vec4& b, const Vec4& c, const Vec4& d) {
    double s = 0.0;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            const double ab = a[i] * b[j];
            if (ab == 0.0) continue;
            for (int k = 0; k < 4; ++k)
                for (int l = 0; l < 4; ++l) s += R(i, j, k, l) * ab * c[k] * d[l];
        }
    return s;
}

PointCurvature::PointCurvature(const AmbientModel& model, const AmbientPoint& p) : flat_(model.is_flat()) {
    if (flat_) return;
    frame_R_ = eh_curvature_forms_at(model, p);
    coframe_ = frame_at(model, p).coframe;
}

double PointCurvature::operator()(const Vec4& a, const Vec4& b, const Vec4& c, const Vec4& d) const {
    if (flat_) return 0.0;
    return curvature_eval(frame_R_, coframe_ * a, coframe_ * b, coframe_ * c, coframe_ * d);
}

SecondVariation second_variation_critical(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm,
                                          const VariationField& V, double crit_tol) {
    require_rho(grid);
    std::vector<NodeGeometry> geo = surface_geometry(model, grid, imm);
    const std::vector<Vec4> vel = velocity_gradient_form(geo);
    double vsup = 0.0;
    for (std::size_t n = 0; n < grid.size(); ++n) vsup = std::max(vsup, std::sqrt(vel[n].dot(geo[n].gbar * vel[n])));
    if (!(vsup < crit_tol)) throw NotCritical("state is not critical: velocity sup-norm " + std::to_string(vsup));

    std::vector<double> integrand(grid.size(), 0.0);
    parallel_for(grid.size(), [&](std::size_t n) {
        const auto& ng = geo[n];
        const AmbientPoint& p = imm.points[n];
        const Vec4& T = V.V[n];
        const Mat2 C = tangent_coefficients(ng);
        const auto hO = orthonormal_second_form(ng);
        const auto dV = vector_gradient(model, grid, imm, V.V, n);
        const Christoffel G = christoffel_at(model, p);
        std::array<Vec4, 2> covX;
        for (int k = 0; k < 2; ++k) covX[k] = dV[k] + G.contract(ng.X[k], T);
        const Vec4 GT = ng.gbar * T;
        double A = 0.0;
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                double s = 0.0;
                for (int al = 0; al < 2; ++al) s += hO[al](i, j) * ng.normal[al].dot(GT);
                A += s * s;
            }
        const PointCurvature R(model, p);
        double Rt = 0.0;
        for (int i = 0; i < 2; ++i) Rt += R(T, ng.tangent[i], T, ng.tangent[i]);
        double nd = 0.0;
        for (int i = 0; i < 2; ++i) {
            const Vec4 cov = C(i, 0) * covX[0] + C(i, 1) * covX[1];
            for (int al = 0; al < 2; ++al) {
                const double c = ng.normal[al].dot(ng.gbar * cov);
                nd += c * c;
            }
        }
        const double l = ng.lambda;
        integrand[n] = grid.weight(n) * grid.rho[n] * l * l * (-2.0 * A + 2.0 * Rt + 2.0 * nd);
    });
    SecondVariation sv;
    for (double v : integrand) sv.analytic += v;
    const double vmax = max_component(V.V);
    if (vmax == 0.0) return sv;
    sv.eps = std::pow(DBL_EPSILON, 0.25) / vmax;
    const double e0 = energy_only(model, grid, imm);
    const double ep = energy_only(model, grid, displaced(imm, V, sv.eps));
    const double em = energy_only(model, grid, displaced(imm, V, -sv.eps));
    sv.fd = (ep - 2.0 * e0 + em) / (sv.eps * sv.eps);
    return sv;
}

Mat2 stability_matrix(const AmbientModel& model, const AmbientPoint& p, const NodeGeometry& ng) {
    const auto hO = orthonormal_second_form(ng);
    Mat2 M = Mat2::Zero();
    const PointCurvature R(model, p);
    for (int al = 0; al < 2; ++al)
        for (int be = al; be < 2; ++be) {
            double r = 0.0;
            for (int i = 0; i < 2; ++i) {
                r += R(ng.tangent[i], ng.normal[al], ng.tangent[i], ng.normal[be]);
                if (al != be) r += R(ng.tangent[i], ng.normal[be], ng.tangent[i], ng.normal[al]);
            }
            double s = al != be ? 0.5 * r : r;
            s -= (hO[al].cwiseProduct(hO[be])).sum();
            M(al, be) = s;
            M(be, al) = s;
        }
    return M;
}

StabilityForm stability_form(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm) {
    std::vector<NodeGeometry> geo = surface_geometry(model, grid, imm);
    StabilityForm sf;
    sf.M.resize(grid.size());
    sf.min_eigenvalue.resize(grid.size());
    parallel_for(grid.size(), [&](std::size_t n) {
        sf.M[n] = stability_matrix(model, imm.points[n], geo[n]);
        sf.min_eigenvalue[n] = sym_eigenvalues(sf.M[n])[0];
    });
    sf.global_min = *std::min_element(sf.min_eigenvalue.begin(), sf.min_eigenvalue.end());
    return sf;
}

std::vector<double> gauss_curvature(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm) {
    std::vector<NodeGeometry> geo = surface_geometry(model, grid, imm);
    std::vector<double> K(grid.size());
    parallel_for(grid.size(), [&](std::size_t n) {
        const auto& ng = geo[n];
        const auto hO = orthonormal_second_form(ng);
        const PointCurvature R(model, imm.points[n]);
        double k = R(ng.tangent[0], ng.tangent[1], ng.tangent[1], ng.tangent[0]);
        for (int al = 0; al < 2; ++al) k += hO[al](0, 0) * hO[al](1, 1) - hO[al](0, 1) * hO[al](0, 1);
        K[n] = k;
    });
    return K;
}

std::array<Mat4, 3> adapted_frame_matrices(double eta1) {
    const double q = std::sqrt(std::max(0.0, 1.0 - eta1 * eta1));
    std::array<Mat4, 3> m;
    m[0] << 0, eta1, 0, -q, -eta1, 0, q, 0, 0, -q, 0, -eta1, q, 0, eta1, 0;
    m[1] << 0, q, 0, eta1, -q, 0, -eta1, 0, 0, eta1, 0, -q, -eta1, 0, q, 0;
    m[2] << 0, 0, 1, 0, 0, 0, 0, 1, -1, 0, 0, 0, 0, -1, 0, 0;
    return m;
}

SpecialDefects special_defects(const std::vector<NodeGeometry>& geo) {
    SpecialDefects d;
    for (const auto& ng : geo) {
        d.max_eta3 = std::max(d.max_eta3, std::abs(ng.eta[2]));
        d.max_eta2_defect = std::max(d.max_eta2_defect, std::abs(ng.eta[1] - 1.0 / ng.lambda));
    }
    return d;
}

AdaptedFrameResidual adapted_frame_residual(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm,
                                            double defect_tol) {
    require_rho(grid);
    std::vector<NodeGeometry> geo = surface_geometry(model, grid, imm, NormalRule::adapted);
    const SpecialDefects d = special_defects(geo);
    if (d.max_eta3 > defect_tol || d.max_eta2_defect > defect_tol)
        throw NotSpecial("state is not special: max|eta3| = " + std::to_string(d.max_eta3) +
                         ", max|eta2 - 1/lambda| = " + std::to_string(d.max_eta2_defect));
    AdaptedFrameResidual res;
    res.matrices.resize(grid.size());
    res.lambda_gradient.resize(grid.size());
    for (std::size_t n = 0; n < grid.size(); ++n) {
        const auto& ng = geo[n];
        const AmbientPoint& p = imm.points[n];
        const Mat4 K = complex_structures_coord(model, p)[2];
        const auto om = kahler_forms_coord(model, p);
        Mat4 B;
        B << ng.tangent[0], ng.tangent[1], K * ng.tangent[0], K * ng.tangent[1];
        const auto expect = adapted_frame_matrices(ng.eta[0]);
        double r1 = 0.0;
        for (int a = 0; a < 3; ++a) r1 = std::max(r1, (B.transpose() * om[a] * B - expect[a]).cwiseAbs().maxCoeff());
        const Mat2 C = tangent_coefficients(ng);
        double r2 = 0.0;
        for (int k = 0; k < 2; ++k) {
            const double ek_lambda = C(k, 0) * ng.dlambda[0] + C(k, 1) * ng.dlambda[1];
            const double Hk = ng.Hvec.dot(ng.gbar * (K * ng.tangent[k]));
            r2 = std::max(r2, std::abs(ek_lambda + ng.lambda * ng.lambda * ng.eta[0] * Hk));
        }
        res.matrices[n] = r1;
        res.lambda_gradient[n] = r2;
        res.max_matrices = std::max(res.max_matrices, r1);
        res.max_lambda_gradient = std::max(res.max_lambda_gradient, r2);
    }
    return res;
}

double TubularDiagnostics::psi_max() const { return *std::max_element(psi.begin(), psi.end()); }
double TubularDiagnostics::s_max() const { return *std::max_element(s.begin(), s.end()); }
double TubularDiagnostics::star_omega_min() const { return *std::min_element(star_omega.begin(), star_omega.end()); }
double TubularDiagnostics::II_dist_max() const { return *std::max_element(II_dist.begin(), II_dist.end()); }

double tube_psi(const AmbientModel& model, const AmbientPoint& p) {
    const AmbientPoint q = bolt_point(model, p);
    return psi_bolt(model, q.x);
}

double tube_distance_by_shooting(const AmbientModel& model, const AmbientPoint& p, int steps) {
    const AmbientPoint q = bolt_point(model, p);
    const double target = std::hypot(q.x[0], q.x[1]);
    if (target == 0.0) return 0.0;
    Vec4 x(0.0, 0.0, q.x[2], q.x[3]);
    Vec4 v(q.x[0] / target, q.x[1] / target, 0.0, 0.0);
    v /= std::sqrt(v.dot(metric_at(model, AmbientPoint{Chart::eh_bolt, x}) * v));
    // Arc length overestimate: |v| grows no faster than the bolt scale times the fiber distance derivative.
    const double L0 = eh_fiber_distance(model, target / model.bolt_scale()) * 1.5 + 1e-12;
    const double h = L0 / steps;
    double s = 0.0;
    for (int k = 0; k < 4 * steps; ++k) {
        Vec4 xn = x, vn = v;
        rk4_geodesic(model, xn, vn, h);
        if (std::hypot(xn[0], xn[1]) >= target) {
            double lo = 0.0, hi = h;
            for (int it = 0; it < 60; ++it) {
                const double mid = 0.5 * (lo + hi);
                Vec4 xm = x, vm = v;
                rk4_geodesic(model, xm, vm, mid);
                (std::hypot(xm[0], xm[1]) < target ? lo : hi) = mid;
            }
            s += 0.5 * (lo + hi);
            return s * s;
        }
        x = xn;
        v = vn;
        s += h;
    }
    throw OutsideTube("normal geodesic did not reach the point");
}

double transported_area_form(const AmbientModel& model, const AmbientPoint& p, const Vec4& a, const Vec4& b) {
    const Frame fr = frame_at(model, p);
    const Mat4 om2 = kahler_forms_coord(model, p)[1];
    const double sign = fr.vectors.col(1).dot(om2 * fr.vectors.col(2)) >= 0.0 ? 1.0 : -1.0;
    const double a1 = fr.coframe.row(1).dot(a), a2 = fr.coframe.row(2).dot(a);
    const double b1 = fr.coframe.row(1).dot(b), b2 = fr.coframe.row(2).dot(b);
    return sign * (a1 * b2 - a2 * b1);
}

PlaneAngles plane_angles(const AmbientModel& model, const AmbientPoint& p, const Vec4& a, const Vec4& b) {
    const Frame fr = frame_at(model, p);
    Mat2 P;
    P << fr.coframe.row(1).dot(a), fr.coframe.row(2).dot(a), fr.coframe.row(1).dot(b), fr.coframe.row(2).dot(b);
    Eigen::JacobiSVD<Mat2> svd(P);
    const Vec2 sv = svd.singularValues();
    PlaneAngles pa;
    pa.cos_theta = {std::min(1.0, sv[0]), std::min(1.0, sv[1])};
    // For an orthonormal pair the vertical components carry the sines directly.
    Mat2 Q;
    Q << fr.coframe.row(0).dot(a), fr.coframe.row(3).dot(a), fr.coframe.row(0).dot(b), fr.coframe.row(3).dot(b);
    pa.s = std::min(1.0, Eigen::JacobiSVD<Mat2>(Q).singularValues()[0]);
    pa.star_omega = transported_area_form(model, p, a, b);
    return pa;
}

TubularDiagnostics tubular_diagnostics(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm) {
    return tubular_diagnostics(model, imm, surface_geometry(model, grid, imm));
}

TubularDiagnostics tubular_diagnostics(const AmbientModel& model, const Immersion& imm,
                                       const std::vector<NodeGeometry>& geo) {
    const std::size_t N = geo.size();
    TubularDiagnostics td;
    td.psi.resize(N);
    td.cos_theta.resize(N);
    td.s.resize(N);
    td.star_omega.resize(N);
    td.II_dist.resize(N);
    for (std::size_t n = 0; n < N; ++n) {
        const AmbientPoint& p = imm.points[n];
        td.psi[n] = tube_psi(model, p);
        const PlaneAngles pa = plane_angles(model, p, geo[n].tangent[0], geo[n].tangent[1]);
        td.cos_theta[n] = pa.cos_theta;
        td.s[n] = pa.s;
        td.star_omega[n] = pa.star_omega;
        // The zero section is totally geodesic, so its transported second fundamental form is zero.
        td.II_dist[n] = std::sqrt(geo[n].normA2);
    }
    return td;
}

HessianPsiCheck hessian_psi_check(const AmbientModel& model, const AmbientPoint& q, const std::array<Vec4, 2>& L) {
    const AmbientPoint p = bolt_point(model, q);
    Vec4 l0 = L[0], l1 = L[1];
    if (q.chart != Chart::eh_bolt) {
        const Mat4 T = transition_jacobian(model, q, Chart::eh_bolt);
        l0 = T * l0;
        l1 = T * l1;
    }
    const Mat4 G = metric_at(model, p);
    l0 /= std::sqrt(l0.dot(G * l0));
    l1 -= l1.dot(G * l0) * l0;
    l1 /= std::sqrt(l1.dot(G * l1));
    const PlaneAngles pa = plane_angles(model, p, l0, l1);

    const double h = 1e-4;
    Vec4 grad;
    for (int k = 0; k < 4; ++k) {
        Vec4 e = Vec4::Zero();
        e[k] = h;
        grad[k] = (psi_bolt(model, p.x + e) - psi_bolt(model, p.x - e)) / (2 * h);
    }
    const Christoffel Gm = christoffel_at(model, p);
    const double psi0 = psi_bolt(model, p.x);
    HessianPsiCheck out;
    for (const Vec4& l : {l0, l1}) {
        const double dd = (psi_bolt(model, p.x + h * l) - 2 * psi0 + psi_bolt(model, p.x - h * l)) / (h * h);
        out.lhs += dd - Gm.contract(l, l).dot(grad);
    }
    out.denominator = pa.s * pa.s + psi0;
    if (out.denominator < 1e-14)
        out.ratio = out.lhs >= -1e-6 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    else
        out.ratio = out.lhs / out.denominator;
    return out;
}

HessianPsiSampling sample_hessian_psi(const AmbientModel& model, int samples, double u_max, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double a = model.bolt_scale();
    HessianPsiSampling out;
    out.samples = samples;
    out.min_ratio = std::numeric_limits<double>::infinity();
    for (int k = 0; k < samples; ++k) {
        const double u = u_max * uni(rng);
        // Base points away from the chart poles; the isometry group moves any base point there.
        const double th = std::acos(1.4 * uni(rng) - 0.7);
        const double ph = 2 * kPi * uni(rng);
        const double ps = 2 * kPi * uni(rng);
        const AmbientPoint q{Chart::eh_bolt, Vec4(a * u * std::cos(ps), a * u * std::sin(ps), th, ph)};
        const Frame fr = frame_at(model, q);
        std::array<Vec4, 2> L;
        for (auto& l : L) {
            Vec4 c;
            for (int i = 0; i < 4; ++i) c[i] = gauss(rng);
            l = fr.vectors * c;
        }
        if (transported_area_form(model, q, L[0], L[1]) < 0.0) L[1] = -L[1];
        const HessianPsiCheck hc = hessian_psi_check(model, q, L);
        out.min_ratio = std::min(out.min_ratio, hc.ratio);
        out.max_u = std::max(out.max_u, u);
    }
    return out;
}

}  // namespace hkflow
