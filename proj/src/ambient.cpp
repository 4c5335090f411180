#include "hkflow/ambient.hpp"

#include "hkflow/dual.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>
#include <random>

namespace hkflow {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

// Even-function series in q = u^2, switched to closed forms away from the bolt.
constexpr double kSeriesSwitch = 0.0625;
constexpr int kSeriesTerms = 12;

struct QSeries {
    std::array<double, kSeriesTerms> c{}, s{}, t{};
    QSeries() {
        // Euler numbers E_0, E_2, ..., E_26.
        const std::array<double, 14> euler = {1.0,
                                              -1.0,
                                              5.0,
                                              -61.0,
                                              1385.0,
                                              -50521.0,
                                              2702765.0,
                                              -199360981.0,
                                              19391512145.0,
                                              -2404879675441.0,
                                              370371188237525.0,
                                              -69348874393137901.0,
                                              15514534163557086905.0,
                                              -4087072509293123892361.0};
        std::array<double, 2 * kSeriesTerms + 4> fact{};
        fact[0] = 1.0;
        for (std::size_t i = 1; i < fact.size(); ++i) fact[i] = fact[i - 1] * static_cast<double>(i);
        std::array<double, kSeriesTerms + 1> sfull{};
        for (int n = 0; n <= kSeriesTerms; ++n) sfull[n] = (1.0 - euler[n + 1]) / fact[2 * n + 2];
        for (int n = 0; n < kSeriesTerms; ++n) {
            c[n] = 1.0 / fact[2 * n];
            s[n] = sfull[n];
            t[n] = 1.0 / fact[2 * n + 2] - sfull[n + 1];
        }
    }
};

const QSeries& qseries() {
    static const QSeries q;
    return q;
}

template <class T>
T horner(const std::array<double, kSeriesTerms>& coef, const T& q) {
    T acc(coef[kSeriesTerms - 1]);
    for (int n = kSeriesTerms - 2; n >= 0; --n) acc = acc * q + coef[n];
    return acc;
}

// C = cosh u, S = sinh u tanh u / u^2, T = (C - S) / u^2 as functions of q = u^2.
template <class T>
void q_functions(const T& q, T& C, T& S, T& Tq) {
    using std::cosh;
    using std::sqrt;
    if (value_of(q) < kSeriesSwitch) {
        const auto& qs = qseries();
        C = horner(qs.c, q);
        S = horner(qs.s, q);
        Tq = horner(qs.t, q);
    } else {
        T u = sqrt(q);
        C = cosh(u);
        S = (C - 1.0 / C) / q;
        Tq = (C - S) / q;
    }
}

template <class T>
using M4 = std::array<std::array<T, 4>, 4>;

template <class T>
M4<T> metric_tpl(const AmbientModel& model, Chart chart, const std::array<T, 4>& x) {
    using std::cos;
    using std::sin;
    M4<T> g;
    for (auto& row : g)
        for (auto& e : row) e = T(0.0);
    if (chart == Chart::flat) {
        for (int i = 0; i < 4; ++i) g[i][i] = T(1.0);
        return g;
    }
    const double c = model.c;
    if (chart == Chart::eh_radial) {
        const T& r = x[0];
        T ct = cos(x[1]), st = sin(x[1]);
        T r2 = r * r;
        T A = 1.0 - c / (r2 * r2);
        g[0][0] = 1.0 / A;
        g[1][1] = r2 * 0.25;
        g[2][2] = r2 * 0.25 * (st * st + A * ct * ct);
        g[2][3] = g[3][2] = r2 * A * ct * 0.25;
        g[3][3] = r2 * A * 0.25;
        return g;
    }
    const double a = model.bolt_scale();
    const double a2 = a * a;
    const T& v1 = x[0];
    const T& v2 = x[1];
    T ct = cos(x[2]), st = sin(x[2]);
    T q = (v1 * v1 + v2 * v2) / a2;
    T C, S, Tq;
    q_functions(q, C, S, Tq);
    g[0][0] = S + Tq * v1 * v1 / a2;
    g[1][1] = S + Tq * v2 * v2 / a2;
    g[0][1] = g[1][0] = Tq * v1 * v2 / a2;
    g[0][3] = g[3][0] = -S * ct * v2;
    g[1][3] = g[3][1] = S * ct * v1;
    g[2][2] = a2 * C;
    g[3][3] = a2 * (q * S * ct * ct + C * st * st);
    return g;
}

Vec4 clamped(const AmbientPoint& p) {
    Vec4 x = p.x;
    int ti = p.chart == Chart::eh_radial ? 1 : (p.chart == Chart::eh_bolt ? 2 : -1);
    if (ti >= 0) x[ti] = std::clamp(x[ti], kThetaMin, kPi - kThetaMin);
    return x;
}

Mat4 to_eigen(const M4<double>& g) {
    Mat4 m;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) m(i, j) = g[i][j];
    return m;
}

}  // namespace

Christoffel christoffel_from_metric(const Mat4& g, const std::array<Mat4, 4>& dg) {
    Mat4 gi = g.inverse();
    Christoffel ch;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            Vec4 low;
            for (int l = 0; l < 4; ++l) low[l] = 0.5 * (dg[i](j, l) + dg[j](i, l) - dg[l](i, j));
            Vec4 up = gi * low;
            for (int k = 0; k < 4; ++k) ch.G[k](i, j) = up[k];
        }
    return ch;
}

namespace {

// Fourth-order central difference of a matrix-valued function along coordinate k.
template <class F>
Mat4 d4(const F& f, const AmbientPoint& p, int k, double h) {
    auto at = [&](double s) {
        AmbientPoint q = p;
        q.x[k] += s;
        return f(q);
    };
    return (at(-2 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2 * h)) / (12.0 * h);
}

Mat4 coframe_radial(const AmbientModel& model, const Vec4& x) {
    const double r = x[0], th = x[1], ps = x[3];
    const double A = 1.0 - model.c / std::pow(r, 4);
    const double sA = std::sqrt(A);
    Mat4 E = Mat4::Zero();
    E(0, 0) = 1.0 / sA;
    // sigma^i = -1/2 (...) in (dtheta, dphi, dpsi) components
    E(1, 1) = -0.5 * r * std::sin(ps);
    E(1, 2) = 0.5 * r * std::sin(th) * std::cos(ps);
    E(2, 1) = -0.5 * r * std::cos(ps);
    E(2, 2) = -0.5 * r * std::sin(th) * std::sin(ps);
    E(3, 2) = -0.5 * r * sA * std::cos(th);
    E(3, 3) = -0.5 * r * sA;
    return E;
}

Mat4 coframe_bolt(const AmbientModel& model, const Vec4& x) {
    const double a = model.bolt_scale();
    const double v1 = x[0], v2 = x[1], th = x[2];
    const double w = std::hypot(v1, v2);
    const double ps = (w > 0.0) ? std::atan2(v2, v1) / kKappaPsi : 0.0;
    const double e1 = std::cos(kKappaPsi * ps), e2 = std::sin(kKappaPsi * ps);
    double C, S, Tq;
    q_functions((w / a) * (w / a), C, S, Tq);
    const double sC = std::sqrt(C), sS = std::sqrt(S);
    const double half_r = a * sC;
    Mat4 E = Mat4::Zero();
    E(0, 0) = sC * e1;
    E(0, 1) = sC * e2;
    E(1, 2) = -half_r * std::sin(ps);
    E(1, 3) = half_r * std::sin(th) * std::cos(ps);
    E(2, 2) = -half_r * std::cos(ps);
    E(2, 3) = -half_r * std::sin(th) * std::sin(ps);
    E(3, 0) = sS * e2;
    E(3, 1) = -sS * e1;
    E(3, 3) = -w * sS * std::cos(th);
    return E;
}

double eh_radius(const AmbientModel& model, const AmbientPoint& p) {
    if (p.chart == Chart::eh_radial) return p.x[0];
    const double u = eh_u(model, p);
    return std::sqrt(std::sqrt(model.c) * std::cosh(u));
}

Mat4 wedge(const Vec4& a, const Vec4& b) { return a * b.transpose() - b * a.transpose(); }

Mat4 natural_I() {
    Mat4 m;
    m << 0, 0, 0, -1, 0, 0, -1, 0, 0, 1, 0, 0, 1, 0, 0, 0;
    return m;
}
Mat4 natural_J() {
    Mat4 m;
    m << 0, -1, 0, 0, 1, 0, 0, 0, 0, 0, 0, -1, 0, 0, 1, 0;
    return m;
}
Mat4 natural_K() {
    Mat4 m;
    m << 0, 0, -1, 0, 0, 0, 0, 1, 1, 0, 0, 0, 0, -1, 0, 0;
    return m;
}

Mat4 frame_two_form(double c01, double c02, double c03, double c12, double c13, double c23) {
    Mat4 m = Mat4::Zero();
    m(0, 1) = c01;
    m(0, 2) = c02;
    m(0, 3) = c03;
    m(1, 2) = c12;
    m(1, 3) = c13;
    m(2, 3) = c23;
    return m - m.transpose();
}

double wrap_diff(double d) { return d - kTwoPi * std::round(d / kTwoPi); }

}  // namespace

const char* chart_name(Chart chart) {
    switch (chart) {
        case Chart::flat: return "flat";
        case Chart::eh_radial: return "eh_radial";
        case Chart::eh_bolt: return "eh_bolt";
    }
    return "?";
}

AmbientModel AmbientModel::flat(double fd_step) { return AmbientModel{ModelKind::flat_torus, 1.0, fd_step}; }

AmbientModel AmbientModel::eguchi_hanson(double c, double fd_step) {
    if (!(c > 0.0)) throw std::invalid_argument("c must be positive");
    return AmbientModel{ModelKind::eguchi_hanson, c, fd_step};
}

double AmbientModel::bolt_radius() const { return std::pow(c, 0.25); }
double AmbientModel::bolt_scale() const { return 0.5 * std::pow(c, 0.25); }

Vec4 Christoffel::contract(const Vec4& a, const Vec4& b) const {
    Vec4 out;
    for (int k = 0; k < 4; ++k) out[k] = a.dot(G[k] * b);
    return out;
}

double CurvatureTensor::max_abs() const {
    double m = 0.0;
    for (double v : R) m = std::max(m, std::abs(v));
    return m;
}

double CurvatureTensor::max_abs_diff(const CurvatureTensor& o) const {
    double m = 0.0;
    for (std::size_t i = 0; i < R.size(); ++i) m = std::max(m, std::abs(R[i] - o.R[i]));
    return m;
}

void check_point(const AmbientModel& model, const AmbientPoint& p) {
    if (!p.x.allFinite()) throw ChartDomain("non-finite coordinates");
    if (model.is_flat()) {
        if (p.chart != Chart::flat) throw ChartDomain("flat model requires the flat chart");
        return;
    }
    if (p.chart == Chart::flat) throw ChartDomain("Eguchi-Hanson model has no flat chart");
    if (p.chart == Chart::eh_radial) {
        if (!(p.x[0] > model.bolt_radius())) throw ChartDomain("r must exceed c^(1/4) in the radial chart");
        return;
    }
    const double vmax = model.bolt_scale() * kBoltUMax;
    if (!(p.x[0] * p.x[0] + p.x[1] * p.x[1] < vmax * vmax)) throw ChartDomain("bolt chart point outside v_max");
}

Mat4 metric_at(const AmbientModel& model, const AmbientPoint& p) {
    check_point(model, p);
    Vec4 x = clamped(p);
    return to_eigen(metric_tpl<double>(model, p.chart, {x[0], x[1], x[2], x[3]}));
}

Mat4 metric_with_derivatives(const AmbientModel& model, const AmbientPoint& p, std::array<Mat4, 4>& dg) {
    check_point(model, p);
    Vec4 x = clamped(p);
    std::array<Dual4, 4> xd;
    for (int k = 0; k < 4; ++k) xd[k] = Dual4::variable(x[k], k);
    auto gd = metric_tpl<Dual4>(model, p.chart, xd);
    Mat4 g;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            g(i, j) = gd[i][j].v;
            for (int k = 0; k < 4; ++k) dg[k](i, j) = gd[i][j].d[k];
        }
    return g;
}

Christoffel christoffel_at(const AmbientModel& model, const AmbientPoint& p) {
    if (model.is_flat()) {
        check_point(model, p);
        Christoffel ch;
        for (auto& m : ch.G) m.setZero();
        return ch;
    }
    std::array<Mat4, 4> dg;
    Mat4 g = metric_with_derivatives(model, p, dg);
    return christoffel_from_metric(g, dg);
}

Christoffel christoffel_fd_at(const AmbientModel& model, const AmbientPoint& p) {
    Mat4 g = metric_at(model, p);
    std::array<Mat4, 4> dg;
    auto f = [&](const AmbientPoint& q) { return metric_at(model, q); };
    for (int k = 0; k < 4; ++k) dg[k] = d4(f, p, k, model.fd_step);
    return christoffel_from_metric(g, dg);
}

CurvatureTensor riemann_from_christoffel(const std::function<Christoffel(const Vec4&)>& gamma, const Mat4& g,
                                         const Vec4& x, double h) {
    Christoffel G = gamma(x);
    // dG[i][l](j,k) = d_i Gamma^l_jk
    std::array<std::array<Mat4, 4>, 4> dG;
    for (int i = 0; i < 4; ++i) {
        auto at = [&](double s) {
            Vec4 y = x;
            y[i] += s;
            return gamma(y);
        };
        Christoffel m2 = at(-2 * h), m1 = at(-h), p1 = at(h), p2 = at(2 * h);
        for (int l = 0; l < 4; ++l) dG[i][l] = (m2.G[l] - 8.0 * m1.G[l] + 8.0 * p1.G[l] - p2.G[l]) / (12.0 * h);
    }
    CurvatureTensor R;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            for (int k = 0; k < 4; ++k) {
                Vec4 up;
                for (int l = 0; l < 4; ++l) {
                    double v = dG[i][l](j, k) - dG[j][l](i, k);
                    for (int m = 0; m < 4; ++m) v += G.G[l](i, m) * G.G[m](j, k) - G.G[l](j, m) * G.G[m](i, k);
                    up[l] = v;
                }
                Vec4 low = g * up;
                for (int l = 0; l < 4; ++l) R(i, j, k, l) = low[l];
            }
    return R;
}

CurvatureTensor riemann_coord_at(const AmbientModel& model, const AmbientPoint& p) {
    if (model.is_flat()) {
        check_point(model, p);
        return CurvatureTensor{};
    }
    Mat4 g = metric_at(model, p);
    return riemann_from_christoffel(
        [&](const Vec4& y) { return christoffel_at(model, AmbientPoint{p.chart, y}); }, g, p.x, model.fd_step);
}

namespace {
CurvatureTensor contract_all(const CurvatureTensor& T, const Mat4& M) {
    // out_abcd = sum T_ijkl M_ia M_jb M_kc M_ld
    CurvatureTensor a, b;
    for (int s = 0; s < 4; ++s) {
        const CurvatureTensor& src = (s == 0) ? T : ((s % 2 == 1) ? a : b);
        CurvatureTensor& dst = (s % 2 == 0) ? a : b;
        // contract the leading slot and rotate it to the end
        for (int j = 0; j < 4; ++j)
            for (int k = 0; k < 4; ++k)
                for (int l = 0; l < 4; ++l)
                    for (int x = 0; x < 4; ++x) {
                        double v = 0.0;
                        for (int i = 0; i < 4; ++i) v += src(i, j, k, l) * M(i, x);
                        dst(j, k, l, x) = v;
                    }
    }
    return b;
}
}  // namespace

CurvatureTensor frame_to_coord(const CurvatureTensor& Rf, const Frame& f) { return contract_all(Rf, f.coframe); }

CurvatureTensor riemann_at(const AmbientModel& model, const AmbientPoint& p) {
    CurvatureTensor Rc = riemann_coord_at(model, p);
    if (model.is_flat()) return Rc;
    return contract_all(Rc, frame_at(model, p).vectors);
}

Mat4 ricci_at(const AmbientModel& model, const AmbientPoint& p) {
    CurvatureTensor R = riemann_at(model, p);
    Mat4 ric = Mat4::Zero();
    for (int b = 0; b < 4; ++b)
        for (int c = 0; c < 4; ++c)
            for (int a = 0; a < 4; ++a) ric(b, c) += R(a, b, c, a);
    return ric;
}

Frame frame_at(const AmbientModel& model, const AmbientPoint& p) {
    if (model.is_flat()) {
        check_point(model, p);
        return Frame{Mat4::Identity(), Mat4::Identity()};
    }
    return eh_frame_at(model, p);
}

Frame eh_frame_at(const AmbientModel& model, const AmbientPoint& p) {
    if (model.is_flat()) throw ChartDomain("eh_frame_at requires the Eguchi-Hanson model");
    check_point(model, p);
    Vec4 x = clamped(p);
    Frame f;
    f.coframe = (p.chart == Chart::eh_radial) ? coframe_radial(model, x) : coframe_bolt(model, x);
    f.vectors = f.coframe.inverse();
    return f;
}

ConnectionForms eh_connection_forms_at(const AmbientModel& model, const AmbientPoint& p) {
    if (model.is_flat() || p.chart != Chart::eh_radial)
        throw ChartDomain("connection forms are tabulated in the radial chart only");
    check_point(model, p);
    const double r = p.x[0];
    const double A = 1.0 - model.c / std::pow(r, 4);
    const double sA = std::sqrt(A);
    ConnectionForms cf;
    for (auto& row : cf.omega)
        for (auto& v : row) v.setZero();
    auto set = [&](int a, int b, int c, double v) {
        cf.omega[a][b][c] = v;
        cf.omega[b][a][c] = -v;
    };
    set(0, 1, 1, -sA / r);
    set(0, 2, 2, -sA / r);
    set(0, 3, 3, (sA - 2.0 / sA) / r);
    set(1, 2, 3, (2.0 / sA - sA) / r);
    set(1, 3, 2, -sA / r);
    set(2, 3, 1, sA / r);
    return cf;
}

CurvatureTensor eh_curvature_forms_at(const AmbientModel& model, const AmbientPoint& p) {
    if (model.is_flat()) throw ChartDomain("eh_curvature_forms_at requires the Eguchi-Hanson model");
    check_point(model, p);
    const double r = eh_radius(model, p);
    const double A = (p.chart == Chart::eh_radial) ? 1.0 - model.c / std::pow(r, 4) : std::pow(std::tanh(eh_u(model, p)), 2);
    const double P = (2.0 * A - 2.0) / (r * r);
    const double Q = (4.0 - 4.0 * A) / (r * r);
    // Omega[d][c] = curvature 2-form Omega^d_c in frame components
    std::array<std::array<Mat4, 4>, 4> Om;
    for (auto& row : Om)
        for (auto& m : row) m.setZero();
    auto set = [&](int d, int c, const Mat4& m) {
        Om[d][c] = m;
        Om[c][d] = -m;
    };
    Mat4 R01 = frame_two_form(P, 0, 0, 0, 0, -P);
    Mat4 R02 = frame_two_form(0, P, 0, 0, P, 0);
    Mat4 R03 = frame_two_form(0, 0, Q, -Q, 0, 0);
    set(0, 1, R01);
    set(0, 2, R02);
    set(0, 3, R03);
    set(2, 3, -R01);
    set(1, 3, R02);
    set(1, 2, -R03);
    CurvatureTensor R;
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
            for (int c = 0; c < 4; ++c)
                for (int d = 0; d < 4; ++d) R(a, b, c, d) = Om[d][c](a, b);
    return R;
}

HyperkahlerTriple hyperkahler_at(const AmbientModel& model, const AmbientPoint& p) {
    check_point(model, p);
    HyperkahlerTriple t;
    t.I = natural_I();
    t.J = natural_J();
    t.K = natural_K();
    t.omega[0] = frame_two_form(0, 0, 1, 1, 0, 0);
    t.omega[1] = frame_two_form(1, 0, 0, 0, 0, 1);
    t.omega[2] = frame_two_form(0, 1, 0, 0, -1, 0);
    if (model.is_flat())
        t.label_permutation = {0, 1, 2};
    else
        t.label_permutation = {2, 0, 1};
    return t;
}

std::array<Mat4, 3> complex_structures_coord(const AmbientModel& model, const AmbientPoint& p) {
    HyperkahlerTriple t = hyperkahler_at(model, p);
    Frame f = frame_at(model, p);
    const std::array<Mat4, 3> nat = {t.I, t.J, t.K};
    std::array<Mat4, 3> out;
    for (int a = 0; a < 3; ++a) out[a] = f.vectors * nat[t.label_permutation[a]] * f.coframe;
    return out;
}

std::array<Mat4, 3> kahler_forms_coord(const AmbientModel& model, const AmbientPoint& p) {
    HyperkahlerTriple t = hyperkahler_at(model, p);
    Frame f = frame_at(model, p);
    std::array<Mat4, 3> out;
    for (int a = 0; a < 3; ++a) out[a] = f.coframe.transpose() * t.omega[t.label_permutation[a]] * f.coframe;
    return out;
}

double eh_u(const AmbientModel& model, const AmbientPoint& p) {
    if (p.chart == Chart::eh_radial) return std::acosh(p.x[0] * p.x[0] / std::sqrt(model.c));
    if (p.chart == Chart::eh_bolt) return std::hypot(p.x[0], p.x[1]) / model.bolt_scale();
    throw ChartDomain("eh_u requires an Eguchi-Hanson chart");
}

double eh_fiber_distance(const AmbientModel& model, double u) {
    if (u <= 0.0) return 0.0;
    const int panels = std::max(1, static_cast<int>(std::ceil(u / 0.5)));
    const double h = u / panels;
    double total = 0.0;
    for (int k = 0; k < panels; ++k) {
        total += boost::math::quadrature::gauss<double, 20>::integrate(
            [](double t) { return std::sqrt(std::cosh(t)); }, k * h, (k + 1) * h);
    }
    return model.bolt_scale() * total;
}

AmbientPoint eh_bolt_transition(const AmbientModel& model, const AmbientPoint& p) {
    if (model.is_flat()) throw ChartDomain("bolt transition requires the Eguchi-Hanson model");
    check_point(model, p);
    const double a = model.bolt_scale();
    AmbientPoint q;
    if (p.chart == Chart::eh_radial) {
        const double u = eh_u(model, p);
        if (!(u > 0.0 && u < kBoltUMax)) throw ChartDomain("point outside the chart overlap");
        const double w = a * u;
        q.chart = Chart::eh_bolt;
        q.x = Vec4(w * std::cos(kKappaPsi * p.x[3]), w * std::sin(kKappaPsi * p.x[3]), p.x[1], p.x[2]);
        return q;
    }
    const double w = std::hypot(p.x[0], p.x[1]);
    if (!(w > 0.0)) throw ChartDomain("the bolt itself is outside the radial chart");
    const double u = w / a;
    double ps = std::atan2(p.x[1], p.x[0]) / kKappaPsi;
    if (ps < 0.0) ps += kTwoPi / kKappaPsi;
    q.chart = Chart::eh_radial;
    q.x = Vec4(std::sqrt(std::sqrt(model.c) * std::cosh(u)), p.x[2], p.x[3], ps);
    return q;
}

namespace {

template <class T>
std::array<T, 4> sphere_turn(Chart chart, const std::array<T, 4>& x, int dir) {
    using std::acos;
    using std::atan2;
    using std::cos;
    using std::sin;
    const bool bolt = chart == Chart::eh_bolt;
    const T th = bolt ? x[2] : x[1];
    const T ph = bolt ? x[3] : x[2];
    // M = Q Rz(ph) Ry(th), Q = Rx(dir pi/2)
    const T ct = cos(th), st = sin(th), cp = cos(ph), sp = sin(ph);
    T R[3][3] = {{cp * ct, -sp, cp * st}, {sp * ct, cp, sp * st}, {-st, T(0.0), ct}};
    const double s = dir > 0 ? 1.0 : -1.0;
    T M[3][3];
    for (int j = 0; j < 3; ++j) {
        M[0][j] = R[0][j];
        M[1][j] = -s * R[2][j];
        M[2][j] = s * R[1][j];
    }
    const T th2 = acos(M[2][2]);
    const T ph2 = atan2(M[1][2], M[0][2]);
    const T delta = atan2(M[2][1], -1.0 * M[2][0]);
    std::array<T, 4> y;
    if (bolt) {
        const T cd = cos(delta), sd = sin(delta);
        y = {cd * x[0] - sd * x[1], sd * x[0] + cd * x[1], th2, ph2};
    } else {
        y = {x[0], th2, ph2, x[3] + delta};
    }
    return y;
}

template <class T>
std::array<T, 6> embed(const AmbientModel& model, Chart chart, const std::array<T, 4>& x) {
    using std::acosh;
    using std::cos;
    using std::sin;
    using std::sqrt;
    const bool bolt = chart == Chart::eh_bolt;
    const T th = bolt ? x[2] : x[1];
    const T ph = bolt ? x[3] : x[2];
    T f1, f2;  // fiber vector components in the rotated (e_x, e_y) plane
    if (bolt) {
        f1 = x[0];
        f2 = x[1];
    } else {
        const T w = model.bolt_scale() * acosh(x[0] * x[0] / std::sqrt(model.c));
        f1 = w * cos(x[3]);
        f2 = w * sin(x[3]);
    }
    const T ct = cos(th), st = sin(th), cp = cos(ph), sp = sin(ph);
    // Rz(ph) Ry(th) applied to e_z and to (f1, f2, 0)
    return {cp * st, sp * st, ct, cp * ct * f1 - sp * f2, sp * ct * f1 + cp * f2, -st * f1};
}

}  // namespace

Vec6 eh_embed(const AmbientModel& model, const AmbientPoint& p) {
    if (model.is_flat()) throw ChartDomain("embedding requires the Eguchi-Hanson model");
    auto y = embed(model, p.chart, std::array<double, 4>{p.x[0], p.x[1], p.x[2], p.x[3]});
    Vec6 out;
    for (int i = 0; i < 6; ++i) out[i] = y[i];
    return out;
}

Mat64 eh_embed_jacobian(const AmbientModel& model, const AmbientPoint& p, bool turned) {
    if (model.is_flat()) throw ChartDomain("embedding requires the Eguchi-Hanson model");
    std::array<Dual4, 4> x;
    for (int k = 0; k < 4; ++k) x[k] = Dual4::variable(p.x[k], k);
    if (turned) x = sphere_turn(p.chart, x, -1);
    auto y = embed(model, p.chart, x);
    Mat64 J;
    for (int i = 0; i < 6; ++i)
        for (int k = 0; k < 4; ++k) J(i, k) = y[i].d[k];
    return J;
}

AmbientPoint eh_sphere_turn(const AmbientModel& model, const AmbientPoint& p, int dir) {
    if (model.is_flat()) throw ChartDomain("sphere turn requires the Eguchi-Hanson model");
    std::array<double, 4> x{p.x[0], p.x[1], p.x[2], p.x[3]};
    auto y = sphere_turn(p.chart, x, dir);
    AmbientPoint q{p.chart, Vec4(y[0], y[1], y[2], y[3])};
    const int pi = p.chart == Chart::eh_bolt ? 3 : 2;
    if (q.x[pi] < 0.0) q.x[pi] += kTwoPi;
    if (p.chart == Chart::eh_radial) q.x[3] = std::fmod(std::fmod(q.x[3], kTwoPi) + kTwoPi, kTwoPi);
    return q;
}

Mat4 eh_sphere_turn_jacobian(const AmbientModel& model, const AmbientPoint& p, int dir) {
    if (model.is_flat()) throw ChartDomain("sphere turn requires the Eguchi-Hanson model");
    std::array<Dual4, 4> x;
    for (int k = 0; k < 4; ++k) x[k] = Dual4::variable(p.x[k], k);
    auto y = sphere_turn(p.chart, x, dir);
    Mat4 J;
    for (int i = 0; i < 4; ++i)
        for (int k = 0; k < 4; ++k) J(i, k) = y[i].d[k];
    return J;
}

AmbientPoint to_chart(const AmbientModel& model, const AmbientPoint& p, Chart target) {
    if (p.chart == target) return p;
    return eh_bolt_transition(model, p);
}

Mat4 transition_jacobian(const AmbientModel& model, const AmbientPoint& p, Chart target) {
    if (p.chart == target) return Mat4::Identity();
    const double h = 1e-6;
    AmbientPoint base = to_chart(model, p, target);
    Mat4 J;
    for (int k = 0; k < 4; ++k) {
        AmbientPoint a = p, b = p;
        a.x[k] += h;
        b.x[k] -= h;
        Vec4 xa = unwrap_near(model, target, base.x, to_chart(model, a, target).x);
        Vec4 xb = unwrap_near(model, target, base.x, to_chart(model, b, target).x);
        J.col(k) = (xa - xb) / (2 * h);
    }
    return J;
}

Vec4 unwrap_near(const AmbientModel&, Chart chart, const Vec4& a, const Vec4& b) {
    Vec4 out = b;
    auto fix = [&](int i) { out[i] = a[i] + wrap_diff(b[i] - a[i]); };
    switch (chart) {
        case Chart::flat:
            for (int i = 0; i < 4; ++i) fix(i);
            break;
        case Chart::eh_radial:
            fix(2);
            fix(3);
            break;
        case Chart::eh_bolt:
            fix(3);
            break;
    }
    return out;
}

Mat4 fd_exterior_derivative_1form(const FormField1& f, const Vec4& x, double h) {
    std::array<Vec4, 4> d;
    for (int k = 0; k < 4; ++k) {
        Vec4 xp = x, xm = x;
        xp[k] += h;
        xm[k] -= h;
        d[k] = (f(xp) - f(xm)) / (2 * h);
    }
    Mat4 out;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) out(i, j) = d[i][j] - d[j][i];
    return out;
}

std::array<double, 4> fd_exterior_derivative_2form(const FormField2& f, const Vec4& x, double h) {
    std::array<Mat4, 4> d;
    for (int k = 0; k < 4; ++k) {
        Vec4 xp = x, xm = x;
        xp[k] += h;
        xm[k] -= h;
        d[k] = (f(xp) - f(xm)) / (2 * h);
    }
    const int idx[4][3] = {{0, 1, 2}, {0, 1, 3}, {0, 2, 3}, {1, 2, 3}};
    std::array<double, 4> out{};
    for (int n = 0; n < 4; ++n) {
        const int i = idx[n][0], j = idx[n][1], k = idx[n][2];
        out[n] = d[i](j, k) - d[j](i, k) + d[k](i, j);
    }
    return out;
}

bool AmbientReport::all_pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckEntry& e) { return e.pass; });
}

double extrapolated_bolt_curvature(const AmbientModel& model) {
    const double r0 = model.bolt_radius();
    std::array<double, 4> delta{}, val{};
    for (int k = 0; k < 4; ++k) {
        delta[k] = std::pow(10.0, -(k + 2));
        AmbientPoint p{Chart::eh_radial, Vec4(r0 * (1.0 + delta[k]), 1.0, 0.5, 0.25)};
        val[k] = eh_curvature_forms_at(model, p)(0, 1, 1, 0);
    }
    // Neville table at delta = 0
    std::array<double, 4> t = val;
    for (int m = 1; m < 4; ++m)
        for (int k = 3; k >= m; --k)
            t[k] = (delta[k - m] * t[k] - delta[k] * t[k - 1]) / (delta[k - m] - delta[k]);
    return t[3];
}

namespace {

std::vector<AmbientPoint> sample_points(const AmbientModel& model, int n, unsigned seed, double rmin_factor,
                                        double rmax_factor) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<AmbientPoint> pts;
    for (int i = 0; i < n; ++i) {
        AmbientPoint p;
        if (model.is_flat()) {
            p.chart = Chart::flat;
            for (int k = 0; k < 4; ++k) p.x[k] = kTwoPi * uni(rng);
        } else {
            const double r0 = model.bolt_radius();
            p.chart = Chart::eh_radial;
            p.x = Vec4(r0 * (rmin_factor + (rmax_factor - rmin_factor) * uni(rng)), 0.2 + 2.7 * uni(rng),
                       kTwoPi * uni(rng), kTwoPi * uni(rng));
        }
        pts.push_back(p);
    }
    return pts;
}

double structure_residual(const AmbientModel& model, const AmbientPoint& p, double h) {
    auto coframe = [&](const Vec4& x) { return eh_frame_at(model, AmbientPoint{Chart::eh_radial, x}).coframe; };
    Mat4 E = coframe(p.x);
    ConnectionForms cf = eh_connection_forms_at(model, p);
    double res = 0.0;
    for (int a = 0; a < 4; ++a) {
        Mat4 d = fd_exterior_derivative_1form([&](const Vec4& x) -> Vec4 { return coframe(x).row(a).transpose(); },
                                              p.x, h);
        for (int b = 0; b < 4; ++b) {
            Vec4 om = E.transpose() * cf.omega[a][b];
            d += wedge(om, E.row(b).transpose());
        }
        res = std::max(res, d.cwiseAbs().maxCoeff());
    }
    return res;
}

double curvature_form_residual(const AmbientModel& model, const AmbientPoint& p, double h) {
    auto conn = [&](const Vec4& x, int a, int b) -> Vec4 {
        AmbientPoint q{Chart::eh_radial, x};
        Mat4 E = eh_frame_at(model, q).coframe;
        return E.transpose() * eh_connection_forms_at(model, q).omega[a][b];
    };
    Frame f = eh_frame_at(model, p);
    CurvatureTensor Rf = eh_curvature_forms_at(model, p);
    double res = 0.0;
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
            Mat4 d = fd_exterior_derivative_1form([&](const Vec4& x) { return conn(x, a, b); }, p.x, h);
            for (int c = 0; c < 4; ++c) d += wedge(conn(p.x, a, c), conn(p.x, c, b));
            Mat4 expect;
            for (int i = 0; i < 4; ++i)
                for (int j = 0; j < 4; ++j) expect(i, j) = Rf(i, j, b, a);
            expect = f.coframe.transpose() * expect * f.coframe;
            res = std::max(res, (d - expect).cwiseAbs().maxCoeff());
        }
    return res;
}

double closedness_residual(const AmbientModel& model, const AmbientPoint& p, double h) {
    double res = 0.0;
    for (int a = 0; a < 3; ++a) {
        auto d = fd_exterior_derivative_2form(
            [&](const Vec4& x) { return kahler_forms_coord(model, AmbientPoint{p.chart, x})[a]; }, p.x, h);
        for (double v : d) res = std::max(res, std::abs(v));
    }
    return res;
}

double observed_order(double coarse, double fine) {
    if (coarse <= 0.0 || fine <= 0.0) return 99.0;
    return std::log2(coarse / fine);
}

}  // namespace

AmbientReport validate_ambient(const AmbientModel& model) {
    AmbientReport rep;
    auto add = [&](const std::string& name, double residual, double tol, bool pass) {
        rep.checks.push_back(CheckEntry{name, residual, tol, pass});
    };
    auto add_le = [&](const std::string& name, double residual, double tol) {
        add(name, residual, tol, residual <= tol);
    };
    auto pts = sample_points(model, 50, 12345u, 1.1, 3.0);

    double spd = 0.0, ortho = 0.0, quat = 0.0, compat = 0.0, chris = 0.0;
    for (const auto& p : pts) {
        Mat4 g = metric_at(model, p);
        Eigen::SelfAdjointEigenSolver<Mat4> es(g);
        spd = std::max(spd, std::max(0.0, -es.eigenvalues().minCoeff()));
        spd = std::max(spd, (g - g.transpose()).cwiseAbs().maxCoeff());
        Frame f = frame_at(model, p);
        ortho = std::max(ortho, (f.vectors.transpose() * g * f.vectors - Mat4::Identity()).cwiseAbs().maxCoeff());
        HyperkahlerTriple t = hyperkahler_at(model, p);
        const Mat4 Id = Mat4::Identity();
        quat = std::max({quat, (t.I * t.I + Id).cwiseAbs().maxCoeff(), (t.J * t.J + Id).cwiseAbs().maxCoeff(),
                         (t.K * t.K + Id).cwiseAbs().maxCoeff(), (t.I * t.J - t.K).cwiseAbs().maxCoeff()});
        const std::array<Mat4, 3> cs = {t.I, t.J, t.K};
        for (int a = 0; a < 3; ++a) compat = std::max(compat, (t.omega[a] - cs[a].transpose()).cwiseAbs().maxCoeff());
        Christoffel ca = christoffel_at(model, p), cn = christoffel_fd_at(model, p);
        for (int k = 0; k < 4; ++k) chris = std::max(chris, (ca.G[k] - cn.G[k]).cwiseAbs().maxCoeff());
    }
    add("metric_spd", spd, 0.0, spd == 0.0);
    add_le("frame_orthonormal", ortho, 1e-10);
    add_le("quaternion_relations", quat, 1e-12);
    add_le("kahler_compatibility", compat, 1e-12);
    add_le("christoffel_closed_form_vs_fd", chris, 1e-6);

    const double h = 1e-2;
    double closed_c = 0.0, closed_f = 0.0;
    for (int i = 0; i < 10; ++i) {
        closed_c = std::max(closed_c, closedness_residual(model, pts[i], h));
        closed_f = std::max(closed_f, closedness_residual(model, pts[i], h / 2));
    }
    add_le("kahler_forms_closed", closed_f, 1e-3);
    if (!model.is_flat()) {
        add("kahler_closed_order", observed_order(closed_c, closed_f), 1.9, observed_order(closed_c, closed_f) >= 1.9);
    }

    double ric = 0.0, riem = 0.0, bianchi = 0.0;
    for (int i = 0; i < 10; ++i) {
        const auto& p = pts[i];
        ric = std::max(ric, ricci_at(model, p).cwiseAbs().maxCoeff());
        CurvatureTensor R = riemann_at(model, p);
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b)
                for (int c = 0; c < 4; ++c)
                    for (int d = 0; d < 4; ++d)
                        bianchi = std::max(bianchi, std::abs(R(a, b, c, d) + R(b, c, a, d) + R(c, a, b, d)));
        if (!model.is_flat()) riem = std::max(riem, R.max_abs_diff(eh_curvature_forms_at(model, p)));
    }
    add_le("ricci_flat", ric, 1e-6);
    add_le("first_bianchi", bianchi, 1e-9);

    if (!model.is_flat()) {
        add_le("curvature_numeric_vs_closed_form", riem, 1e-6);
        double sc = 0.0, sf = 0.0, cc = 0.0, cfine = 0.0;
        for (int i = 0; i < 10; ++i) {
            sc = std::max(sc, structure_residual(model, pts[i], h));
            sf = std::max(sf, structure_residual(model, pts[i], h / 2));
            cc = std::max(cc, curvature_form_residual(model, pts[i], h));
            cfine = std::max(cfine, curvature_form_residual(model, pts[i], h / 2));
        }
        add("structure_equation_order", observed_order(sc, sf), 1.9, observed_order(sc, sf) >= 1.9);
        add("curvature_forms_order", observed_order(cc, cfine), 1.9, observed_order(cc, cfine) >= 1.9);
        const double bolt = extrapolated_bolt_curvature(model);
        add_le("bolt_curvature_extrapolated", std::abs(bolt + 2.0 / std::sqrt(model.c)), 1e-4);
        double trip = 0.0;
        for (double u : {0.05, 0.3, 1.0, 2.0}) {
            AmbientPoint p{Chart::eh_radial,
                           Vec4(std::sqrt(std::sqrt(model.c) * std::cosh(u)), 1.1, 2.0, 0.7 + u)};
            AmbientPoint back = eh_bolt_transition(model, eh_bolt_transition(model, p));
            trip = std::max(trip, (back.x - p.x).cwiseAbs().maxCoeff());
        }
        add_le("chart_round_trip", trip, 1e-12);
    }
    return rep;
}

}  // namespace hkflow
