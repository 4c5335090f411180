#pragma once

#include <Eigen/Dense>

#include <array>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hkflow {

using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;
using Mat2 = Eigen::Matrix2d;
using Vec2 = Eigen::Vector2d;

class ChartDomain : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Chart { flat, eh_radial, eh_bolt };

const char* chart_name(Chart chart);

// flat: torus coordinates; eh_radial: (r, theta, phi, psi); eh_bolt: (v1, v2, theta, phi).
struct AmbientPoint {
    Chart chart = Chart::flat;
    Vec4 x = Vec4::Zero();
};

enum class ModelKind { flat_torus, eguchi_hanson };

struct AmbientModel {
    ModelKind kind = ModelKind::flat_torus;
    double c = 1.0;
    double fd_step = 1e-4;

    static AmbientModel flat(double fd_step = 1e-4);
    static AmbientModel eguchi_hanson(double c, double fd_step = 1e-4);

    bool is_flat() const { return kind == ModelKind::flat_torus; }
    // Fourth root of c: the radius at which the fiber circle collapses.
    double bolt_radius() const;
    // Scale relating the bolt-chart modulus |v| to the substitution variable u.
    double bolt_scale() const;
};

constexpr double kThetaMin = 1e-6;
constexpr double kBoltUMax = 3.0;
// Fiber angle multiplier of the bolt chart, fixed by the cone-angle test.
constexpr double kKappaPsi = 1.0;

struct Christoffel {
    // G[k](i, j) = Gamma^k_ij
    std::array<Mat4, 4> G;
    double operator()(int k, int i, int j) const { return G[k](i, j); }
    Vec4 contract(const Vec4& a, const Vec4& b) const;
};

struct CurvatureTensor {
    std::array<double, 256> R{};
    double& operator()(int a, int b, int c, int d) { return R[((a * 4 + b) * 4 + c) * 4 + d]; }
    double operator()(int a, int b, int c, int d) const { return R[((a * 4 + b) * 4 + c) * 4 + d]; }
    double max_abs() const;
    double max_abs_diff(const CurvatureTensor& o) const;
};

struct Frame {
    Mat4 vectors;  // column a = e_a in coordinate components
    Mat4 coframe;  // row a = omega^a in coordinate components
};

struct ConnectionForms {
    // omega[a][b](c) = omega^a_b(e_c)
    std::array<std::array<Vec4, 4>, 4> omega;
};

struct HyperkahlerTriple {
    Mat4 I, J, K;                   // frame components
    std::array<Mat4, 3> omega;      // omega_I, omega_J, omega_K in frame components
    std::array<int, 3> label_permutation;  // flow role a+1 is played by natural label label_permutation[a]
};

void check_point(const AmbientModel& model, const AmbientPoint& p);

Mat4 metric_at(const AmbientModel& model, const AmbientPoint& p);
// Metric and its coordinate partial derivatives dg[k] = d_k g, from closed forms.
Mat4 metric_with_derivatives(const AmbientModel& model, const AmbientPoint& p, std::array<Mat4, 4>& dg);

Christoffel christoffel_from_metric(const Mat4& g, const std::array<Mat4, 4>& dg);
// R_ijkl = g(R(d_i, d_j) d_k, d_l) from a Christoffel field, fourth-order differences of step h.
CurvatureTensor riemann_from_christoffel(const std::function<Christoffel(const Vec4&)>& gamma, const Mat4& g,
                                         const Vec4& x, double h);

Christoffel christoffel_at(const AmbientModel& model, const AmbientPoint& p);
Christoffel christoffel_fd_at(const AmbientModel& model, const AmbientPoint& p);

CurvatureTensor riemann_coord_at(const AmbientModel& model, const AmbientPoint& p);
CurvatureTensor riemann_at(const AmbientModel& model, const AmbientPoint& p);
Mat4 ricci_at(const AmbientModel& model, const AmbientPoint& p);

Frame frame_at(const AmbientModel& model, const AmbientPoint& p);
Frame eh_frame_at(const AmbientModel& model, const AmbientPoint& p);
ConnectionForms eh_connection_forms_at(const AmbientModel& model, const AmbientPoint& p);
CurvatureTensor eh_curvature_forms_at(const AmbientModel& model, const AmbientPoint& p);
// Frame tensor re-expressed in coordinate components.
CurvatureTensor frame_to_coord(const CurvatureTensor& Rf, const Frame& f);

HyperkahlerTriple hyperkahler_at(const AmbientModel& model, const AmbientPoint& p);
// Complex structures (flow roles 1..3) and Kähler forms in coordinate components.
std::array<Mat4, 3> complex_structures_coord(const AmbientModel& model, const AmbientPoint& p);
std::array<Mat4, 3> kahler_forms_coord(const AmbientModel& model, const AmbientPoint& p);

AmbientPoint eh_bolt_transition(const AmbientModel& model, const AmbientPoint& p);
AmbientPoint to_chart(const AmbientModel& model, const AmbientPoint& p, Chart target);
// Jacobian d(target coords)/d(source coords) of a chart change at p.
Mat4 transition_jacobian(const AmbientModel& model, const AmbientPoint& p, Chart target);

// Left action of the quarter turn about the x axis on the Euler angles (dir = +1) or its inverse (dir = -1).
// An isometry preserving all three Kähler forms; moves the poles of the bolt sphere onto its equator.
AmbientPoint eh_sphere_turn(const AmbientModel& model, const AmbientPoint& p, int dir);
// d(turned coords)/d(coords) at p.
Mat4 eh_sphere_turn_jacobian(const AmbientModel& model, const AmbientPoint& p, int dir);

// Global embedding of Eguchi-Hanson as the tangent bundle of the sphere: (base point n, fiber vector t)
// with |t| = bolt_scale * u. Smooth on the bolt and across the poles of the coordinate charts.
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat64 = Eigen::Matrix<double, 6, 4>;
Vec6 eh_embed(const AmbientModel& model, const AmbientPoint& p);
// Derivative of the embedding with respect to the coordinates of p; with turned = true the coordinates
// of p are read as turned coordinates (the embedding is composed with the inverse turn).
Mat64 eh_embed_jacobian(const AmbientModel& model, const AmbientPoint& p, bool turned);

// Substitution variable u with cosh u = r^2/sqrt(c); 0 on the bolt.
double eh_u(const AmbientModel& model, const AmbientPoint& p);
// Geodesic distance to the bolt along the fiber, integral of A^{-1/2} dr.
double eh_fiber_distance(const AmbientModel& model, double u);

// Wrap periodic coordinates of b so they lie within pi of a.
Vec4 unwrap_near(const AmbientModel& model, Chart chart, const Vec4& a, const Vec4& b);

// Central-difference exterior derivatives with step h (second order).
using FormField1 = std::function<Vec4(const Vec4&)>;
using FormField2 = std::function<Mat4(const Vec4&)>;
Mat4 fd_exterior_derivative_1form(const FormField1& f, const Vec4& x, double h);
std::array<double, 4> fd_exterior_derivative_2form(const FormField2& f, const Vec4& x, double h);

struct CheckEntry {
    std::string name;
    double residual = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

struct AmbientReport {
    std::vector<CheckEntry> checks;
    bool all_pass() const;
};

AmbientReport validate_ambient(const AmbientModel& model);

// Value of R_0110 at the bolt, Richardson-extrapolated from r = r0 (1 + 10^-k), k = 2..5.
double extrapolated_bolt_curvature(const AmbientModel& model);

}  // namespace hkflow
