#pragma once

#include "hkflow/surface.hpp"

#include <array>
#include <stdexcept>
#include <vector>

namespace hkflow {

class NotCritical : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NotSpecial : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class OutsideTube : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Largest bolt-chart u accepted by the tubular diagnostics.
constexpr double kTubeUMax = kBoltUMax;

struct EnergyValue {
    double energy = 0.0;        // quadrature of lambda^2 rho
    double from_moments = 0.0;  // sum_a |N_a|^2 in L2(rho)
};

EnergyValue energy(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm);
double volume(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm);

struct VariationField {
    std::vector<Vec4> V;  // chart components at each node
    std::vector<bool> mask;

    VariationField() = default;
    explicit VariationField(std::vector<Vec4> v);
};

// Points moved by s V in chart coordinates.
Immersion displaced(const Immersion& imm, const VariationField& V, double s);

struct FirstVariation {
    double analytic = 0.0, fd = 0.0, rel_err = 0.0, eps = 0.0;
};

FirstVariation first_variation(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm,
                               const VariationField& V);

struct SecondVariation {
    double analytic = 0.0, fd = 0.0, eps = 0.0;
};

// Valid only at critical points; throws NotCritical when the velocity sup-norm is at least crit_tol.
SecondVariation second_variation_critical(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm,
                                          const VariationField& V, double crit_tol = 1e-6);

// Orthonormal-frame helpers on top of NodeGeometry.
// tangent[i] = sum_k C(i, k) X[k]
Mat2 tangent_coefficients(const NodeGeometry& ng);
// h[alpha](e_i, e_j) with e the orthonormal tangents.
std::array<Mat2, 2> orthonormal_second_form(const NodeGeometry& ng);
// R(a, b, c, d) with R_abcd = g(R(e_a, e_b) e_c, e_d) contracted with coordinate vectors.
double curvature_eval(const CurvatureTensor& R, const Vec4& a, const Vec4& b, const Vec4& c, const Vec4& d);

// Closed-form curvature at a point, taking coordinate vectors. Zero in the flat model.
class PointCurvature {
public:
    PointCurvature(const AmbientModel& model, const AmbientPoint& p);
    double operator()(const Vec4& a, const Vec4& b, const Vec4& c, const Vec4& d) const;

private:
    bool flat_;
    CurvatureTensor frame_R_;
    Mat4 coframe_;
};

struct StabilityForm {
    std::vector<Mat2> M;
    std::vector<double> min_eigenvalue;
    double global_min = 0.0;
};

StabilityForm stability_form(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm);
Mat2 stability_matrix(const AmbientModel& model, const AmbientPoint& p, const NodeGeometry& ng);

// Gauss curvature of the induced metric through the Gauss equation: sectional curvature of the tangent
// plane plus the determinant terms of the second fundamental form.
std::vector<double> gauss_curvature(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm);

struct AdaptedFrameResidual {
    std::vector<double> matrices;         // deviation of the Kähler matrices in the frame (e_i, K e_i)
    std::vector<double> lambda_gradient;  // |e_k(lambda) + lambda^2 eta_1 H_k|
    double max_matrices = 0.0, max_lambda_gradient = 0.0;
};

// Kähler form matrices expected in the adapted frame of a special state.
std::array<Mat4, 3> adapted_frame_matrices(double eta1);

AdaptedFrameResidual adapted_frame_residual(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm,
                                            double defect_tol = 1e-6);

struct SpecialDefects {
    double max_eta3 = 0.0;
    double max_eta2_defect = 0.0;
};

SpecialDefects special_defects(const std::vector<NodeGeometry>& geo);

struct TubularDiagnostics {
    std::vector<double> psi;
    std::vector<std::array<double, 2>> cos_theta;
    std::vector<double> s;
    std::vector<double> star_omega;
    std::vector<double> II_dist;

    double psi_max() const;
    double s_max() const;
    double star_omega_min() const;
    double II_dist_max() const;
};

// Squared normal-geodesic distance to the zero section.
double tube_psi(const AmbientModel& model, const AmbientPoint& p);
// The same squared distance by integrating the geodesic equation outward from the foot point (slow oracle).
double tube_distance_by_shooting(const AmbientModel& model, const AmbientPoint& p, int steps = 400);
// Transported area form of the zero section, oriented so that it is positive on the zero section.
double transported_area_form(const AmbientModel& model, const AmbientPoint& p, const Vec4& a, const Vec4& b);

struct PlaneAngles {
    std::array<double, 2> cos_theta{};
    double s = 0.0;
    double star_omega = 0.0;
};

// Angles between the 2-plane spanned by the orthonormal pair (a, b) and the horizontal plane at p.
PlaneAngles plane_angles(const AmbientModel& model, const AmbientPoint& p, const Vec4& a, const Vec4& b);

TubularDiagnostics tubular_diagnostics(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm);
TubularDiagnostics tubular_diagnostics(const AmbientModel& model, const Immersion& imm,
                                       const std::vector<NodeGeometry>& geo);

struct HessianPsiCheck {
    double lhs = 0.0;
    double denominator = 0.0;
    double ratio = 0.0;
};

// Trace of Hess(psi) over the plane spanned by L (coordinate vectors at q, orthonormalized internally).
HessianPsiCheck hessian_psi_check(const AmbientModel& model, const AmbientPoint& q, const std::array<Vec4, 2>& L);

struct HessianPsiSampling {
    int samples = 0;
    double min_ratio = 0.0;
    double max_u = 0.0;
};

// Random points with u < u_max and random oriented planes with nonnegative transported area form.
HessianPsiSampling sample_hessian_psi(const AmbientModel& model, int samples, double u_max, unsigned seed);

}  // namespace hkflow
