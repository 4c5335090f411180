#pragma once

#include "hkflow/ambient.hpp"

#include <array>
#include <stdexcept>
#include <vector>

namespace hkflow {

class BadDimensions : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class DegenerateImmersion : public std::runtime_error {
public:
    DegenerateImmersion(const std::string& what, std::size_t node) : std::runtime_error(what), node(node) {}
    std::size_t node;
};

enum class Topology { torus_periodic, sphere_latlong };

struct RhoSpec {
    enum class Kind { uniform, from_initial_pullback };
    Kind kind = Kind::uniform;
    double value = 1.0;
    static RhoSpec uniform(double v) { return RhoSpec{Kind::uniform, v}; }
    static RhoSpec from_initial_pullback() { return RhoSpec{Kind::from_initial_pullback, 0.0}; }
};

// Node (i, j): i runs along x1, j along x2. Sphere grids use x1 = phi and x2 = pi - theta,
// with rings staggered off the poles; stencils crossing a pole continue through the ring
// opposite in longitude.
struct ParamGrid {
    Topology topology = Topology::torus_periodic;
    int n1 = 0, n2 = 0;
    double dx1 = 0.0, dx2 = 0.0;
    std::vector<double> rho;
    int stencil_order = 2;

    std::size_t size() const { return static_cast<std::size_t>(n1) * n2; }
    std::size_t index(int i, int j) const { return static_cast<std::size_t>(j) * n1 + i; }
    int i_of(std::size_t n) const { return static_cast<int>(n % n1); }
    int j_of(std::size_t n) const { return static_cast<int>(n / n1); }
    double x1(int i) const;
    double x2(int j) const;
    // Quadrature weight of a node.
    double weight(std::size_t n) const;
    bool rho_ready() const { return rho.size() == size(); }
};

ParamGrid build_grid(Topology topology, int n1, int n2, RhoSpec rho_spec);

struct Immersion {
    std::vector<AmbientPoint> points;
    double time = 0.0;
};

// Location of the (i + di, j + dj) stencil point; flip = which pole was crossed (0 none, 1 x2 < 0, 2 x2 > pi).
struct StencilRef {
    std::size_t node;
    int flip;
};
StencilRef stencil_ref(const ParamGrid& grid, int i, int j, int di, int dj);

// Coordinates of a stencil point expressed in `chart` near `ref`, with the pole continuation applied.
Vec4 stencil_coords(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm, int i, int j, int di,
                    int dj, Chart chart, const Vec4& ref);
// Ambient vector field value at a stencil point, expressed in `chart` coordinates.
Vec4 stencil_vector(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm,
                    const std::vector<Vec4>& field, int i, int j, int di, int dj, Chart chart);

enum class NormalRule { ambient_projection, adapted };

struct FirstOrder {
    std::array<Vec4, 2> X;  // f_* d_i in coordinates
    Mat2 g;
    double dmu = 0.0;
    double lambda = 0.0;
    std::array<double, 3> pull{};  // f^* omega_a (d_1, d_2)
};

struct NodeGeometry {
    Mat2 g, g_inv;
    double dmu = 0.0;
    double lambda = 0.0;
    std::array<Vec4, 2> X;
    std::array<Vec4, 2> tangent;
    std::array<Vec4, 2> normal;
    std::array<Mat2, 2> h;  // h[alpha](i, j) in coordinate tangent indices
    Vec2 H = Vec2::Zero();
    Vec4 Hvec = Vec4::Zero();
    std::array<double, 3> eta{};
    std::array<double, 3> N{};
    Vec2 dlambda = Vec2::Zero();
    Vec4 grad_lambda = Vec4::Zero();
    double normA2 = 0.0;
    Mat4 gbar;
    std::array<Vec4, 3> hess;  // nabla_{d_i} d_j for (11, 12, 22), coordinate components
};

FirstOrder first_order(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm, std::size_t node);
std::vector<FirstOrder> first_order_all(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm);

NodeGeometry node_geometry(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm, std::size_t node,
                           NormalRule rule = NormalRule::ambient_projection);
std::vector<NodeGeometry> surface_geometry(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm,
                                           NormalRule rule = NormalRule::ambient_projection);

// Parameter derivatives (d_1 s, d_2 s) of a node scalar field with the grid stencil.
Vec2 scalar_gradient(const ParamGrid& grid, const std::vector<double>& s, std::size_t node);
// Same for a tensor component that changes sign under x2 -> -x2 (odd = true) when a stencil crosses a pole.
Vec2 scalar_gradient(const ParamGrid& grid, const std::vector<double>& s, std::size_t node, bool odd);
// Parameter derivatives of a node vector field (chart components), expressed in the chart of `node`.
std::array<Vec4, 2> vector_gradient(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm,
                                    const std::vector<Vec4>& field, std::size_t node);

struct HamiltonianData {
    std::vector<std::array<double, 3>> N;
    std::vector<std::array<Vec2, 3>> xi;
};

HamiltonianData hamiltonian_fields(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm);

std::vector<Vec4> velocity_gradient_form(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm);
std::vector<Vec4> velocity_gradient_form(const std::vector<NodeGeometry>& geo);
std::vector<Vec4> velocity_moment_form(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm);

// Node-parallel loop; the worker count is capped by set_num_threads.
void set_num_threads(int n);
int num_threads();
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace hkflow
