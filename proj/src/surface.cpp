#include "hkflow/surface.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

namespace hkflow {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kEpsDet = 1e-12;

int g_threads = 1;

struct Weights {
    std::vector<int> off;
    std::vector<double> w;
};

Weights first_weights(int order) {
    if (order == 4) return {{-2, -1, 1, 2}, {1.0 / 12, -8.0 / 12, 8.0 / 12, -1.0 / 12}};
    return {{-1, 1}, {-0.5, 0.5}};
}

Weights second_weights(int order) {
    if (order == 4) return {{-2, -1, 0, 1, 2}, {-1.0 / 12, 16.0 / 12, -30.0 / 12, 16.0 / 12, -1.0 / 12}};
    return {{-1, 0, 1}, {1.0, -2.0, 1.0}};
}

// Denominators of the difference quotients. Stencils on sphere grids are normalized to be exact on
// cos and sin of either angle; in longitude the 1/sin^2 factor near the poles would otherwise cost an order.
double first_scale(const ParamGrid& grid, int axis) {
    const double d = axis == 0 ? grid.dx1 : grid.dx2;
    if (grid.topology != Topology::sphere_latlong) return d;
    Weights W = first_weights(grid.stencil_order);
    double s = 0.0;
    for (std::size_t k = 0; k < W.off.size(); ++k) s += W.w[k] * std::sin(W.off[k] * d);
    return s;
}

double second_scale(const ParamGrid& grid, int axis) {
    const double d = axis == 0 ? grid.dx1 : grid.dx2;
    if (grid.topology != Topology::sphere_latlong) return d * d;
    Weights W = second_weights(grid.stencil_order);
    double s = 0.0;
    for (std::size_t k = 0; k < W.off.size(); ++k) s -= W.w[k] * std::cos(W.off[k] * d);
    return s;
}

AmbientPoint pole_continuation(const AmbientPoint& p, int flip) {
    if (flip == 0) return p;
    AmbientPoint q = p;
    auto theta = [&](double th) { return flip == 1 ? 2 * kPi - th : -th; };
    switch (p.chart) {
        case Chart::flat: break;
        case Chart::eh_radial:
            q.x[1] = theta(p.x[1]);
            q.x[2] = p.x[2] + kPi;
            q.x[3] = p.x[3] + kPi;
            break;
        case Chart::eh_bolt:
            q.x[0] = -p.x[0];
            q.x[1] = -p.x[1];
            q.x[2] = theta(p.x[2]);
            q.x[3] = p.x[3] + kPi;
            break;
    }
    return q;
}

Vec4 pole_vector(Chart chart, const Vec4& v, int flip) {
    if (flip == 0) return v;
    Vec4 out = v;
    if (chart == Chart::eh_radial) out[1] = -v[1];
    if (chart == Chart::eh_bolt) {
        out[0] = -v[0];
        out[1] = -v[1];
        out[2] = -v[2];
    }
    return out;
}

Vec4 ip_normalize(const Mat4& g, const Vec4& v) { return v / std::sqrt(v.dot(g * v)); }

// Lat-long charts degenerate at the poles of the bolt sphere; nodes near them are handled after an isometry.
bool needs_turn(const AmbientModel& model, const AmbientPoint& p) {
    if (model.is_flat()) return false;
    const double th = p.chart == Chart::eh_bolt ? p.x[2] : p.x[1];
    return std::abs(std::cos(th)) > std::sqrt(0.5);
}

// Coordinates of every stencil point needed at (i, j), cached by offset. The turned copy is
// only used for second derivatives.
struct Patch {
    const AmbientModel& model;
    const ParamGrid& grid;
    const Immersion& imm;
    int i, j;
    Chart chart;
    Vec4 ref;
    bool turn;
    AmbientPoint turned;
    std::array<std::array<Vec4, 25>, 2> cache;
    std::array<std::array<bool, 25>, 2> have{};

    Patch(const AmbientModel& m, const ParamGrid& gr, const Immersion& im, std::size_t node)
        : model(m), grid(gr), imm(im), i(gr.i_of(node)), j(gr.j_of(node)), chart(im.points[node].chart),
          ref(im.points[node].x), turn(needs_turn(m, im.points[node])), turned(im.points[node]) {
        if (turn) turned = eh_sphere_turn(m, turned, 1);
    }

    const Vec4& at(int di, int dj, int t) {
        const int k = (di + 2) * 5 + (dj + 2);
        if (!have[t][k]) {
            Vec4 x = stencil_coords(model, grid, imm, i, j, di, dj, chart, ref);
            if (t) x = unwrap_near(model, chart, turned.x, eh_sphere_turn(model, AmbientPoint{chart, x}, 1).x);
            cache[t][k] = x;
            have[t][k] = true;
        }
        return cache[t][k];
    }

    Vec4 d1(int axis, int t = 0) {
        Weights W = first_weights(grid.stencil_order);
        Vec4 s = Vec4::Zero();
        for (std::size_t k = 0; k < W.off.size(); ++k)
            s += W.w[k] * (axis == 0 ? at(W.off[k], 0, t) : at(0, W.off[k], t));
        return s / first_scale(grid, axis);
    }

    Vec4 d2(int a, int b, int t = 0) {
        if (a != b) {
            Weights W = first_weights(grid.stencil_order);
            Vec4 s = Vec4::Zero();
            for (std::size_t k = 0; k < W.off.size(); ++k)
                for (std::size_t l = 0; l < W.off.size(); ++l) s += W.w[k] * W.w[l] * at(W.off[k], W.off[l], t);
            return s / (first_scale(grid, 0) * first_scale(grid, 1));
        }
        Weights W = second_weights(grid.stencil_order);
        Vec4 s = Vec4::Zero();
        for (std::size_t k = 0; k < W.off.size(); ++k) s += W.w[k] * (a == 0 ? at(W.off[k], 0, t) : at(0, W.off[k], t));
        return s / second_scale(grid, a);
    }

    // nabla_{d_i} d_j for (11, 12, 22) in stored-chart components.
    std::array<Vec4, 3> hessian(const std::array<Vec4, 2>& X) {
        std::array<Vec4, 3> out;
        if (!turn) {
            Christoffel G = christoffel_at(model, imm.points[index()]);
            out[0] = d2(0, 0) + G.contract(X[0], X[0]);
            out[1] = d2(0, 1) + G.contract(X[0], X[1]);
            out[2] = d2(1, 1) + G.contract(X[1], X[1]);
            return out;
        }
        const Vec4 Y[2] = {d1(0, 1), d1(1, 1)};
        Christoffel G = christoffel_at(model, turned);
        const Mat4 B = eh_sphere_turn_jacobian(model, turned, -1);
        out[0] = B * (d2(0, 0, 1) + G.contract(Y[0], Y[0]));
        out[1] = B * (d2(0, 1, 1) + G.contract(Y[0], Y[1]));
        out[2] = B * (d2(1, 1, 1) + G.contract(Y[1], Y[1]));
        return out;
    }

    std::size_t index() const { return grid.index(i, j); }

    // f_* d_axis in stored-chart components. Eguchi-Hanson nodes difference the global embedding,
    // then solve for coordinate components in the working chart.
    Vec4 tangent(int axis) {
        if (model.is_flat()) return d1(axis);
        Weights W = first_weights(grid.stencil_order);
        Vec6 s = Vec6::Zero();
        for (std::size_t k = 0; k < W.off.size(); ++k) {
            StencilRef r = axis == 0 ? stencil_ref(grid, i, j, W.off[k], 0) : stencil_ref(grid, i, j, 0, W.off[k]);
            s += W.w[k] * eh_embed(model, imm.points[r.node]);
        }
        s /= first_scale(grid, axis);
        const Mat64 D = eh_embed_jacobian(model, turned, turn);
        Vec4 x = D.colPivHouseholderQr().solve(s);
        return turn ? Vec4(eh_sphere_turn_jacobian(model, turned, -1) * x) : x;
    }
};

FirstOrder first_order_impl(const ParamGrid& grid, std::size_t node, Patch& patch, const Mat4& gbar,
                            const std::array<Mat4, 3>& omega) {
    FirstOrder fo;
    fo.X[0] = patch.tangent(0);
    fo.X[1] = patch.tangent(1);
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) fo.g(a, b) = fo.X[a].dot(gbar * fo.X[b]);
    const double det = fo.g.determinant();
    if (!(det > kEpsDet)) throw DegenerateImmersion("induced metric degenerate", node);
    fo.dmu = std::sqrt(det);
    fo.lambda = grid.rho_ready() ? fo.dmu / grid.rho[node] : 0.0;
    for (int a = 0; a < 3; ++a) fo.pull[a] = fo.X[0].dot(omega[a] * fo.X[1]);
    return fo;
}

NodeGeometry full_geometry(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm, std::size_t node,
                           NormalRule rule, const std::function<Vec2(std::size_t)>& dlambda_of) {
    Patch patch(model, grid, imm, node);
    const AmbientPoint& p = imm.points[node];
    NodeGeometry ng;
    ng.gbar = metric_at(model, p);
    const auto omega = kahler_forms_coord(model, p);
    FirstOrder fo = first_order_impl(grid, node, patch, ng.gbar, omega);
    const Mat4& G = ng.gbar;
    ng.X = fo.X;
    ng.g = fo.g;
    ng.g_inv = fo.g.inverse();
    ng.dmu = fo.dmu;
    ng.lambda = fo.lambda;
    for (int a = 0; a < 3; ++a) {
        ng.eta[a] = fo.pull[a] / fo.dmu;
        ng.N[a] = grid.rho_ready() ? fo.pull[a] / grid.rho[node] : 0.0;
    }

    ng.hess = patch.hessian(fo.X);

    ng.tangent[0] = ip_normalize(G, fo.X[0]);
    ng.tangent[1] = ip_normalize(G, fo.X[1] - fo.X[1].dot(G * ng.tangent[0]) * ng.tangent[0]);
    auto project_out = [&](Vec4 v, int upto) {
        for (int k = 0; k < 2; ++k) v -= v.dot(G * ng.tangent[k]) * ng.tangent[k];
        for (int k = 0; k < upto; ++k) v -= v.dot(G * ng.normal[k]) * ng.normal[k];
        return v;
    };
    if (rule == NormalRule::adapted) {
        const Mat4 K = complex_structures_coord(model, p)[2];
        ng.normal[0] = ip_normalize(G, project_out(K * fo.X[0], 0));
        ng.normal[1] = ip_normalize(G, project_out(K * fo.X[1], 1));
    } else {
        const Frame fr = frame_at(model, p);
        for (int k = 0; k < 2; ++k) {
            double best = -1.0;
            Vec4 pick;
            for (int a = 0; a < 4; ++a) {
                Vec4 v = project_out(fr.vectors.col(a), k);
                double n2 = v.dot(G * v);
                if (n2 > best + 1e-12) {
                    best = n2;
                    pick = v;
                }
            }
            ng.normal[k] = ip_normalize(G, pick);
        }
        Mat4 B;
        B << fr.coframe * ng.tangent[0], fr.coframe * ng.tangent[1], fr.coframe * ng.normal[0],
            fr.coframe * ng.normal[1];
        if (B.determinant() < 0) ng.normal[1] = -ng.normal[1];
    }

    ng.normA2 = 0.0;
    for (int al = 0; al < 2; ++al) {
        const Vec4 Gn = G * ng.normal[al];
        ng.h[al] << Gn.dot(ng.hess[0]), Gn.dot(ng.hess[1]), Gn.dot(ng.hess[1]), Gn.dot(ng.hess[2]);
        ng.H[al] = (ng.g_inv.cwiseProduct(ng.h[al])).sum();
        Mat2 m = ng.g_inv * ng.h[al];
        ng.normA2 += (m * m).trace();
    }
    ng.Hvec = ng.H[0] * ng.normal[0] + ng.H[1] * ng.normal[1];

    ng.dlambda = dlambda_of(node);
    Vec2 up = ng.g_inv * ng.dlambda;
    ng.grad_lambda = up[0] * fo.X[0] + up[1] * fo.X[1];
    return ng;
}

}  // namespace

double ParamGrid::x1(int i) const { return i * dx1; }

double ParamGrid::x2(int j) const { return topology == Topology::sphere_latlong ? (j + 0.5) * dx2 : j * dx2; }

double ParamGrid::weight(std::size_t) const {
    if (topology == Topology::sphere_latlong) return dx1 * 2.0 * std::sin(0.5 * dx2);
    return dx1 * dx2;
}

ParamGrid build_grid(Topology topology, int n1, int n2, RhoSpec rho_spec) {
    if (n1 < 8 || n2 < 8) throw BadDimensions("grid needs at least 8 nodes per direction");
    if (topology == Topology::sphere_latlong && n1 % 2 != 0)
        throw BadDimensions("sphere grids need an even number of longitudes");
    ParamGrid g;
    g.topology = topology;
    g.n1 = n1;
    g.n2 = n2;
    g.dx1 = 2 * kPi / n1;
    g.dx2 = (topology == Topology::sphere_latlong ? kPi : 2 * kPi) / n2;
    if (rho_spec.kind == RhoSpec::Kind::uniform) {
        if (!(rho_spec.value > 0.0)) throw BadDimensions("rho must be positive");
        g.rho.assign(g.size(), rho_spec.value);
    }
    return g;
}

StencilRef stencil_ref(const ParamGrid& grid, int i, int j, int di, int dj) {
    int ii = ((i + di) % grid.n1 + grid.n1) % grid.n1;
    int jj = j + dj;
    int flip = 0;
    if (grid.topology == Topology::torus_periodic) {
        jj = ((jj % grid.n2) + grid.n2) % grid.n2;
    } else if (jj < 0) {
        jj = -1 - jj;
        ii = (ii + grid.n1 / 2) % grid.n1;
        flip = 1;
    } else if (jj >= grid.n2) {
        jj = 2 * grid.n2 - 1 - jj;
        ii = (ii + grid.n1 / 2) % grid.n1;
        flip = 2;
    }
    return StencilRef{grid.index(ii, jj), flip};
}

Vec4 stencil_coords(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm, int i, int j, int di,
                    int dj, Chart chart, const Vec4& ref) {
    StencilRef s = stencil_ref(grid, i, j, di, dj);
    AmbientPoint p = to_chart(model, imm.points[s.node], chart);
    p = pole_continuation(p, s.flip);
    return unwrap_near(model, chart, ref, p.x);
}

Vec4 stencil_vector(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm,
                    const std::vector<Vec4>& field, int i, int j, int di, int dj, Chart chart) {
    StencilRef s = stencil_ref(grid, i, j, di, dj);
    const AmbientPoint& p = imm.points[s.node];
    Vec4 v = field[s.node];
    if (p.chart != chart) v = transition_jacobian(model, p, chart) * v;
    return pole_vector(chart, v, s.flip);
}

Vec2 scalar_gradient(const ParamGrid& grid, const std::vector<double>& s, std::size_t node) {
    return scalar_gradient(grid, s, node, false);
}

Vec2 scalar_gradient(const ParamGrid& grid, const std::vector<double>& s, std::size_t node, bool odd) {
    const int i = grid.i_of(node), j = grid.j_of(node);
    Weights W = first_weights(grid.stencil_order);
    auto val = [&](StencilRef r) { return (odd && r.flip) ? -s[r.node] : s[r.node]; };
    Vec2 d = Vec2::Zero();
    for (std::size_t k = 0; k < W.off.size(); ++k) {
        d[0] += W.w[k] * val(stencil_ref(grid, i, j, W.off[k], 0));
        d[1] += W.w[k] * val(stencil_ref(grid, i, j, 0, W.off[k]));
    }
    return Vec2(d[0] / first_scale(grid, 0), d[1] / first_scale(grid, 1));
}

std::array<Vec4, 2> vector_gradient(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm,
                                    const std::vector<Vec4>& field, std::size_t node) {
    const int i = grid.i_of(node), j = grid.j_of(node);
    const Chart chart = imm.points[node].chart;
    Weights W = first_weights(grid.stencil_order);
    std::array<Vec4, 2> d{Vec4::Zero(), Vec4::Zero()};
    for (std::size_t k = 0; k < W.off.size(); ++k) {
        d[0] += W.w[k] * stencil_vector(model, grid, imm, field, i, j, W.off[k], 0, chart);
        d[1] += W.w[k] * stencil_vector(model, grid, imm, field, i, j, 0, W.off[k], chart);
    }
    d[0] /= first_scale(grid, 0);
    d[1] /= first_scale(grid, 1);
    return d;
}

FirstOrder first_order(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm, std::size_t node) {
    Patch patch(model, grid, imm, node);
    const AmbientPoint& p = imm.points[node];
    return first_order_impl(grid, node, patch, metric_at(model, p), kahler_forms_coord(model, p));
}

std::vector<FirstOrder> first_order_all(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm) {
    std::vector<FirstOrder> out(grid.size());
    parallel_for(grid.size(), [&](std::size_t n) { out[n] = first_order(model, grid, imm, n); });
    return out;
}

NodeGeometry node_geometry(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm, std::size_t node,
                           NormalRule rule) {
    const int i = grid.i_of(node), j = grid.j_of(node);
    auto dlam = [&](std::size_t) {
        Weights W = first_weights(grid.stencil_order);
        Vec2 d = Vec2::Zero();
        for (std::size_t k = 0; k < W.off.size(); ++k) {
            d[0] += W.w[k] * first_order(model, grid, imm, stencil_ref(grid, i, j, W.off[k], 0).node).lambda;
            d[1] += W.w[k] * first_order(model, grid, imm, stencil_ref(grid, i, j, 0, W.off[k]).node).lambda;
        }
        return Vec2(d[0] / first_scale(grid, 0), d[1] / first_scale(grid, 1));
    };
    return full_geometry(model, grid, imm, node, rule, dlam);
}

std::vector<NodeGeometry> surface_geometry(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm,
                                           NormalRule rule) {
    std::vector<FirstOrder> fo = first_order_all(model, grid, imm);
    std::vector<double> lam(grid.size());
    for (std::size_t n = 0; n < grid.size(); ++n) lam[n] = fo[n].lambda;
    std::vector<NodeGeometry> out(grid.size());
    auto dlam = [&](std::size_t n) { return scalar_gradient(grid, lam, n); };
    parallel_for(grid.size(), [&](std::size_t n) { out[n] = full_geometry(model, grid, imm, n, rule, dlam); });
    return out;
}

HamiltonianData hamiltonian_fields(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm) {
    std::vector<FirstOrder> fo = first_order_all(model, grid, imm);
    HamiltonianData hd;
    hd.N.resize(grid.size());
    hd.xi.resize(grid.size());
    std::array<std::vector<double>, 3> Nf;
    for (auto& v : Nf) v.resize(grid.size());
    for (std::size_t n = 0; n < grid.size(); ++n)
        for (int a = 0; a < 3; ++a) {
            hd.N[n][a] = fo[n].pull[a] / grid.rho[n];
            Nf[a][n] = hd.N[n][a];
        }
    for (std::size_t n = 0; n < grid.size(); ++n)
        for (int a = 0; a < 3; ++a) {
            Vec2 dN = scalar_gradient(grid, Nf[a], n);
            hd.xi[n][a] = Vec2(dN[1], -dN[0]) / grid.rho[n];
        }
    return hd;
}

std::vector<Vec4> velocity_gradient_form(const std::vector<NodeGeometry>& geo) {
    std::vector<Vec4> v(geo.size());
    for (std::size_t n = 0; n < geo.size(); ++n) {
        const auto& ng = geo[n];
        v[n] = ng.lambda * ng.grad_lambda + ng.lambda * ng.lambda * ng.Hvec;
    }
    return v;
}

std::vector<Vec4> velocity_gradient_form(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm) {
    return velocity_gradient_form(surface_geometry(model, grid, imm));
}

std::vector<Vec4> velocity_moment_form(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm) {
    HamiltonianData hd = hamiltonian_fields(model, grid, imm);
    std::vector<FirstOrder> fo = first_order_all(model, grid, imm);
    std::vector<Vec4> v(grid.size());
    parallel_for(grid.size(), [&](std::size_t n) {
        const auto Js = complex_structures_coord(model, imm.points[n]);
        Vec4 s = Vec4::Zero();
        for (int a = 0; a < 3; ++a) s += Js[a] * (hd.xi[n][a][0] * fo[n].X[0] + hd.xi[n][a][1] * fo[n].X[1]);
        v[n] = s;
    });
    return v;
}

void set_num_threads(int n) { g_threads = std::max(1, n); }
int num_threads() { return g_threads; }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(g_threads), std::max<std::size_t>(n, 1));
    if (workers <= 1) {
        for (std::size_t k = 0; k < n; ++k) body(k);
        return;
    }
    std::exception_ptr err;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t k = w; k < n; k += workers) body(k);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (!err) err = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

}  // namespace hkflow
