#pragma once

#include "hkflow/flow.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace hkflow {

class BadPotential : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class BadTopology : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class AmplitudeTooLarge : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class UnknownPreset : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Truncated Fourier series on the torus: sum amp * trig(k1 x1) * trig(k2 x2), trig = cos or sin.
struct FourierPotential {
    struct Term {
        double amp = 0.0;
        double k1 = 0.0, k2 = 0.0;
        bool sin1 = false, sin2 = false;
    };
    std::vector<Term> terms;

    // Throws BadPotential for non-integer wavenumbers.
    void validate() const;
    double value(double x1, double x2) const;

    static FourierPotential cos_cos(double amp = 1.0, double k1 = 1.0, double k2 = 1.0);
    // Deterministic random coefficients for wavenumbers up to kmax.
    static FourierPotential random(std::uint64_t seed, int kmax, double scale);
};

// Real spherical harmonics up to degree 2, orthonormal on the unit sphere. Up to normalization:
// l=0: 1; l=1: cos th, sin th cos ph, sin th sin ph; l=2: 3cos^2 th - 1, sin th cos th (cos|sin) ph, sin^2 th (cos|sin) 2ph.
struct SphericalPotential {
    struct Term {
        int l = 0, m = 0;
        double amp = 0.0;
    };
    std::vector<Term> terms;

    void validate() const;
    double value(double th, double ph) const;
    // (d/dth, d/dph)
    Vec2 gradient(double th, double ph) const;

    static SphericalPotential y20(double amp = 1.0);
};

enum class RhoRule { unit, pullback_omega2, induced_dmu };

struct InitialReport {
    double max_eta3 = 0.0;
    double max_eta2_defect = 0.0;
    double psi_max = std::numeric_limits<double>::quiet_NaN();
    double s_max = std::numeric_limits<double>::quiet_NaN();
    double one_minus_star_omega = std::numeric_limits<double>::quiet_NaN();
    double sup_A2 = 0.0;
};

struct State {
    ParamGrid grid;
    Immersion imm;
    InitialReport report;
};

// Sets grid.rho from the immersion according to the rule.
void apply_rho_rule(const AmbientModel& model, ParamGrid& grid, const Immersion& imm, RhoRule rule);

State make_flat_lagrangian_graph(const ParamGrid& grid, const FourierPotential& u, double eps,
                                 RhoRule rule = RhoRule::pullback_omega2);
State make_eh_zero_section(double c, const ParamGrid& grid);
State make_eh_graph_perturbation(double c, const ParamGrid& grid, const SphericalPotential& a, double eps);

struct ScenarioSpec {
    std::string name;
    ModelKind model = ModelKind::flat_torus;
    double c = 1.0;
    Topology topology = Topology::torus_periodic;
    int n1 = 64, n2 = 64;
    int stencil_order = 2;
    std::string generator;  // flat-graph, plane, eh-zero-section, eh-perturbation
    double eps = 0.0;
    std::uint64_t seed = 0;
    RhoRule rho_rule = RhoRule::pullback_omega2;
};

AmbientModel make_model(const ScenarioSpec& spec);
State build_state(const ScenarioSpec& spec);

struct Preset {
    ScenarioSpec spec;
    FlowConfig flow;
    bool runs_flow = true;
    std::vector<double> report_radii;  // stability tables
    std::vector<std::string> expected;
};

std::vector<std::string> preset_names();
Preset preset(const std::string& name);

}  // namespace hkflow
