#pragma once

#include "hkflow/analysis.hpp"

#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace hkflow {

class StepRejected : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Integrator { euler, rk4 };
enum class DtMode { fixed, cfl };
enum class VelocityForm { gradient, moment };
enum class FlowStatus { reached_t_end, converged, blowup_detected, degenerate, defect_exceeded };

const char* status_name(FlowStatus s);

struct FlowConfig {
    Integrator integrator = Integrator::rk4;
    DtMode dt_mode = DtMode::cfl;
    double dt = 1e-3;
    double cfl = 0.2;
    long max_steps = 1000000;
    double t_end = 1.0;
    int monitor_every = 10;
    double defect_tol = std::numeric_limits<double>::infinity();
    double blowup_A2 = 1e4;
    VelocityForm velocity_form = VelocityForm::gradient;
    double converge_tol = 1e-8;
    // Sphere grids: rings with sin(colatitude) below this value have their longitudinal spectrum damped so the
    // step is limited by the spacing at this latitude; 0 disables the filter.
    double polar_filter = 0.5;

    // Throws std::invalid_argument on a non-positive dt, a cfl factor outside (0, 1] or a bad cadence.
    void validate() const;
};

struct MonitorRecord {
    long step = 0;
    double t = 0.0;
    double energy = 0.0;
    double sup_lambda = 0.0, inf_lambda = 0.0;
    double sup_A2 = 0.0;
    double max_eta3 = 0.0, max_eta2_defect = 0.0;
    // Tubular monitors; NaN outside Eguchi-Hanson runs.
    double psi_max = std::numeric_limits<double>::quiet_NaN();
    double star_omega_min = std::numeric_limits<double>::quiet_NaN();
    double s_max = std::numeric_limits<double>::quiet_NaN();
    double II_dist = std::numeric_limits<double>::quiet_NaN();
    double volume = 0.0;
};

MonitorRecord monitor(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm);

std::vector<Vec4> flow_velocity(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm,
                                VelocityForm form);

// Physical grid spacing: the shortest metric length of a single grid step. Longitude steps on rings below the
// filter latitude count as if taken at that latitude.
double physical_spacing(const ParamGrid& grid, const std::vector<NodeGeometry>& geo, double polar_filter = 0.0);
// Largest stable step at cfl factor 1: h^2 / max(lambda^2, lambda |grad lambda| / h, 1).
double cfl_limit(const ParamGrid& grid, const std::vector<NodeGeometry>& geo, double polar_filter = 0.0);

// Damps longitude wavenumbers m on rings with sin(colatitude) = s_j < cut by min(1, s_j^2 / (cut sin(m dx1 / 2))^2).
// Acts on the embedding components of v; no-op unless the grid is a sphere in the Eguchi-Hanson model.
void apply_polar_filter(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm, std::vector<Vec4>& v,
                        double cut);

// Wrap angles, reflect theta back into (0, pi) and move nodes between the Eguchi-Hanson charts.
void normalize_points(const AmbientModel& model, Immersion& imm);

// One step with the configured integrator and step policy.
Immersion flow_step(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm, const FlowConfig& cfg);
// One step of size dt; throws StepRejected when dt exceeds the cfl limit.
Immersion flow_step(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm, const FlowConfig& cfg,
                    double dt);

struct FlowResult {
    Immersion final_state;
    std::vector<MonitorRecord> series;
    FlowStatus status = FlowStatus::reached_t_end;
    long steps = 0;
    std::string message;
};

using SnapshotHook = std::function<void(long step, const Immersion& imm)>;

FlowResult flow_run(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm0, const FlowConfig& cfg,
                    const SnapshotHook& on_monitor = {});

// Right-hand side of the evolution of eta = f^*w / dmu for the Kähler form of flow role which_form (0..2).
std::vector<double> two_form_rhs(const AmbientModel& model, const ParamGrid& grid, const Immersion& imm,
                                 int which_form);
// |forward difference of eta over one rk4 step of size dt - right-hand side| per node.
std::vector<double> two_form_evolution_residual(const AmbientModel& model, const ParamGrid& grid,
                                                const Immersion& imm, int which_form, double dt);

}  // namespace hkflow
