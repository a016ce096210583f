#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "molsim/netlist.hpp"

namespace molsim {

struct SolverOptions {
    double abstol = 1e-9;    ///< absolute residual tolerance
    double reltol = 1e-6;    ///< relative residual tolerance (vs |unknowns|)
    int itl_newton = 100;    ///< iteration limit per Newton run
    double damping = 0.5;    ///< max node-voltage step per iteration [V]
    std::vector<double> gmin_schedule = {1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8,
                                         1e-9, 1e-10, 1e-11, 1e-12};
    int source_steps = 10;
    /// Start with source stepping (power-up emulation); picks the branch a
    /// slowly raised supply would select in multistable circuits.
    bool power_up = false;

    void validate() const;
};

struct TransientOptions {
    double t_stop = 0.0;
    double dt = 0.0;  ///< fixed step, 0 < dt <= t_stop
    IntegrationMethod method = IntegrationMethod::BackwardEuler;
};

/// Assembled Newton system at one iterate: J * dx = -F.
struct MnaSystem {
    int dim = 0;
    Eigen::MatrixXd jacobian;
    Eigen::VectorXd residual;
    Eigen::VectorXd unknowns;
};

/// Context for one stamping pass. For transient steps, v_prev holds the node
/// voltages of the previous accepted step (indexed by node, ground included)
/// and cap_current_prev the capacitor currents (by capacitor order).
struct StampContext {
    double time = 0.0;
    double source_scale = 1.0;
    double gmin = 0.0;
    bool transient = false;
    IntegrationMethod method = IntegrationMethod::BackwardEuler;
    double dt = 0.0;
    const std::vector<double>* v_prev = nullptr;
    const std::vector<double>* cap_current_prev = nullptr;
};

struct OperatingPoint {
    std::vector<double> node_voltage;  ///< by node index; [0] == 0
    std::map<std::string, double> branch_current;  ///< per V source, delivered
    bool converged = false;
    int iterations = 0;
    std::string strategy;  ///< e.g. "newton", "gmin", "source"
    double residual_norm = 0.0;
    Eigen::VectorXd unknowns;
};

/// Time- or sweep-indexed probe data. Column names are node names or
/// "I(Vname)" for delivered source currents.
struct Waveform {
    std::string x_name = "t";
    std::vector<double> x;
    std::vector<std::string> names;
    std::vector<std::vector<double>> cols;
    std::vector<std::string> warnings;

    /// CSV with header "<x_name>,<names...>", 9 significant digits.
    std::string to_csv() const;
    const std::vector<double>& column(const std::string& name) const;
};

/// Number of unknowns for a circuit (nodes - 1 + source branches).
int system_dimension(const FlatCircuit& c);

/// Builds the MNA residual and its exact Jacobian at `unknowns`.
/// Layout: node voltages for nodes 1..N-1, then one branch current per
/// voltage source in element order.
MnaSystem stamp(const FlatCircuit& c, const Eigen::VectorXd& unknowns,
                const StampContext& ctx = {});

/// Damped-Newton DC operating point. Escalates through gmin stepping and
/// source stepping when plain iteration fails. With an initial guess, Newton
/// starts there (continuation hook for multistable circuits).
/// Throws NoConvergence when every strategy fails, SingularTopology when the
/// matrix stays singular with gmin active (or gmin is disabled).
OperatingPoint solve_dc(const FlatCircuit& c, const SolverOptions& opts = {},
                        const Eigen::VectorXd* initial_guess = nullptr);

/// DC sweep of a named source; each point warm-starts from the previous one,
/// so the sweep follows one stable branch through NDR regions and up/down
/// sweeps expose hysteresis. Probes every node and source current.
Waveform dc_sweep(const FlatCircuit& c, const std::string& source_name,
                  double start, double stop, double step,
                  const SolverOptions& opts = {});

/// Fixed-step transient. The initial condition is the DC operating point at
/// t = 0 with sources at their t = 0 values; trapezoidal integration takes a
/// backward-Euler first step. Empty probe list means all nodes and sources.
Waveform solve_transient(const FlatCircuit& c, const TransientOptions& t_opts,
                         const SolverOptions& s_opts = {},
                         const std::vector<std::string>& probes = {});

/// Max |KCL residual| over nodes at a solved point (DC, no gmin).
double kcl_residual(const FlatCircuit& c, const OperatingPoint& op,
                    double time = 0.0);

}  // namespace molsim
