#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "molsim/netlist.hpp"

namespace molsim {

/// Fabric fan-in bound: sum of |weights| per gate.
constexpr int kMaxFanIn = 6;

/// Weighted-threshold gate description: output is 1 iff
/// sum(w_i * x_i) >= threshold.
struct ThresholdGateSpec {
    std::map<std::string, int> weights;  ///< input name -> nonzero weight
    int threshold = 1;
    int clock_phase = 1;  ///< 1 | 2
    std::string output = "out";

    /// Throws WeightOverflow / UnrealizableThreshold on bad specs.
    void validate() const;
};

/// Two-phase clock plan. Phase 1 evaluates and then holds while phase 2
/// evaluates; hold_guard is the minimum time phase 1 stays high beyond the
/// end of the phase-2 rising edge, so the carry is actively held through the
/// sum gate's decision window.
struct ClockSpec {
    double v_high = 1.0;
    double period = 100e-9;
    double edge = 5e-9;           ///< rise and fall time
    double phase2_offset = 40e-9; ///< phase-2 rise start within the cycle
    double hold_guard = 10e-9;

    void validate() const;
    /// Flat-top duration of a phase within one cycle.
    double plateau(int phase) const;
};

/// Clock waveforms for stage `stage` (0-based) of an `n_stages` pipeline.
/// Single-shot within the simulation window.
SourceSpec phase1_pulse(const ClockSpec& c, int stage, int n_stages);
SourceSpec phase2_pulse(const ClockSpec& c, int stage, int n_stages);
/// Instant late in the given phase's plateau of cycle `cycle` (0-based).
double sample_instant(const ClockSpec& c, int phase, int cycle);

/// One logical input of a generated gate and the rails its transistors use.
struct GateInput {
    std::string name;
    bool uses_true = false;        ///< port `name`
    bool uses_complement = false;  ///< port `name_n`
};

/// A generated MOBILE gate: model cards plus one subcircuit whose ports are
/// the input rails (in weight-map order), the output, and the clock. Ground
/// is global. The subcircuit holds exactly two RTDs (load and driver) and
/// one transistor per weight unit.
struct GateNetlist {
    std::string subckt_name;
    Netlist netlist;
    std::vector<std::string> ports;
    std::vector<GateInput> inputs;
    ThresholdGateSpec spec;
    double load_area = 1.0;
    double driver_area = 0.0;
};

/// Construction constants shared by the gate builders.
struct MobileDesign {
    double load_area = 1.0;
    double c_out = 0.5e-12;  ///< per-gate output capacitance [F]
};

/// Builds a clocked MOBILE threshold gate from an RTD pair and unit
/// transistors. Positive-weight inputs switch driver-side transistors from
/// their complement rail; negative weights use the true rail. Inputs listed
/// in `internal_feeds` have no complement rail (on-chip feedback) and use a
/// width-scaled transistor in parallel with the load RTD instead.
GateNetlist build_mobile_gate(const ThresholdGateSpec& spec,
                              const RtdParams& rtd, const MfetParams& fet,
                              const ClockSpec& clock,
                              const std::set<std::string>& internal_feeds = {},
                              const MobileDesign& design = {});

/// Ideal-logic oracle: 1 iff sum(w_i * x_i) >= threshold.
/// Throws MissingInput when an input of the spec has no assignment.
int threshold_truth(const ThresholdGateSpec& spec,
                    const std::map<std::string, int>& inputs);

/// Wraps a single gate with input/clock sources and a .tran card so it can
/// be simulated directly. Input sources are DC placeholders at logic 0.
Netlist build_gate_testbench(const ThresholdGateSpec& spec,
                             const RtdParams& rtd, const MfetParams& fet,
                             const ClockSpec& clock,
                             const MobileDesign& design = {});

/// Two-clock full adder: majority carry gate on phase 1, sum gate
/// [a+b+cin-2*cout >= 1] on phase 2, with the carry held on a storage
/// capacitor while the sum evaluates.
struct FullAdderSpec {
    std::string a = "a", b = "b", cin = "cin";
    std::string sum = "sum", cout = "cout";
    ClockSpec clock;
    RtdParams rtd;
    MfetParams fet;
    double c_store = 2e-12;
    MobileDesign design;
    double dt = 0.25e-9;  ///< recommended transient step (>= 20 pts per edge)
};

Netlist build_full_adder(const FullAdderSpec& spec);

/// Chains `bits` full adders; stage k's carry resolves on phase 1 of cycle
/// k, its sum on phase 2 of cycle k, with stage clocks delayed by one period
/// per stage and held long enough to feed stage k+1.
Netlist build_ripple_adder(int bits, const FullAdderSpec& spec);

/// Options for the diode-logic half adder reconstruction.
struct HalfAdderOptions {
    double v_supply = 5.0;
    double r_series = 1.1e3;  ///< per-input series resistance of the sum stage
    double r_load = 3.7e3;    ///< sum output load
    RtdParams rtd{1e-3, 0.25, 1e-4, 0.5, 2.5};
};

/// Diode-resistor AND for the carry plus an OR-through-RTD sum stage whose
/// NDR quenches the both-inputs-high case (the RTD inverts the AND term, so
/// the stage computes OR(a,b) AND NOT(a AND b) in one branch).
Netlist build_diode_half_adder(const DiodeParams& diode, double pullup_ohms,
                               const HalfAdderOptions& opts = {});

}  // namespace molsim
