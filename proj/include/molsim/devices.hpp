#pragma once

#include <string>

namespace molsim {

/// Behavioral rectifying-diode parameters (exponential law with series
/// linearization above an overflow knee and an optional parallel leak).
struct DiodeParams {
    double i_sat = 1e-15;      ///< saturation current [A], > 0
    double n_ideality = 1.0;   ///< ideality factor, >= 1
    double v_thermal = 0.02585;///< thermal voltage [V], > 0
    double g_min = 0.0;        ///< parallel leak [S], >= 0

    void validate() const;
};

/// RTD parameters. The I-V curve is an odd-symmetric piecewise-C1 function:
/// cubic rise to (v_peak, i_peak), cubic fall to (v_valley, i_valley), then a
/// monotone second rise whose voltage scale is v_rise2. Currents scale
/// linearly with an external area factor.
struct RtdParams {
    double i_peak = 1e-3;   ///< [A] per unit area
    double v_peak = 0.25;   ///< [V]
    double i_valley = 1e-4; ///< [A] per unit area, < i_peak
    double v_valley = 0.5;  ///< [V], > v_peak
    double v_rise2 = 0.25;  ///< [V] second-rise scale, > 0

    void validate() const;
};

/// Square-law three-terminal molecular transistor.
struct MfetParams {
    double k_trans = 9.4e-4; ///< transconductance factor [A/V^2], > 0
    double v_th = 0.45;      ///< threshold [V]
    double lambda = 0.0;     ///< output-conductance factor [1/V], >= 0

    void validate() const;
};

/// Current and slope of a two-terminal device at a bias point.
struct DeviceEval {
    double current = 0.0;   ///< [A]
    double di_dv = 0.0;     ///< [S]
};

/// Drain current and both small-signal derivatives of the transistor.
struct MfetEval {
    double current = 0.0;   ///< drain current [A], positive drain->source
    double gm = 0.0;        ///< d(current)/d(v_gs) [S]
    double gds = 0.0;       ///< d(current)/d(v_ds) [S]
};

/// i = i_sat*(exp(v/(n*vt)) - 1) + g_min*v, linearized above the knee where
/// the exponential would reach i_knee = 1 A. Total on all finite inputs.
DeviceEval diode_eval(double v, const DiodeParams& p);

/// Odd-symmetric piecewise RTD curve; exact analytic slope of the
/// implemented form. Zero slope at the peak and valley knots.
DeviceEval rtd_eval(double v, const RtdParams& p);

/// Square-law FET with drain/source swap for v_ds < 0. Current and both
/// derivatives are continuous across the cutoff/triode/saturation seams.
MfetEval mfet_eval(double v_gs, double v_ds, const MfetParams& p);

}  // namespace molsim
