#include "molsim/devices.hpp"

#include <cmath>

#include "molsim/errors.hpp"

namespace molsim {

namespace {

// Knee current of the diode linearization; past the corresponding voltage
// the exponential is replaced by its tangent.
constexpr double kDiodeKneeCurrent = 1.0;

// Shape constant of the RTD second rise: sigma(u) = u^2/(kRise2Shape + u).
// Keeps the post-valley branch shallow enough that a quenched MOBILE device
// absorbs most of the supply, which sets the latched output levels.
constexpr double kRise2Shape = 10.0;

void require(bool ok, const char* what) {
    if (!ok) throw Error(std::string("invalid device parameters: ") + what);
}

}  // namespace

void DiodeParams::validate() const {
    require(std::isfinite(i_sat) && i_sat > 0, "diode i_sat must be > 0");
    require(std::isfinite(n_ideality) && n_ideality >= 1, "diode n must be >= 1");
    require(std::isfinite(v_thermal) && v_thermal > 0, "diode vt must be > 0");
    require(std::isfinite(g_min) && g_min >= 0, "diode g_min must be >= 0");
}

void RtdParams::validate() const {
    require(std::isfinite(v_peak) && std::isfinite(v_valley) &&
                v_peak > 0 && v_peak < v_valley,
            "rtd needs 0 < v_peak < v_valley");
    require(std::isfinite(i_peak) && std::isfinite(i_valley) &&
                i_valley > 0 && i_valley < i_peak,
            "rtd needs 0 < i_valley < i_peak");
    require(std::isfinite(v_rise2) && v_rise2 > 0, "rtd v_rise2 must be > 0");
}

void MfetParams::validate() const {
    require(std::isfinite(k_trans) && k_trans > 0, "mfet k must be > 0");
    require(std::isfinite(v_th), "mfet v_th must be finite");
    require(std::isfinite(lambda) && lambda >= 0, "mfet lambda must be >= 0");
}

DeviceEval diode_eval(double v, const DiodeParams& p) {
    const double nvt = p.n_ideality * p.v_thermal;
    const double v_knee = nvt * std::log(kDiodeKneeCurrent / p.i_sat);
    DeviceEval e;
    if (v <= v_knee) {
        const double ex = std::exp(v / nvt);
        e.current = p.i_sat * (ex - 1.0);
        e.di_dv = p.i_sat * ex / nvt;
    } else {
        // tangent continuation: value and slope match at the knee
        const double i_knee = kDiodeKneeCurrent - p.i_sat;
        const double g_knee = kDiodeKneeCurrent / nvt;
        e.current = i_knee + g_knee * (v - v_knee);
        e.di_dv = g_knee;
    }
    e.current += p.g_min * v;
    e.di_dv += p.g_min;
    return e;
}

namespace {

// One-sided RTD curve for v >= 0.
DeviceEval rtd_mag(double v, const RtdParams& p) {
    DeviceEval e;
    if (v <= p.v_peak) {
        // cubic with slope 1.5*ip/vp at zero and 0 at the peak
        const double t = v / p.v_peak;
        e.current = p.i_peak * (1.5 * t - 0.5 * t * t * t);
        e.di_dv = p.i_peak / p.v_peak * 1.5 * (1.0 - t * t);
    } else if (v <= p.v_valley) {
        const double w = p.v_valley - p.v_peak;
        const double t = (v - p.v_peak) / w;
        const double h = t * t * (3.0 - 2.0 * t);
        e.current = p.i_peak + (p.i_valley - p.i_peak) * h;
        e.di_dv = (p.i_valley - p.i_peak) * 6.0 * t * (1.0 - t) / w;
    } else {
        const double u = (v - p.v_valley) / p.v_rise2;
        const double den = kRise2Shape + u;
        e.current = p.i_valley + (p.i_peak - p.i_valley) * u * u / den;
        e.di_dv = (p.i_peak - p.i_valley) / p.v_rise2 *
                  (u * u + 2.0 * kRise2Shape * u) / (den * den);
    }
    return e;
}

}  // namespace

DeviceEval rtd_eval(double v, const RtdParams& p) {
    if (v >= 0) return rtd_mag(v, p);
    DeviceEval e = rtd_mag(-v, p);
    e.current = -e.current;  // slope is even in v
    return e;
}

namespace {

// Forward-biased square law, v_ds >= 0.
MfetEval mfet_fwd(double v_gs, double v_ds, const MfetParams& p) {
    MfetEval e;
    const double vov = v_gs - p.v_th;
    if (vov <= 0) return e;
    const double mod = 1.0 + p.lambda * v_ds;
    if (v_ds < vov) {
        const double q = vov * v_ds - 0.5 * v_ds * v_ds;
        e.current = p.k_trans * q * mod;
        e.gm = p.k_trans * v_ds * mod;
        e.gds = p.k_trans * ((vov - v_ds) * mod + q * p.lambda);
    } else {
        const double q = 0.5 * vov * vov;
        e.current = p.k_trans * q * mod;
        e.gm = p.k_trans * vov * mod;
        e.gds = p.k_trans * q * p.lambda;
    }
    return e;
}

}  // namespace

MfetEval mfet_eval(double v_gs, double v_ds, const MfetParams& p) {
    if (v_ds >= 0) return mfet_fwd(v_gs, v_ds, p);
    // drain/source roles swap; chain rule through (vgs - vds, -vds)
    MfetEval r = mfet_fwd(v_gs - v_ds, -v_ds, p);
    MfetEval e;
    e.current = -r.current;
    e.gm = -r.gm;
    e.gds = r.gm + r.gds;
    return e;
}

}  // namespace molsim
