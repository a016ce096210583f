#include "molsim/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace molsim {

void SolverOptions::validate() const {
    if (!(abstol > 0) || !(reltol > 0) || itl_newton < 1 || !(damping > 0) ||
        source_steps < 1)
        throw Error("solver options must be positive");
    for (size_t i = 1; i < gmin_schedule.size(); ++i)
        if (!(gmin_schedule[i] < gmin_schedule[i - 1]))
            throw Error("gmin schedule must be strictly decreasing");
}

int system_dimension(const FlatCircuit& c) {
    int nsrc = 0;
    for (const auto& e : c.elements)
        if (e.kind == ElementKind::VSource) ++nsrc;
    return c.node_count() - 1 + nsrc;
}

namespace {

// Unknown index of a node (-1 for ground).
inline int ux(int node) { return node - 1; }

struct Assembler {
    const FlatCircuit& c;
    int n_nodes;       // includes ground
    int dim;
    std::vector<int> branch_of;  // per element index, -1 if not a source
    std::vector<int> cap_index;  // per element index, -1 if not a capacitor
    int n_caps = 0;

    explicit Assembler(const FlatCircuit& circ) : c(circ) {
        n_nodes = c.node_count();
        branch_of.assign(c.elements.size(), -1);
        cap_index.assign(c.elements.size(), -1);
        int br = n_nodes - 1;
        for (size_t i = 0; i < c.elements.size(); ++i) {
            if (c.elements[i].kind == ElementKind::VSource)
                branch_of[i] = br++;
            else if (c.elements[i].kind == ElementKind::Capacitor)
                cap_index[i] = n_caps++;
        }
        dim = br;
    }

    double node_v(const Eigen::VectorXd& x, int node) const {
        return node == 0 ? 0.0 : x[ux(node)];
    }

    // Adds a current leaving `node` with derivatives d(i)/d(v_k).
    static void add_kcl(MnaSystem& s, int node, double i,
                        std::initializer_list<std::pair<int, double>> deriv) {
        if (node == 0) return;
        s.residual[ux(node)] += i;
        for (auto [n2, g] : deriv)
            if (n2 != 0) s.jacobian(ux(node), ux(n2)) += g;
    }

    MnaSystem assemble(const Eigen::VectorXd& x, const StampContext& ctx) const {
        MnaSystem s;
        s.dim = dim;
        s.jacobian = Eigen::MatrixXd::Zero(dim, dim);
        s.residual = Eigen::VectorXd::Zero(dim);
        s.unknowns = x;

        for (size_t ei = 0; ei < c.elements.size(); ++ei) {
            const FlatElement& e = c.elements[ei];
            switch (e.kind) {
                case ElementKind::Resistor: {
                    const int a = e.nodes[0], b = e.nodes[1];
                    const double g = 1.0 / e.value;
                    const double i = g * (node_v(x, a) - node_v(x, b));
                    add_kcl(s, a, i, {{a, g}, {b, -g}});
                    add_kcl(s, b, -i, {{a, -g}, {b, g}});
                    break;
                }
                case ElementKind::Capacitor: {
                    if (!ctx.transient) break;  // open at DC
                    const int a = e.nodes[0], b = e.nodes[1];
                    const double v = node_v(x, a) - node_v(x, b);
                    const double vp = (*ctx.v_prev)[a] - (*ctx.v_prev)[b];
                    double geq, hist;
                    if (ctx.method == IntegrationMethod::Trapezoidal) {
                        geq = 2.0 * e.value / ctx.dt;
                        hist = -geq * vp -
                               (*ctx.cap_current_prev)[cap_index[ei]];
                    } else {
                        geq = e.value / ctx.dt;
                        hist = -geq * vp;
                    }
                    const double i = geq * v + hist;
                    add_kcl(s, a, i, {{a, geq}, {b, -geq}});
                    add_kcl(s, b, -i, {{a, -geq}, {b, geq}});
                    break;
                }
                case ElementKind::VSource: {
                    const int a = e.nodes[0], b = e.nodes[1];
                    const int br = branch_of[ei];
                    const double j = x[br];
                    // current a -> b through the source
                    if (a != 0) {
                        s.residual[ux(a)] += j;
                        s.jacobian(ux(a), br) += 1.0;
                    }
                    if (b != 0) {
                        s.residual[ux(b)] -= j;
                        s.jacobian(br, ux(b)) -= 1.0;
                        s.jacobian(ux(b), br) -= 1.0;
                    }
                    if (a != 0) s.jacobian(br, ux(a)) += 1.0;
                    s.residual[br] = node_v(x, a) - node_v(x, b) -
                                     ctx.source_scale *
                                         e.source->value_at(ctx.time);
                    break;
                }
                case ElementKind::Diode: {
                    const int a = e.nodes[0], b = e.nodes[1];
                    const double v = node_v(x, a) - node_v(x, b);
                    const DeviceEval d =
                        diode_eval(v, std::get<DiodeParams>(e.device));
                    add_kcl(s, a, d.current, {{a, d.di_dv}, {b, -d.di_dv}});
                    add_kcl(s, b, -d.current, {{a, -d.di_dv}, {b, d.di_dv}});
                    break;
                }
                case ElementKind::Rtd: {
                    const int a = e.nodes[0], b = e.nodes[1];
                    const double v = node_v(x, a) - node_v(x, b);
                    DeviceEval d = rtd_eval(v, std::get<RtdParams>(e.device));
                    d.current *= e.scale;
                    d.di_dv *= e.scale;
                    add_kcl(s, a, d.current, {{a, d.di_dv}, {b, -d.di_dv}});
                    add_kcl(s, b, -d.current, {{a, -d.di_dv}, {b, d.di_dv}});
                    break;
                }
                case ElementKind::Mfet: {
                    const int d = e.nodes[0], g = e.nodes[1], sn = e.nodes[2];
                    const double vgs = node_v(x, g) - node_v(x, sn);
                    const double vds = node_v(x, d) - node_v(x, sn);
                    MfetEval m =
                        mfet_eval(vgs, vds, std::get<MfetParams>(e.device));
                    m.current *= e.scale;
                    m.gm *= e.scale;
                    m.gds *= e.scale;
                    // drain current enters at d, leaves at s
                    add_kcl(s, d, m.current,
                            {{d, m.gds}, {g, m.gm}, {sn, -m.gds - m.gm}});
                    add_kcl(s, sn, -m.current,
                            {{d, -m.gds}, {g, -m.gm}, {sn, m.gds + m.gm}});
                    break;
                }
                case ElementKind::SubcktInstance:
                    throw Error("unflattened instance in FlatCircuit");
            }
        }
        if (ctx.gmin > 0) {
            for (int n = 0; n < n_nodes - 1; ++n) {
                s.residual[n] += ctx.gmin * x[n];
                s.jacobian(n, n) += ctx.gmin;
            }
        }
        return s;
    }
};

struct NewtonResult {
    bool converged = false;
    bool singular = false;
    int iterations = 0;
    double residual = 0.0;
};

NewtonResult newton(const Assembler& asmb, Eigen::VectorXd& x,
                    const StampContext& ctx, const SolverOptions& opts) {
    NewtonResult r;
    const int n_nodes = asmb.n_nodes;
    for (int it = 0; it <= opts.itl_newton; ++it) {
        MnaSystem sys = asmb.assemble(x, ctx);
        r.residual = sys.residual.lpNorm<Eigen::Infinity>();
        const double xnorm = x.size() ? x.lpNorm<Eigen::Infinity>() : 0.0;
        if (r.residual <= opts.abstol + opts.reltol * xnorm) {
            r.converged = true;
            r.iterations = it;
            return r;
        }
        if (it == opts.itl_newton) break;  // budget spent
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(sys.jacobian);
        const double maxa = sys.jacobian.cwiseAbs().maxCoeff();
        const double pivot_min = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
        if (!(maxa > 0) || pivot_min < 1e-13 * std::max(1.0, maxa)) {
            r.singular = true;
            r.iterations = it;
            return r;
        }
        Eigen::VectorXd dx = lu.solve(-sys.residual);
        if (!dx.allFinite()) {
            r.singular = true;
            r.iterations = it;
            return r;
        }
        double dv_max = 0.0;
        for (int n = 0; n < n_nodes - 1; ++n)
            dv_max = std::max(dv_max, std::abs(dx[n]));
        const double scale =
            dv_max > opts.damping ? opts.damping / dv_max : 1.0;
        x += scale * dx;
        r.iterations = it + 1;
    }
    return r;
}

OperatingPoint make_op(const Assembler& asmb, const Eigen::VectorXd& x,
                       const std::string& strategy, int iterations,
                       double residual) {
    OperatingPoint op;
    op.converged = true;
    op.strategy = strategy;
    op.iterations = iterations;
    op.residual_norm = residual;
    op.unknowns = x;
    op.node_voltage.assign(asmb.n_nodes, 0.0);
    for (int n = 1; n < asmb.n_nodes; ++n) op.node_voltage[n] = x[ux(n)];
    for (size_t ei = 0; ei < asmb.c.elements.size(); ++ei)
        if (asmb.branch_of[ei] >= 0)
            // delivered current: out of the + terminal into the circuit
            op.branch_current[asmb.c.elements[ei].name] =
                -x[asmb.branch_of[ei]];
    return op;
}

// Full strategy ladder for one (possibly transient) solve.
OperatingPoint solve_core(const Assembler& asmb, const StampContext& base_ctx,
                          const SolverOptions& opts,
                          const Eigen::VectorXd* guess) {
    Eigen::VectorXd x0 = guess ? *guess : Eigen::VectorXd::Zero(asmb.dim);
    std::vector<std::string> trail;
    int total_iterations = 0;

    auto run = [&](Eigen::VectorXd& x, double gmin, double scale) {
        StampContext ctx = base_ctx;
        ctx.gmin = gmin;
        ctx.source_scale = scale * base_ctx.source_scale;
        NewtonResult r = newton(asmb, x, ctx, opts);
        total_iterations += r.iterations;
        return r;
    };

    if (!opts.power_up) {
        Eigen::VectorXd x = x0;
        NewtonResult r = run(x, 0.0, 1.0);
        if (r.converged)
            return make_op(asmb, x, "newton", total_iterations, r.residual);
        if (r.singular && opts.gmin_schedule.empty())
            throw SingularTopology(
                "singular MNA matrix (node without DC path to ground?)");
        trail.push_back(r.singular ? "newton:singular" : "newton");
    }

    if (!opts.power_up && !opts.gmin_schedule.empty()) {
        Eigen::VectorXd x = x0;
        bool ok = true;
        NewtonResult r;
        for (double g : opts.gmin_schedule) {
            r = run(x, g, 1.0);
            if (!r.converged) {
                ok = false;
                break;
            }
        }
        if (ok) {
            // final refinement with gmin removed
            Eigen::VectorXd xf = x;
            NewtonResult rf = run(xf, 0.0, 1.0);
            if (rf.converged)
                return make_op(asmb, xf, "gmin", total_iterations, rf.residual);
            if (rf.singular)
                // topology needs gmin; accept the smallest-gmin solution
                return make_op(asmb, x, "gmin(limited)", total_iterations,
                               r.residual);
        }
        trail.push_back("gmin");
    }

    {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(asmb.dim);
        bool ok = true;
        NewtonResult r;
        for (int s = 1; s <= opts.source_steps; ++s) {
            r = run(x, 0.0, static_cast<double>(s) / opts.source_steps);
            if (!r.converged) {
                ok = false;
                break;
            }
        }
        if (ok)
            return make_op(asmb, x, "source", total_iterations, r.residual);
        if (r.singular && opts.power_up && opts.gmin_schedule.empty())
            throw SingularTopology(
                "singular MNA matrix (node without DC path to ground?)");
        trail.push_back(r.singular ? "source:singular" : "source");
    }

    if (opts.power_up) {
        // power_up skips the plain attempt; fall back to it before giving up
        Eigen::VectorXd x = x0;
        NewtonResult r = run(x, 0.0, 1.0);
        if (r.converged)
            return make_op(asmb, x, "newton", total_iterations, r.residual);
        trail.push_back("newton");
    }

    std::string t;
    for (const auto& s : trail) t += (t.empty() ? "" : ",") + s;
    MnaSystem sys = asmb.assemble(x0, base_ctx);
    throw NoConvergence("operating point did not converge", t,
                        sys.residual.lpNorm<Eigen::Infinity>());
}

}  // namespace

MnaSystem stamp(const FlatCircuit& c, const Eigen::VectorXd& unknowns,
                const StampContext& ctx) {
    return Assembler(c).assemble(unknowns, ctx);
}

OperatingPoint solve_dc(const FlatCircuit& c, const SolverOptions& opts,
                        const Eigen::VectorXd* initial_guess) {
    opts.validate();
    Assembler asmb(c);
    StampContext ctx;
    return solve_core(asmb, ctx, opts, initial_guess);
}

Waveform dc_sweep(const FlatCircuit& c, const std::string& source_name,
                  double start, double stop, double step,
                  const SolverOptions& opts) {
    opts.validate();
    if (!(step > 0)) throw Error("sweep step must be > 0");
    int src = c.find_element(source_name);
    if (src < 0 || c.elements[src].kind != ElementKind::VSource)
        throw Error("no voltage source named '" + source_name + "'");

    FlatCircuit work = c;
    Assembler asmb(work);
    const int steps =
        static_cast<int>(std::llround(std::abs(stop - start) / step));
    const double dir = stop >= start ? 1.0 : -1.0;

    Waveform w;
    w.x_name = "v";
    for (int n = 1; n < work.node_count(); ++n)
        w.names.push_back(work.node_names[n]);
    std::vector<int> src_elems;
    for (size_t ei = 0; ei < work.elements.size(); ++ei)
        if (work.elements[ei].kind == ElementKind::VSource) {
            w.names.push_back("I(" + work.elements[ei].name + ")");
            src_elems.push_back(static_cast<int>(ei));
        }
    w.cols.assign(w.names.size(), {});

    Eigen::VectorXd guess;
    for (int i = 0; i <= steps; ++i) {
        const double v = (i == steps) ? stop : start + dir * step * i;
        work.elements[src].source = SourceSpec::make_dc(v);
        OperatingPoint op;
        try {
            op = solve_core(asmb, StampContext{}, opts,
                            guess.size() ? &guess : nullptr);
        } catch (const NoConvergence& e) {
            throw NoConvergence("sweep failed at " + source_name + "=" +
                                    format_number(v),
                                e.trail(), e.residual());
        }
        guess = op.unknowns;
        w.x.push_back(v);
        size_t col = 0;
        for (int n = 1; n < work.node_count(); ++n)
            w.cols[col++].push_back(op.node_voltage[n]);
        for (int ei : src_elems)
            w.cols[col++].push_back(
                op.branch_current.at(work.elements[ei].name));
    }
    return w;
}

Waveform solve_transient(const FlatCircuit& c, const TransientOptions& t_opts,
                         const SolverOptions& s_opts,
                         const std::vector<std::string>& probes) {
    s_opts.validate();
    if (!(t_opts.dt > 0) || !(t_opts.dt <= t_opts.t_stop))
        throw Error("transient needs 0 < dt <= t_stop");
    Assembler asmb(c);

    Waveform w;
    w.x_name = "t";
    // probe resolution: node names, or I(Vname)
    struct Probe {
        bool is_branch;
        int index;  // node index or branch element index
    };
    std::vector<Probe> plan;
    std::vector<std::string> names = probes;
    if (names.empty()) {
        for (int n = 1; n < c.node_count(); ++n) names.push_back(c.node_names[n]);
        for (const auto& e : c.elements)
            if (e.kind == ElementKind::VSource) names.push_back("I(" + e.name + ")");
    }
    for (const std::string& p : names) {
        if (p.size() > 3 && (p.rfind("I(", 0) == 0 || p.rfind("i(", 0) == 0) &&
            p.back() == ')') {
            const std::string src = p.substr(2, p.size() - 3);
            int ei = c.find_element(src);
            if (ei < 0 || c.elements[ei].kind != ElementKind::VSource)
                throw Error("probe '" + p + "': no such voltage source");
            plan.push_back({true, ei});
        } else {
            int n = c.find_node(p);
            if (n < 0) throw Error("probe '" + p + "': no such node");
            plan.push_back({false, n});
        }
        w.names.push_back(p);
    }
    w.cols.assign(w.names.size(), {});

    for (const auto& e : c.elements)
        if (e.kind == ElementKind::VSource &&
            e.source->kind == SourceSpec::Kind::Pulse &&
            std::min(e.source->rise, e.source->fall) < 4.0 * t_opts.dt)
            w.warnings.push_back("StepTooLarge: edges of " + e.name +
                                 " are shorter than 4*dt; decrease dt");

    const int n_steps =
        static_cast<int>(std::floor(t_opts.t_stop / t_opts.dt + 1e-9));

    StampContext ctx;
    ctx.time = 0.0;
    OperatingPoint op = solve_core(asmb, ctx, s_opts, nullptr);

    std::vector<double> v_prev(c.node_count(), 0.0);
    std::vector<double> cap_i_prev(asmb.n_caps, 0.0);
    auto record = [&](double t, const OperatingPoint& p) {
        w.x.push_back(t);
        for (size_t i = 0; i < plan.size(); ++i)
            w.cols[i].push_back(plan[i].is_branch
                                    ? p.branch_current.at(
                                          c.elements[plan[i].index].name)
                                    : p.node_voltage[plan[i].index]);
    };
    record(0.0, op);
    v_prev = op.node_voltage;

    Eigen::VectorXd x = op.unknowns;
    for (int k = 1; k <= n_steps; ++k) {
        const double t = k * t_opts.dt;
        StampContext step_ctx;
        step_ctx.time = t;
        step_ctx.transient = true;
        step_ctx.dt = t_opts.dt;
        // trapezoidal starts with one backward-Euler step
        step_ctx.method = (t_opts.method == IntegrationMethod::Trapezoidal &&
                           k == 1)
                              ? IntegrationMethod::BackwardEuler
                              : t_opts.method;
        step_ctx.v_prev = &v_prev;
        step_ctx.cap_current_prev = &cap_i_prev;
        OperatingPoint sp;
        try {
            sp = solve_core(asmb, step_ctx, s_opts, &x);
        } catch (const NoConvergence& e) {
            throw NoConvergence("transient step at t=" + format_number(t) +
                                    " did not converge",
                                e.trail(), e.residual());
        }
        // update capacitor companion state
        for (size_t ei = 0; ei < c.elements.size(); ++ei) {
            const int ci = asmb.cap_index[ei];
            if (ci < 0) continue;
            const FlatElement& e = c.elements[ei];
            const double v =
                sp.node_voltage[e.nodes[0]] - sp.node_voltage[e.nodes[1]];
            const double vp = v_prev[e.nodes[0]] - v_prev[e.nodes[1]];
            if (step_ctx.method == IntegrationMethod::Trapezoidal)
                cap_i_prev[ci] =
                    2.0 * e.value / t_opts.dt * (v - vp) - cap_i_prev[ci];
            else
                cap_i_prev[ci] = e.value / t_opts.dt * (v - vp);
        }
        v_prev = sp.node_voltage;
        x = sp.unknowns;
        record(t, sp);
    }
    return w;
}

double kcl_residual(const FlatCircuit& c, const OperatingPoint& op,
                    double time) {
    StampContext ctx;
    ctx.time = time;
    MnaSystem sys = stamp(c, op.unknowns, ctx);
    double worst = 0.0;
    for (int n = 0; n < c.node_count() - 1; ++n)
        worst = std::max(worst, std::abs(sys.residual[n]));
    return worst;
}

std::string Waveform::to_csv() const {
    std::ostringstream out;
    out << x_name;
    for (const auto& n : names) out << ',' << n;
    out << '\n';
    char buf[40];
    for (size_t r = 0; r < x.size(); ++r) {
        std::snprintf(buf, sizeof(buf), "%.9g", x[r]);
        out << buf;
        for (const auto& col : cols) {
            std::snprintf(buf, sizeof(buf), "%.9g", col[r]);
            out << ',' << buf;
        }
        out << '\n';
    }
    return out.str();
}

const std::vector<double>& Waveform::column(const std::string& name) const {
    for (size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return cols[i];
    throw Error("no column '" + name + "'");
}

}  // namespace molsim
