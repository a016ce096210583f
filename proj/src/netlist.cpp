#include "molsim/netlist.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

namespace molsim {

char kind_letter(ElementKind k) {
    switch (k) {
        case ElementKind::Resistor: return 'R';
        case ElementKind::Capacitor: return 'C';
        case ElementKind::VSource: return 'V';
        case ElementKind::Diode: return 'D';
        case ElementKind::Rtd: return 'Q';
        case ElementKind::Mfet: return 'M';
        case ElementKind::SubcktInstance: return 'X';
    }
    return '?';
}

SourceSpec SourceSpec::make_dc(double level) {
    SourceSpec s;
    s.kind = Kind::Dc;
    s.dc = level;
    return s;
}

SourceSpec SourceSpec::make_pulse(double v0, double v1, double delay,
                                  double rise, double fall, double width,
                                  double period) {
    SourceSpec s;
    s.kind = Kind::Pulse;
    s.v0 = v0;
    s.v1 = v1;
    s.delay = delay;
    s.rise = rise;
    s.fall = fall;
    s.width = width;
    s.period = period;
    if (!(rise > 0) || !(fall > 0) || !(width > 0))
        throw Error("pulse rise, fall and width must be > 0");
    if (!(period >= rise + fall + width))
        throw Error("pulse period must cover rise+width+fall");
    for (double v : {v0, v1, delay, rise, fall, width, period})
        if (!std::isfinite(v)) throw Error("pulse parameters must be finite");
    return s;
}

double SourceSpec::value_at(double t) const {
    if (kind == Kind::Dc) return dc;
    if (t <= delay) return v0;
    double tc = std::fmod(t - delay, period);
    if (tc < rise) return v0 + (v1 - v0) * tc / rise;
    tc -= rise;
    if (tc < width) return v1;
    tc -= width;
    if (tc < fall) return v1 + (v0 - v1) * tc / fall;
    return v0;
}

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::string upper(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return std::toupper(c); });
    return s;
}

double get_param(const std::map<std::string, double>& m, const std::string& k,
                 double dflt) {
    auto it = m.find(k);
    return it == m.end() ? dflt : it->second;
}

}  // namespace

DiodeParams ModelCard::diode_params() const {
    DiodeParams p;
    p.i_sat = get_param(params, "is", p.i_sat);
    p.n_ideality = get_param(params, "n", p.n_ideality);
    p.v_thermal = get_param(params, "vt", p.v_thermal);
    p.g_min = get_param(params, "gmin", p.g_min);
    p.validate();
    return p;
}

RtdParams ModelCard::rtd_params() const {
    RtdParams p;
    p.i_peak = get_param(params, "ip", p.i_peak);
    p.v_peak = get_param(params, "vp", p.v_peak);
    p.i_valley = get_param(params, "iv", p.i_valley);
    p.v_valley = get_param(params, "vv", p.v_valley);
    p.v_rise2 = get_param(params, "vr2", p.v_rise2);
    p.validate();
    return p;
}

MfetParams ModelCard::mfet_params() const {
    MfetParams p;
    p.k_trans = get_param(params, "k", p.k_trans);
    p.v_th = get_param(params, "vth", p.v_th);
    p.lambda = get_param(params, "lambda", p.lambda);
    p.validate();
    return p;
}

double parse_number(const std::string& token, int line) {
    if (token.empty()) throw ParseError(line, "expected a number");
    const char* begin = token.c_str();
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    if (end == begin || !std::isfinite(v))
        throw ParseError(line, "malformed number '" + token + "'");
    std::string suffix = lower(token.substr(end - begin));
    double mult = 1.0;
    if (suffix.empty())
        mult = 1.0;
    else if (suffix == "f")
        mult = 1e-15;
    else if (suffix == "p")
        mult = 1e-12;
    else if (suffix == "n")
        mult = 1e-9;
    else if (suffix == "u")
        mult = 1e-6;
    else if (suffix == "m")
        mult = 1e-3;
    else if (suffix == "k")
        mult = 1e3;
    else if (suffix == "meg")
        mult = 1e6;
    else if (suffix == "g")
        mult = 1e9;
    else
        throw ParseError(line, "unknown suffix '" + suffix + "' in '" + token + "'");
    return v * mult;
}

std::string format_number(double v) {
    char buf[40];
    for (int prec : {15, 16, 17}) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

namespace {

// One logical (continuation-joined) input line.
struct Line {
    int number = 0;  // 1-based line of the first physical line
    std::vector<std::string> tokens;
};

// Splits into whitespace-separated tokens; '(', ')', '=' and ',' act as
// separators so "PULSE(0 1)" and "is=1e-9" tokenize uniformly.
std::vector<std::string> tokenize(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c)) || c == '(' ||
            c == ')' || c == '=' || c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::vector<Line> logical_lines(const std::string& text) {
    std::vector<Line> lines;
    std::istringstream in(text);
    std::string raw;
    int num = 0;
    while (std::getline(in, raw)) {
        ++num;
        if (!raw.empty() && raw.back() == '\r') raw.pop_back();
        size_t first = raw.find_first_not_of(" \t");
        if (first == std::string::npos) continue;  // blank
        if (raw[first] == '*') continue;           // comment
        if (raw[first] == '+') {
            if (lines.empty())
                throw ParseError(num, "continuation with nothing to continue");
            auto toks = tokenize(raw.substr(first + 1));
            auto& dst = lines.back().tokens;
            dst.insert(dst.end(), toks.begin(), toks.end());
            continue;
        }
        Line l;
        l.number = num;
        l.tokens = tokenize(raw);
        lines.push_back(std::move(l));
    }
    return lines;
}

class Parser {
public:
    explicit Parser(const std::string& text) : lines_(logical_lines(text)) {}

    Netlist run() {
        Netlist n;
        bool ended = false;
        for (size_t i = 0; i < lines_.size() && !ended; ++i) {
            const Line& l = lines_[i];
            const std::string head = lower(l.tokens.at(0));
            if (head[0] == '.') {
                i = directive(n, i, ended);
            } else {
                n.elements.push_back(element(l, n.elements));
            }
        }
        return n;
    }

private:
    size_t directive(Netlist& n, size_t i, bool& ended) {
        const Line& l = lines_[i];
        const std::string head = lower(l.tokens[0]);
        if (head == ".end") {
            ended = true;
        } else if (head == ".title") {
            n.title = join_tail(l, 1);
        } else if (head == ".model") {
            add_model(n, l);
        } else if (head == ".subckt") {
            return subckt(n, i);
        } else if (head == ".ends") {
            throw ParseError(l.number, ".ends without .subckt");
        } else if (head == ".tran") {
            n.tran = tran_directive(l);
        } else if (head == ".dc") {
            if (l.tokens.size() != 5)
                throw ParseError(l.number, ".dc needs: source start stop step");
            DcDirective d;
            d.source = l.tokens[1];
            d.start = parse_number(l.tokens[2], l.number);
            d.stop = parse_number(l.tokens[3], l.number);
            d.step = parse_number(l.tokens[4], l.number);
            n.dc = d;
        } else {
            throw ParseError(l.number, "unknown directive '" + l.tokens[0] + "'");
        }
        return i;
    }

    static std::string join_tail(const Line& l, size_t from) {
        std::string s;
        for (size_t i = from; i < l.tokens.size(); ++i) {
            if (!s.empty()) s += ' ';
            s += l.tokens[i];
        }
        return s;
    }

    TranDirective tran_directive(const Line& l) {
        if (l.tokens.size() < 3 || l.tokens.size() > 4)
            throw ParseError(l.number, ".tran needs: dt t_stop [be|trap]");
        TranDirective t;
        t.dt = parse_number(l.tokens[1], l.number);
        t.t_stop = parse_number(l.tokens[2], l.number);
        if (l.tokens.size() == 4) {
            std::string m = lower(l.tokens[3]);
            if (m == "be")
                t.method = IntegrationMethod::BackwardEuler;
            else if (m == "trap")
                t.method = IntegrationMethod::Trapezoidal;
            else
                throw ParseError(l.number, "unknown method '" + l.tokens[3] + "'");
        }
        if (!(t.dt > 0) || !(t.dt <= t.t_stop))
            throw ParseError(l.number, ".tran needs 0 < dt <= t_stop");
        return t;
    }

    void add_model(Netlist& n, const Line& l) {
        if (l.tokens.size() < 3)
            throw ParseError(l.number, ".model needs: name type [params]");
        ModelCard card;
        card.name = upper(l.tokens[1]);
        const std::string type = lower(l.tokens[2]);
        const std::map<std::string, double>* allowed = nullptr;
        static const std::map<std::string, double> diode_keys{
            {"is", 0}, {"n", 0}, {"vt", 0}, {"gmin", 0}};
        static const std::map<std::string, double> rtd_keys{
            {"ip", 0}, {"vp", 0}, {"iv", 0}, {"vv", 0}, {"vr2", 0}};
        static const std::map<std::string, double> mfet_keys{
            {"k", 0}, {"vth", 0}, {"lambda", 0}};
        if (type == "diode" || type == "d") {
            card.type = ModelType::Diode;
            allowed = &diode_keys;
        } else if (type == "rtd") {
            card.type = ModelType::Rtd;
            allowed = &rtd_keys;
        } else if (type == "mfet") {
            card.type = ModelType::Mfet;
            allowed = &mfet_keys;
        } else {
            throw ParseError(l.number, "unknown model type '" + l.tokens[2] + "'");
        }
        if ((l.tokens.size() - 3) % 2 != 0)
            throw ParseError(l.number, "model parameters must be name=value pairs");
        for (size_t i = 3; i + 1 < l.tokens.size(); i += 2) {
            std::string key = lower(l.tokens[i]);
            if (!allowed->count(key))
                throw ParseError(l.number,
                                 "unknown parameter '" + l.tokens[i] + "' for model type");
            card.params[key] = parse_number(l.tokens[i + 1], l.number);
        }
        try {
            switch (card.type) {
                case ModelType::Diode: card.diode_params(); break;
                case ModelType::Rtd: card.rtd_params(); break;
                case ModelType::Mfet: card.mfet_params(); break;
            }
        } catch (const Error& e) {
            throw ParseError(l.number, e.what());
        }
        if (!n.models.emplace(card.name, card).second)
            throw ParseError(l.number, "duplicate model '" + card.name + "'");
    }

    size_t subckt(Netlist& n, size_t i) {
        const Line& l = lines_[i];
        if (l.tokens.size() < 2)
            throw ParseError(l.number, ".subckt needs a name and ports");
        SubcktDef def;
        def.name = upper(l.tokens[1]);
        for (size_t k = 2; k < l.tokens.size(); ++k) {
            if (l.tokens[k] == "0")
                throw ParseError(l.number, "ground may not be a subckt port");
            def.ports.push_back(l.tokens[k]);
        }
        ++i;
        for (; i < lines_.size(); ++i) {
            const Line& el = lines_[i];
            const std::string head = lower(el.tokens[0]);
            if (head == ".ends") {
                if (el.tokens.size() > 1 && upper(el.tokens[1]) != def.name)
                    throw ParseError(el.number, ".ends name mismatch");
                if (!n.subckts.emplace(def.name, def).second)
                    throw ParseError(l.number, "duplicate subckt '" + def.name + "'");
                return i;
            }
            if (head[0] == '.')
                throw ParseError(el.number,
                                 "directive '" + el.tokens[0] + "' not allowed in .subckt");
            def.elements.push_back(element(el, def.elements));
        }
        throw ParseError(l.number, "unterminated .subckt '" + def.name + "'");
    }

    ElementDecl element(const Line& l, const std::vector<ElementDecl>& scope) {
        ElementDecl e;
        e.name = l.tokens[0];
        for (const auto& other : scope)
            if (other.name == e.name)
                throw ParseError(l.number, "duplicate element '" + e.name + "'");
        switch (std::toupper(static_cast<unsigned char>(e.name[0]))) {
            case 'R': two_terminal_value(e, ElementKind::Resistor, l); break;
            case 'C': two_terminal_value(e, ElementKind::Capacitor, l); break;
            case 'V': vsource(e, l); break;
            case 'D': modeled(e, ElementKind::Diode, 2, l); break;
            case 'Q': modeled(e, ElementKind::Rtd, 2, l); break;
            case 'M': modeled(e, ElementKind::Mfet, 3, l); break;
            case 'X': instance(e, l); break;
            default:
                throw ParseError(l.number,
                                 "unknown element kind '" + e.name.substr(0, 1) + "'");
        }
        return e;
    }

    void two_terminal_value(ElementDecl& e, ElementKind kind, const Line& l) {
        e.kind = kind;
        if (l.tokens.size() != 4)
            throw ParseError(l.number, e.name + " needs: node node value");
        e.nodes = {l.tokens[1], l.tokens[2]};
        e.value = parse_number(l.tokens[3], l.number);
        if (!(e.value > 0))
            throw ParseError(l.number, e.name + " value must be > 0");
    }

    void vsource(ElementDecl& e, const Line& l) {
        e.kind = ElementKind::VSource;
        if (l.tokens.size() < 4)
            throw ParseError(l.number, e.name + " needs: node node value");
        e.nodes = {l.tokens[1], l.tokens[2]};
        const std::string w = lower(l.tokens[3]);
        try {
            if (w == "pulse") {
                if (l.tokens.size() != 11)
                    throw ParseError(l.number,
                                     "PULSE needs 7 values: v0 v1 delay rise fall width period");
                double a[7];
                for (int i = 0; i < 7; ++i)
                    a[i] = parse_number(l.tokens[4 + i], l.number);
                e.source = SourceSpec::make_pulse(a[0], a[1], a[2], a[3], a[4],
                                                  a[5], a[6]);
            } else if (w == "dc") {
                if (l.tokens.size() != 5)
                    throw ParseError(l.number, "DC needs one value");
                e.source = SourceSpec::make_dc(parse_number(l.tokens[4], l.number));
            } else {
                if (l.tokens.size() != 4)
                    throw ParseError(l.number, "unexpected tokens after source value");
                e.source = SourceSpec::make_dc(parse_number(l.tokens[3], l.number));
            }
        } catch (const ParseError&) {
            throw;
        } catch (const Error& err) {
            throw ParseError(l.number, err.what());
        }
    }

    void modeled(ElementDecl& e, ElementKind kind, int nnodes, const Line& l) {
        e.kind = kind;
        if (static_cast<int>(l.tokens.size()) < nnodes + 2)
            throw ParseError(l.number,
                             e.name + " needs " + std::to_string(nnodes) +
                                 " nodes and a model name");
        for (int i = 0; i < nnodes; ++i) e.nodes.push_back(l.tokens[1 + i]);
        e.model_ref = upper(l.tokens[1 + nnodes]);
        size_t rest = 2 + nnodes;
        if ((l.tokens.size() - rest) % 2 != 0)
            throw ParseError(l.number, "instance parameters must be name=value pairs");
        for (size_t i = rest; i + 1 < l.tokens.size(); i += 2) {
            std::string key = lower(l.tokens[i]);
            bool ok = (kind == ElementKind::Rtd && key == "area") ||
                      (kind == ElementKind::Mfet && key == "m");
            if (!ok)
                throw ParseError(l.number,
                                 "unknown instance parameter '" + l.tokens[i] + "'");
            double v = parse_number(l.tokens[i + 1], l.number);
            if (!(v > 0))
                throw ParseError(l.number, key + " must be > 0");
            e.params[key] = v;
        }
    }

    void instance(ElementDecl& e, const Line& l) {
        e.kind = ElementKind::SubcktInstance;
        if (l.tokens.size() < 3)
            throw ParseError(l.number, e.name + " needs nodes and a subckt name");
        for (size_t i = 1; i + 1 < l.tokens.size(); ++i)
            e.nodes.push_back(l.tokens[i]);
        e.model_ref = upper(l.tokens.back());
    }

    std::vector<Line> lines_;
};

}  // namespace

Netlist parse_netlist(const std::string& text) { return Parser(text).run(); }

namespace {

constexpr int kMaxDepth = 32;

class Flattener {
public:
    explicit Flattener(const Netlist& n) : net_(n) {
        out_.node_names.push_back("0");
        out_.tran = n.tran;
        out_.dc = n.dc;
    }

    FlatCircuit run() {
        expand(net_.elements, "", {}, 0);
        check_dangling();
        return std::move(out_);
    }

private:
    int node_index(const std::string& global_name) {
        for (size_t i = 0; i < out_.node_names.size(); ++i)
            if (out_.node_names[i] == global_name) return static_cast<int>(i);
        out_.node_names.push_back(global_name);
        return static_cast<int>(out_.node_names.size()) - 1;
    }

    // Maps a local node name to its global name given the instance context.
    std::string resolve(const std::string& local, const std::string& prefix,
                        const std::map<std::string, std::string>& ports) {
        if (local == "0") return "0";
        auto it = ports.find(local);
        if (it != ports.end()) return it->second;
        return prefix + local;
    }

    void expand(const std::vector<ElementDecl>& elements,
                const std::string& prefix,
                const std::map<std::string, std::string>& ports, int depth) {
        if (depth > kMaxDepth)
            throw RecursionError("subcircuit nesting deeper than " +
                                 std::to_string(kMaxDepth));
        for (const ElementDecl& e : elements) {
            if (e.kind == ElementKind::SubcktInstance) {
                auto it = net_.subckts.find(e.model_ref);
                if (it == net_.subckts.end()) throw UndefinedSubckt(e.model_ref);
                const SubcktDef& def = it->second;
                if (def.ports.size() != e.nodes.size())
                    throw Error("instance " + prefix + e.name + " has " +
                                std::to_string(e.nodes.size()) + " nodes, subckt " +
                                def.name + " has " +
                                std::to_string(def.ports.size()) + " ports");
                std::map<std::string, std::string> child_ports;
                for (size_t i = 0; i < def.ports.size(); ++i)
                    child_ports[def.ports[i]] =
                        resolve(e.nodes[i], prefix, ports);
                expand(def.elements, prefix + e.name + ".", child_ports,
                       depth + 1);
                continue;
            }
            FlatElement f;
            f.name = prefix + e.name;
            f.kind = e.kind;
            f.value = e.value;
            f.source = e.source;
            for (const std::string& n : e.nodes)
                f.nodes.push_back(node_index(resolve(n, prefix, ports)));
            resolve_device(f, e);
            out_.elements.push_back(std::move(f));
        }
    }

    void resolve_device(FlatElement& f, const ElementDecl& e) {
        if (e.kind != ElementKind::Diode && e.kind != ElementKind::Rtd &&
            e.kind != ElementKind::Mfet)
            return;
        auto it = net_.models.find(e.model_ref);
        if (it == net_.models.end())
            throw Error("element " + f.name + " references undefined model '" +
                        e.model_ref + "'");
        const ModelCard& card = it->second;
        switch (e.kind) {
            case ElementKind::Diode:
                if (card.type != ModelType::Diode)
                    throw Error(f.name + ": model '" + card.name + "' is not a diode");
                f.device = card.diode_params();
                break;
            case ElementKind::Rtd:
                if (card.type != ModelType::Rtd)
                    throw Error(f.name + ": model '" + card.name + "' is not an rtd");
                f.device = card.rtd_params();
                f.scale = get_param(e.params, "area", 1.0);
                break;
            case ElementKind::Mfet:
                if (card.type != ModelType::Mfet)
                    throw Error(f.name + ": model '" + card.name + "' is not an mfet");
                f.device = card.mfet_params();
                f.scale = get_param(e.params, "m", 1.0);
                break;
            default:
                break;
        }
    }

    void check_dangling() {
        std::vector<int> touched(out_.node_names.size(), 0);
        for (const FlatElement& e : out_.elements)
            for (int n : e.nodes) touched[n]++;
        for (size_t i = 1; i < touched.size(); ++i)
            if (touched[i] == 0)
                throw Error("dangling node '" + out_.node_names[i] + "'");
    }

    const Netlist& net_;
    FlatCircuit out_;
};

}  // namespace

FlatCircuit flatten(const Netlist& n) { return Flattener(n).run(); }

int FlatCircuit::find_node(const std::string& name) const {
    for (size_t i = 0; i < node_names.size(); ++i)
        if (node_names[i] == name) return static_cast<int>(i);
    return -1;
}

int FlatCircuit::find_element(const std::string& name) const {
    for (size_t i = 0; i < elements.size(); ++i)
        if (elements[i].name == name) return static_cast<int>(i);
    return -1;
}

namespace {

void write_element(std::ostringstream& out, const ElementDecl& e) {
    out << e.name;
    for (const auto& n : e.nodes) out << ' ' << n;
    switch (e.kind) {
        case ElementKind::Resistor:
        case ElementKind::Capacitor:
            out << ' ' << format_number(e.value);
            break;
        case ElementKind::VSource:
            if (e.source->kind == SourceSpec::Kind::Dc) {
                out << " DC " << format_number(e.source->dc);
            } else {
                const SourceSpec& s = *e.source;
                out << " PULSE(" << format_number(s.v0) << ' '
                    << format_number(s.v1) << ' ' << format_number(s.delay) << ' '
                    << format_number(s.rise) << ' ' << format_number(s.fall) << ' '
                    << format_number(s.width) << ' ' << format_number(s.period)
                    << ')';
            }
            break;
        case ElementKind::Diode:
        case ElementKind::Rtd:
        case ElementKind::Mfet:
            out << ' ' << e.model_ref;
            for (const auto& [k, v] : e.params)
                out << ' ' << k << '=' << format_number(v);
            break;
        case ElementKind::SubcktInstance:
            out << ' ' << e.model_ref;
            break;
    }
    out << '\n';
}

const char* model_type_name(ModelType t) {
    switch (t) {
        case ModelType::Diode: return "diode";
        case ModelType::Rtd: return "rtd";
        case ModelType::Mfet: return "mfet";
    }
    return "?";
}

}  // namespace

std::string serialize(const Netlist& n) {
    std::ostringstream out;
    if (!n.title.empty()) out << ".title " << n.title << '\n';
    for (const auto& [name, card] : n.models) {
        out << ".model " << name << ' ' << model_type_name(card.type) << " (";
        bool first = true;
        for (const auto& [k, v] : card.params) {
            if (!first) out << ' ';
            first = false;
            out << k << '=' << format_number(v);
        }
        out << ")\n";
    }
    for (const auto& [name, def] : n.subckts) {
        out << ".subckt " << name;
        for (const auto& p : def.ports) out << ' ' << p;
        out << '\n';
        for (const auto& e : def.elements) write_element(out, e);
        out << ".ends " << name << '\n';
    }
    for (const auto& e : n.elements) write_element(out, e);
    if (n.tran) {
        out << ".tran " << format_number(n.tran->dt) << ' '
            << format_number(n.tran->t_stop) << ' '
            << (n.tran->method == IntegrationMethod::Trapezoidal ? "trap" : "be")
            << '\n';
    }
    if (n.dc) {
        out << ".dc " << n.dc->source << ' ' << format_number(n.dc->start) << ' '
            << format_number(n.dc->stop) << ' ' << format_number(n.dc->step)
            << '\n';
    }
    out << ".end\n";
    return out.str();
}

}  // namespace molsim
