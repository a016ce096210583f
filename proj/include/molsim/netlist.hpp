#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "molsim/devices.hpp"
#include "molsim/errors.hpp"

namespace molsim {

enum class ElementKind {
    Resistor,
    Capacitor,
    VSource,
    Diode,
    Rtd,
    Mfet,
    SubcktInstance,
};

/// Returns the element-name prefix letter for a kind (R, C, V, D, Q, M, X).
char kind_letter(ElementKind k);

/// Independent-source waveform: a DC level or a single/repeating pulse.
struct SourceSpec {
    enum class Kind { Dc, Pulse };
    Kind kind = Kind::Dc;
    double dc = 0.0;  // DC level [V]

    // PULSE(v0 v1 delay rise fall width period)
    double v0 = 0.0, v1 = 0.0;
    double delay = 0.0, rise = 0.0, fall = 0.0, width = 0.0, period = 0.0;

    static SourceSpec make_dc(double level);
    static SourceSpec make_pulse(double v0, double v1, double delay,
                                 double rise, double fall, double width,
                                 double period);

    double value_at(double t) const;
    bool operator==(const SourceSpec&) const = default;
};

enum class ModelType { Diode, Rtd, Mfet };

/// A `.model` card: named parameter set for D/Q/M elements.
struct ModelCard {
    std::string name;
    ModelType type = ModelType::Diode;
    std::map<std::string, double> params;  // lower-case names

    DiodeParams diode_params() const;
    RtdParams rtd_params() const;
    MfetParams mfet_params() const;
    bool operator==(const ModelCard&) const = default;
};

struct ElementDecl {
    std::string name;  // leading letter encodes the kind
    ElementKind kind = ElementKind::Resistor;
    std::vector<std::string> nodes;
    double value = 0.0;                      // R [ohm] / C [F]
    std::optional<SourceSpec> source;        // V
    std::string model_ref;                   // D/Q/M model, X subckt name
    std::map<std::string, double> params;    // instance overrides (area, m)

    bool operator==(const ElementDecl&) const = default;
};

struct SubcktDef {
    std::string name;
    std::vector<std::string> ports;
    std::vector<ElementDecl> elements;
    bool operator==(const SubcktDef&) const = default;
};

enum class IntegrationMethod { BackwardEuler, Trapezoidal };

struct TranDirective {
    double dt = 0.0;
    double t_stop = 0.0;
    IntegrationMethod method = IntegrationMethod::BackwardEuler;
    bool operator==(const TranDirective&) const = default;
};

struct DcDirective {
    std::string source;
    double start = 0.0, stop = 0.0, step = 0.0;
    bool operator==(const DcDirective&) const = default;
};

/// Parsed circuit description: ordered elements plus subcircuit/model
/// definitions and optional analysis directives.
struct Netlist {
    std::string title;
    std::vector<ElementDecl> elements;
    std::map<std::string, SubcktDef> subckts;  // upper-cased names
    std::map<std::string, ModelCard> models;   // upper-cased names
    std::optional<TranDirective> tran;
    std::optional<DcDirective> dc;

    bool operator==(const Netlist&) const = default;
};

/// Fully elaborated element: node indices into the flat node table and
/// resolved device parameters.
struct FlatElement {
    std::string name;  // hierarchical, e.g. "X1.R2"
    ElementKind kind = ElementKind::Resistor;
    std::vector<int> nodes;  // ground == 0
    double value = 0.0;
    std::optional<SourceSpec> source;
    std::variant<std::monostate, DiodeParams, RtdParams, MfetParams> device;
    double scale = 1.0;  // RTD area / FET parallel multiplier
};

/// Elaborated netlist: subcircuits expanded, models resolved, nodes indexed
/// in order of first appearance with ground at index 0. Immutable by
/// convention after construction.
struct FlatCircuit {
    std::vector<std::string> node_names;  // node_names[0] == "0"
    std::vector<FlatElement> elements;
    std::optional<TranDirective> tran;
    std::optional<DcDirective> dc;

    int node_count() const { return static_cast<int>(node_names.size()); }
    /// Index of a named node, or -1 when absent.
    int find_node(const std::string& name) const;
    /// Index into elements of a named element, or -1.
    int find_element(const std::string& name) const;
};

/// Parses a complete netlist file. `*` starts a comment line, `+` a
/// continuation; keywords and element letters are case-insensitive, node
/// names case-sensitive. Rejects anything outside the closed dialect.
Netlist parse_netlist(const std::string& text);

/// Expands subcircuit instances (hierarchical names `inst.node`, global
/// ground, nesting depth <= 32) and resolves model references.
FlatCircuit flatten(const Netlist& n);

/// Deterministic text form; parse_netlist(serialize(n)) == n.
std::string serialize(const Netlist& n);

/// Parses a number with optional engineering suffix
/// (f p n u m k meg g); throws ParseError{line} on malformed input.
double parse_number(const std::string& token, int line);

/// Shortest decimal form that round-trips exactly through parse_number.
std::string format_number(double v);

}  // namespace molsim
