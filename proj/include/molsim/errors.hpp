#pragma once

#include <stdexcept>
#include <string>

namespace molsim {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Netlist text rejected; carries the 1-based source line.
class ParseError : public Error {
public:
    ParseError(int line, const std::string& msg)
        : Error("line " + std::to_string(line) + ": " + msg), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

class UndefinedSubckt : public Error {
public:
    explicit UndefinedSubckt(const std::string& name)
        : Error("undefined subcircuit '" + name + "'") {}
};

class RecursionError : public Error {
public:
    explicit RecursionError(const std::string& msg) : Error(msg) {}
};

/// A node has no DC path to ground even with gmin augmentation.
class SingularTopology : public Error {
public:
    explicit SingularTopology(const std::string& msg) : Error(msg) {}
};

class NoConvergence : public Error {
public:
    NoConvergence(const std::string& msg, std::string trail, double residual)
        : Error(msg + " (tried: " + trail + ", residual " +
                std::to_string(residual) + ")"),
          trail_(std::move(trail)), residual_(residual) {}
    const std::string& trail() const { return trail_; }
    double residual() const { return residual_; }

private:
    std::string trail_;
    double residual_;
};

class WeightOverflow : public Error {
public:
    explicit WeightOverflow(const std::string& msg) : Error(msg) {}
};

class UnrealizableThreshold : public Error {
public:
    explicit UnrealizableThreshold(const std::string& msg) : Error(msg) {}
};

class MissingInput : public Error {
public:
    explicit MissingInput(const std::string& name)
        : Error("no assignment for input '" + name + "'") {}
};

class ScheduleError : public Error {
public:
    explicit ScheduleError(const std::string& msg) : Error(msg) {}
};

class ShapeNotFound : public Error {
public:
    explicit ShapeNotFound(const std::string& msg) : Error(msg) {}
};

}  // namespace molsim
