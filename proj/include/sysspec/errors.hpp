#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace sysspec {

/// Base class for all workbench errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct SyntaxError : Error {
    int line;
    std::string expected;
    SyntaxError(int line_, const std::string& expected_)
        : Error("syntax error at line " + std::to_string(line_) + ": expected " + expected_),
          line(line_), expected(expected_) {}
};

struct DuplicateModuleError : Error {
    std::string name;
    explicit DuplicateModuleError(const std::string& name_)
        : Error("duplicate module: " + name_), name(name_) {}
};

struct UnresolvedSymbolError : Error {
    std::string module, symbol;
    UnresolvedSymbolError(const std::string& module_, const std::string& symbol_)
        : Error("unresolved symbol '" + symbol_ + "' in module " + module_),
          module(module_), symbol(symbol_) {}
};

struct CycleError : Error {
    std::vector<std::string> cycle;
    explicit CycleError(std::vector<std::string> cycle_)
        : Error(describe(cycle_)), cycle(std::move(cycle_)) {}

  private:
    static std::string describe(const std::vector<std::string>& c) {
        std::string s = "cycle detected:";
        for (const auto& n : c) s += " " + n;
        return s;
    }
};

struct DanglingDependencyError : Error {
    std::string node, missing;
    DanglingDependencyError(const std::string& node_, const std::string& missing_)
        : Error("node '" + node_ + "' depends on unknown node '" + missing_ + "'"),
          node(node_), missing(missing_) {}
};

struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(msg) {}
};

}  // namespace sysspec
