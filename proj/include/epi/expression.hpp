#pragma once

#include <map>
#include <memory>
#include <string>

namespace epi {

/// Parsed arithmetic expression over named variables.
///
/// Grammar: numbers, identifiers, + - * / ^ (right-assoc), unary minus,
/// parentheses, and the functions exp, log, sin, cos, sqrt, abs.
/// The constant pi is predefined. Used for coefficient fields in scenario
/// files, evaluated at the grid nodes (variables x and, for kernels, y).
class Expression {
public:
    static Expression parse(const std::string& text);

    double eval(const std::map<std::string, double>& vars) const;
    double eval(double x) const { return eval({{"x", x}}); }
    double eval(double x, double y) const { return eval({{"x", x}, {"y", y}}); }

    const std::string& text() const { return text_; }

    struct Node;

private:
    Expression() = default;
    std::string text_;
    std::shared_ptr<const Node> root_;
};

}  // namespace epi
