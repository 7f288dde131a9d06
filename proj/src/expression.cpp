#include "epi/expression.hpp"

#include <cctype>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace epi {

struct Expression::Node {
    enum class Kind { Number, Variable, Unary, Binary, Call };
    Kind kind;
    double value = 0.0;
    std::string name;          // variable or function name
    char op = 0;               // binary operator
    std::shared_ptr<const Node> lhs, rhs;
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;
using Node = Expression::Node;

NodePtr make_number(double v) {
    auto n = std::make_shared<Node>();
    n->kind = Node::Kind::Number;
    n->value = v;
    return n;
}

class Parser {
public:
    explicit Parser(const std::string& text) : text_(text) {}

    NodePtr run() {
        NodePtr e = expression();
        skip_ws();
        if (pos_ != text_.size())
            fail("unexpected trailing input");
        return e;
    }

private:
    const std::string& text_;
    size_t pos_ = 0;

    [[noreturn]] void fail(const std::string& msg) const {
        throw std::invalid_argument("expression parse error at position " +
                                    std::to_string(pos_) + ": " + msg +
                                    " in \"" + text_ + "\"");
    }

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_])))
            ++pos_;
    }

    bool eat(char c) {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    char peek() {
        skip_ws();
        return pos_ < text_.size() ? text_[pos_] : '\0';
    }

    NodePtr expression() {
        NodePtr lhs = term();
        for (;;) {
            if (eat('+')) lhs = binary('+', lhs, term());
            else if (eat('-')) lhs = binary('-', lhs, term());
            else return lhs;
        }
    }

    NodePtr term() {
        NodePtr lhs = unary();
        for (;;) {
            if (eat('*')) lhs = binary('*', lhs, unary());
            else if (eat('/')) lhs = binary('/', lhs, unary());
            else return lhs;
        }
    }

    NodePtr unary() {
        if (eat('-')) {
            auto n = std::make_shared<Node>();
            n->kind = Node::Kind::Unary;
            n->lhs = unary();
            return n;
        }
        return power();
    }

    NodePtr power() {
        NodePtr base = primary();
        if (eat('^')) return binary('^', base, unary());  // right-associative
        return base;
    }

    static NodePtr binary(char op, NodePtr lhs, NodePtr rhs) {
        auto n = std::make_shared<Node>();
        n->kind = Node::Kind::Binary;
        n->op = op;
        n->lhs = std::move(lhs);
        n->rhs = std::move(rhs);
        return n;
    }

    NodePtr primary() {
        skip_ws();
        if (pos_ >= text_.size()) fail("unexpected end of input");
        const char c = text_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.')
            return number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_')
            return identifier();
        if (eat('(')) {
            NodePtr e = expression();
            if (!eat(')')) fail("missing ')'");
            return e;
        }
        fail("expected number, identifier or '('");
    }

    NodePtr number() {
        size_t end = pos_;
        while (end < text_.size() &&
               (std::isdigit(static_cast<unsigned char>(text_[end])) ||
                text_[end] == '.' || text_[end] == 'e' || text_[end] == 'E' ||
                ((text_[end] == '+' || text_[end] == '-') && end > pos_ &&
                 (text_[end - 1] == 'e' || text_[end - 1] == 'E'))))
            ++end;
        try {
            size_t used = 0;
            const double v = std::stod(text_.substr(pos_, end - pos_), &used);
            pos_ += used;
            return make_number(v);
        } catch (const std::exception&) {
            fail("malformed number");
        }
    }

    NodePtr identifier() {
        size_t end = pos_;
        while (end < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[end])) || text_[end] == '_'))
            ++end;
        std::string name = text_.substr(pos_, end - pos_);
        pos_ = end;
        if (name == "pi") return make_number(M_PI);
        if (eat('(')) {
            auto n = std::make_shared<Node>();
            n->kind = Node::Kind::Call;
            n->name = std::move(name);
            n->lhs = expression();
            if (!eat(')')) fail("missing ')' after function argument");
            return n;
        }
        auto n = std::make_shared<Node>();
        n->kind = Node::Kind::Variable;
        n->name = std::move(name);
        return n;
    }
};

double eval_node(const Node& n, const std::map<std::string, double>& vars) {
    switch (n.kind) {
        case Node::Kind::Number:
            return n.value;
        case Node::Kind::Variable: {
            auto it = vars.find(n.name);
            if (it == vars.end())
                throw std::invalid_argument("expression: unknown variable '" + n.name + "'");
            return it->second;
        }
        case Node::Kind::Unary:
            return -eval_node(*n.lhs, vars);
        case Node::Kind::Binary: {
            const double a = eval_node(*n.lhs, vars);
            const double b = eval_node(*n.rhs, vars);
            switch (n.op) {
                case '+': return a + b;
                case '-': return a - b;
                case '*': return a * b;
                case '/': return a / b;
                case '^': return std::pow(a, b);
            }
            throw std::logic_error("expression: bad operator");
        }
        case Node::Kind::Call: {
            const double a = eval_node(*n.lhs, vars);
            if (n.name == "exp") return std::exp(a);
            if (n.name == "log") return std::log(a);
            if (n.name == "sin") return std::sin(a);
            if (n.name == "cos") return std::cos(a);
            if (n.name == "sqrt") return std::sqrt(a);
            if (n.name == "abs") return std::abs(a);
            throw std::invalid_argument("expression: unknown function '" + n.name + "'");
        }
    }
    throw std::logic_error("expression: bad node");
}

}  // namespace

Expression Expression::parse(const std::string& text) {
    Expression e;
    e.text_ = text;
    e.root_ = Parser(text).run();
    return e;
}

double Expression::eval(const std::map<std::string, double>& vars) const {
    if (!root_) throw std::logic_error("expression: empty");
    return eval_node(*root_, vars);
}

}  // namespace epi
