#include "epi/scenario_io.hpp"

#include "epi/expression.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace epi {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& msg) {
    throw std::runtime_error("scenario: " + msg);
}

/// A field spec is a number (constant), a string (expression in x), or an
/// array of per-node values.
Field parse_field(const json& spec, const TraitDomain& domain,
                  const std::string& where) {
    const Eigen::Index n = domain.size();
    if (spec.is_number()) return Field::Constant(n, spec.get<double>());
    if (spec.is_string()) {
        Expression e = Expression::parse(spec.get<std::string>());
        Field out(n);
        for (Eigen::Index i = 0; i < n; ++i) out(i) = e.eval(domain.nodes()(i));
        return out;
    }
    if (spec.is_array()) {
        if (static_cast<Eigen::Index>(spec.size()) != n)
            fail(where + ": array has " + std::to_string(spec.size()) +
                 " entries, domain has " + std::to_string(n));
        Field out(n);
        for (Eigen::Index i = 0; i < n; ++i) out(i) = spec[i].get<double>();
        return out;
    }
    fail(where + ": expected a number, an expression string, or an array");
}

Kernel parse_kernel(const json& spec, const TraitDomain& domain,
                    std::optional<RankNKernel>& low_rank) {
    const Eigen::Index n = domain.size();
    if (spec.is_number())
        return Kernel::Constant(n, n, spec.get<double>());
    if (spec.is_string()) {
        Expression e = Expression::parse(spec.get<std::string>());
        Kernel k(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j)
                k(i, j) = e.eval(domain.nodes()(i), domain.nodes()(j));
        return k;
    }
    if (spec.is_object() && spec.contains("terms")) {
        RankNKernel rk;
        for (const json& term : spec.at("terms")) {
            rk.beta.push_back(parse_field(term.at("beta"), domain, "beta term"));
            rk.p.push_back(parse_field(term.at("p"), domain, "p term"));
        }
        if (rk.beta.empty()) fail("beta.terms must be nonempty");
        low_rank = rk;
        return rk.to_dense(domain);
    }
    if (spec.is_object() && spec.contains("dense")) {
        const json& rows = spec.at("dense");
        if (static_cast<Eigen::Index>(rows.size()) != n)
            fail("beta.dense: row count mismatch");
        Kernel k(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const json& row = rows[i];
            if (static_cast<Eigen::Index>(row.size()) != n)
                fail("beta.dense: column count mismatch");
            for (Eigen::Index j = 0; j < n; ++j) k(i, j) = row[j].get<double>();
        }
        return k;
    }
    fail("beta: expected a number, an expression in x and y, {\"terms\": [...]} "
         "or {\"dense\": [[...]]}");
}

TraitDomain parse_domain(const json& spec, Eigen::Index n_override) {
    const std::string kind = spec.value("kind", "interval");
    if (kind == "interval") {
        const double lower = spec.at("lower").get<double>();
        const double upper = spec.at("upper").get<double>();
        Eigen::Index n = spec.value("n", Eigen::Index{101});
        if (n_override > 0) n = n_override;
        return TraitDomain::interval(lower, upper, n);
    }
    if (kind == "discrete") {
        const json& w = spec.at("weights");
        Field weights(static_cast<Eigen::Index>(w.size()));
        for (Eigen::Index i = 0; i < weights.size(); ++i)
            weights(i) = w[i].get<double>();
        std::vector<std::string> labels;
        if (spec.contains("labels"))
            labels = spec.at("labels").get<std::vector<std::string>>();
        return TraitDomain::discrete(std::move(weights), std::move(labels));
    }
    fail("domain.kind must be \"interval\" or \"discrete\"");
}

TwoBlockSpec parse_two_block(const json& spec) {
    TwoBlockSpec tb;
    tb.weight1 = spec.value("weight1", 1.0);
    tb.weight2 = spec.value("weight2", 1.0);
    tb.alpha1 = spec.at("alpha1").get<double>();
    tb.alpha2 = spec.at("alpha2").get<double>();
    tb.beta1 = spec.at("beta1").get<double>();
    tb.beta2 = spec.at("beta2").get<double>();
    tb.beta12 = spec.at("beta12").get<double>();
    tb.beta21 = spec.value("beta21", 0.0);
    tb.gamma1 = spec.at("gamma1").get<double>();
    tb.gamma2 = spec.at("gamma2").get<double>();
    tb.S1 = spec.at("S1").get<double>();
    tb.E1 = spec.value("E1", 0.0);
    tb.I1 = spec.value("I1", 0.0);
    tb.R1 = spec.value("R1", 0.0);
    tb.S2 = spec.at("S2").get<double>();
    tb.E2 = spec.value("E2", 0.0);
    tb.I2 = spec.value("I2", 0.0);
    tb.R2 = spec.value("R2", 0.0);
    return tb;
}

}  // namespace

Scenario scenario_from_json(const json& doc, Eigen::Index n_override) {
    if (doc.contains("two_block")) {
        Scenario s = make_two_block_scenario(parse_two_block(doc.at("two_block")));
        s.name = doc.value("name", s.name);
        s.description = doc.value("description", s.description);
        return s;
    }

    if (!doc.contains("domain")) fail("missing \"domain\" section");
    if (!doc.contains("params")) fail("missing \"params\" section");
    if (!doc.contains("initial")) fail("missing \"initial\" section");

    const TraitDomain domain = parse_domain(doc.at("domain"), n_override);
    const json& params = doc.at("params");
    Field alpha = parse_field(params.at("alpha"), domain, "alpha");
    Field gamma = parse_field(params.at("gamma"), domain, "gamma");
    std::optional<RankNKernel> low_rank;
    Kernel beta = parse_kernel(params.at("beta"), domain, low_rank);

    Scenario scenario;
    scenario.params = ModelParams::make(domain, std::move(alpha), std::move(gamma),
                                        std::move(beta), std::move(low_rank));
    const json& init = doc.at("initial");
    EpidemicState state;
    state.S = parse_field(init.at("S"), domain, "initial.S");
    state.E = init.contains("E") ? parse_field(init.at("E"), domain, "initial.E")
                                 : Field::Zero(domain.size());
    state.I = init.contains("I") ? parse_field(init.at("I"), domain, "initial.I")
                                 : Field::Zero(domain.size());
    state.R = init.contains("R") ? parse_field(init.at("R"), domain, "initial.R")
                                 : Field::Zero(domain.size());
    if (init.value("normalize", false))
        state = normalize(domain, state);
    scenario.initial = std::move(state);
    scenario.name = doc.value("name", "");
    scenario.description = doc.value("description", "");
    return scenario;
}

Scenario load_scenario(const std::string& path, Eigen::Index n_override) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open scenario file " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::runtime_error("scenario parse error in " + path + ": " +
                                 e.what());
    }
    return scenario_from_json(doc, n_override);
}

void write_text_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp);
        out << content;
        if (!out) throw std::runtime_error("write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("cannot rename " + tmp + " to " + path);
}

void write_json_atomic(const std::string& path, const json& doc) {
    write_text_atomic(path, doc.dump(2) + "\n");
}

std::uint64_t config_hash(const json& doc) {
    const std::string canonical = doc.dump();  // nlohmann sorts object keys
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : canonical) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace epi
