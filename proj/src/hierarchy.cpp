#include "mlmc/hierarchy.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace mlmc {

double level_work(double h, const ProblemRates& rates) {
    if (!(h > 0.0)) throw std::domain_error("level_work: h must be > 0");
    return std::pow(h, -rates.dgamma());
}

double level_variance_model(int level, const Hierarchy& hierarchy,
                            const ModelConstants& constants, const ProblemRates& rates) {
    if (level < 0 || level > hierarchy.levels())
        throw std::out_of_range("level_variance_model: level out of range");
    if (level == 0) return constants.v0;
    return constants.qs * std::pow(hierarchy.mesh_sizes[level - 1], rates.q2);
}

std::vector<double> model_variances(const Hierarchy& hierarchy, const ModelConstants& constants,
                                    const ProblemRates& rates) {
    std::vector<double> v(hierarchy.size());
    for (int l = 0; l <= hierarchy.levels(); ++l)
        v[l] = level_variance_model(l, hierarchy, constants, rates);
    return v;
}

std::vector<double> model_works(const Hierarchy& hierarchy, const ProblemRates& rates) {
    std::vector<double> w(hierarchy.size());
    for (std::size_t l = 0; l < hierarchy.size(); ++l)
        w[l] = level_work(hierarchy.mesh_sizes[l], rates);
    return w;
}

double total_work(const Hierarchy& hierarchy, const ProblemRates& rates) {
    double sum = 0.0;
    for (std::size_t l = 0; l < hierarchy.size(); ++l)
        sum += hierarchy.samples[l] * level_work(hierarchy.mesh_sizes[l], rates);
    return sum;
}

double estimator_variance(const Hierarchy& hierarchy, const std::vector<double>& variances) {
    if (variances.size() != hierarchy.size())
        throw std::invalid_argument("estimator_variance: variance list does not match hierarchy");
    double sum = 0.0;
    for (std::size_t l = 0; l < hierarchy.size(); ++l)
        sum += variances[l] / hierarchy.samples[l];
    return sum;
}

Hierarchy round_hierarchy(const Hierarchy& real, const MeshRule& rule) {
    if (real.kind != HierarchyKind::real_valued)
        throw std::invalid_argument("round_hierarchy: input must be real_valued");
    real.validate();

    Hierarchy out;
    out.kind = HierarchyKind::integer_feasible;
    for (std::size_t l = 0; l < real.size(); ++l) {
        double h = rule(real.mesh_sizes[l]);
        double m = std::ceil(real.samples[l] - 1e-12);
        if (m < 1.0) m = 1.0;
        if (!out.mesh_sizes.empty() && h == out.mesh_sizes.back()) {
            // Two levels rounded onto the same mesh: the difference would be
            // identically zero, so fold the samples into one level.
            out.samples.back() += m;
        } else {
            out.mesh_sizes.push_back(h);
            out.samples.push_back(m);
        }
    }
    out.validate();
    return out;
}

void to_json(nlohmann::json& j, const Hierarchy& hierarchy) {
    j = nlohmann::json{{"L", hierarchy.levels()},
                       {"h", hierarchy.mesh_sizes},
                       {"M", hierarchy.samples},
                       {"kind", to_string(hierarchy.kind)}};
}

void from_json(const nlohmann::json& j, Hierarchy& hierarchy) {
    hierarchy.mesh_sizes = j.at("h").get<std::vector<double>>();
    hierarchy.samples = j.at("M").get<std::vector<double>>();
    hierarchy.kind = hierarchy_kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("L") && j.at("L").get<int>() != hierarchy.levels())
        throw std::invalid_argument("Hierarchy json: L inconsistent with h length");
    hierarchy.validate();
}

std::string hierarchy_csv(const Hierarchy& hierarchy, const ModelConstants& constants,
                          const ProblemRates& rates) {
    std::string csv = "level,h,M,W,V\n";
    char line[160];
    for (int l = 0; l <= hierarchy.levels(); ++l) {
        std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%.17g,%.17g\n", l,
                      hierarchy.mesh_sizes[l], hierarchy.samples[l],
                      level_work(hierarchy.mesh_sizes[l], rates),
                      level_variance_model(l, hierarchy, constants, rates));
        csv += line;
    }
    return csv;
}

} // namespace mlmc
