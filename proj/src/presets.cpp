#include "mlmc/presets.hpp"

#include <stdexcept>

namespace mlmc {

namespace {

Hierarchy pilot_hierarchy(std::initializer_list<double> inverse_meshes, double samples) {
    Hierarchy h;
    h.kind = HierarchyKind::integer_feasible;
    for (double n : inverse_meshes) {
        h.mesh_sizes.push_back(1.0 / n);
        h.samples.push_back(samples);
    }
    h.validate();
    return h;
}

Preset make_ex1(const std::string& name, double gamma, double work_to_seconds) {
    Preset p;
    p.name = name;
    p.rates = ProblemRates{2.0, 4.0, 3, gamma};
    p.constants = ModelConstants{1.3653, 0.1519, 0.0565, 2.0};
    p.reference_value = 1.6026;
    p.work_to_seconds = work_to_seconds;
    p.h_max = 0.5;
    p.continuation.tol_max = 0.5;
    p.continuation.r1 = 2.0;
    p.continuation.r2 = 1.1;
    p.continuation.l_inc = 2;
    p.continuation.calib_levels = 3;
    p.continuation.initial_hierarchy = pilot_hierarchy({4.0, 6.0, 8.0}, 10.0);
    p.sampler = std::make_shared<SyntheticSampler>(
        SyntheticParams{p.reference_value, p.constants, p.rates});
    return p;
}

Preset make_ex2() {
    Preset p;
    p.name = "ex2";
    p.rates = ProblemRates{1.0, 2.0, 1, 1.0};
    p.constants = ModelConstants{0.0307, 0.2630, 1.7805, 2.0};
    GbmParams gbm;
    p.reference_value = gbm.exact_value();
    p.work_to_seconds = 9e-8;
    p.h_max = 1.0;
    p.continuation.tol_max = 0.1;
    p.continuation.r1 = 2.0;
    p.continuation.r2 = 1.1;
    p.continuation.l_inc = 2;
    p.continuation.calib_levels = 5;
    p.continuation.initial_hierarchy = pilot_hierarchy({1.0, 2.0, 4.0}, 10.0);
    p.sampler = std::make_shared<GbmMilsteinSampler>(gbm);
    return p;
}

} // namespace

const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"ex1-gmres", "ex1-mumps", "ex2"};
    return names;
}

Preset preset_by_name(const std::string& name) {
    if (name == "ex1-gmres") return make_ex1(name, 1.0, 1e-4);
    if (name == "ex1-mumps") return make_ex1(name, 1.5, 3e-6);
    if (name == "ex2") return make_ex2();
    throw std::invalid_argument("unknown preset: " + name);
}

} // namespace mlmc
