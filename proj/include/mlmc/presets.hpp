#pragma once

#include "mlmc/engine.hpp"
#include "mlmc/samplers.hpp"
#include "mlmc/types.hpp"

#include <memory>
#include <string>
#include <vector>

namespace mlmc {

/// A ready-to-run problem: rates and fitted constants, the sampler that
/// realizes it, continuation parameters, and the known reference value used
/// for error reporting. `work_to_seconds` converts work units to an
/// indicative wall-clock scale on the original benchmark machine and is
/// carried as metadata only.
struct Preset {
    std::string name;
    ProblemRates rates;
    ModelConstants constants;
    double reference_value = 0.0;
    double work_to_seconds = 0.0;
    double h_max = 1.0;
    std::optional<double> h_min;
    ContinuationConfig continuation;
    std::shared_ptr<const Sampler> sampler;

    OptimalSetup setup(double tol) const {
        OptimalSetup s;
        s.rates = rates;
        s.constants = constants;
        s.tol = tol;
        s.h_max = h_max;
        s.h_min = h_min;
        return s;
    }

    MeshRule mesh_rule() const { return reciprocal_integer_mesh(1.0); }
};

/// Registered presets: "ex1-gmres", "ex1-mumps" (synthetic sampler with the
/// elliptic-problem constants under iterative/direct solver cost models)
/// and "ex2" (geometric Brownian motion with a Milstein discretization).
const std::vector<std::string>& preset_names();

Preset preset_by_name(const std::string& name);

} // namespace mlmc
