#pragma once

#include "mlmc/types.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace mlmc {

/// Modeled cost of one sample on a mesh of size h: h^(-d*gamma).
double level_work(double h, const ProblemRates& rates);

/// Modeled variance of the level-l difference: V0 on level 0, otherwise
/// qs * h_{l-1}^q2. The coarser member of the pair sets the decay.
double level_variance_model(int level, const Hierarchy& hierarchy,
                            const ModelConstants& constants, const ProblemRates& rates);

/// All per-level model variances of a hierarchy.
std::vector<double> model_variances(const Hierarchy& hierarchy, const ModelConstants& constants,
                                    const ProblemRates& rates);

/// All per-level model work units of a hierarchy.
std::vector<double> model_works(const Hierarchy& hierarchy, const ProblemRates& rates);

/// Total modeled cost of evaluating the estimator: sum_l M_l * h_l^(-d*gamma).
double total_work(const Hierarchy& hierarchy, const ProblemRates& rates);

/// Variance of the estimator for given per-level variances: sum_l V_l / M_l.
double estimator_variance(const Hierarchy& hierarchy, const std::vector<double>& variances);

/// Rounds a real-valued hierarchy onto the feasible set: each mesh through
/// `rule` (never coarser), each sample count ceiled. Adjacent levels whose
/// meshes collide are merged by summing their sample counts, so the result
/// keeps strictly decreasing meshes and the telescoping structure.
Hierarchy round_hierarchy(const Hierarchy& real, const MeshRule& rule = reciprocal_integer_mesh());

void to_json(nlohmann::json& j, const Hierarchy& hierarchy);
void from_json(const nlohmann::json& j, Hierarchy& hierarchy);

/// CSV body with columns level,h,M,W,V (header included).
std::string hierarchy_csv(const Hierarchy& hierarchy, const ModelConstants& constants,
                          const ProblemRates& rates);

} // namespace mlmc
