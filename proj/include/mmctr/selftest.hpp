#pragma once

/** \file selftest.hpp
 *  \brief Randomized invariant checks over the geometry kernels, the
 *  optimizer and the model gradients.
 *
 * Each check samples its own inputs from a seeded generator and reports the
 * worst observed value against its tolerance.
 */

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace mmctr {

struct PropertyResult {
    std::string name;
    bool passed{false};
    double worst{0.0};      ///< largest observed error (or violation measure)
    double tolerance{0.0};
    std::size_t trials{0};
    std::string detail;
};

/// Mobius identities, left cancellation, exp/log inversion, metric axioms on
/// 10^4 triples, flat-limit consistency, post-projection feasibility.
std::vector<PropertyResult> check_geometry_properties(std::uint64_t seed);

/// Riemannian gradient scale, 10^4-step RSGD feasibility (random and
/// adversarial gradients, single-precision storage included), descent sanity.
std::vector<PropertyResult> check_optimizer_properties(std::uint64_t seed);

/// Analytic loss gradients vs central differences on `instances` random
/// (user, ad, label) triples spanning Euclidean, hyperbolic and mixed models.
std::vector<PropertyResult> check_gradient_properties(std::uint64_t seed, std::size_t instances = 64);

std::vector<PropertyResult> run_selftest(std::uint64_t seed);

/// One `PASS|FAIL name worst=... tol=... trials=...` line per property.
void print_results(std::ostream& out, const std::vector<PropertyResult>& results);

bool all_passed(const std::vector<PropertyResult>& results);

}  // namespace mmctr
