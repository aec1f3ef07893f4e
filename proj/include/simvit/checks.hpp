#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "simvit/training.hpp"

namespace simvit {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

bool all_pass(const std::vector<CheckResult>& results);

// Window count equals (H, W) for every H, W in 1..max_extent.
CheckResult check_window_law(const WindowSpec& spec, std::size_t max_extent = 64);

// mcsa against the window-by-window composition on random maps up to 8x8,
// widths up to 16 and 1, 2 or 4 heads (double).
CheckResult check_oracle_equivalence(std::size_t instances = 50, std::uint64_t seed = 0, double tol = 1e-10);

// Blocks whose attention and FFN parameters are all zero return their input.
CheckResult check_zero_branch_identity(std::uint64_t seed = 0);

// Each csa output channel lies within the range of the value rows.
CheckResult check_convex_hull(std::uint64_t seed = 0, std::size_t instances = 100);

// Permuting key and value rows together leaves csa unchanged.
CheckResult check_permutation_invariance(std::uint64_t seed = 0, std::size_t instances = 100, double tol = 1e-12);

// A shifted input map gives bit-identical mcsa outputs at positions whose
// window stays clear of the border before and after the shift.
CheckResult check_translation_equivariance(std::uint64_t seed = 0);

// Softmax slices are nonnegative and sum to one.
CheckResult check_softmax_normalization(std::uint64_t seed = 0, double tol = 1e-6);

// msa with an all-zero pos_bias matches msa without one bit for bit.
CheckResult check_zero_pos_bias(std::uint64_t seed = 0);

// Every check above with its default settings.
std::vector<CheckResult> verify_invariants(std::uint64_t seed = 0);

enum class AuditScope { kernel, attention, block, model };

const char* audit_scope_name(AuditScope scope);
std::optional<AuditScope> parse_audit_scope(std::string_view name);

// Finite-difference checks at double precision. The kernel scope runs each
// numerics kernel over five consecutive seeds; the model scope checks the
// micro-reduced network end to end on a 32x32 image.
std::vector<GradCheckReport> gradient_audit(AuditScope scope, std::uint64_t seed = 0,
                                            const GradCheckOptions& options = {});

// One line per parameter: `<label> <name> max_rel_err <e> checked <n> PASS|FAIL`.
std::string format_report(const GradCheckReport& report);

}  // namespace simvit
