#pragma once

#include <string>
#include <vector>

namespace glamor {

// Deliberate corruption hooks so tests can prove the battery catches a
// broken gradient rather than rubber-stamping everything.
enum class FaultInjection { None, ConvBackward };

struct VerifyOptions {
    int fd_seeds = 3; // seeds per finite-difference check
    FaultInjection fault = FaultInjection::None;
};

struct VerifyCheck {
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

struct VerifyReport {
    std::vector<VerifyCheck> checks;

    bool all_passed() const {
        for (const auto& c : checks)
            if (!c.passed)
                return false;
        return true;
    }
};

// Gradient checks (double precision), algebraic invariants of the attention
// and fusion paths, oracle equivalences, and the statistics self-checks.
VerifyReport run_verification(const VerifyOptions& opts = {});

} // namespace glamor
