#pragma once

#include <iosfwd>

namespace meterfl {

// Fast built-in verification: gradient check against central differences,
// forward-pass invariants, aggregation identities, loss fixtures and the
// probe argmin property. Prints one line per check; returns true when all
// pass.
bool run_self_checks(std::ostream& out);

} // namespace meterfl
