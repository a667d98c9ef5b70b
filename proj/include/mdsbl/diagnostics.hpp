#pragma once

#include <functional>
#include <string_view>

namespace mdsbl {

using DiagnosticHandler = std::function<void(std::string_view)>;

/// Installs a process-wide sink for non-fatal numerical diagnostics. The
/// default sink writes to std::clog when MDSBL_VERBOSE is set and is silent
/// otherwise. Not thread-safe with respect to concurrent reinstallation.
void set_diagnostic_handler(DiagnosticHandler handler);

void diagnostic(std::string_view message);

}  // namespace mdsbl
