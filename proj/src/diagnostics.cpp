#include "mdsbl/diagnostics.hpp"

#include <cstdlib>
#include <iostream>
#include <mutex>

namespace mdsbl {

namespace {

DiagnosticHandler& handler() {
  static DiagnosticHandler h = [](std::string_view msg) {
    static const bool verbose = std::getenv("MDSBL_VERBOSE") != nullptr;
    if (!verbose) return;
    static std::mutex mu;
    std::lock_guard lock(mu);
    std::clog << "mdsbl: " << msg << '\n';
  };
  return h;
}

}  // namespace

void set_diagnostic_handler(DiagnosticHandler h) { handler() = std::move(h); }

void diagnostic(std::string_view message) {
  if (handler()) handler()(message);
}

}  // namespace mdsbl
