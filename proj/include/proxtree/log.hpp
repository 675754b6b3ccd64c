#pragma once

#include <functional>
#include <string>

namespace proxtree {

// Non-fatal diagnostics. The default sink writes "warning: <message>" to
// stderr; tests and the CLI may install their own.
using WarningSink = std::function<void(const std::string&)>;

void warn(const std::string& message);
// Returns the previous sink. An empty sink restores the default.
WarningSink set_warning_sink(WarningSink sink);

}  // namespace proxtree
