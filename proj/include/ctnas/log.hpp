#pragma once

#include <functional>
#include <string>

namespace ctnas {

using WarningSink = std::function<void(const std::string&)>;

/// Writes "warning: <msg>" to stderr unless a sink is installed.
void warn(const std::string& msg);
/// Installs a sink (empty restores stderr); returns the previous one.
WarningSink set_warning_sink(WarningSink sink);

}  // namespace ctnas
