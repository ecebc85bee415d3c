#pragma once

#include <string_view>

namespace rhf {

/// Warnings go to stderr unless silenced (the CLI's --quiet).
void set_quiet(bool quiet);
bool quiet();
void log_warning(std::string_view message);

}  // namespace rhf
