#include "rhfusion/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace rhf {

namespace {
std::atomic<bool> g_quiet{false};
std::mutex g_mutex;
}  // namespace

void set_quiet(bool quiet) { g_quiet.store(quiet); }
bool quiet() { return g_quiet.load(); }

void log_warning(std::string_view message) {
  if (g_quiet.load()) return;
  std::lock_guard<std::mutex> lock(g_mutex);
  std::cerr << "warning: " << message << '\n';
}

}  // namespace rhf
