#include "ctnas/log.hpp"

#include <iostream>
#include <mutex>

namespace ctnas {
namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

WarningSink& sink() {
  static WarningSink s;
  return s;
}

}  // namespace

void warn(const std::string& msg) {
  std::lock_guard lock(sink_mutex());
  if (sink()) {
    sink()(msg);
  } else {
    std::cerr << "warning: " << msg << '\n';
  }
}

WarningSink set_warning_sink(WarningSink s) {
  std::lock_guard lock(sink_mutex());
  return std::exchange(sink(), std::move(s));
}

}  // namespace ctnas
