#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string_view>

namespace fdsdf {

using LogSink = std::function<void(std::string_view)>;

namespace detail {
inline std::mutex& log_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

/// Receives warnings; replace to capture or silence them.
inline LogSink& warning_sink() {
  static LogSink sink = [](std::string_view msg) { std::cerr << "warning: " << msg << '\n'; };
  return sink;
}

inline void warn(std::string_view msg) {
  std::lock_guard lock(detail::log_mutex());
  if (auto& sink = warning_sink()) sink(msg);
}

}  // namespace fdsdf
