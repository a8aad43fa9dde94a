#pragma once

namespace camdiffuse {

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

// Level comes from the CAMDIFFUSE_LOG environment variable
// (error|warn|info|debug), read once; defaults to warn.
LogLevel log_level();
void set_log_level(LogLevel level);
bool log_enabled(LogLevel level);

__attribute__((format(printf, 2, 3)))
void log_line(LogLevel level, const char* fmt, ...);

}  // namespace camdiffuse
