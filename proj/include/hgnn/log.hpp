#pragma once

#include <string>

namespace hgnn::log {

enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };

// Initialized from HGNN_LOG_LEVEL ({error, warn, info, debug}) on first use.
Level level();
void set_level(Level lv);

void error(const std::string& msg);
void warn(const std::string& msg);
void info(const std::string& msg);
void debug(const std::string& msg);

}  // namespace hgnn::log
