#include "hgnn/log.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace hgnn::log {

namespace {

Level parse_env() {
  const char* e = std::getenv("HGNN_LOG_LEVEL");
  if (!e) return Level::Warn;
  if (std::strcmp(e, "error") == 0) return Level::Error;
  if (std::strcmp(e, "warn") == 0) return Level::Warn;
  if (std::strcmp(e, "info") == 0) return Level::Info;
  if (std::strcmp(e, "debug") == 0) return Level::Debug;
  return Level::Warn;
}

Level g_level = parse_env();

void emit(const char* tag, const std::string& msg) {
  std::fprintf(stderr, "[%s] %s\n", tag, msg.c_str());
}

}  // namespace

Level level() { return g_level; }
void set_level(Level lv) { g_level = lv; }

void error(const std::string& msg) {
  if (g_level >= Level::Error) emit("error", msg);
}
void warn(const std::string& msg) {
  if (g_level >= Level::Warn) emit("warn", msg);
}
void info(const std::string& msg) {
  if (g_level >= Level::Info) emit("info", msg);
}
void debug(const std::string& msg) {
  if (g_level >= Level::Debug) emit("debug", msg);
}

}  // namespace hgnn::log
