#include "vargan/log.hpp"

#include <cstdlib>
#include <iostream>
#include <optional>

#include "vargan/error.hpp"

namespace vargan::log {

namespace {

std::optional<Level>& current() {
  static std::optional<Level> l;
  return l;
}

}  // namespace

Level parse_level(const std::string& text) {
  if (text == "quiet") return Level::quiet;
  if (text == "info") return Level::info;
  if (text == "debug") return Level::debug;
  throw ValidationError("VARGAN_LOG must be quiet, info or debug, got '" + text + "'");
}

Level level() {
  auto& l = current();
  if (!l) {
    const char* env = std::getenv("VARGAN_LOG");
    l = env && *env ? parse_level(env) : Level::info;
  }
  return *l;
}

void set_level(Level l) { current() = l; }

void info(const std::string& message) {
  if (level() >= Level::info) std::cerr << "[info] " << message << '\n';
}

void debug(const std::string& message) {
  if (level() >= Level::debug) std::cerr << "[debug] " << message << '\n';
}

// Warnings are shown unless quiet.
void warn(const std::string& message) {
  if (level() >= Level::info) std::cerr << "[warn] " << message << '\n';
}

}  // namespace vargan::log
