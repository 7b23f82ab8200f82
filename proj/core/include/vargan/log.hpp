#pragma once

#include <string>

namespace vargan::log {

enum class Level { quiet = 0, info = 1, debug = 2 };

// Read once from VARGAN_LOG (quiet, info, debug); default info.
Level level();
void set_level(Level l);
Level parse_level(const std::string& text);

// Messages go to stderr.
void info(const std::string& message);
void debug(const std::string& message);
void warn(const std::string& message);

}  // namespace vargan::log
