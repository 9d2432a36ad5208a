#pragma once

#include <string_view>

namespace jet::resources {

extern const std::string_view kEnglishStopwords;
extern const std::string_view kChineseStopwords;

}  // namespace jet::resources
