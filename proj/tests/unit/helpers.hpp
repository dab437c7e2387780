#pragma once

#include <initializer_list>
#include <string>
#include <tuple>

#include "equitrace/config.hpp"

namespace testing_support {

inline equitrace::Model gallery_model(const std::string& name) {
  return equitrace::build_model(equitrace::load_config(name));
}

inline equitrace::Model text_model(const std::string& text) {
  return equitrace::build_model(equitrace::RunConfig::parse(text));
}

// Applies key overrides (section, key, value) to a gallery config.
inline equitrace::Model gallery_model_with(
    const std::string& name, std::initializer_list<std::tuple<std::string, std::string, std::string>> overrides) {
  auto cfg = equitrace::load_config(name);
  for (const auto& [s, k, v] : overrides) cfg.set(s, k, v);
  cfg.resolve();
  return equitrace::build_model(cfg);
}

}  // namespace testing_support
