#include "equitrace/config.hpp"

namespace equitrace {

const std::map<std::string, std::string>& model_gallery() {
  static const std::map<std::string, std::string> gallery{
#include "equitrace_gallery.inc"
  };
  return gallery;
}

}  // namespace equitrace
