#pragma once

#include "dexkin/reference_geometry.hpp"

#include <filesystem>

namespace testing_support {

inline const dexkin::HandGeometry& reference_hand() {
  static const dexkin::HandGeometry hand = dexkin::make_reference_hand();
  return hand;
}

inline std::filesystem::path source_path(const std::string& relative) {
  return std::filesystem::path(DEXKIN_SOURCE_DIR) / relative;
}

}  // namespace testing_support
