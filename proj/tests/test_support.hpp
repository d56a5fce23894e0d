#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "robprec/linalg.hpp"
#include "robprec/rng.hpp"
#include "robprec/serialization.hpp"

namespace robprec::test {

inline Matrix gaussian_matrix(Index rows, Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

inline Json reference() {
  static const Json j = io::parse_json(io::read_text(std::filesystem::path(ROBPREC_FIXTURE_DIR) / "reference.json"),
                                       "reference.json");
  return j;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("robprec_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace robprec::test
