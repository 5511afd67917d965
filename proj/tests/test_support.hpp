#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

#include "wmq/worldmodel.hpp"

namespace wmq_test {

/// Fresh, empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("wmq_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

/// Untrained default-size world model with Glorot weights.
inline wmq::WorldModel random_world_model(std::uint64_t seed, const wmq::ModelDims& dims = {}) {
  wmq::WorldModel wm;
  wm.net = wmq::cast_network<float>(wmq::init_network(dims, seed));
  return wm;
}

}  // namespace wmq_test
