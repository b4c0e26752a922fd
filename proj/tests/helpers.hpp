#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "efc/errors.hpp"
#include "efc/types.hpp"

namespace efc::test {

// Fresh scratch directory per call, under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("efc_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream(path) << text;
}

inline Vector gaussian_vector(Index n, std::mt19937_64& engine, double sd = 1.0) {
  std::normal_distribution<double> d(0.0, sd);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = d(engine);
  return v;
}

template <typename Fn>
Errc error_code(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  throw std::runtime_error("expected efc::Error");
}

}  // namespace efc::test
