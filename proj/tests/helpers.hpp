#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <doctest.h>

#include "glioma/error.hpp"

// Fresh scratch directory under the test binary's working directory.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::current_path() / "scratch" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::vector<char> file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

#define CHECK_ERROR_CODE(expr, expected)                  \
  do {                                                    \
    bool thrown_ = false;                                 \
    try {                                                 \
      (void)(expr);                                       \
    } catch (const glioma::Error& e_) {                   \
      thrown_ = true;                                     \
      CHECK_MESSAGE(e_.code() == (expected), e_.what());  \
    }                                                     \
    CHECK_MESSAGE(thrown_, "expected an error: " #expr);  \
  } while (0)
