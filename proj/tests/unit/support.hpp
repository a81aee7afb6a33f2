#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "tnfdt/rng.hpp"
#include "tnfdt/tensor.hpp"

namespace tnfdt::test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("tnfdt-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

template <typename T = float>
BasicTensor<T> random_tensor(const Shape& shape, Rng& rng, double scale = 1.0) {
  BasicTensor<T> t(shape);
  for (T& v : t.values()) v = static_cast<T>(scale * rng.normal01());
  return t;
}

inline std::filesystem::path data_dir() { return TNFDT_TEST_DATA_DIR; }

}  // namespace tnfdt::test
