#pragma once

#include "paraformer/core.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace paraformer::test {

// Fresh empty directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto p = std::filesystem::path(PARAFORMER_TEST_SCRATCH) / name;
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

inline std::filesystem::path cora_dir() {
    return std::filesystem::path(PARAFORMER_SOURCE_DIR) / "data" / "cora";
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace paraformer::test
