#pragma once

#include "infwide/random.hpp"
#include "infwide/tensor.hpp"

#include <filesystem>
#include <string>

namespace test {

using infwide::Index;
using infwide::Shape;
using infwide::TensorD;

inline TensorD random_tensor(std::uint64_t seed, const Shape& s, double lo = 0.0, double hi = 1.0)
{
    infwide::Rng rng(seed);
    TensorD t(s);
    for (Index i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

inline double max_abs_diff(const TensorD& a, const TensorD& b) { return (a.array() - b.array()).abs().maxCoeff(); }

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name)
{
    auto p = std::filesystem::temp_directory_path() / ("infwide_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

} // namespace test
