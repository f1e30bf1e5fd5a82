#pragma once

// Raw tensor files: one line of JSON, {"shape":[...],"dtype":"f32"}, terminated by
// '\n', followed by the values as little-endian IEEE-754 binary32 in row-major order.

#include "infwide/tensor.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace infwide {

void write_raw(const std::filesystem::path& path, const Shape& shape, const std::vector<float>& values);
/// Returns the stored shape and values.
std::pair<Shape, std::vector<float>> read_raw_values(const std::filesystem::path& path);

std::string encode_raw(const Shape& shape, const std::vector<float>& values);
std::pair<Shape, std::vector<float>> decode_raw(const std::string& bytes, const std::string& origin = "<memory>");

template <typename Scalar>
void save_tensor(const std::filesystem::path& path, const Tensor<Scalar>& t)
{
    std::vector<float> v(static_cast<std::size_t>(t.size()));
    for (Index i = 0; i < t.size(); ++i) v[static_cast<std::size_t>(i)] = static_cast<float>(t[i]);
    write_raw(path, t.shape(), v);
}

template <typename Scalar>
Tensor<Scalar> load_tensor(const std::filesystem::path& path)
{
    auto [shape, v] = read_raw_values(path);
    Tensor<Scalar> t(shape);
    for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(v[static_cast<std::size_t>(i)]);
    return t;
}

} // namespace infwide
