#include "infwide/raw_tensor.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace infwide {

namespace {

std::uint32_t to_le(std::uint32_t v)
{
    if constexpr (std::endian::native == std::endian::big)
        return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
    return v;
}

} // namespace

std::string encode_raw(const Shape& shape, const std::vector<float>& values)
{
    if (shape.numel() != static_cast<Index>(values.size()))
        throw DimensionError("raw tensor: shape " + shape.str() + " does not match " + std::to_string(values.size()) +
                             " values");
    nlohmann::ordered_json header;
    header["shape"] = shape.dims();
    header["dtype"] = "f32";
    std::string out = header.dump() + "\n";
    const std::size_t start = out.size();
    out.resize(start + 4 * values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const std::uint32_t bits = to_le(std::bit_cast<std::uint32_t>(values[i]));
        std::memcpy(out.data() + start + 4 * i, &bits, 4);
    }
    return out;
}

std::pair<Shape, std::vector<float>> decode_raw(const std::string& bytes, const std::string& origin)
{
    const auto newline = bytes.find('\n');
    if (newline == std::string::npos) throw IoError(origin + ": missing raw tensor header line");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(0, newline));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(origin + ": malformed raw tensor header: " + e.what());
    }
    if (!header.contains("shape") || !header["shape"].is_array() || header.value("dtype", "") != "f32")
        throw IoError(origin + ": raw tensor header needs \"shape\" and dtype \"f32\"");
    Shape shape(header["shape"].get<std::vector<Index>>());
    const auto count = static_cast<std::size_t>(shape.numel());
    if (bytes.size() - newline - 1 != 4 * count)
        throw IoError(origin + ": expected " + std::to_string(4 * count) + " payload bytes, found " +
                      std::to_string(bytes.size() - newline - 1));
    std::vector<float> values(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t bits;
        std::memcpy(&bits, bytes.data() + newline + 1 + 4 * i, 4);
        values[i] = std::bit_cast<float>(to_le(bits));
    }
    return {std::move(shape), std::move(values)};
}

void write_raw(const std::filesystem::path& path, const Shape& shape, const std::vector<float>& values)
{
    const std::string bytes = encode_raw(shape, values);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError(path.string() + ": cannot open for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError(path.string() + ": write failed");
}

std::pair<Shape, std::vector<float>> read_raw_values(const std::filesystem::path& path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError(path.string() + ": cannot open raw tensor");
    std::ostringstream ss;
    ss << f.rdbuf();
    return decode_raw(ss.str(), path.string());
}

} // namespace infwide
