#include "infwide/image_io.hpp"

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>

namespace infwide {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open(const std::filesystem::path& path, const char* mode)
{
    File f(std::fopen(path.c_str(), mode));
    if (!f) throw IoError("cannot open " + path.string());
    return f;
}

void on_error(png_structp png, png_const_charp msg)
{
    auto* text = static_cast<std::string*>(png_get_error_ptr(png));
    if (text) *text = msg;
    png_longjmp(png, 1);
}

void on_warning(png_structp, png_const_charp) {}

} // namespace

TensorD load_image(const std::filesystem::path& path)
{
    File f = open(path, "rb");
    unsigned char sig[8] = {};
    if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        throw IoError(path.string() + ": not a PNG file");

    std::string error;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, on_error, on_warning);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("libpng initialization failed");
    }
    std::vector<unsigned char> buffer;
    std::vector<png_bytep> rows;
    png_uint_32 width = 0, height = 0;
    int depth = 0;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(path.string() + ": malformed PNG (" + error + ")");
    }
    png_init_io(png, f.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    width = png_get_image_width(png, info);
    height = png_get_image_height(png, info);
    const int color = png_get_color_type(png, info);
    depth = png_get_bit_depth(png, info);

    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    if (depth == 16) png_set_swap(png); // host order on little-endian machines
    png_read_update_info(png, info);
    depth = png_get_bit_depth(png, info);
    const std::size_t row_bytes = png_get_rowbytes(png, info);
    buffer.resize(row_bytes * height);
    rows.resize(height);
    for (png_uint_32 r = 0; r < height; ++r) rows[r] = buffer.data() + r * row_bytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    const Index H = height, W = width;
    TensorD img(Shape{1, 3, H, W});
    const double scale = depth == 16 ? 65535.0 : 255.0;
    for (Index i = 0; i < H; ++i)
        for (Index j = 0; j < W; ++j)
            for (Index c = 0; c < 3; ++c) {
                const std::size_t at = static_cast<std::size_t>(i) * row_bytes;
                double v;
                if (depth == 16) {
                    std::uint16_t s;
                    std::memcpy(&s, buffer.data() + at + static_cast<std::size_t>((j * 3 + c) * 2), 2);
                    v = s;
                } else {
                    v = buffer[at + static_cast<std::size_t>(j * 3 + c)];
                }
                img.at(0, c, i, j) = v / scale;
            }
    return img;
}

void save_image(const TensorD& image, const std::filesystem::path& path, int bit_depth)
{
    if (bit_depth != 8 && bit_depth != 16) throw ContractError("PNG bit depth must be 8 or 16");
    TensorD img = image.rank() == 2 ? image.reshaped(Shape{1, 1, image.dim(0), image.dim(1)}) : image;
    require_rank(img.shape(), 4, "save_image");
    if (img.dim(0) != 1 || (img.dim(1) != 1 && img.dim(1) != 3))
        throw DimensionError("save_image expects one gray or RGB image, got " + img.shape().str());
    const Index C = img.dim(1), H = img.dim(2), W = img.dim(3);
    const int bytes = bit_depth / 8;
    const double peak = bit_depth == 16 ? 65535.0 : 255.0;
    std::vector<unsigned char> buffer(static_cast<std::size_t>(H * W * C * bytes));
    for (Index i = 0; i < H; ++i)
        for (Index j = 0; j < W; ++j)
            for (Index c = 0; c < C; ++c) {
                const double v = img.at(0, c, i, j);
                const auto q = static_cast<unsigned>(std::lround(std::clamp(std::isnan(v) ? 0.0 : v, 0.0, 1.0) * peak));
                const auto at = static_cast<std::size_t>(((i * W + j) * C + c) * bytes);
                if (bytes == 2) {
                    buffer[at] = static_cast<unsigned char>(q >> 8); // PNG is big-endian
                    buffer[at + 1] = static_cast<unsigned char>(q & 0xff);
                } else {
                    buffer[at] = static_cast<unsigned char>(q);
                }
            }

    File f = open(path, "wb");
    std::string error;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, on_error, on_warning);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("libpng initialization failed");
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(H));
    for (Index i = 0; i < H; ++i) rows[static_cast<std::size_t>(i)] = buffer.data() + i * W * C * bytes;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError(path.string() + ": PNG write failed (" + error + ")");
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(W), static_cast<png_uint_32>(H), bit_depth,
                 C == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

} // namespace infwide
