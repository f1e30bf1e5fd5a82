#include "infwide/data.hpp"

#include "infwide/image_io.hpp"
#include "infwide/random.hpp"
#include "infwide/raw_tensor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace infwide {

namespace fs = std::filesystem;

std::vector<fs::path> list_clean_images(const fs::path& root)
{
    const fs::path dir = fs::is_directory(root / "clean") ? root / "clean" : root;
    if (!fs::is_directory(dir)) throw IoError("no image directory at " + root.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        auto ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (e.is_regular_file() && ext == ".png") out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    if (out.empty()) throw IoError("no PNG images in " + dir.string());
    return out;
}

std::vector<TensorD> load_clean_images(const fs::path& root)
{
    std::vector<TensorD> out;
    for (const auto& p : list_clean_images(root)) out.push_back(load_image(p));
    return out;
}

TensorD crop(const TensorD& image, Index top, Index left, Index height, Index width)
{
    require_rank(image.shape(), 4, "crop");
    if (top < 0 || left < 0 || top + height > image.dim(2) || left + width > image.dim(3))
        throw DimensionError("crop " + std::to_string(height) + "x" + std::to_string(width) + " at (" +
                             std::to_string(top) + "," + std::to_string(left) + ") outside " + image.shape().str());
    TensorD out(Shape{image.dim(0), image.dim(1), height, width});
    for (Index n = 0; n < image.dim(0); ++n)
        for (Index c = 0; c < image.dim(1); ++c)
            out.plane(n, c) = image.plane(n, c).block(top, left, height, width);
    return out;
}

TensorD crop_to_multiple(const TensorD& image, Index divisor)
{
    const Index H = image.dim(2) / divisor * divisor, W = image.dim(3) / divisor * divisor;
    if (H == 0 || W == 0)
        throw DimensionError("image " + image.shape().str() + " smaller than " + std::to_string(divisor));
    return crop(image, (image.dim(2) - H) / 2, (image.dim(3) - W) / 2, H, W);
}

TensorD random_patch(const std::vector<TensorD>& images, Index size, std::uint64_t seed)
{
    if (images.empty()) throw ContractError("random_patch: no images");
    Rng rng(seed);
    const auto pick = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(images.size()) - 1));
    const TensorD& img = images[pick];
    if (img.dim(2) < size || img.dim(3) < size)
        throw ContractError("image " + std::to_string(pick) + " of shape " + img.shape().str() + " is smaller than patch " +
                            std::to_string(size));
    TensorD patch;
    for (int attempt = 0; attempt <= kCropRetries; ++attempt) {
        const Index top = rng.uniform_int(0, img.dim(2) - size), left = rng.uniform_int(0, img.dim(3) - size);
        patch = crop(img, top, left, size, size);
        const double m = patch.array().mean();
        if (std::sqrt((patch.array() - m).square().mean()) >= kMinCropStd) break;
    }
    return patch;
}

std::vector<DegradedPair> make_batch(const std::vector<TensorD>& images, const SamplerConfig& sampler,
                                     std::uint64_t seed)
{
    sampler.validate();
    std::vector<DegradedPair> out;
    out.reserve(static_cast<std::size_t>(sampler.batch));
    for (int b = 0; b < sampler.batch; ++b) {
        const std::uint64_t s = split_seed(seed, static_cast<std::uint64_t>(b));
        out.push_back(synthesize_pair(random_patch(images, sampler.patch, split_seed(s, 0)), split_seed(s, 1), sampler));
    }
    return out;
}

Batch stack(const std::vector<DegradedPair>& pairs)
{
    if (pairs.empty()) throw ContractError("stack: empty batch");
    const Shape one = pairs.front().x.shape();
    const Index B = static_cast<Index>(pairs.size()), per = one.numel();
    const Shape s{B, one[1], one[2], one[3]};
    Batch b{TensorF(s), TensorF(s), TensorF(s), {}, {}};
    for (Index n = 0; n < B; ++n) {
        const auto& p = pairs[static_cast<std::size_t>(n)];
        if (p.x.shape() != one) throw DimensionError("stack: mixed image shapes in batch");
        b.x.array().segment(n * per, per) = p.x.array().cast<float>();
        b.y.array().segment(n * per, per) = p.y.array().cast<float>();
        b.y_lin.array().segment(n * per, per) = p.y_lin.array().cast<float>();
        b.kernels.push_back(p.k.values.cast<float>());
        b.gains.push_back(p.params.gain);
    }
    return b;
}

void save_pair(const fs::path& dir, const DegradedPair& pair)
{
    fs::create_directories(dir);
    save_tensor(dir / "x.rt", pair.x);
    save_tensor(dir / "y.rt", pair.y);
    save_tensor(dir / "y_lin.rt", pair.y_lin);
    save_tensor(dir / "k.rt", pair.k.values);
    save_image(pair.x, dir / "x.png");
    save_image(pair.y, dir / "y.png");
    nlohmann::json meta{{"seed", pair.seed}, {"params", pair.params}, {"kernel_side", pair.k.side()},
                        {"shape", pair.x.shape().dims()}};
    std::ofstream(dir / "meta.json") << meta.dump(2) << '\n';
}

DegradedPair load_pair(const fs::path& dir)
{
    DegradedPair p;
    std::ifstream in(dir / "meta.json");
    if (!in) throw IoError("missing " + (dir / "meta.json").string());
    nlohmann::json meta;
    try {
        in >> meta;
        p.seed = meta.at("seed").get<std::uint64_t>();
        p.params = meta.at("params").get<NoiseParams>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError((dir / "meta.json").string() + ": " + e.what());
    }
    p.x = fs::exists(dir / "x.rt") ? load_tensor<double>(dir / "x.rt") : load_image(dir / "x.png");
    p.y = fs::exists(dir / "y.rt") ? load_tensor<double>(dir / "y.rt") : load_image(dir / "y.png");
    p.y_lin = load_tensor<double>(dir / "y_lin.rt");
    p.k.values = load_tensor<double>(dir / "k.rt");
    // Stored as f32; restore the exact unit sum.
    p.k.values.array() /= p.k.values.array().sum();
    return p;
}

std::vector<fs::path> list_pairs(const fs::path& root)
{
    const fs::path dir = root / "pairs";
    if (!fs::is_directory(dir)) throw IoError("no pairs directory in " + root.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory() && fs::exists(e.path() / "meta.json")) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    if (out.empty()) throw IoError("no pairs in " + dir.string());
    return out;
}

} // namespace infwide
