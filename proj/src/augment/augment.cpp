#include "gabordefect/augment.hpp"

#include "gabordefect/error.hpp"

#include <algorithm>
#include <random>
#include <string>

namespace gabordefect::augment {

void NoiseSpec::validate() const {
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!unit(p_salt) || !unit(p_pepper) || !unit(p_patch))
        throw Error(ErrorCode::InvalidArgument, "noise probabilities must lie in [0,1]");
    if (p_salt + p_pepper > 1.0)
        throw Error(ErrorCode::InvalidArgument, "p_salt + p_pepper must not exceed 1");
}

std::vector<PatchRect> partition_grid(int height, int width, GridSpec grid) {
    if (grid.k <= 0)
        throw Error(ErrorCode::InvalidArgument, "grid k must be positive, got " + std::to_string(grid.k));
    if (height % grid.k != 0 || width % grid.k != 0)
        throw Error(ErrorCode::InvalidArgument, "grid k=" + std::to_string(grid.k) + " does not divide image " +
                                                    std::to_string(height) + "x" + std::to_string(width));
    const int ph = height / grid.k, pw = width / grid.k;
    std::vector<PatchRect> rects;
    rects.reserve(static_cast<std::size_t>(grid.k) * grid.k);
    for (int gy = 0; gy < grid.k; ++gy)
        for (int gx = 0; gx < grid.k; ++gx) rects.push_back({gy * ph, gx * pw, ph, pw});
    return rects;
}

std::size_t MaskMap::count() const {
    return static_cast<std::size_t>(std::ranges::count_if(altered, [](std::uint8_t v) { return v != 0; }));
}

MaskedImage sp_mask(const Image& img, GridSpec grid, const NoiseSpec& noise, std::uint64_t seed) {
    noise.validate();
    const auto rects = partition_grid(img, grid);
    MaskedImage out{img, {img.height(), img.width(), std::vector<std::uint8_t>(img.plane_size(), 0)}};
    if (noise.p_salt == 0.0 && noise.p_pepper == 0.0) return out;

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double pepper_edge = noise.p_salt + noise.p_pepper;
    for (const PatchRect& r : rects) {
        if (!(unit(rng) < noise.p_patch)) continue;
        for (int y = r.y; y < r.y + r.height; ++y) {
            for (int x = r.x; x < r.x + r.width; ++x) {
                const double u = unit(rng);
                double value;
                if (u < noise.p_salt)
                    value = 1.0;
                else if (u < pepper_edge)
                    value = 0.0;
                else
                    continue;
                for (int c = 0; c < img.channels(); ++c) out.image.at(c, y, x) = value;
                out.mask.altered[static_cast<std::size_t>(y) * img.width() + x] = 1;
            }
        }
    }
    return out;
}

TrainingPair make_training_pair(const Image& x, GridSpec grid, const NoiseSpec& noise, std::uint64_t seed,
                                bool masked_target) {
    MaskedImage masked = sp_mask(x, grid, noise, seed);
    TrainingPair pair{masked.image, masked_target ? masked.image : x, std::move(masked.mask)};
    return pair;
}

}  // namespace gabordefect::augment
