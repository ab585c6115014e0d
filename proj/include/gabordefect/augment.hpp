#pragma once

#include "gabordefect/imgcore.hpp"

#include <cstdint>
#include <vector>

namespace gabordefect::augment {

struct GridSpec {
    int k = 8;  // patches per side
};

struct NoiseSpec {
    double p_salt = 0.05;
    double p_pepper = 0.05;
    double p_patch = 0.5;  // chance that a grid patch is masked at all

    void validate() const;
};

struct PatchRect {
    int y = 0;
    int x = 0;
    int height = 0;
    int width = 0;

    friend bool operator==(const PatchRect&, const PatchRect&) = default;
};

/// Row-major k x k tiling; throws when k does not divide both image sides.
std::vector<PatchRect> partition_grid(int height, int width, GridSpec grid);
inline std::vector<PatchRect> partition_grid(const Image& img, GridSpec grid) {
    return partition_grid(img.height(), img.width(), grid);
}

/// Per-pixel record of which pixels masking altered (row-major, h*w).
struct MaskMap {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> altered;

    bool at(int y, int x) const { return altered[static_cast<std::size_t>(y) * width + x] != 0; }
    std::size_t count() const;
};

struct MaskedImage {
    Image image;
    MaskMap mask;
};

/// Salt-and-pepper masking on randomly selected grid patches. A salted pixel
/// becomes 1 in every channel, a peppered pixel 0. Bit-identical for equal seeds.
MaskedImage sp_mask(const Image& img, GridSpec grid, const NoiseSpec& noise, std::uint64_t seed);

struct TrainingPair {
    Image input;
    Image target;
    MaskMap mask;
};

/// input = masked x. target = clean x, or the masked x when `masked_target`.
TrainingPair make_training_pair(const Image& x, GridSpec grid, const NoiseSpec& noise, std::uint64_t seed,
                                bool masked_target = false);

}  // namespace gabordefect::augment
