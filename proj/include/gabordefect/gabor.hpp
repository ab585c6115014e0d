#pragma once

#include "gabordefect/imgcore.hpp"

#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace gabordefect::gabor {

inline constexpr int kOrientations = 8;

struct GaborParams {
    int kernel_size = 0;
    double sigma = 0.0;
    double lambda = 0.0;
    double gamma = 0.0;

    /// Throws InvalidArgument unless kernel_size is odd and >= 3 and the
    /// remaining parameters are strictly positive.
    void validate() const;

    friend bool operator==(const GaborParams&, const GaborParams&) = default;
    friend auto operator<=>(const GaborParams&, const GaborParams&) = default;
};

std::string to_string(const GaborParams& p);

/// theta_k = (pi/8) k + pi/16 for k in [0, 8).
double orientation(int k);

/// Even-symmetric Gabor kernel, unnormalized:
/// exp(-(x'^2 + gamma^2 y'^2) / (2 sigma^2)) * cos(2 pi x' / lambda).
Kernel gabor_kernel(const GaborParams& p, double theta);

class GaborBank {
public:
    explicit GaborBank(const GaborParams& params);

    const GaborParams& params() const noexcept { return params_; }
    const std::array<Kernel, kOrientations>& kernels() const noexcept { return kernels_; }
    const Kernel& kernel(int k) const { return kernels_.at(static_cast<std::size_t>(k)); }

private:
    GaborParams params_;
    std::array<Kernel, kOrientations> kernels_;
};

inline GaborBank build_bank(const GaborParams& p) { return GaborBank(p); }

/// The eight directional responses of one single-channel image.
class ResponseStack {
public:
    explicit ResponseStack(std::array<Image, kOrientations> responses);

    const Image& operator[](int k) const { return responses_.at(static_cast<std::size_t>(k)); }
    const std::array<Image, kOrientations>& responses() const noexcept { return responses_; }
    int height() const noexcept { return responses_[0].height(); }
    int width() const noexcept { return responses_[0].width(); }

private:
    std::array<Image, kOrientations> responses_;
};

ResponseStack apply_bank(const Image& gray, const GaborBank& bank);

/// Per pixel: sum of all eight responses divided by the number of strictly
/// positive responses; 0 where no response is positive.
Image average_response(const ResponseStack& stack);

struct DefectScore {
    double value = 0.0;
};

/// Spatial maximum of `average_response`, never below 0.
DefectScore dfscore(const ResponseStack& stack);

/// Named parameter presets: carpet, grid, leather, tile, wood, crack, marble.
GaborParams preset_for(std::string_view name);
const std::vector<std::string>& preset_names();

}  // namespace gabordefect::gabor
