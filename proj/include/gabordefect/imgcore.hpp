#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace gabordefect {

/// H x W x C image of real intensities, stored channel-major then row-major.
/// Loaded and masked images live in [0,1]; filter responses are unconstrained.
class Image {
public:
    Image() = default;
    Image(int height, int width, int channels, double fill = 0.0);
    Image(int height, int width, int channels, std::vector<double> data);

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    int channels() const noexcept { return channels_; }
    std::size_t plane_size() const noexcept {
        return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
    }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& at(int c, int y, int x) noexcept {
        return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
    }
    double at(int c, int y, int x) const noexcept {
        return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
    }

    std::span<double> plane(int c) noexcept { return {data_.data() + c * plane_size(), plane_size()}; }
    std::span<const double> plane(int c) const noexcept {
        return {data_.data() + c * plane_size(), plane_size()};
    }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    /// Single-channel copy of channel `c`.
    Image channel(int c) const;

    friend bool operator==(const Image&, const Image&) = default;

private:
    int height_ = 0;
    int width_ = 0;
    int channels_ = 0;
    std::vector<double> data_;
};

/// Dense (n, c, h, w) activation tensor.
class Tensor4 {
public:
    Tensor4() = default;
    Tensor4(int n, int c, int h, int w, double fill = 0.0);

    int n() const noexcept { return n_; }
    int c() const noexcept { return c_; }
    int h() const noexcept { return h_; }
    int w() const noexcept { return w_; }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t sample_size() const noexcept {
        return static_cast<std::size_t>(c_) * h_ * w_;
    }

    double& at(int n, int c, int y, int x) noexcept {
        return data_[((static_cast<std::size_t>(n) * c_ + c) * h_ + y) * w_ + x];
    }
    double at(int n, int c, int y, int x) const noexcept {
        return data_[((static_cast<std::size_t>(n) * c_ + c) * h_ + y) * w_ + x];
    }

    std::span<double> sample(int n) noexcept { return {data_.data() + n * sample_size(), sample_size()}; }
    std::span<const double> sample(int n) const noexcept {
        return {data_.data() + n * sample_size(), sample_size()};
    }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    bool same_shape(const Tensor4& o) const noexcept {
        return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
    }

    friend bool operator==(const Tensor4&, const Tensor4&) = default;

private:
    int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
    std::vector<double> data_;
};

/// Stacks equally-shaped images into a batch.
Tensor4 to_batch(std::span<const Image> images);
/// Extracts sample `n` of a batch as an image.
Image from_batch(const Tensor4& batch, int n);

/// Filter kernel with odd side lengths; the center is (side_h/2, side_w/2).
class Kernel {
public:
    Kernel(int side_h, int side_w, std::vector<double> data);
    Kernel(int side_h, int side_w, double fill = 0.0);

    int side_h() const noexcept { return side_h_; }
    int side_w() const noexcept { return side_w_; }
    double at(int y, int x) const noexcept { return data_[static_cast<std::size_t>(y) * side_w_ + x]; }
    double& at(int y, int x) noexcept { return data_[static_cast<std::size_t>(y) * side_w_ + x]; }
    const std::vector<double>& data() const noexcept { return data_; }

private:
    int side_h_;
    int side_w_;
    std::vector<double> data_;
};

enum class Padding { Reflect, Zero };

/// Maps an out-of-range coordinate back into [0, n) by mirror reflection
/// that does not repeat the edge sample (… 2 1 | 0 1 2 … n-1 | n-2 …).
int reflect_index(int i, int n) noexcept;

/// "Same" 2-D correlation of a single-channel image (no kernel flip).
Image conv2d(const Image& img, const Kernel& kernel, Padding padding);

/// Adjoint of `conv2d` for a fixed kernel and padding: for every y,
/// <conv2d(x), y> == <x, conv2d_adjoint(y)>.
Image conv2d_adjoint(const Image& grad, const Kernel& kernel, Padding padding);

Kernel gaussian_kernel(int size, double sigma);

/// Blur used by the Gaussian loss: per-channel, 11x11, sigma 5, reflect padding.
Image gaussian_blur(const Image& img);
Image gaussian_blur_adjoint(const Image& grad);

inline constexpr int kBlurKernelSize = 11;
inline constexpr double kBlurSigma = 5.0;

/// Luminance 0.299 R + 0.587 G + 0.114 B; single-channel input is returned as is.
Image to_grayscale(const Image& img);

/// Replicates a single-channel image into 3 identical channels.
Image to_rgb(const Image& img);

/// Each value clamped to [lo, hi].
Image clamp(Image img, double lo = 0.0, double hi = 1.0);

namespace detail {
/// One output coordinate of a 1-D linear resample: out = (1-w1)*in[i0] + w1*in[i1].
struct AxisSample {
    int i0;
    int i1;
    double w1;
};
/// Half-pixel-center sampling positions for resizing an axis of length `in`
/// to length `out`; source positions are clamped to the valid range.
std::vector<AxisSample> linear_axis(int in, int out);
}  // namespace detail

/// Bilinear resample with half-pixel centers and edge clamping.
Image resize_bilinear(const Image& img, int height, int width);

Image load_image(const std::filesystem::path& path,
                 std::optional<std::pair<int, int>> resize_to = std::nullopt);

/// Writes an 8-bit PNG; values are clamped to [0,1] and rounded to 1/255.
void save_png(const Image& img, const std::filesystem::path& path);

/// PNG and JPEG files (by extension, case-insensitive) directly inside `dir`,
/// sorted lexicographically. Throws Dataset when `dir` is not a directory.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

/// Writes `contents` to a sibling temporary file, then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Per-image min-max stretch to [0,1]; constant images map to all zeros.
Image normalize_for_display(const Image& img);

}  // namespace gabordefect
