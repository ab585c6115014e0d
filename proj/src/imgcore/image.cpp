#include "gabordefect/error.hpp"
#include "gabordefect/imgcore.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gabordefect {

const char* to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::InvalidArgument: return "invalid argument";
        case ErrorCode::ShapeMismatch: return "shape mismatch";
        case ErrorCode::FileUnreadable: return "file unreadable";
        case ErrorCode::UnsupportedFormat: return "unsupported format";
        case ErrorCode::UnsupportedBitDepth: return "unsupported bit depth";
        case ErrorCode::EmptyImage: return "empty image";
        case ErrorCode::FileWrite: return "file write failed";
        case ErrorCode::NonFinite: return "non-finite value";
        case ErrorCode::Dataset: return "dataset error";
        case ErrorCode::Checkpoint: return "checkpoint error";
        case ErrorCode::Config: return "config error";
    }
    return "unknown error";
}

namespace {

void check_dims(int height, int width, int channels) {
    if (height <= 0 || width <= 0)
        throw Error(ErrorCode::EmptyImage, "image dimensions must be positive, got " +
                                               std::to_string(height) + "x" + std::to_string(width));
    if (channels != 1 && channels != 3)
        throw Error(ErrorCode::InvalidArgument,
                    "image must have 1 or 3 channels, got " + std::to_string(channels));
}

}  // namespace

Image::Image(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
    check_dims(height, width, channels);
    data_.assign(static_cast<std::size_t>(channels) * height * width, fill);
}

Image::Image(int height, int width, int channels, std::vector<double> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
    check_dims(height, width, channels);
    if (data_.size() != static_cast<std::size_t>(channels) * height * width)
        throw Error(ErrorCode::ShapeMismatch, "image data length " + std::to_string(data_.size()) +
                                                  " does not match " + std::to_string(channels) + "x" +
                                                  std::to_string(height) + "x" + std::to_string(width));
}

Image Image::channel(int c) const {
    auto p = plane(c);
    return Image(height_, width_, 1, std::vector<double>(p.begin(), p.end()));
}

Tensor4::Tensor4(int n, int c, int h, int w, double fill) : n_(n), c_(c), h_(h), w_(w) {
    if (n <= 0 || c <= 0 || h <= 0 || w <= 0)
        throw Error(ErrorCode::InvalidArgument, "tensor dimensions must be positive");
    data_.assign(static_cast<std::size_t>(n) * c * h * w, fill);
}

Tensor4 to_batch(std::span<const Image> images) {
    if (images.empty()) throw Error(ErrorCode::InvalidArgument, "cannot batch zero images");
    const Image& first = images.front();
    Tensor4 out(static_cast<int>(images.size()), first.channels(), first.height(), first.width());
    for (std::size_t i = 0; i < images.size(); ++i) {
        const Image& img = images[i];
        if (img.channels() != first.channels() || img.height() != first.height() ||
            img.width() != first.width())
            throw Error(ErrorCode::ShapeMismatch, "batch images differ in shape at index " + std::to_string(i));
        std::copy(img.data().begin(), img.data().end(), out.sample(static_cast<int>(i)).begin());
    }
    return out;
}

Image from_batch(const Tensor4& batch, int n) {
    auto s = batch.sample(n);
    return Image(batch.h(), batch.w(), batch.c(), std::vector<double>(s.begin(), s.end()));
}

Kernel::Kernel(int side_h, int side_w, std::vector<double> data)
    : side_h_(side_h), side_w_(side_w), data_(std::move(data)) {
    if (side_h <= 0 || side_w <= 0 || side_h % 2 == 0 || side_w % 2 == 0)
        throw Error(ErrorCode::InvalidArgument, "kernel sides must be odd and positive, got " +
                                                    std::to_string(side_h) + "x" + std::to_string(side_w));
    if (data_.size() != static_cast<std::size_t>(side_h) * side_w)
        throw Error(ErrorCode::ShapeMismatch, "kernel data length does not match its sides");
}

Kernel::Kernel(int side_h, int side_w, double fill)
    : Kernel(side_h, side_w, std::vector<double>(
                                 static_cast<std::size_t>(std::max(side_h, 0)) * std::max(side_w, 0), fill)) {}

Image to_grayscale(const Image& img) {
    if (img.channels() == 1) return img;
    Image out(img.height(), img.width(), 1);
    auto r = img.plane(0), g = img.plane(1), b = img.plane(2);
    auto dst = out.plane(0);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
    return out;
}

Image to_rgb(const Image& img) {
    if (img.channels() == 3) return img;
    Image out(img.height(), img.width(), 3);
    for (int c = 0; c < 3; ++c) std::ranges::copy(img.plane(0), out.plane(c).begin());
    return out;
}

Image clamp(Image img, double lo, double hi) {
    for (double& v : img.data()) v = std::clamp(v, lo, hi);
    return img;
}

namespace detail {

std::vector<AxisSample> linear_axis(int in, int out) {
    std::vector<AxisSample> samples(static_cast<std::size_t>(out));
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (int o = 0; o < out; ++o) {
        double src = (o + 0.5) * scale - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(in - 1));
        const int i0 = static_cast<int>(std::floor(src));
        const int i1 = std::min(i0 + 1, in - 1);
        samples[static_cast<std::size_t>(o)] = {i0, i1, src - i0};
    }
    return samples;
}

}  // namespace detail

Image resize_bilinear(const Image& img, int height, int width) {
    if (height <= 0 || width <= 0)
        throw Error(ErrorCode::InvalidArgument, "resize target must be positive");
    if (height == img.height() && width == img.width()) return img;
    const auto ys = detail::linear_axis(img.height(), height);
    const auto xs = detail::linear_axis(img.width(), width);
    Image out(height, width, img.channels());
    for (int c = 0; c < img.channels(); ++c) {
        for (int y = 0; y < height; ++y) {
            const auto& sy = ys[static_cast<std::size_t>(y)];
            for (int x = 0; x < width; ++x) {
                const auto& sx = xs[static_cast<std::size_t>(x)];
                const double top = (1 - sx.w1) * img.at(c, sy.i0, sx.i0) + sx.w1 * img.at(c, sy.i0, sx.i1);
                const double bot = (1 - sx.w1) * img.at(c, sy.i1, sx.i0) + sx.w1 * img.at(c, sy.i1, sx.i1);
                out.at(c, y, x) = (1 - sy.w1) * top + sy.w1 * bot;
            }
        }
    }
    return out;
}

Image normalize_for_display(const Image& img) {
    Image out = img;
    if (img.empty()) return out;
    const auto [lo, hi] = std::ranges::minmax(img.data());
    if (!(hi > lo)) {
        std::ranges::fill(out.data(), 0.0);
        return out;
    }
    for (double& v : out.data()) v = (v - lo) / (hi - lo);
    return out;
}

}  // namespace gabordefect
