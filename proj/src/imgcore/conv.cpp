#include "gabordefect/error.hpp"
#include "gabordefect/imgcore.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gabordefect {

int reflect_index(int i, int n) noexcept {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

namespace {

void check_conv_args(const Image& img, const Kernel& kernel, Padding padding) {
    if (img.channels() != 1)
        throw Error(ErrorCode::InvalidArgument,
                    "conv2d expects a single-channel image, got " + std::to_string(img.channels()) + " channels");
    if (padding == Padding::Reflect &&
        (kernel.side_h() > 2 * img.height() || kernel.side_w() > 2 * img.width()))
        throw Error(ErrorCode::InvalidArgument,
                    "kernel " + std::to_string(kernel.side_h()) + "x" + std::to_string(kernel.side_w()) +
                        " exceeds twice the image extent " + std::to_string(img.height()) + "x" +
                        std::to_string(img.width()) + " under reflect padding");
}

// Source index for padded coordinate p (offset by the kernel radius), or -1
// when the sample lies outside the image under zero padding.
std::vector<int> padded_map(int n, int radius, Padding padding) {
    std::vector<int> map(static_cast<std::size_t>(n + 2 * radius));
    for (int p = 0; p < n + 2 * radius; ++p) {
        const int i = p - radius;
        if (i >= 0 && i < n)
            map[static_cast<std::size_t>(p)] = i;
        else
            map[static_cast<std::size_t>(p)] = padding == Padding::Reflect ? reflect_index(i, n) : -1;
    }
    return map;
}

}  // namespace

Image conv2d(const Image& img, const Kernel& kernel, Padding padding) {
    check_conv_args(img, kernel, padding);
    const int h = img.height(), w = img.width();
    const int kh = kernel.side_h(), kw = kernel.side_w();
    const int ry = kh / 2, rx = kw / 2;
    const int ph = h + 2 * ry, pw = w + 2 * rx;

    const auto rows = padded_map(h, ry, padding);
    const auto cols = padded_map(w, rx, padding);
    std::vector<double> padded(static_cast<std::size_t>(ph) * pw, 0.0);
    for (int py = 0; py < ph; ++py) {
        const int sy = rows[static_cast<std::size_t>(py)];
        if (sy < 0) continue;
        for (int px = 0; px < pw; ++px) {
            const int sx = cols[static_cast<std::size_t>(px)];
            if (sx >= 0) padded[static_cast<std::size_t>(py) * pw + px] = img.at(0, sy, sx);
        }
    }

    Image out(h, w, 1);
    const double* k = kernel.data().data();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int u = 0; u < kh; ++u) {
                const double* row = padded.data() + static_cast<std::size_t>(y + u) * pw + x;
                const double* krow = k + static_cast<std::size_t>(u) * kw;
                for (int v = 0; v < kw; ++v) acc += krow[v] * row[v];
            }
            out.at(0, y, x) = acc;
        }
    }
    return out;
}

Image conv2d_adjoint(const Image& grad, const Kernel& kernel, Padding padding) {
    check_conv_args(grad, kernel, padding);
    const int h = grad.height(), w = grad.width();
    const int kh = kernel.side_h(), kw = kernel.side_w();
    const int ry = kh / 2, rx = kw / 2;
    const int ph = h + 2 * ry, pw = w + 2 * rx;

    std::vector<double> padded(static_cast<std::size_t>(ph) * pw, 0.0);
    const double* k = kernel.data().data();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double g = grad.at(0, y, x);
            if (g == 0.0) continue;
            for (int u = 0; u < kh; ++u) {
                double* row = padded.data() + static_cast<std::size_t>(y + u) * pw + x;
                const double* krow = k + static_cast<std::size_t>(u) * kw;
                for (int v = 0; v < kw; ++v) row[v] += krow[v] * g;
            }
        }
    }

    const auto rows = padded_map(h, ry, padding);
    const auto cols = padded_map(w, rx, padding);
    Image out(h, w, 1);
    for (int py = 0; py < ph; ++py) {
        const int sy = rows[static_cast<std::size_t>(py)];
        if (sy < 0) continue;
        for (int px = 0; px < pw; ++px) {
            const int sx = cols[static_cast<std::size_t>(px)];
            if (sx >= 0) out.at(0, sy, sx) += padded[static_cast<std::size_t>(py) * pw + px];
        }
    }
    return out;
}

Kernel gaussian_kernel(int size, double sigma) {
    if (size <= 0 || size % 2 == 0)
        throw Error(ErrorCode::InvalidArgument, "gaussian kernel size must be odd and positive, got " +
                                                    std::to_string(size));
    if (!(sigma > 0.0))
        throw Error(ErrorCode::InvalidArgument, "gaussian sigma must be positive");
    const int r = size / 2;
    std::vector<double> values(static_cast<std::size_t>(size) * size);
    double total = 0.0;
    for (int y = -r; y <= r; ++y)
        for (int x = -r; x <= r; ++x) {
            const double v = std::exp(-(x * x + y * y) / (2.0 * sigma * sigma));
            values[static_cast<std::size_t>(y + r) * size + (x + r)] = v;
            total += v;
        }
    for (double& v : values) v /= total;
    return Kernel(size, size, std::move(values));
}

namespace {

const Kernel& blur_kernel() {
    static const Kernel k = gaussian_kernel(kBlurKernelSize, kBlurSigma);
    return k;
}

template <class Op>
Image per_channel(const Image& img, Op op) {
    if (img.channels() == 1) return op(img);
    Image out(img.height(), img.width(), img.channels());
    for (int c = 0; c < img.channels(); ++c) {
        const Image r = op(img.channel(c));
        std::ranges::copy(r.data(), out.plane(c).begin());
    }
    return out;
}

}  // namespace

Image gaussian_blur(const Image& img) {
    return per_channel(img, [](const Image& p) { return conv2d(p, blur_kernel(), Padding::Reflect); });
}

Image gaussian_blur_adjoint(const Image& grad) {
    return per_channel(grad, [](const Image& p) { return conv2d_adjoint(p, blur_kernel(), Padding::Reflect); });
}

}  // namespace gabordefect
