#include "gabordefect/gabor.hpp"

#include "gabordefect/error.hpp"
#include "gabordefect/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace gabordefect::gabor {

void GaborParams::validate() const {
    if (kernel_size < 3 || kernel_size % 2 == 0)
        throw Error(ErrorCode::InvalidArgument,
                    "gabor kernel_size must be odd and >= 3, got " + std::to_string(kernel_size));
    if (!(sigma > 0.0) || !(lambda > 0.0) || !(gamma > 0.0))
        throw Error(ErrorCode::InvalidArgument, "gabor sigma, lambda and gamma must be positive, got " +
                                                    gabor::to_string(*this));
}

std::string to_string(const GaborParams& p) {
    std::ostringstream os;
    os << "(size " << p.kernel_size << ", sigma " << p.sigma << ", lambda " << p.lambda << ", gamma "
       << p.gamma << ")";
    return os.str();
}

double orientation(int k) {
    if (k < 0 || k >= kOrientations)
        throw Error(ErrorCode::InvalidArgument, "orientation index must be in [0, 8), got " + std::to_string(k));
    return std::numbers::pi / 8.0 * k + std::numbers::pi / 16.0;
}

Kernel gabor_kernel(const GaborParams& p, double theta) {
    p.validate();
    const int r = p.kernel_size / 2;
    const double c = std::cos(theta), s = std::sin(theta);
    const double two_sigma_sq = 2.0 * p.sigma * p.sigma;
    Kernel k(p.kernel_size, p.kernel_size);
    // Row index follows y, column index follows x, both centered.
    for (int y = -r; y <= r; ++y) {
        for (int x = -r; x <= r; ++x) {
            const double xr = x * c + y * s;
            const double yr = -x * s + y * c;
            const double envelope = std::exp(-(xr * xr + p.gamma * p.gamma * yr * yr) / two_sigma_sq);
            k.at(y + r, x + r) = envelope * std::cos(2.0 * std::numbers::pi * xr / p.lambda);
        }
    }
    return k;
}

namespace {

std::array<Kernel, kOrientations> make_kernels(const GaborParams& p) {
    p.validate();
    auto at = [&](int k) { return gabor_kernel(p, orientation(k)); };
    return {at(0), at(1), at(2), at(3), at(4), at(5), at(6), at(7)};
}

}  // namespace

GaborBank::GaborBank(const GaborParams& params) : params_(params), kernels_(make_kernels(params)) {}

ResponseStack::ResponseStack(std::array<Image, kOrientations> responses) : responses_(std::move(responses)) {
    const Image& first = responses_[0];
    for (const Image& r : responses_) {
        if (r.channels() != 1 || r.height() != first.height() || r.width() != first.width() || r.empty())
            throw Error(ErrorCode::ShapeMismatch, "response stack needs 8 single-channel images of equal size");
    }
}

ResponseStack apply_bank(const Image& gray, const GaborBank& bank) {
    if (gray.channels() != 1)
        throw Error(ErrorCode::InvalidArgument, "apply_bank expects a single-channel image");
    std::array<Image, kOrientations> out;
    parallel_for(kOrientations, [&](std::size_t k) {
        out[k] = conv2d(gray, bank.kernel(static_cast<int>(k)), Padding::Reflect);
    });
    return ResponseStack(std::move(out));
}

Image average_response(const ResponseStack& stack) {
    Image avg(stack.height(), stack.width(), 1);
    auto dst = avg.plane(0);
    for (std::size_t i = 0; i < dst.size(); ++i) {
        double sum = 0.0;
        int positive = 0;
        for (const Image& r : stack.responses()) {
            const double v = r.data()[i];
            sum += v;
            if (v > 0.0) ++positive;
        }
        dst[i] = positive == 0 ? 0.0 : sum / positive;
    }
    return avg;
}

DefectScore dfscore(const ResponseStack& stack) {
    const Image avg = average_response(stack);
    const double peak = std::ranges::max(avg.data());
    return {std::max(peak, 0.0)};
}

namespace {

struct Preset {
    const char* name;
    GaborParams params;
};

// grid and tile carry no published gamma; 1.0 fills the gap.
constexpr Preset kPresets[] = {
    {"carpet", {27, 12.0, 13.0, 0.8}},
    {"grid", {23, 7.0, 4.0, 1.0}},
    {"leather", {15, 11.0, 13.0, 1.8}},
    {"tile", {7, 2.0, 5.0, 1.0}},
    {"wood", {21, 14.0, 8.0, 3.0}},
    {"crack", {21, 5.0, 10.0, 1.2}},
    {"marble", {15, 11.0, 13.0, 1.8}},
};

}  // namespace

const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v;
        for (const auto& p : kPresets) v.emplace_back(p.name);
        return v;
    }();
    return names;
}

GaborParams preset_for(std::string_view name) {
    for (const auto& p : kPresets)
        if (name == p.name) return p.params;
    std::string valid;
    for (const auto& n : preset_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw Error(ErrorCode::InvalidArgument,
                "unknown gabor preset '" + std::string(name) + "'; valid presets: " + valid);
}

}  // namespace gabordefect::gabor
