#include "gabordefect/error.hpp"
#include "gabordefect/train.hpp"

#include <cmath>
#include <string>

namespace gabordefect::train {

namespace {

void check_shapes(const Tensor4& pred, const Tensor4& target) {
    if (!pred.same_shape(target) || pred.size() == 0)
        throw Error(ErrorCode::ShapeMismatch,
                    "loss inputs differ in shape: (" + std::to_string(pred.n()) + "," + std::to_string(pred.c()) +
                        "," + std::to_string(pred.h()) + "," + std::to_string(pred.w()) + ") vs (" +
                        std::to_string(target.n()) + "," + std::to_string(target.c()) + "," +
                        std::to_string(target.h()) + "," + std::to_string(target.w()) + ")");
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Blurred difference G*pred - G*target for one sample; blur is linear so the
// difference is blurred once.
Image blurred_difference(const Tensor4& pred, const Tensor4& target, int n) {
    Image diff = from_batch(pred, n);
    const auto t = target.sample(n);
    for (std::size_t i = 0; i < diff.size(); ++i) diff.data()[i] -= t[i];
    return gaussian_blur(diff);
}

}  // namespace

double l1_loss(const Tensor4& pred, const Tensor4& target) {
    check_shapes(pred, target);
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) sum += std::abs(pred.data()[i] - target.data()[i]);
    return sum / static_cast<double>(pred.size());
}

double gaussian_loss(const Tensor4& pred, const Tensor4& target) {
    check_shapes(pred, target);
    double sum = 0.0;
    for (int n = 0; n < pred.n(); ++n) {
        const Image blurred = blurred_difference(pred, target, n);
        for (double v : blurred.data()) sum += std::abs(v);
    }
    return sum / static_cast<double>(pred.size());
}

LossReport total_loss(const Tensor4& pred, const Tensor4& target, Tensor4* grad) {
    check_shapes(pred, target);
    LossReport r;
    r.l1 = l1_loss(pred, target);
    r.gaussian = gaussian_loss(pred, target);
    r.total = r.l1 + r.gaussian;
    if (grad) {
        const double scale = 1.0 / static_cast<double>(pred.size());
        *grad = Tensor4(pred.n(), pred.c(), pred.h(), pred.w());
        for (int n = 0; n < pred.n(); ++n) {
            Image blurred = blurred_difference(pred, target, n);
            for (double& v : blurred.data()) v = sign(v) * scale;
            const Image back = gaussian_blur_adjoint(blurred);
            auto g = grad->sample(n);
            const auto p = pred.sample(n);
            const auto t = target.sample(n);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] = sign(p[i] - t[i]) * scale + back.data()[i];
        }
    }
    return r;
}

}  // namespace gabordefect::train
