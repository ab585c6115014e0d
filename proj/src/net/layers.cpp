#include "layers.hpp"

#include "gabordefect/imgcore.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace gabordefect::net::layers {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<RowMat>;
using CMap = Eigen::Map<const RowMat>;
using Stride = Eigen::OuterStride<>;
using StridedMap = Eigen::Map<RowMat, 0, Stride>;
using CStridedMap = Eigen::Map<const RowMat, 0, Stride>;

// im2col is built in column tiles so the scratch stays bounded at large resolutions.
constexpr std::size_t kTileBudget = std::size_t{1} << 20;

int tile_width(int kdim, int pixels) {
    const auto t = std::max<std::size_t>(1, kTileBudget / static_cast<std::size_t>(kdim));
    return static_cast<int>(std::min<std::size_t>(t, static_cast<std::size_t>(pixels)));
}

// col (cin*k*k, p1-p0) for output pixels [p0, p1).
void im2col(const double* x, const ConvGeom& g, int p0, int p1, double* col) {
    const int wo = g.wout();
    const int tw = p1 - p0;
    for (int c = 0; c < g.cin; ++c) {
        const double* plane = x + static_cast<std::size_t>(c) * g.h * g.w;
        for (int u = 0; u < g.k; ++u) {
            for (int v = 0; v < g.k; ++v) {
                double* row = col + (static_cast<std::size_t>(c) * g.k * g.k + u * g.k + v) * tw;
                for (int p = p0; p < p1; ++p) {
                    const int oy = p / wo, ox = p % wo;
                    const int iy = oy * g.stride - g.pad + u;
                    const int ix = ox * g.stride - g.pad + v;
                    row[p - p0] = (iy >= 0 && iy < g.h && ix >= 0 && ix < g.w)
                                      ? plane[static_cast<std::size_t>(iy) * g.w + ix]
                                      : 0.0;
                }
            }
        }
    }
}

void col2im_add(const double* col, const ConvGeom& g, int p0, int p1, double* dx) {
    const int wo = g.wout();
    const int tw = p1 - p0;
    for (int c = 0; c < g.cin; ++c) {
        double* plane = dx + static_cast<std::size_t>(c) * g.h * g.w;
        for (int u = 0; u < g.k; ++u) {
            for (int v = 0; v < g.k; ++v) {
                const double* row = col + (static_cast<std::size_t>(c) * g.k * g.k + u * g.k + v) * tw;
                for (int p = p0; p < p1; ++p) {
                    const int oy = p / wo, ox = p % wo;
                    const int iy = oy * g.stride - g.pad + u;
                    const int ix = ox * g.stride - g.pad + v;
                    if (iy >= 0 && iy < g.h && ix >= 0 && ix < g.w)
                        plane[static_cast<std::size_t>(iy) * g.w + ix] += row[p - p0];
                }
            }
        }
    }
}

}  // namespace

void conv_forward(const double* x, const ConvGeom& g, const double* weight, const double* bias, int cout,
                  double* y) {
    const int kdim = g.cin * g.k * g.k;
    const int pixels = g.hout() * g.wout();
    const int tw = tile_width(kdim, pixels);
    std::vector<double> col(static_cast<std::size_t>(kdim) * tw);
    CMap wmat(weight, cout, kdim);
    for (int p0 = 0; p0 < pixels; p0 += tw) {
        const int p1 = std::min(pixels, p0 + tw);
        im2col(x, g, p0, p1, col.data());
        CMap cmat(col.data(), kdim, p1 - p0);
        StridedMap out(y + p0, cout, p1 - p0, Stride(pixels));
        out.noalias() = wmat * cmat;
    }
    for (int o = 0; o < cout; ++o) {
        double* row = y + static_cast<std::size_t>(o) * pixels;
        for (int p = 0; p < pixels; ++p) row[p] += bias[o];
    }
}

void conv_backward(const double* x, const ConvGeom& g, const double* weight, int cout, const double* dy,
                   double* dweight, double* dbias, double* dx) {
    const int kdim = g.cin * g.k * g.k;
    const int pixels = g.hout() * g.wout();
    const int tw = tile_width(kdim, pixels);
    std::vector<double> col(static_cast<std::size_t>(kdim) * tw);
    std::vector<double> dcol(dx ? col.size() : 0);
    CMap wmat(weight, cout, kdim);
    Map dw(dweight, cout, kdim);
    for (int p0 = 0; p0 < pixels; p0 += tw) {
        const int p1 = std::min(pixels, p0 + tw);
        im2col(x, g, p0, p1, col.data());
        CMap cmat(col.data(), kdim, p1 - p0);
        CStridedMap grad(dy + p0, cout, p1 - p0, Stride(pixels));
        dw.noalias() += grad * cmat.transpose();
        if (dx) {
            Map dc(dcol.data(), kdim, p1 - p0);
            dc.noalias() = wmat.transpose() * grad;
            col2im_add(dcol.data(), g, p0, p1, dx);
        }
    }
    for (int o = 0; o < cout; ++o) {
        const double* row = dy + static_cast<std::size_t>(o) * pixels;
        double s = 0.0;
        for (int p = 0; p < pixels; ++p) s += row[p];
        dbias[o] += s;
    }
}

void relu_inplace(std::vector<double>& v) {
    for (double& x : v) x = x > 0.0 ? x : 0.0;
}

void relu_backward(const std::vector<double>& activated, std::vector<double>& grad) {
    for (std::size_t i = 0; i < grad.size(); ++i)
        if (!(activated[i] > 0.0)) grad[i] = 0.0;
}

void maxpool2_forward(const std::vector<double>& x, int c, int h, int w, std::vector<double>& y,
                      std::vector<int>& argmax) {
    const int ho = h / 2, wo = w / 2;
    y.assign(static_cast<std::size_t>(c) * ho * wo, 0.0);
    argmax.assign(y.size(), 0);
    for (int ch = 0; ch < c; ++ch)
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                int best = (ch * h + 2 * oy) * w + 2 * ox;
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        const int idx = (ch * h + 2 * oy + dy) * w + 2 * ox + dx;
                        if (x[static_cast<std::size_t>(idx)] > x[static_cast<std::size_t>(best)]) best = idx;
                    }
                const std::size_t o = (static_cast<std::size_t>(ch) * ho + oy) * wo + ox;
                y[o] = x[static_cast<std::size_t>(best)];
                argmax[o] = best;
            }
}

void maxpool2_backward(const std::vector<int>& argmax, const std::vector<double>& dy, std::vector<double>& dx) {
    for (std::size_t o = 0; o < dy.size(); ++o) dx[static_cast<std::size_t>(argmax[o])] += dy[o];
}

void upsample2_forward(const std::vector<double>& x, int c, int h, int w, std::vector<double>& y) {
    const int ho = 2 * h, wo = 2 * w;
    const auto ys = gabordefect::detail::linear_axis(h, ho);
    const auto xs = gabordefect::detail::linear_axis(w, wo);
    y.assign(static_cast<std::size_t>(c) * ho * wo, 0.0);
    for (int ch = 0; ch < c; ++ch) {
        const double* src = x.data() + static_cast<std::size_t>(ch) * h * w;
        double* dst = y.data() + static_cast<std::size_t>(ch) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
            const auto& sy = ys[static_cast<std::size_t>(oy)];
            for (int ox = 0; ox < wo; ++ox) {
                const auto& sx = xs[static_cast<std::size_t>(ox)];
                const double top = (1 - sx.w1) * src[sy.i0 * w + sx.i0] + sx.w1 * src[sy.i0 * w + sx.i1];
                const double bot = (1 - sx.w1) * src[sy.i1 * w + sx.i0] + sx.w1 * src[sy.i1 * w + sx.i1];
                dst[oy * wo + ox] = (1 - sy.w1) * top + sy.w1 * bot;
            }
        }
    }
}

void upsample2_backward(const std::vector<double>& dy, int c, int h, int w, std::vector<double>& dx) {
    const int ho = 2 * h, wo = 2 * w;
    const auto ys = gabordefect::detail::linear_axis(h, ho);
    const auto xs = gabordefect::detail::linear_axis(w, wo);
    dx.assign(static_cast<std::size_t>(c) * h * w, 0.0);
    for (int ch = 0; ch < c; ++ch) {
        const double* src = dy.data() + static_cast<std::size_t>(ch) * ho * wo;
        double* dst = dx.data() + static_cast<std::size_t>(ch) * h * w;
        for (int oy = 0; oy < ho; ++oy) {
            const auto& sy = ys[static_cast<std::size_t>(oy)];
            for (int ox = 0; ox < wo; ++ox) {
                const auto& sx = xs[static_cast<std::size_t>(ox)];
                const double g = src[oy * wo + ox];
                dst[sy.i0 * w + sx.i0] += (1 - sy.w1) * (1 - sx.w1) * g;
                dst[sy.i0 * w + sx.i1] += (1 - sy.w1) * sx.w1 * g;
                dst[sy.i1 * w + sx.i0] += sy.w1 * (1 - sx.w1) * g;
                dst[sy.i1 * w + sx.i1] += sy.w1 * sx.w1 * g;
            }
        }
    }
}

void linear_forward(const double* x, int rows, int in, const double* weight, const double* bias, int out,
                    double* y) {
    CMap xm(x, rows, in);
    CMap wm(weight, out, in);
    Map ym(y, rows, out);
    ym.noalias() = xm * wm.transpose();
    for (int r = 0; r < rows; ++r)
        for (int o = 0; o < out; ++o) ym(r, o) += bias[o];
}

void linear_backward(const double* x, int rows, int in, const double* weight, int out, const double* dy,
                     double* dweight, double* dbias, double* dx) {
    CMap xm(x, rows, in);
    CMap wm(weight, out, in);
    CMap gm(dy, rows, out);
    Map dw(dweight, out, in);
    dw.noalias() += gm.transpose() * xm;
    for (int o = 0; o < out; ++o) {
        double s = 0.0;
        for (int r = 0; r < rows; ++r) s += gm(r, o);
        dbias[o] += s;
    }
    if (dx) {
        Map dxm(dx, rows, in);
        dxm.noalias() += gm * wm;
    }
}

void attention_forward(const double* q, const double* k, const double* v, int p, int d, int ld, double* out,
                       double* probs) {
    CStridedMap qm(q, p, d, Stride(ld)), km(k, p, d, Stride(ld)), vm(v, p, d, Stride(ld));
    Map pm(probs, p, p);
    pm.noalias() = qm * km.transpose();
    pm *= 1.0 / std::sqrt(static_cast<double>(d));
    for (int r = 0; r < p; ++r) {
        const double mx = pm.row(r).maxCoeff();
        double sum = 0.0;
        for (int c = 0; c < p; ++c) {
            pm(r, c) = std::exp(pm(r, c) - mx);
            sum += pm(r, c);
        }
        pm.row(r) /= sum;
    }
    StridedMap om(out, p, d, Stride(ld));
    om.noalias() = pm * vm;
}

void attention_backward(const double* q, const double* k, const double* v, const double* probs, int p, int d,
                        int ld, const double* dout, double* dq, double* dk, double* dv) {
    CStridedMap qm(q, p, d, Stride(ld)), km(k, p, d, Stride(ld)), vm(v, p, d, Stride(ld));
    CStridedMap go(dout, p, d, Stride(ld));
    CMap pm(probs, p, p);
    StridedMap dqm(dq, p, d, Stride(ld)), dkm(dk, p, d, Stride(ld)), dvm(dv, p, d, Stride(ld));

    dvm.noalias() += pm.transpose() * go;
    RowMat dprobs = go * vm.transpose();
    RowMat dscores(p, p);
    for (int r = 0; r < p; ++r) {
        const double dot = (dprobs.row(r).array() * pm.row(r).array()).sum();
        for (int c = 0; c < p; ++c) dscores(r, c) = pm(r, c) * (dprobs(r, c) - dot);
    }
    dscores *= 1.0 / std::sqrt(static_cast<double>(d));
    dqm.noalias() += dscores * km;
    dkm.noalias() += dscores.transpose() * qm;
}

void transpose(const double* src, int rows, int cols, double* dst) {
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) dst[static_cast<std::size_t>(c) * rows + r] = src[static_cast<std::size_t>(r) * cols + c];
}

}  // namespace gabordefect::net::layers
