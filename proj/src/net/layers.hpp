#pragma once

// Per-sample building blocks of the network. Activations are flat
// channel-major (c, h, w) arrays; token sequences are row-major (P, D).

#include <vector>

namespace gabordefect::net::layers {

struct ConvGeom {
    int cin = 0;
    int h = 0;
    int w = 0;
    int k = 3;
    int stride = 1;
    int pad = 1;

    int hout() const { return (h + 2 * pad - k) / stride + 1; }
    int wout() const { return (w + 2 * pad - k) / stride + 1; }
};

/// y (cout, hout, wout) = W (cout, cin*k*k) * im2col(x) + b.
void conv_forward(const double* x, const ConvGeom& g, const double* weight, const double* bias, int cout,
                  double* y);

/// Accumulates dW, db and (when dx is non-null) dx for upstream dy.
void conv_backward(const double* x, const ConvGeom& g, const double* weight, int cout, const double* dy,
                   double* dweight, double* dbias, double* dx);

void relu_inplace(std::vector<double>& v);
/// dv *= (activated > 0), where `activated` is the post-ReLU value.
void relu_backward(const std::vector<double>& activated, std::vector<double>& grad);

/// 2x2 stride-2 max pool; `argmax` receives the flat input index per output.
void maxpool2_forward(const std::vector<double>& x, int c, int h, int w, std::vector<double>& y,
                      std::vector<int>& argmax);
void maxpool2_backward(const std::vector<int>& argmax, const std::vector<double>& dy, std::vector<double>& dx);

/// x2 bilinear upsample with half-pixel centers.
void upsample2_forward(const std::vector<double>& x, int c, int h, int w, std::vector<double>& y);
void upsample2_backward(const std::vector<double>& dy, int c, int h, int w, std::vector<double>& dx);

/// Y (rows, out) = X (rows, in) * W^T + b with W stored (out, in).
void linear_forward(const double* x, int rows, int in, const double* weight, const double* bias, int out,
                    double* y);
/// Accumulates dW, db and (when dx is non-null) dx.
void linear_backward(const double* x, int rows, int in, const double* weight, int out, const double* dy,
                     double* dweight, double* dbias, double* dx);

/// Single-head attention on row-major (P, d) blocks with leading dimension
/// `ld` (so a head can be a column slice of a wider matrix). probs is (P, P).
void attention_forward(const double* q, const double* k, const double* v, int p, int d, int ld, double* out,
                       double* probs);
/// Accumulates dq, dk, dv from dout given the forward softmax probabilities.
void attention_backward(const double* q, const double* k, const double* v, const double* probs, int p, int d,
                        int ld, const double* dout, double* dq, double* dk, double* dv);

/// (c, n) <-> (n, c) transpose of a flat array.
void transpose(const double* src, int rows, int cols, double* dst);

}  // namespace gabordefect::net::layers
