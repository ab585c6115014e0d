#include "gabordefect/error.hpp"
#include "gabordefect/net.hpp"
#include "gabordefect/parallel.hpp"

#include "layers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace gabordefect::net {

struct SampleCache {
    std::vector<std::vector<double>> enc_in;
    std::vector<std::vector<double>> enc_out;
    std::vector<std::vector<int>> pool_idx;
    std::vector<double> embed_out;  // post-ReLU patch embedding (or adapter), (D, g*g)
    std::vector<double> tokens, q, k, v, probs, concat, resid, hpre, hact;
    std::vector<double> vit_out;  // bottleneck input, (D, g, g)
    std::vector<double> bott_out;
    std::vector<int> bott_idx;
    std::vector<std::vector<double>> dec_in;
    std::vector<std::vector<double>> dec_out;
};

ForwardTrace::ForwardTrace(bool record_values, bool keep_cache)
    : record_values_(record_values), keep_cache_(keep_cache) {}
ForwardTrace::~ForwardTrace() = default;
ForwardTrace::ForwardTrace(ForwardTrace&&) noexcept = default;
ForwardTrace& ForwardTrace::operator=(ForwardTrace&&) noexcept = default;

const ForwardTrace::Stage* ForwardTrace::find(std::string_view name) const noexcept {
    for (const auto& s : stages_)
        if (s.name == name) return &s;
    return nullptr;
}

void ForwardTrace::add_stage(std::string name, std::vector<int> shape, std::vector<double> values) {
    stages_.push_back({std::move(name), std::move(shape), record_values_ ? std::move(values) : std::vector<double>{}});
}

void ForwardTrace::clear() {
    stages_.clear();
    caches_.clear();
}

double gelu(double x) noexcept { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

namespace {

double gelu_grad(double x) noexcept {
    const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return cdf + x * pdf;
}

std::string shape_string(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ")";
    return os.str();
}

// Weight indices into ModelParams; the matching bias sits at index + 1.
struct Layout {
    std::vector<std::size_t> enc;
    std::size_t embed = 0, q = 0, k = 0, v = 0, out = 0, fc1 = 0, fc2 = 0;
    std::size_t bottleneck = 0;
    std::vector<std::size_t> dec;
    std::size_t head = 0;
};

Layout make_layout(const ModelParams& params, const ModelConfig& cfg) {
    const auto plan = param_plan(cfg);
    if (params.count() != plan.size())
        throw Error(ErrorCode::ShapeMismatch, "model has " + std::to_string(params.count()) +
                                                  " parameter arrays, config expects " +
                                                  std::to_string(plan.size()));
    Layout l;
    for (std::size_t i = 0; i < plan.size(); ++i) {
        const Param& p = params[i];
        if (p.name != plan[i].name || p.shape != plan[i].shape)
            throw Error(ErrorCode::ShapeMismatch, "parameter " + p.name + " " + shape_string(p.shape) +
                                                      " does not match expected " + plan[i].name + " " +
                                                      shape_string(plan[i].shape));
        const std::string& n = plan[i].name;
        if (plan[i].is_bias) continue;
        if (n.rfind("enc", 0) == 0)
            l.enc.push_back(i);
        else if (n == "embed.weight" || n == "adapter.weight")
            l.embed = i;
        else if (n == "attn.q.weight")
            l.q = i;
        else if (n == "attn.k.weight")
            l.k = i;
        else if (n == "attn.v.weight")
            l.v = i;
        else if (n == "attn.out.weight")
            l.out = i;
        else if (n == "ffn.fc1.weight")
            l.fc1 = i;
        else if (n == "ffn.fc2.weight")
            l.fc2 = i;
        else if (n == "bottleneck.weight")
            l.bottleneck = i;
        else if (n.rfind("dec", 0) == 0)
            l.dec.push_back(i);
        else if (n == "head.weight")
            l.head = i;
    }
    return l;
}

// Per-sample stage outputs, merged into the batch trace afterwards.
struct StageLog {
    bool values = false;
    std::vector<ForwardTrace::Stage> stages;
    void add(const char* name, std::vector<int> shape, const std::vector<double>& v) {
        stages.push_back({name, std::move(shape), values ? v : std::vector<double>{}});
    }
    void add(const std::string& name, std::vector<int> shape, const std::vector<double>& v) {
        add(name.c_str(), std::move(shape), v);
    }
};

void merge_logs(std::vector<StageLog>& logs, ForwardTrace& trace) {
    const std::size_t n = logs.size();
    for (std::size_t s = 0; s < logs[0].stages.size(); ++s) {
        auto shape = logs[0].stages[s].shape;
        shape.insert(shape.begin(), static_cast<int>(n));
        std::vector<double> values;
        if (trace.records_values())
            for (auto& log : logs)
                values.insert(values.end(), log.stages[s].values.begin(), log.stages[s].values.end());
        trace.add_stage(logs[0].stages[s].name, std::move(shape), std::move(values));
    }
}

const double* W(const ModelParams& p, std::size_t i) { return p[i].values.data(); }
const double* B(const ModelParams& p, std::size_t i) { return p[i + 1].values.data(); }
double* W(ModelParams& p, std::size_t i) { return p[i].values.data(); }
double* B(ModelParams& p, std::size_t i) { return p[i + 1].values.data(); }

// Patch embedding / adapter followed by the transformer block when enabled.
// Input: encoder map (c, h, w). Output: (D, h/patch, w/patch).
std::vector<double> vit_sample(const ModelParams& P, const ModelConfig& cfg, const Layout& L,
                               const std::vector<double>& x, int c, int h, int w, SampleCache& sc,
                               StageLog& log) {
    const int d = cfg.embed_dim;
    const int gh = h / cfg.patch_size, gw = w / cfg.patch_size;
    const int tokens = gh * gw;
    const layers::ConvGeom patch{c, h, w, cfg.patch_size, cfg.patch_size, 0};

    sc.embed_out.assign(static_cast<std::size_t>(d) * tokens, 0.0);
    layers::conv_forward(x.data(), patch, W(P, L.embed), B(P, L.embed), d, sc.embed_out.data());
    layers::relu_inplace(sc.embed_out);
    if (!cfg.use_vit) {
        log.add("adapter", {d, gh, gw}, sc.embed_out);
        return sc.embed_out;
    }
    log.add("embed", {d, gh, gw}, sc.embed_out);

    const std::size_t pd = static_cast<std::size_t>(tokens) * d;
    sc.tokens.assign(pd, 0.0);
    layers::transpose(sc.embed_out.data(), d, tokens, sc.tokens.data());
    log.add("tokens", {tokens, d}, sc.tokens);

    sc.q.assign(pd, 0.0);
    sc.k.assign(pd, 0.0);
    sc.v.assign(pd, 0.0);
    layers::linear_forward(sc.tokens.data(), tokens, d, W(P, L.q), B(P, L.q), d, sc.q.data());
    layers::linear_forward(sc.tokens.data(), tokens, d, W(P, L.k), B(P, L.k), d, sc.k.data());
    layers::linear_forward(sc.tokens.data(), tokens, d, W(P, L.v), B(P, L.v), d, sc.v.data());

    const int dk = cfg.head_dim();
    sc.concat.assign(pd, 0.0);
    sc.probs.assign(static_cast<std::size_t>(cfg.num_heads) * tokens * tokens, 0.0);
    for (int hd = 0; hd < cfg.num_heads; ++hd)
        layers::attention_forward(sc.q.data() + hd * dk, sc.k.data() + hd * dk, sc.v.data() + hd * dk, tokens,
                                  dk, d, sc.concat.data() + hd * dk,
                                  sc.probs.data() + static_cast<std::size_t>(hd) * tokens * tokens);

    sc.resid.assign(pd, 0.0);
    layers::linear_forward(sc.concat.data(), tokens, d, W(P, L.out), B(P, L.out), d, sc.resid.data());
    for (std::size_t i = 0; i < pd; ++i) sc.resid[i] += sc.tokens[i];
    log.add("attn", {tokens, d}, sc.resid);

    const int hidden = cfg.ffn_hidden();
    sc.hpre.assign(static_cast<std::size_t>(tokens) * hidden, 0.0);
    layers::linear_forward(sc.resid.data(), tokens, d, W(P, L.fc1), B(P, L.fc1), hidden, sc.hpre.data());
    sc.hact.resize(sc.hpre.size());
    std::ranges::transform(sc.hpre, sc.hact.begin(), gelu);
    std::vector<double> z(pd, 0.0);
    layers::linear_forward(sc.hact.data(), tokens, hidden, W(P, L.fc2), B(P, L.fc2), d, z.data());
    for (std::size_t i = 0; i < pd; ++i) z[i] += sc.resid[i];
    log.add("ffn", {tokens, d}, z);

    std::vector<double> out(pd, 0.0);
    layers::transpose(z.data(), tokens, d, out.data());
    log.add("vit_out", {d, gh, gw}, out);
    return out;
}

// Returns d(loss)/d(vit input) and accumulates parameter gradients.
std::vector<double> vit_sample_backward(const ModelParams& P, const ModelConfig& cfg, const Layout& L,
                                        const std::vector<double>& x, int c, int h, int w,
                                        const SampleCache& sc, std::vector<double> dout, ModelParams& G) {
    const int d = cfg.embed_dim;
    const int gh = h / cfg.patch_size, gw = w / cfg.patch_size;
    const int tokens = gh * gw;
    const std::size_t pd = static_cast<std::size_t>(tokens) * d;
    std::vector<double> dembed;

    if (!cfg.use_vit) {
        dembed = std::move(dout);
    } else {
        std::vector<double> dz(pd, 0.0);
        layers::transpose(dout.data(), d, tokens, dz.data());

        const int hidden = cfg.ffn_hidden();
        std::vector<double> dhact(sc.hact.size(), 0.0);
        layers::linear_backward(sc.hact.data(), tokens, hidden, W(P, L.fc2), d, dz.data(), W(G, L.fc2),
                                B(G, L.fc2), dhact.data());
        for (std::size_t i = 0; i < dhact.size(); ++i) dhact[i] *= gelu_grad(sc.hpre[i]);
        std::vector<double> dresid = dz;
        layers::linear_backward(sc.resid.data(), tokens, d, W(P, L.fc1), hidden, dhact.data(), W(G, L.fc1),
                                B(G, L.fc1), dresid.data());

        std::vector<double> dconcat(pd, 0.0);
        layers::linear_backward(sc.concat.data(), tokens, d, W(P, L.out), d, dresid.data(), W(G, L.out),
                                B(G, L.out), dconcat.data());

        const int dk = cfg.head_dim();
        std::vector<double> dq(pd, 0.0), dk_(pd, 0.0), dv(pd, 0.0);
        for (int hd = 0; hd < cfg.num_heads; ++hd)
            layers::attention_backward(sc.q.data() + hd * dk, sc.k.data() + hd * dk, sc.v.data() + hd * dk,
                                       sc.probs.data() + static_cast<std::size_t>(hd) * tokens * tokens, tokens,
                                       dk, d, dconcat.data() + hd * dk, dq.data() + hd * dk,
                                       dk_.data() + hd * dk, dv.data() + hd * dk);

        std::vector<double> dtokens = dresid;
        layers::linear_backward(sc.tokens.data(), tokens, d, W(P, L.q), d, dq.data(), W(G, L.q), B(G, L.q),
                                dtokens.data());
        layers::linear_backward(sc.tokens.data(), tokens, d, W(P, L.k), d, dk_.data(), W(G, L.k), B(G, L.k),
                                dtokens.data());
        layers::linear_backward(sc.tokens.data(), tokens, d, W(P, L.v), d, dv.data(), W(G, L.v), B(G, L.v),
                                dtokens.data());

        dembed.assign(pd, 0.0);
        layers::transpose(dtokens.data(), tokens, d, dembed.data());
    }

    layers::relu_backward(sc.embed_out, dembed);
    std::vector<double> dx(static_cast<std::size_t>(c) * h * w, 0.0);
    const layers::ConvGeom patch{c, h, w, cfg.patch_size, cfg.patch_size, 0};
    layers::conv_backward(x.data(), patch, W(P, L.embed), d, dembed.data(), W(G, L.embed), B(G, L.embed),
                          dx.data());
    return dx;
}

std::vector<double> forward_sample(const ModelParams& P, const ModelConfig& cfg, const Layout& L,
                                   std::span<const double> input, SampleCache& sc, StageLog& log) {
    const int depth = cfg.depth;
    sc.enc_in.assign(static_cast<std::size_t>(depth), {});
    sc.enc_out.assign(static_cast<std::size_t>(depth), {});
    sc.pool_idx.assign(static_cast<std::size_t>(depth - 1), {});

    std::vector<double> x(input.begin(), input.end());
    int c = 3, side = cfg.image_size;
    for (int i = 0; i < depth; ++i) {
        const int cout = cfg.encoder_width(i);
        const layers::ConvGeom g{c, side, side, 3, 1, 1};
        std::vector<double> y(static_cast<std::size_t>(cout) * side * side, 0.0);
        layers::conv_forward(x.data(), g, W(P, L.enc[i]), B(P, L.enc[i]), cout, y.data());
        layers::relu_inplace(y);
        log.add("enc" + std::to_string(i + 1), {cout, side, side}, y);
        sc.enc_in[i] = std::move(x);
        sc.enc_out[i] = std::move(y);
        c = cout;
        if (i + 1 < depth) {
            layers::maxpool2_forward(sc.enc_out[i], c, side, side, x, sc.pool_idx[i]);
            side /= 2;
            log.add("pool" + std::to_string(i + 1), {c, side, side}, x);
        }
    }

    sc.vit_out = vit_sample(P, cfg, L, sc.enc_out[depth - 1], c, side, side, sc, log);
    const int d = cfg.embed_dim;
    const int grid = cfg.token_grid();

    const int bc = cfg.bottleneck_channels();
    sc.bott_out.assign(static_cast<std::size_t>(bc) * grid * grid, 0.0);
    layers::conv_forward(sc.vit_out.data(), {d, grid, grid, 3, 1, 1}, W(P, L.bottleneck), B(P, L.bottleneck),
                         bc, sc.bott_out.data());
    layers::relu_inplace(sc.bott_out);
    log.add("bottleneck_conv", {bc, grid, grid}, sc.bott_out);
    std::vector<double> cur;
    layers::maxpool2_forward(sc.bott_out, bc, grid, grid, cur, sc.bott_idx);
    side = grid / 2;
    c = bc;
    log.add("bottleneck", {c, side, side}, cur);

    const int steps = cfg.decoder_steps();
    sc.dec_in.assign(static_cast<std::size_t>(steps), {});
    sc.dec_out.assign(static_cast<std::size_t>(steps), {});
    for (int j = 0; j < steps; ++j) {
        std::vector<double> up;
        layers::upsample2_forward(cur, c, side, side, up);
        side *= 2;
        int cin = c;
        const int skip = cfg.decoder_skip_stage(j);
        if (skip >= 0) {
            up.insert(up.end(), sc.enc_out[skip].begin(), sc.enc_out[skip].end());
            cin += cfg.encoder_width(skip);
        }
        const int cout = cfg.decoder_out_channels(j);
        std::vector<double> y(static_cast<std::size_t>(cout) * side * side, 0.0);
        layers::conv_forward(up.data(), {cin, side, side, 3, 1, 1}, W(P, L.dec[j]), B(P, L.dec[j]), cout,
                             y.data());
        layers::relu_inplace(y);
        log.add("dec" + std::to_string(j + 1), {cout, side, side}, y);
        sc.dec_in[j] = std::move(up);
        sc.dec_out[j] = y;
        cur = std::move(y);
        c = cout;
    }

    std::vector<double> out(static_cast<std::size_t>(3) * side * side, 0.0);
    layers::conv_forward(cur.data(), {c, side, side, 1, 1, 0}, W(P, L.head), B(P, L.head), 3, out.data());
    log.add("output", {3, side, side}, out);
    return out;
}

void backward_sample(const ModelParams& P, const ModelConfig& cfg, const Layout& L, const SampleCache& sc,
                     std::span<const double> upstream, ModelParams& G) {
    const int depth = cfg.depth;
    const int steps = cfg.decoder_steps();
    const int S = cfg.image_size;

    std::vector<std::vector<double>> denc(static_cast<std::size_t>(depth));
    for (int i = 0; i < depth; ++i) denc[i].assign(sc.enc_out[i].size(), 0.0);

    int c = cfg.decoder_out_channels(steps - 1);
    std::vector<double> dcur(sc.dec_out[steps - 1].size(), 0.0);
    std::vector<double> dup(upstream.begin(), upstream.end());
    layers::conv_backward(sc.dec_out[steps - 1].data(), {c, S, S, 1, 1, 0}, W(P, L.head), 3, dup.data(),
                          W(G, L.head), B(G, L.head), dcur.data());

    for (int j = steps - 1; j >= 0; --j) {
        const int side = cfg.decoder_side(j);
        const int cout = cfg.decoder_out_channels(j);
        const int cprev = j == 0 ? cfg.bottleneck_channels() : cfg.decoder_out_channels(j - 1);
        const int skip = cfg.decoder_skip_stage(j);
        const int cin = cprev + (skip >= 0 ? cfg.encoder_width(skip) : 0);
        layers::relu_backward(sc.dec_out[j], dcur);
        std::vector<double> din(sc.dec_in[j].size(), 0.0);
        layers::conv_backward(sc.dec_in[j].data(), {cin, side, side, 3, 1, 1}, W(P, L.dec[j]), cout,
                              dcur.data(), W(G, L.dec[j]), B(G, L.dec[j]), din.data());
        const std::size_t up_len = static_cast<std::size_t>(cprev) * side * side;
        if (skip >= 0)
            for (std::size_t i = 0; i < denc[skip].size(); ++i) denc[skip][i] += din[up_len + i];
        din.resize(up_len);
        layers::upsample2_backward(din, cprev, side / 2, side / 2, dcur);
        c = cprev;
    }

    const int grid = cfg.token_grid();
    const int d = cfg.embed_dim;
    const int bc = cfg.bottleneck_channels();
    std::vector<double> dbott(sc.bott_out.size(), 0.0);
    layers::maxpool2_backward(sc.bott_idx, dcur, dbott);
    layers::relu_backward(sc.bott_out, dbott);
    std::vector<double> dvit(sc.vit_out.size(), 0.0);
    layers::conv_backward(sc.vit_out.data(), {d, grid, grid, 3, 1, 1}, W(P, L.bottleneck), bc, dbott.data(),
                          W(G, L.bottleneck), B(G, L.bottleneck), dvit.data());

    const int top = cfg.encoder_width(depth - 1);
    const int emap = cfg.encoder_map();
    const auto dtop = vit_sample_backward(P, cfg, L, sc.enc_out[depth - 1], top, emap, emap, sc,
                                          std::move(dvit), G);
    for (std::size_t i = 0; i < dtop.size(); ++i) denc[depth - 1][i] += dtop[i];

    for (int i = depth - 1; i >= 0; --i) {
        const int side = S >> i;
        const int cin = i == 0 ? 3 : cfg.encoder_width(i - 1);
        const int cout = cfg.encoder_width(i);
        layers::relu_backward(sc.enc_out[i], denc[i]);
        std::vector<double> din(i == 0 ? 0 : sc.enc_in[i].size(), 0.0);
        layers::conv_backward(sc.enc_in[i].data(), {cin, side, side, 3, 1, 1}, W(P, L.enc[i]), cout,
                              denc[i].data(), W(G, L.enc[i]), B(G, L.enc[i]), i == 0 ? nullptr : din.data());
        if (i > 0) layers::maxpool2_backward(sc.pool_idx[i - 1], din, denc[i - 1]);
    }
}

void add_into(ModelParams& total, const ModelParams& part) {
    for (std::size_t i = 0; i < total.count(); ++i) {
        auto& dst = total[i].values;
        const auto& src = part[i].values;
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
}

void reset(ModelParams& g) {
    for (auto& p : g) std::ranges::fill(p.values, 0.0);
}

}  // namespace

Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v, Matrix* weights) {
    if (q.rows != k.rows || q.rows != v.rows || q.cols != k.cols || q.cols != v.cols || q.rows == 0 ||
        q.cols == 0)
        throw Error(ErrorCode::ShapeMismatch, "attention expects q, k, v of equal non-empty shape");
    for (const Matrix* m : {&q, &k, &v})
        for (double x : m->data)
            if (!std::isfinite(x)) throw Error(ErrorCode::NonFinite, "attention input contains a non-finite value");
    Matrix out(q.rows, q.cols);
    Matrix probs(q.rows, q.rows);
    layers::attention_forward(q.data.data(), k.data.data(), v.data.data(), q.rows, q.cols, q.cols,
                              out.data.data(), probs.data.data());
    if (weights) *weights = std::move(probs);
    return out;
}

Tensor4 vit_block(const Tensor4& x, const ModelParams& params, const ModelConfig& cfg, ForwardTrace* trace) {
    const Layout L = make_layout(params, cfg);
    const int cin = params[L.embed].shape[1];
    if (x.c() != cin)
        throw Error(ErrorCode::ShapeMismatch, "vit_block: input has " + std::to_string(x.c()) +
                                                  " channels, patch embedding expects " + std::to_string(cin));
    if (x.h() % cfg.patch_size != 0 || x.w() % cfg.patch_size != 0)
        throw Error(ErrorCode::ShapeMismatch, "vit_block: input " + std::to_string(x.h()) + "x" +
                                                  std::to_string(x.w()) + " is not divisible by patch_size " +
                                                  std::to_string(cfg.patch_size));
    const int gh = x.h() / cfg.patch_size, gw = x.w() / cfg.patch_size;
    Tensor4 out(x.n(), cfg.embed_dim, gh, gw);
    std::vector<StageLog> logs(static_cast<std::size_t>(x.n()));
    parallel_for(static_cast<std::size_t>(x.n()), [&](std::size_t s) {
        SampleCache sc;
        logs[s].values = trace && trace->records_values();
        auto sample = x.sample(static_cast<int>(s));
        std::vector<double> in(sample.begin(), sample.end());
        const auto y = vit_sample(params, cfg, L, in, x.c(), x.h(), x.w(), sc, logs[s]);
        std::ranges::copy(y, out.sample(static_cast<int>(s)).begin());
    });
    if (trace) merge_logs(logs, *trace);
    return out;
}

Tensor4 forward(const ModelParams& params, const ModelConfig& cfg, const Tensor4& batch, ForwardTrace* trace) {
    cfg.validate();
    const Layout L = make_layout(params, cfg);
    if (batch.c() != 3 || batch.h() != cfg.image_size || batch.w() != cfg.image_size)
        throw Error(ErrorCode::ShapeMismatch, "forward: input stage expects (n,3," + std::to_string(cfg.image_size) +
                                                  "," + std::to_string(cfg.image_size) + "), got (" +
                                                  std::to_string(batch.n()) + "," + std::to_string(batch.c()) +
                                                  "," + std::to_string(batch.h()) + "," +
                                                  std::to_string(batch.w()) + ")");
    const auto n = static_cast<std::size_t>(batch.n());
    Tensor4 out(batch.n(), 3, cfg.image_size, cfg.image_size);
    std::vector<StageLog> logs(n);
    std::vector<std::unique_ptr<SampleCache>> caches(n);
    const bool keep = trace && trace->keeps_cache();
    parallel_for(n, [&](std::size_t s) {
        auto sc = std::make_unique<SampleCache>();
        logs[s].values = trace && trace->records_values();
        const auto y = forward_sample(params, cfg, L, batch.sample(static_cast<int>(s)), *sc, logs[s]);
        std::ranges::copy(y, out.sample(static_cast<int>(s)).begin());
        if (keep) caches[s] = std::move(sc);
    });
    if (trace) {
        trace->clear();
        std::vector<double> input_values;
        if (trace->records_values()) input_values = batch.data();
        trace->add_stage("input", {batch.n(), 3, cfg.image_size, cfg.image_size}, std::move(input_values));
        merge_logs(logs, *trace);
        if (keep) trace->caches() = std::move(caches);
    }
    return out;
}

ModelParams backward(const ModelParams& params, const ModelConfig& cfg, const ForwardTrace& trace,
                     const Tensor4& upstream) {
    if (!trace.has_cache())
        throw Error(ErrorCode::InvalidArgument, "backward requires a forward trace recorded with keep_cache");
    const Layout L = make_layout(params, cfg);
    const std::size_t n = trace.caches().size();
    if (upstream.n() != static_cast<int>(n) || upstream.c() != 3 || upstream.h() != cfg.image_size ||
        upstream.w() != cfg.image_size)
        throw Error(ErrorCode::ShapeMismatch, "backward: upstream gradient does not match the traced batch");

    // Per-sample gradients are summed in sample order whatever the worker count.
    ModelParams total = zeros_like(params);
    const std::size_t chunk = static_cast<std::size_t>(std::max(1, worker_count()));
    std::vector<ModelParams> scratch(std::min(chunk, n), zeros_like(params));
    for (std::size_t base = 0; base < n; base += chunk) {
        const std::size_t m = std::min(chunk, n - base);
        parallel_for(m, [&](std::size_t t) {
            reset(scratch[t]);
            backward_sample(params, cfg, L, *trace.caches()[base + t], upstream.sample(static_cast<int>(base + t)),
                            scratch[t]);
        });
        for (std::size_t t = 0; t < m; ++t) add_into(total, scratch[t]);
    }
    return total;
}

}  // namespace gabordefect::net
