#include "gabordefect/error.hpp"
#include "gabordefect/net.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <utility>

namespace gabordefect::net {

namespace {

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

[[noreturn]] void invalid(const std::string& what) {
    throw Error(ErrorCode::InvalidArgument, "invalid model config: " + what);
}

}  // namespace

void ModelConfig::validate() const {
    if (image_size <= 0 || base_width <= 0 || depth <= 0 || patch_size <= 0 || embed_dim <= 0 ||
        num_heads <= 0 || ffn_mult <= 0)
        invalid("all sizes must be positive");
    if (depth > 16) invalid("depth must not exceed 16");
    if (image_size % (1 << (depth - 1)) != 0)
        invalid("image_size " + std::to_string(image_size) + " is not divisible by 2^(depth-1) = " +
                std::to_string(1 << (depth - 1)));
    if (encoder_map() % patch_size != 0)
        invalid("encoder map side " + std::to_string(encoder_map()) + " is not divisible by patch_size " +
                std::to_string(patch_size));
    if (!is_power_of_two(patch_size))
        invalid("patch_size " + std::to_string(patch_size) + " must be a power of two");
    if (token_grid() % 2 != 0)
        invalid("token grid side " + std::to_string(token_grid()) + " must be even for the bottleneck pool");
    if (embed_dim % num_heads != 0)
        invalid("embed_dim " + std::to_string(embed_dim) + " is not divisible by num_heads " +
                std::to_string(num_heads));
}

int ModelConfig::decoder_steps() const {
    // S / (g/2) = 2 * patch_size * 2^(depth-1), a power of two.
    int steps = depth;
    for (int p = patch_size; p > 1; p >>= 1) ++steps;
    return steps;
}

int ModelConfig::decoder_out_channels(int j) const {
    const int from_end = decoder_steps() - 1 - j;
    return encoder_width(std::min(from_end / 2, depth - 1));
}

int ModelConfig::decoder_skip_stage(int j) const {
    const int side = decoder_side(j);
    for (int i = 0; i < depth; ++i)
        if ((image_size >> i) == side) return i;
    return -1;
}

std::string describe(const ModelConfig& cfg) {
    std::ostringstream os;
    os << "image_size=" << cfg.image_size << " base_width=" << cfg.base_width << " depth=" << cfg.depth
       << " patch_size=" << cfg.patch_size << " embed_dim=" << cfg.embed_dim << " num_heads=" << cfg.num_heads
       << " ffn_mult=" << cfg.ffn_mult << " use_vit=" << (cfg.use_vit ? "true" : "false");
    return os.str();
}

ModelConfig toy_config() {
    ModelConfig cfg;
    cfg.image_size = 16;
    cfg.base_width = 4;
    cfg.depth = 2;
    cfg.patch_size = 4;
    cfg.embed_dim = 8;
    cfg.num_heads = 2;
    cfg.ffn_mult = 4;
    return cfg;
}

std::size_t ModelParams::scalar_count() const noexcept {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
}

const Param& ModelParams::get(std::string_view name) const {
    for (const auto& p : params_)
        if (p.name == name) return p;
    throw Error(ErrorCode::InvalidArgument, "no parameter named " + std::string(name));
}

Param& ModelParams::get(std::string_view name) {
    return const_cast<Param&>(std::as_const(*this).get(name));
}

bool ModelParams::contains(std::string_view name) const noexcept {
    for (const auto& p : params_)
        if (p.name == name) return true;
    return false;
}

std::vector<ParamSpec> param_plan(const ModelConfig& cfg) {
    cfg.validate();
    std::vector<ParamSpec> plan;
    auto conv = [&](const std::string& name, int cout, int cin, int k) {
        plan.push_back({name + ".weight", {cout, cin, k, k}, true, false});
        plan.push_back({name + ".bias", {cout}, false, true});
    };
    auto linear = [&](const std::string& name, int out, int in) {
        plan.push_back({name + ".weight", {out, in}, false, false});
        plan.push_back({name + ".bias", {out}, false, true});
    };

    int cin = 3;
    for (int i = 0; i < cfg.depth; ++i) {
        conv("enc" + std::to_string(i + 1), cfg.encoder_width(i), cin, 3);
        cin = cfg.encoder_width(i);
    }
    const int d = cfg.embed_dim;
    if (cfg.use_vit) {
        conv("embed", d, cin, cfg.patch_size);
        linear("attn.q", d, d);
        linear("attn.k", d, d);
        linear("attn.v", d, d);
        linear("attn.out", d, d);
        linear("ffn.fc1", cfg.ffn_hidden(), d);
        linear("ffn.fc2", d, cfg.ffn_hidden());
    } else {
        conv("adapter", d, cin, cfg.patch_size);
    }
    conv("bottleneck", cfg.bottleneck_channels(), d, 3);
    int prev = cfg.bottleneck_channels();
    for (int j = 0; j < cfg.decoder_steps(); ++j) {
        const int skip = cfg.decoder_skip_stage(j);
        const int in = prev + (skip >= 0 ? cfg.encoder_width(skip) : 0);
        conv("dec" + std::to_string(j + 1), cfg.decoder_out_channels(j), in, 3);
        prev = cfg.decoder_out_channels(j);
    }
    conv("head", 3, prev, 1);
    return plan;
}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
    const auto plan = param_plan(cfg);
    std::mt19937_64 rng(seed);
    std::vector<Param> params;
    params.reserve(plan.size());
    for (const auto& spec : plan) {
        std::size_t n = 1;
        for (int s : spec.shape) n *= static_cast<std::size_t>(s);
        Param p{spec.name, spec.shape, std::vector<double>(n, 0.0)};
        if (!spec.is_bias) {
            double stddev = 0.02;
            if (spec.is_conv) {
                const int fan_in = spec.shape[1] * spec.shape[2] * spec.shape[3];
                stddev = std::sqrt(2.0 / fan_in);
            }
            std::normal_distribution<double> dist(0.0, stddev);
            for (double& v : p.values) v = dist(rng);
        }
        params.push_back(std::move(p));
    }
    return ModelParams(std::move(params));
}

ModelParams zeros_like(const ModelParams& params) {
    std::vector<Param> out;
    out.reserve(params.count());
    for (const auto& p : params) out.push_back({p.name, p.shape, std::vector<double>(p.size(), 0.0)});
    return ModelParams(std::move(out));
}

Matrix::Matrix(int r, int c, std::vector<double> d) : rows(r), cols(c), data(std::move(d)) {
    if (data.size() != static_cast<std::size_t>(r) * c)
        throw Error(ErrorCode::ShapeMismatch, "matrix data length does not match its shape");
}

}  // namespace gabordefect::net
