#pragma once

#include "gabordefect/imgcore.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace gabordefect::net {

/// Shape plan of the U-Net-ViT reconstruction network.
///
/// Encoder stage i (0-based) is a 3x3 conv + ReLU with base_width * 2^i
/// channels; every stage but the last is followed by a 2x2 max-pool. The
/// encoder map (side S / 2^(depth-1)) is cut into patch_size patches, giving a
/// token grid of side g. The ViT block maps the map to (embed_dim, g, g); the
/// bottleneck conv doubles the last encoder width and pools to g/2. The decoder
/// then alternates x2 bilinear upsampling with 3x3 conv + ReLU until side S,
/// concatenating encoder outputs at matching resolutions, and a 1x1 conv
/// produces 3 channels.
struct ModelConfig {
    int image_size = 256;
    int base_width = 64;
    int depth = 4;
    int patch_size = 16;
    int embed_dim = 512;
    int num_heads = 8;
    int ffn_mult = 4;
    bool use_vit = true;

    /// Throws InvalidArgument naming the violated constraint.
    void validate() const;

    int encoder_width(int stage) const { return base_width << stage; }
    int encoder_map() const { return image_size >> (depth - 1); }
    int token_grid() const { return encoder_map() / patch_size; }
    int tokens() const { return token_grid() * token_grid(); }
    int head_dim() const { return embed_dim / num_heads; }
    int ffn_hidden() const { return ffn_mult * embed_dim; }
    int bottleneck_channels() const { return 2 * encoder_width(depth - 1); }
    int decoder_steps() const;
    /// Output channels of decoder conv j (0-based).
    int decoder_out_channels(int j) const;
    /// Encoder stage whose output is concatenated before decoder conv j, or -1.
    int decoder_skip_stage(int j) const;
    /// Spatial side after decoder upsampling step j (0-based).
    int decoder_side(int j) const { return (token_grid() / 2) << (j + 1); }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

std::string describe(const ModelConfig& cfg);

/// Small configuration for gradient checks and fast tests.
ModelConfig toy_config();

struct Param {
    std::string name;
    std::vector<int> shape;
    std::vector<double> values;

    std::size_t size() const noexcept { return values.size(); }

    friend bool operator==(const Param&, const Param&) = default;
};

/// Ordered named parameter arrays. The order and shapes are fully determined
/// by a ModelConfig (see `param_plan`).
class ModelParams {
public:
    ModelParams() = default;
    explicit ModelParams(std::vector<Param> params) : params_(std::move(params)) {}

    std::size_t count() const noexcept { return params_.size(); }
    std::size_t scalar_count() const noexcept;
    Param& operator[](std::size_t i) { return params_[i]; }
    const Param& operator[](std::size_t i) const { return params_[i]; }
    const Param& get(std::string_view name) const;
    Param& get(std::string_view name);
    bool contains(std::string_view name) const noexcept;

    auto begin() noexcept { return params_.begin(); }
    auto end() noexcept { return params_.end(); }
    auto begin() const noexcept { return params_.begin(); }
    auto end() const noexcept { return params_.end(); }

    friend bool operator==(const ModelParams&, const ModelParams&) = default;

private:
    std::vector<Param> params_;
};

struct ParamSpec {
    std::string name;
    std::vector<int> shape;
    bool is_conv = false;  // conv weights get He init, linear weights std 0.02
    bool is_bias = false;
};

std::vector<ParamSpec> param_plan(const ModelConfig& cfg);

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);
ModelParams zeros_like(const ModelParams& params);

/// Row-major dense matrix.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0)
        : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}
    Matrix(int r, int c, std::vector<double> d);

    double& at(int r, int c) noexcept { return data[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const noexcept { return data[static_cast<std::size_t>(r) * cols + c]; }
};

/// softmax(q k^T / sqrt(d)) v with a row-max shifted softmax. When `weights`
/// is given it receives the P x P softmax matrix.
Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v, Matrix* weights = nullptr);

double gelu(double x) noexcept;

struct SampleCache;

/// Stage-by-stage record of a forward pass. Shapes are always recorded;
/// stage values and the backward cache only when requested.
class ForwardTrace {
public:
    struct Stage {
        std::string name;
        std::vector<int> shape;
        std::vector<double> values;  // empty unless values are recorded
    };

    explicit ForwardTrace(bool record_values = false, bool keep_cache = false);
    ~ForwardTrace();
    ForwardTrace(ForwardTrace&&) noexcept;
    ForwardTrace& operator=(ForwardTrace&&) noexcept;

    const std::vector<Stage>& stages() const noexcept { return stages_; }
    const Stage* find(std::string_view name) const noexcept;
    bool records_values() const noexcept { return record_values_; }
    bool keeps_cache() const noexcept { return keep_cache_; }
    bool has_cache() const noexcept { return !caches_.empty(); }

    // Used by the model implementation.
    void add_stage(std::string name, std::vector<int> shape, std::vector<double> values = {});
    std::vector<std::unique_ptr<SampleCache>>& caches() noexcept { return caches_; }
    const std::vector<std::unique_ptr<SampleCache>>& caches() const noexcept { return caches_; }
    void clear();

private:
    bool record_values_;
    bool keep_cache_;
    std::vector<Stage> stages_;
    std::vector<std::unique_ptr<SampleCache>> caches_;
};

/// Patch embedding (+ReLU), multi-head self-attention and FFN with residuals,
/// reshaped back to a (n, embed_dim, g, g) map. Input must be the encoder map.
Tensor4 vit_block(const Tensor4& x, const ModelParams& params, const ModelConfig& cfg,
                  ForwardTrace* trace = nullptr);

/// Reconstructs a (n, 3, S, S) batch. Pass a trace with keep_cache to enable
/// `backward`.
Tensor4 forward(const ModelParams& params, const ModelConfig& cfg, const Tensor4& batch,
                ForwardTrace* trace = nullptr);

/// Exact reverse-mode gradient of <upstream, forward(batch)> with respect to
/// every parameter, using the cache of a prior forward on the same batch.
ModelParams backward(const ModelParams& params, const ModelConfig& cfg, const ForwardTrace& trace,
                     const Tensor4& upstream);

/// Checkpoint file: magic, format version, config, then (name, shape, f32 LE values)
/// per parameter.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    ModelConfig config;
    ModelParams params;
};

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg, const ModelParams& params);
/// Reads a checkpoint and validates its parameter shapes against its own config.
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// As above, additionally requiring every parameter to match `expected`'s plan.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

}  // namespace gabordefect::net
