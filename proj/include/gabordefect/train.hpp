#pragma once

#include "gabordefect/augment.hpp"
#include "gabordefect/imgcore.hpp"
#include "gabordefect/net.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

namespace gabordefect::train {

struct TrainConfig {
    int epochs = 10;
    int batch_size = 8;
    double learning_rate = 1e-4;
    augment::GridSpec grid{};
    augment::NoiseSpec noise{};
    bool masked_target = false;
    std::uint64_t seed = 0;

    void validate() const;
};

struct LossReport {
    double l1 = 0.0;
    double gaussian = 0.0;
    double total = 0.0;
};

/// Mean absolute error over every element.
double l1_loss(const Tensor4& pred, const Tensor4& target);
/// Mean absolute error between per-channel Gaussian-blurred (11, sigma 5) tensors.
double gaussian_loss(const Tensor4& pred, const Tensor4& target);
/// Unweighted sum of both terms. When `grad` is given it receives
/// d(total)/d(pred) (subgradient 0 where a difference is exactly zero).
LossReport total_loss(const Tensor4& pred, const Tensor4& target, Tensor4* grad = nullptr);

/// Adam with bias correction; beta1 0.9, beta2 0.999, eps 1e-8.
class Adam {
public:
    Adam(const net::ModelParams& shape, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8);

    void step(net::ModelParams& params, const net::ModelParams& grads);
    long steps() const noexcept { return t_; }

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    net::ModelParams m_;
    net::ModelParams v_;
};

/// Throws NonFinite naming the first parameter whose gradient is NaN or Inf.
void check_finite(const net::ModelParams& grads);

/// Mixes (seed, a, b) into a new 64-bit seed (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b);

/// Loads an image for the model: resized to image_size, replicated to 3 channels.
Image load_model_image(const std::filesystem::path& path, const net::ModelConfig& cfg);

struct FitResult {
    net::ModelParams params;
    std::vector<LossReport> history;  // mean batch loss per epoch
    std::vector<std::filesystem::path> checkpoints;
};

using EpochCallback = std::function<void(int epoch, const LossReport&)>;

/// Trains on in-memory normal images (already at model resolution, 3 channels).
/// When `checkpoint_dir` is set, writes checkpoint_epoch_NNN.bin after every epoch.
FitResult fit(net::ModelParams model, const net::ModelConfig& cfg, const TrainConfig& tcfg,
              const std::vector<Image>& images, const std::optional<std::filesystem::path>& checkpoint_dir,
              const EpochCallback& on_epoch = {});

/// Loads every image under `train_dir` (lexicographic order) and trains on them.
FitResult fit(net::ModelParams model, const net::ModelConfig& cfg, const TrainConfig& tcfg,
              const std::filesystem::path& train_dir, const std::optional<std::filesystem::path>& checkpoint_dir,
              const EpochCallback& on_epoch = {});

std::filesystem::path checkpoint_name(int epoch);

/// CSV with header "epoch,l1,gaussian,total".
void write_loss_csv(const std::filesystem::path& path, const std::vector<LossReport>& history);

}  // namespace gabordefect::train
