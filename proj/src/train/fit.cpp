#include "gabordefect/error.hpp"
#include "gabordefect/parallel.hpp"
#include "gabordefect/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <string>

namespace gabordefect::train {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t kShuffleStream = ~std::uint64_t{0};

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 1) throw Error(ErrorCode::InvalidArgument, "epochs must be at least 1, got " + std::to_string(epochs));
    if (batch_size < 1)
        throw Error(ErrorCode::InvalidArgument, "batch_size must be at least 1, got " + std::to_string(batch_size));
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
        throw Error(ErrorCode::InvalidArgument, "learning_rate must be positive, got " + std::to_string(learning_rate));
    if (grid.k < 1) throw Error(ErrorCode::InvalidArgument, "grid_k must be at least 1, got " + std::to_string(grid.k));
    noise.validate();
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b);
}

Adam::Adam(const net::ModelParams& shape, double learning_rate, double beta1, double beta2, double eps)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps), m_(net::zeros_like(shape)),
      v_(net::zeros_like(shape)) {
    if (!(learning_rate >= 0.0)) throw Error(ErrorCode::InvalidArgument, "learning rate must be non-negative");
}

void Adam::step(net::ModelParams& params, const net::ModelParams& grads) {
    if (params.count() != m_.count() || grads.count() != m_.count())
        throw Error(ErrorCode::ShapeMismatch, "optimizer state does not match the parameter set");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.count(); ++i) {
        auto& p = params[i].values;
        const auto& g = grads[i].values;
        auto& m = m_[i].values;
        auto& v = v_[i].values;
        if (p.size() != g.size() || p.size() != m.size())
            throw Error(ErrorCode::ShapeMismatch, "gradient for " + params[i].name + " has the wrong size");
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
            const double mhat = m[j] / c1;
            const double vhat = v[j] / c2;
            p[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

void check_finite(const net::ModelParams& grads) {
    for (const auto& p : grads)
        for (double v : p.values)
            if (!std::isfinite(v))
                throw Error(ErrorCode::NonFinite, "non-finite gradient in parameter " + p.name);
}

Image load_model_image(const std::filesystem::path& path, const net::ModelConfig& cfg) {
    Image img = load_image(path, std::pair{cfg.image_size, cfg.image_size});
    return img.channels() == 1 ? to_rgb(img) : img;
}

std::filesystem::path checkpoint_name(int epoch) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "checkpoint_epoch_%03d.bin", epoch);
    return buf;
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossReport>& history) {
    std::string out = "epoch,l1,gaussian,total\n";
    char line[128];
    for (std::size_t e = 0; e < history.size(); ++e) {
        std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g\n", e + 1, history[e].l1, history[e].gaussian,
                      history[e].total);
        out += line;
    }
    write_file_atomic(path, out);
}

FitResult fit(net::ModelParams model, const net::ModelConfig& cfg, const TrainConfig& tcfg,
              const std::vector<Image>& images, const std::optional<std::filesystem::path>& checkpoint_dir,
              const EpochCallback& on_epoch) {
    cfg.validate();
    tcfg.validate();
    if (images.empty()) throw Error(ErrorCode::Dataset, "training set is empty");
    for (const Image& img : images)
        if (img.height() != cfg.image_size || img.width() != cfg.image_size || img.channels() != 3)
            throw Error(ErrorCode::ShapeMismatch, "training images must be 3 x " + std::to_string(cfg.image_size) +
                                                      " x " + std::to_string(cfg.image_size));
    if (checkpoint_dir) {
        std::error_code ec;
        std::filesystem::create_directories(*checkpoint_dir, ec);
        if (ec || !std::filesystem::is_directory(*checkpoint_dir))
            throw Error(ErrorCode::FileWrite, "cannot create checkpoint directory " + checkpoint_dir->string());
    }

    FitResult result;
    Adam adam(model, tcfg.learning_rate);
    std::vector<std::size_t> order(images.size());

    for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::mt19937_64 shuffle_rng(derive_seed(tcfg.seed, static_cast<std::uint64_t>(epoch), kShuffleStream));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        LossReport epoch_sum;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(tcfg.batch_size)) {
            const std::size_t count = std::min(order.size() - start, static_cast<std::size_t>(tcfg.batch_size));
            std::vector<Image> inputs(count), targets(count);
            parallel_for(count, [&](std::size_t b) {
                const std::size_t idx = order[start + b];
                auto pair = augment::make_training_pair(images[idx], tcfg.grid, tcfg.noise,
                                                        derive_seed(tcfg.seed, static_cast<std::uint64_t>(epoch), idx),
                                                        tcfg.masked_target);
                inputs[b] = std::move(pair.input);
                targets[b] = std::move(pair.target);
            });
            const Tensor4 batch = to_batch(inputs);
            const Tensor4 target = to_batch(targets);

            net::ForwardTrace trace(false, true);
            const Tensor4 pred = net::forward(model, cfg, batch, &trace);
            Tensor4 grad;
            const LossReport loss = total_loss(pred, target, &grad);
            if (!std::isfinite(loss.total))
                throw Error(ErrorCode::NonFinite, "non-finite loss in epoch " + std::to_string(epoch));
            const net::ModelParams grads = net::backward(model, cfg, trace, grad);
            check_finite(grads);
            adam.step(model, grads);

            const double weight = static_cast<double>(count);
            epoch_sum.l1 += loss.l1 * weight;
            epoch_sum.gaussian += loss.gaussian * weight;
            epoch_sum.total += loss.total * weight;
        }
        const double n = static_cast<double>(order.size());
        LossReport mean{epoch_sum.l1 / n, epoch_sum.gaussian / n, 0.0};
        mean.total = mean.l1 + mean.gaussian;
        result.history.push_back(mean);

        if (checkpoint_dir) {
            const auto path = *checkpoint_dir / checkpoint_name(epoch);
            net::save_checkpoint(path, cfg, model);
            result.checkpoints.push_back(path);
        }
        if (on_epoch) on_epoch(epoch, mean);
    }
    result.params = std::move(model);
    return result;
}

FitResult fit(net::ModelParams model, const net::ModelConfig& cfg, const TrainConfig& tcfg,
              const std::filesystem::path& train_dir, const std::optional<std::filesystem::path>& checkpoint_dir,
              const EpochCallback& on_epoch) {
    const auto paths = list_images(train_dir);
    if (paths.empty()) throw Error(ErrorCode::Dataset, "no training images in " + train_dir.string());
    std::vector<Image> images(paths.size());
    parallel_for(paths.size(), [&](std::size_t i) { images[i] = load_model_image(paths[i], cfg); });
    return fit(std::move(model), cfg, tcfg, images, checkpoint_dir, on_epoch);
}

}  // namespace gabordefect::train
