#include "gabordefect/cli.hpp"
#include "gabordefect/error.hpp"

#include <ostream>

namespace gabordefect::cli {

namespace {

void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir))
        throw Error(ErrorCode::FileWrite, "cannot create output directory " + dir.string());
}

void require_dataset_root(const RunConfig& cfg) {
    std::error_code ec;
    if (cfg.dataset_root.empty()) throw Error(ErrorCode::Config, "config does not set dataset_root");
    if (!std::filesystem::is_directory(cfg.dataset_root, ec))
        throw Error(ErrorCode::Dataset, "dataset_root not found: " + cfg.dataset_root.string());
}

Image kernel_image(const Kernel& k) {
    Image img(k.side_h(), k.side_w(), 1);
    for (int y = 0; y < k.side_h(); ++y)
        for (int x = 0; x < k.side_w(); ++x) img.at(0, y, x) = k.at(y, x);
    return img;
}

}  // namespace

train::FitResult run_train(const RunConfig& cfg, std::ostream& log) {
    require_dataset_root(cfg);
    ensure_dir(cfg.output_dir);
    auto result = train::fit(net::init_params(cfg.model, cfg.train.seed), cfg.model, cfg.train,
                             cfg.dataset_root / "train" / "good", cfg.output_dir,
                             [&](int epoch, const train::LossReport& r) {
                                 log << "epoch " << epoch << "/" << cfg.train.epochs << " l1=" << eval::format_double(r.l1)
                                     << " gaussian=" << eval::format_double(r.gaussian)
                                     << " total=" << eval::format_double(r.total) << "\n";
                             });
    train::write_loss_csv(cfg.output_dir / "loss.csv", result.history);
    return result;
}

EvalOutcome run_eval(const RunConfig& cfg, const std::filesystem::path& checkpoint, std::ostream& log) {
    require_dataset_root(cfg);
    const gabor::GaborBank bank(cfg.gabor());
    const auto ck = net::load_checkpoint(checkpoint, cfg.model);
    const auto split = eval::load_dataset(cfg.dataset_root);
    ensure_dir(cfg.output_dir);
    EvalOutcome out{eval::evaluate(ck.params, cfg.model, bank, split), cfg.output_dir / "scores.csv",
                    cfg.output_dir / "roc.csv"};
    eval::write_scores_csv(out.scores_csv, out.result.records);
    eval::write_roc_csv(out.roc_csv, out.result.roc);
    log << "AUC: " << eval::format_double(out.result.roc.auc) << "\n";
    return out;
}

std::vector<eval::SweepEntry> run_sweep(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                                        const eval::SweepRanges& ranges, bool dry_run, std::ostream& log) {
    ranges.validate();
    if (dry_run) {
        log << "tuples: " << ranges.tuple_count() << "\n";
        return {};
    }
    require_dataset_root(cfg);
    const auto ck = net::load_checkpoint(checkpoint, cfg.model);
    const auto split = eval::load_dataset(cfg.dataset_root);
    ensure_dir(cfg.output_dir);
    auto entries = eval::sweep(ck.params, cfg.model, split, ranges);
    eval::write_sweep_csv(cfg.output_dir / "sweep.csv", entries);
    const auto& best = entries.front();
    log << "best: kernel=" << best.params.kernel_size << " sigma=" << eval::format_double(best.params.sigma)
        << " lambda=" << eval::format_double(best.params.lambda) << " gamma=" << eval::format_double(best.params.gamma)
        << " auc=" << eval::format_double(best.auc) << "\n";
    return entries;
}

void run_visualize(const RunConfig& cfg, const std::filesystem::path& checkpoint, const std::filesystem::path& image,
                   const std::filesystem::path& out_dir) {
    const gabor::GaborBank bank(cfg.gabor());
    const auto ck = net::load_checkpoint(checkpoint, cfg.model);
    const Image input = train::load_model_image(image, cfg.model);
    const Tensor4 recon_batch = net::forward(ck.params, cfg.model, to_batch(std::span<const Image>(&input, 1)));
    const Image recon = clamp(from_batch(recon_batch, 0));
    const auto stack = gabor::apply_bank(to_grayscale(recon), bank);

    ensure_dir(out_dir);
    save_png(recon, out_dir / "recon.png");
    save_png(normalize_for_display(gabor::average_response(stack)), out_dir / "avg.png");
    for (int k = 0; k < gabor::kOrientations; ++k) {
        const std::string suffix = std::to_string(k) + ".png";
        save_png(normalize_for_display(stack[k]), out_dir / ("resp_" + suffix));
        save_png(normalize_for_display(kernel_image(bank.kernel(k))), out_dir / ("bank_" + suffix));
    }
}

}  // namespace gabordefect::cli
