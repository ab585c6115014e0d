#include "gabordefect/error.hpp"
#include "gabordefect/eval.hpp"
#include "gabordefect/parallel.hpp"
#include "gabordefect/train.hpp"

#include <algorithm>

namespace gabordefect::eval {

namespace {

constexpr std::size_t kForwardChunk = 8;

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

std::vector<Image> reconstruct_gray(const net::ModelParams& params, const net::ModelConfig& cfg,
                                    const std::vector<Image>& batch) {
    std::vector<Image> out;
    out.reserve(batch.size());
    for (std::size_t start = 0; start < batch.size(); start += kForwardChunk) {
        const std::size_t count = std::min(kForwardChunk, batch.size() - start);
        const Tensor4 input = to_batch(std::span<const Image>(batch).subspan(start, count));
        const Tensor4 recon = net::forward(params, cfg, input);
        for (int n = 0; n < recon.n(); ++n) out.push_back(to_grayscale(clamp(from_batch(recon, n))));
    }
    return out;
}

double score_reconstruction(const Image& gray, const gabor::GaborBank& bank) {
    return gabor::dfscore(gabor::apply_bank(gray, bank)).value;
}

ScoreRecord score_image(const net::ModelParams& params, const net::ModelConfig& cfg, const gabor::GaborBank& bank,
                        const Image& img, std::string path) {
    const Image input = img.channels() == 1 ? to_rgb(img) : img;
    const auto gray = reconstruct_gray(params, cfg, {input});
    return {std::move(path), Label::Normal, score_reconstruction(gray.front(), bank)};
}

ReconstructionCache build_cache(const net::ModelParams& params, const net::ModelConfig& cfg,
                                const DatasetSplit& split) {
    ReconstructionCache cache;
    const auto& items = split.test_items;
    for (std::size_t start = 0; start < items.size(); start += kForwardChunk) {
        const std::size_t count = std::min(kForwardChunk, items.size() - start);
        std::vector<Image> images(count);
        parallel_for(count, [&](std::size_t i) { images[i] = train::load_model_image(items[start + i].path, cfg); });
        for (auto& g : reconstruct_gray(params, cfg, images)) cache.gray.push_back(std::move(g));
    }
    for (const auto& item : items)
        cache.records.push_back({item.path.lexically_relative(split.root).generic_string(), item.label, 0.0});
    return cache;
}

EvalResult evaluate(const net::ModelParams& params, const net::ModelConfig& cfg, const gabor::GaborBank& bank,
                    const DatasetSplit& split) {
    const ReconstructionCache cache = build_cache(params, cfg, split);
    EvalResult result;
    result.records = cache.records;
    parallel_for(cache.gray.size(),
                 [&](std::size_t i) { result.records[i].score = score_reconstruction(cache.gray[i], bank); });
    result.roc = roc_auc(result.records);
    return result;
}

void write_scores_csv(const std::filesystem::path& path, const std::vector<ScoreRecord>& records) {
    std::string out = "path,label,score\n";
    for (const auto& r : records)
        out += csv_field(r.path) + "," + to_string(r.label) + "," + format_double(r.score) + "\n";
    write_file_atomic(path, out);
}

void write_roc_csv(const std::filesystem::path& path, const RocResult& roc) {
    std::string out = "fpr,tpr\n";
    for (const auto& p : roc.curve) out += format_double(p.fpr) + "," + format_double(p.tpr) + "\n";
    write_file_atomic(path, out);
}

}  // namespace gabordefect::eval
