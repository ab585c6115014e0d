#include "gabordefect/error.hpp"
#include "gabordefect/eval.hpp"
#include "gabordefect/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace gabordefect::eval {

void SweepRanges::validate() const {
    if (kernel_sizes.empty() || sigmas.empty() || lambdas.empty() || gammas.empty())
        throw Error(ErrorCode::InvalidArgument, "sweep ranges must all be nonempty");
    for (const auto& p : tuples()) p.validate();
}

std::vector<gabor::GaborParams> SweepRanges::tuples() const {
    std::vector<gabor::GaborParams> out;
    out.reserve(tuple_count());
    for (int k : kernel_sizes)
        for (double s : sigmas)
            for (double l : lambdas)
                for (double g : gammas) out.push_back({k, s, l, g});
    return out;
}

SweepRanges default_sweep_ranges() {
    SweepRanges r;
    for (int k = 5; k <= 39; k += 2) r.kernel_sizes.push_back(k);
    for (int v = 1; v <= 20; ++v) {
        r.sigmas.push_back(v);
        r.lambdas.push_back(v);
        // gamma values are the nearest doubles to 0.2, 0.4, ..., 4.0.
        r.gammas.push_back(static_cast<double>(2 * v) / 10.0);
    }
    return r;
}

namespace {

void rank(std::vector<SweepEntry>& entries) {
    std::sort(entries.begin(), entries.end(), [](const SweepEntry& a, const SweepEntry& b) {
        if (a.auc != b.auc) return a.auc > b.auc;
        return a.params < b.params;
    });
}

}  // namespace

std::vector<SweepEntry> sweep(const ReconstructionCache& cache, const SweepRanges& ranges) {
    ranges.validate();
    const auto tuples = ranges.tuples();
    std::vector<SweepEntry> entries(tuples.size());
    parallel_for(tuples.size(), [&](std::size_t t) {
        const gabor::GaborBank bank(tuples[t]);
        std::vector<ScoreRecord> records = cache.records;
        for (std::size_t i = 0; i < records.size(); ++i) records[i].score = score_reconstruction(cache.gray[i], bank);
        entries[t] = {tuples[t], roc_auc(records).auc};
    });
    rank(entries);
    return entries;
}

std::vector<SweepEntry> sweep(const net::ModelParams& params, const net::ModelConfig& cfg, const DatasetSplit& split,
                              const SweepRanges& ranges, bool use_cache) {
    ranges.validate();
    if (use_cache) return sweep(build_cache(params, cfg, split), ranges);
    std::vector<SweepEntry> entries;
    for (const auto& tuple : ranges.tuples())
        entries.push_back({tuple, evaluate(params, cfg, gabor::GaborBank(tuple), split).roc.auc});
    rank(entries);
    return entries;
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepEntry>& entries) {
    std::string out = "kernel,sigma,lambda,gamma,auc\n";
    for (const auto& e : entries)
        out += std::to_string(e.params.kernel_size) + "," + format_double(e.params.sigma) + "," +
               format_double(e.params.lambda) + "," + format_double(e.params.gamma) + "," + format_double(e.auc) +
               "\n";
    write_file_atomic(path, out);
}

}  // namespace gabordefect::eval
