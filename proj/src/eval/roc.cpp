#include "gabordefect/error.hpp"
#include "gabordefect/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

namespace gabordefect::eval {

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

RocResult roc_auc(const std::vector<ScoreRecord>& records) {
    std::size_t positives = 0;
    for (const auto& r : records) {
        if (!std::isfinite(r.score)) throw Error(ErrorCode::NonFinite, "non-finite score for " + r.path);
        if (r.label == Label::Defect) ++positives;
    }
    const std::size_t negatives = records.size() - positives;
    if (positives == 0 || negatives == 0)
        throw Error(ErrorCode::InvalidArgument, "AUC needs at least one normal and one defect record");

    std::vector<const ScoreRecord*> sorted;
    sorted.reserve(records.size());
    for (const auto& r : records) sorted.push_back(&r);
    std::sort(sorted.begin(), sorted.end(), [](const ScoreRecord* a, const ScoreRecord* b) { return a->score > b->score; });

    RocResult result;
    result.curve.push_back({0.0, 0.0});
    std::size_t tp = 0, fp = 0;
    double area2 = 0.0;  // twice the area, in units of 1/(P*N)
    for (std::size_t i = 0; i < sorted.size();) {
        const double threshold = sorted[i]->score;
        const std::size_t tp_before = tp, fp_before = fp;
        for (; i < sorted.size() && sorted[i]->score == threshold; ++i)
            (sorted[i]->label == Label::Defect ? tp : fp) += 1;
        area2 += static_cast<double>(fp - fp_before) * static_cast<double>(tp + tp_before);
        result.curve.push_back({static_cast<double>(fp) / static_cast<double>(negatives),
                                static_cast<double>(tp) / static_cast<double>(positives)});
    }
    result.auc = area2 / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
    return result;
}

}  // namespace gabordefect::eval
