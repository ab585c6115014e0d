#include "gabordefect/cli.hpp"
#include "gabordefect/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace gabordefect::cli {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

template <class T>
bool parse_number(std::string_view text, T& out) {
    const char* end = text.data() + text.size();
    const auto res = std::from_chars(text.data(), end, out);
    return res.ec == std::errc{} && res.ptr == end;
}

struct Context {
    const std::string& source;
    int line;
    std::string key;

    [[noreturn]] void fail(const std::string& what) const {
        throw Error(ErrorCode::Config, source + ":" + std::to_string(line) + ": key '" + key + "': " + what);
    }
};

int as_int(const Context& ctx, std::string_view v) {
    int out = 0;
    if (!parse_number(v, out)) ctx.fail("expected an integer, got '" + std::string(v) + "'");
    return out;
}

std::uint64_t as_u64(const Context& ctx, std::string_view v) {
    std::uint64_t out = 0;
    if (!parse_number(v, out)) ctx.fail("expected a non-negative integer, got '" + std::string(v) + "'");
    return out;
}

double as_double(const Context& ctx, std::string_view v) {
    double out = 0.0;
    if (!parse_number(v, out) || !std::isfinite(out)) ctx.fail("expected a number, got '" + std::string(v) + "'");
    return out;
}

bool as_bool(const Context& ctx, std::string_view v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    ctx.fail("expected true or false, got '" + std::string(v) + "'");
}

using Setter = std::function<void(RunConfig&, const Context&, std::string_view)>;

const std::map<std::string, Setter, std::less<>>& setters() {
    static const std::map<std::string, Setter, std::less<>> table = {
        {"image_size", [](RunConfig& c, const Context& x, std::string_view v) { c.model.image_size = as_int(x, v); }},
        {"base_width", [](RunConfig& c, const Context& x, std::string_view v) { c.model.base_width = as_int(x, v); }},
        {"depth", [](RunConfig& c, const Context& x, std::string_view v) { c.model.depth = as_int(x, v); }},
        {"patch_size", [](RunConfig& c, const Context& x, std::string_view v) { c.model.patch_size = as_int(x, v); }},
        {"embed_dim", [](RunConfig& c, const Context& x, std::string_view v) { c.model.embed_dim = as_int(x, v); }},
        {"num_heads", [](RunConfig& c, const Context& x, std::string_view v) { c.model.num_heads = as_int(x, v); }},
        {"ffn_mult", [](RunConfig& c, const Context& x, std::string_view v) { c.model.ffn_mult = as_int(x, v); }},
        {"use_vit", [](RunConfig& c, const Context& x, std::string_view v) { c.model.use_vit = as_bool(x, v); }},
        {"epochs", [](RunConfig& c, const Context& x, std::string_view v) { c.train.epochs = as_int(x, v); }},
        {"batch_size", [](RunConfig& c, const Context& x, std::string_view v) { c.train.batch_size = as_int(x, v); }},
        {"learning_rate",
         [](RunConfig& c, const Context& x, std::string_view v) { c.train.learning_rate = as_double(x, v); }},
        {"seed", [](RunConfig& c, const Context& x, std::string_view v) { c.train.seed = as_u64(x, v); }},
        {"grid_k", [](RunConfig& c, const Context& x, std::string_view v) { c.train.grid.k = as_int(x, v); }},
        {"p_salt", [](RunConfig& c, const Context& x, std::string_view v) { c.train.noise.p_salt = as_double(x, v); }},
        {"p_pepper",
         [](RunConfig& c, const Context& x, std::string_view v) { c.train.noise.p_pepper = as_double(x, v); }},
        {"p_patch", [](RunConfig& c, const Context& x, std::string_view v) { c.train.noise.p_patch = as_double(x, v); }},
        {"masked_target",
         [](RunConfig& c, const Context& x, std::string_view v) { c.train.masked_target = as_bool(x, v); }},
        {"gabor",
         [](RunConfig& c, const Context& x, std::string_view v) {
             try {
                 gabor::preset_for(v);
             } catch (const Error& e) {
                 x.fail(e.what());
             }
             c.gabor_preset = std::string(v);
         }},
        {"gabor_kernel",
         [](RunConfig& c, const Context& x, std::string_view v) {
             c.gabor_explicit = c.gabor_explicit.value_or(gabor::GaborParams{});
             c.gabor_explicit->kernel_size = as_int(x, v);
         }},
        {"gabor_sigma",
         [](RunConfig& c, const Context& x, std::string_view v) {
             c.gabor_explicit = c.gabor_explicit.value_or(gabor::GaborParams{});
             c.gabor_explicit->sigma = as_double(x, v);
         }},
        {"gabor_lambda",
         [](RunConfig& c, const Context& x, std::string_view v) {
             c.gabor_explicit = c.gabor_explicit.value_or(gabor::GaborParams{});
             c.gabor_explicit->lambda = as_double(x, v);
         }},
        {"gabor_gamma",
         [](RunConfig& c, const Context& x, std::string_view v) {
             c.gabor_explicit = c.gabor_explicit.value_or(gabor::GaborParams{});
             c.gabor_explicit->gamma = as_double(x, v);
         }},
        {"dataset_root", [](RunConfig& c, const Context&, std::string_view v) { c.dataset_root = std::string(v); }},
        {"output_dir", [](RunConfig& c, const Context&, std::string_view v) { c.output_dir = std::string(v); }},
    };
    return table;
}

}  // namespace

gabor::GaborParams RunConfig::gabor() const {
    if (gabor_preset && gabor_explicit)
        throw Error(ErrorCode::Config, "config sets both 'gabor' and explicit gabor_* keys");
    if (gabor_preset) return gabor::preset_for(*gabor_preset);
    if (!gabor_explicit)
        throw Error(ErrorCode::Config, "config needs 'gabor' or all of gabor_kernel, gabor_sigma, gabor_lambda, gabor_gamma");
    try {
        gabor_explicit->validate();
    } catch (const Error& e) {
        throw Error(ErrorCode::Config, std::string("gabor_* keys: ") + e.what());
    }
    return *gabor_explicit;
}

RunConfig parse_config(std::string_view text, const std::string& source) {
    RunConfig cfg;
    std::set<std::string, std::less<>> seen;
    std::istringstream in{std::string(text)};
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const std::string_view s = trim(raw);
        if (s.empty() || s.front() == '#') continue;
        const auto eq = s.find('=');
        Context ctx{source, line, std::string(trim(s.substr(0, eq)))};
        if (eq == std::string_view::npos)
            throw Error(ErrorCode::Config, source + ":" + std::to_string(line) + ": expected 'key = value', got '" +
                                               std::string(s) + "'");
        const std::string_view value = trim(s.substr(eq + 1));
        const auto it = setters().find(ctx.key);
        if (it == setters().end()) ctx.fail("unknown key");
        if (!seen.insert(ctx.key).second) ctx.fail("set more than once");
        if (value.empty()) ctx.fail("missing value");
        it->second(cfg, ctx, value);
    }
    try {
        cfg.model.validate();
        cfg.train.validate();
    } catch (const Error& e) {
        throw Error(ErrorCode::Config, source + ": " + e.what());
    }
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::FileUnreadable, "cannot read config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.string());
}

std::vector<double> parse_range(std::string_view text) {
    auto fail = [&](const std::string& what) -> void {
        throw Error(ErrorCode::InvalidArgument, "bad range '" + std::string(text) + "': " + what);
    };
    std::vector<double> out;
    if (text.find(':') != std::string_view::npos) {
        std::vector<double> parts;
        std::size_t pos = 0;
        while (pos <= text.size()) {
            const auto next = std::min(text.find(':', pos), text.size());
            double v = 0.0;
            if (!parse_number(trim(text.substr(pos, next - pos)), v)) fail("not a number");
            parts.push_back(v);
            pos = next + 1;
        }
        if (parts.size() != 3) fail("expected start:stop:step");
        const double start = parts[0], stop = parts[1], step = parts[2];
        if (!(step > 0.0) || stop < start) fail("need step > 0 and stop >= start");
        const auto count = static_cast<long>(std::floor((stop - start) / step + 1e-9)) + 1;
        for (long i = 0; i < count; ++i) out.push_back(std::round((start + static_cast<double>(i) * step) * 1e9) / 1e9);
    } else {
        std::size_t pos = 0;
        while (pos <= text.size()) {
            const auto next = std::min(text.find(',', pos), text.size());
            double v = 0.0;
            if (!parse_number(trim(text.substr(pos, next - pos)), v)) fail("not a number");
            out.push_back(v);
            pos = next + 1;
        }
    }
    if (out.empty()) fail("empty");
    return out;
}

std::vector<int> parse_int_range(std::string_view text) {
    std::vector<int> out;
    for (double v : parse_range(text)) {
        if (v != std::round(v)) throw Error(ErrorCode::InvalidArgument, "bad range '" + std::string(text) + "': not integral");
        out.push_back(static_cast<int>(v));
    }
    return out;
}

}  // namespace gabordefect::cli
