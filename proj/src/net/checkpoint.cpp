#include "gabordefect/error.hpp"
#include "gabordefect/net.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace gabordefect::net {

namespace {

constexpr std::array<char, 8> kMagic = {'G', 'D', 'N', 'E', 'T', 'C', 'K', 'P'};

class Writer {
public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void bytes(const char* p, std::size_t n) { buf_.append(p, n); }
    const std::string& data() const { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    Reader(std::string data, std::string source) : data_(std::move(data)), source_(std::move(source)) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(data_[pos_++]);
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string str(std::size_t n) {
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool at_end() const { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n)
            throw Error(ErrorCode::Checkpoint, "checkpoint " + source_ + " is truncated");
    }
    std::string data_;
    std::string source_;
    std::size_t pos_ = 0;
};

std::string shape_string(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ")";
    return os.str();
}

void check_against_plan(const ModelParams& params, const ModelConfig& cfg, const std::string& source) {
    const auto plan = param_plan(cfg);
    if (plan.size() != params.count())
        throw Error(ErrorCode::Checkpoint, "checkpoint " + source + " holds " + std::to_string(params.count()) +
                                               " parameter arrays, config expects " + std::to_string(plan.size()));
    for (std::size_t i = 0; i < plan.size(); ++i) {
        if (params[i].name != plan[i].name || params[i].shape != plan[i].shape)
            throw Error(ErrorCode::Checkpoint, "checkpoint " + source + ": parameter " + params[i].name + " has shape " +
                                                   shape_string(params[i].shape) + ", config expects " +
                                                   plan[i].name + " " + shape_string(plan[i].shape));
    }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg, const ModelParams& params) {
    check_against_plan(params, cfg, path.string());
    Writer w;
    w.bytes(kMagic.data(), kMagic.size());
    w.u32(kCheckpointVersion);
    for (int v : {cfg.image_size, cfg.base_width, cfg.depth, cfg.patch_size, cfg.embed_dim, cfg.num_heads,
                  cfg.ffn_mult})
        w.i32(v);
    w.u8(cfg.use_vit ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(params.count()));
    for (const Param& p : params) {
        w.u32(static_cast<std::uint32_t>(p.name.size()));
        w.bytes(p.name.data(), p.name.size());
        w.u32(static_cast<std::uint32_t>(p.shape.size()));
        for (int d : p.shape) w.u32(static_cast<std::uint32_t>(d));
        for (double v : p.values) w.f32(static_cast<float>(v));
    }

    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::FileWrite, "cannot write checkpoint " + tmp.string());
        out.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
        if (!out) throw Error(ErrorCode::FileWrite, "cannot write checkpoint " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(ErrorCode::FileWrite, "cannot move checkpoint into place at " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::FileUnreadable, "cannot open checkpoint " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    Reader r(ss.str(), path.string());

    if (r.str(kMagic.size()) != std::string(kMagic.data(), kMagic.size()))
        throw Error(ErrorCode::Checkpoint, path.string() + " is not a checkpoint file (bad magic)");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw Error(ErrorCode::Checkpoint, "checkpoint " + path.string() + " has format version " +
                                               std::to_string(version) + ", expected " +
                                               std::to_string(kCheckpointVersion));
    ModelConfig cfg;
    cfg.image_size = r.i32();
    cfg.base_width = r.i32();
    cfg.depth = r.i32();
    cfg.patch_size = r.i32();
    cfg.embed_dim = r.i32();
    cfg.num_heads = r.i32();
    cfg.ffn_mult = r.i32();
    cfg.use_vit = r.u8() != 0;
    try {
        cfg.validate();
    } catch (const Error& e) {
        throw Error(ErrorCode::Checkpoint, "checkpoint " + path.string() + ": " + e.what());
    }

    const std::uint32_t count = r.u32();
    std::vector<Param> params;
    params.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        Param p;
        p.name = r.str(r.u32());
        const std::uint32_t ndim = r.u32();
        if (ndim > 8) throw Error(ErrorCode::Checkpoint, "checkpoint " + path.string() + ": bad rank for " + p.name);
        std::size_t n = 1;
        for (std::uint32_t d = 0; d < ndim; ++d) {
            p.shape.push_back(static_cast<int>(r.u32()));
            n *= static_cast<std::size_t>(p.shape.back());
        }
        p.values.resize(n);
        for (double& v : p.values) v = r.f32();
        params.push_back(std::move(p));
    }
    if (!r.at_end()) throw Error(ErrorCode::Checkpoint, "checkpoint " + path.string() + " has trailing bytes");

    Checkpoint ck{cfg, ModelParams(std::move(params))};
    check_against_plan(ck.params, ck.config, path.string());
    return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
    Checkpoint ck = load_checkpoint(path);
    check_against_plan(ck.params, expected, path.string());
    if (!(ck.config == expected))
        throw Error(ErrorCode::Checkpoint, "checkpoint " + path.string() + " was written for config [" +
                                               describe(ck.config) + "], requested [" + describe(expected) + "]");
    return ck;
}

}  // namespace gabordefect::net
