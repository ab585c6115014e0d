#include "gabordefect/error.hpp"
#include "gabordefect/imgcore.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cctype>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>

extern "C" {
#include <jpeglib.h>
}

namespace gabordefect {

namespace {

enum class Format { Png, Jpeg, Unknown };

Format sniff(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::FileUnreadable, "cannot open image file " + path.string());
    std::array<unsigned char, 8> head{};
    in.read(reinterpret_cast<char*>(head.data()), head.size());
    const auto got = in.gcount();
    if (got == 0) throw Error(ErrorCode::EmptyImage, "image file is empty: " + path.string());
    if (got >= 8 && png_sig_cmp(head.data(), 0, 8) == 0) return Format::Png;
    if (got >= 3 && head[0] == 0xFF && head[1] == 0xD8 && head[2] == 0xFF) return Format::Jpeg;
    return Format::Unknown;
}

Image from_interleaved(const unsigned char* px, int h, int w, int channels) {
    Image img(h, w, channels);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c)
                img.at(c, y, x) = px[(static_cast<std::size_t>(y) * w + x) * channels + c] / 255.0;
    return img;
}

Image read_png(const std::filesystem::path& path) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw Error(ErrorCode::FileUnreadable, "cannot decode PNG " + path.string() + ": " + image.message);
    if (image.format & PNG_FORMAT_FLAG_LINEAR) {
        png_image_free(&image);
        throw Error(ErrorCode::UnsupportedBitDepth, "only 8-bit PNG is supported: " + path.string());
    }
    if (image.width == 0 || image.height == 0) {
        png_image_free(&image);
        throw Error(ErrorCode::EmptyImage, "PNG has zero size: " + path.string());
    }
    const int channels = (image.format & PNG_FORMAT_FLAG_COLOR) ? 3 : 1;
    image.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    std::vector<unsigned char> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr))
        throw Error(ErrorCode::FileUnreadable, "cannot decode PNG " + path.string() + ": " + image.message);
    return from_interleaved(buffer.data(), static_cast<int>(image.height), static_cast<int>(image.width),
                            channels);
}

struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

// Decodes into `pixels`; returns an empty string on success, else a message.
// Kept free of objects with destructors between setjmp and longjmp.
std::string decode_jpeg(std::FILE* file, std::vector<unsigned char>& pixels, int& h, int& w, int& channels) {
    jpeg_decompress_struct cinfo;
    JpegErrorManager err;
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    err.message[0] = '\0';
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        return err.message[0] ? err.message : "corrupt JPEG";
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, file);
    jpeg_read_header(&cinfo, TRUE);
    if (cinfo.num_components != 1 && cinfo.num_components != 3) {
        jpeg_destroy_decompress(&cinfo);
        return "unsupported JPEG component count";
    }
    cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
    jpeg_start_decompress(&cinfo);
    h = static_cast<int>(cinfo.output_height);
    w = static_cast<int>(cinfo.output_width);
    channels = cinfo.output_components;
    pixels.resize(static_cast<std::size_t>(h) * w * channels);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * channels;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return {};
}

Image read_jpeg(const std::filesystem::path& path) {
    std::unique_ptr<std::FILE, int (*)(std::FILE*)> file(std::fopen(path.c_str(), "rb"), &std::fclose);
    if (!file) throw Error(ErrorCode::FileUnreadable, "cannot open image file " + path.string());
    std::vector<unsigned char> pixels;
    int h = 0, w = 0, channels = 0;
    const std::string msg = decode_jpeg(file.get(), pixels, h, w, channels);
    if (!msg.empty()) throw Error(ErrorCode::FileUnreadable, "cannot decode JPEG " + path.string() + ": " + msg);
    if (h == 0 || w == 0) throw Error(ErrorCode::EmptyImage, "JPEG has zero size: " + path.string());
    return from_interleaved(pixels.data(), h, w, channels);
}

}  // namespace

Image load_image(const std::filesystem::path& path, std::optional<std::pair<int, int>> resize_to) {
    Image img;
    switch (sniff(path)) {
        case Format::Png: img = read_png(path); break;
        case Format::Jpeg: img = read_jpeg(path); break;
        case Format::Unknown:
            throw Error(ErrorCode::UnsupportedFormat, "not a PNG or JPEG file: " + path.string());
    }
    if (resize_to) img = resize_bilinear(img, resize_to->first, resize_to->second);
    return img;
}

void save_png(const Image& img, const std::filesystem::path& path) {
    if (img.empty()) throw Error(ErrorCode::EmptyImage, "cannot write an empty image");
    const int h = img.height(), w = img.width(), channels = img.channels();
    std::vector<unsigned char> buffer(static_cast<std::size_t>(h) * w * channels);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c) {
                const double v = std::clamp(img.at(c, y, x), 0.0, 1.0);
                buffer[(static_cast<std::size_t>(y) * w + x) * channels + c] =
                    static_cast<unsigned char>(std::lround(v * 255.0));
            }
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(w);
    image.height = static_cast<png_uint_32>(h);
    image.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    auto tmp = path;
    tmp += ".tmp";
    if (!png_image_write_to_file(&image, tmp.c_str(), 0, buffer.data(), 0, nullptr))
        throw Error(ErrorCode::FileWrite, "cannot write PNG " + path.string() + ": " + image.message);
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(ErrorCode::FileWrite, "cannot move PNG into place at " + path.string());
}

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec))
        throw Error(ErrorCode::Dataset, "directory not found: " + dir.string());
    std::vector<std::filesystem::path> out;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") out.push_back(entry.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::FileWrite, "cannot write " + path.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw Error(ErrorCode::FileWrite, "cannot write " + path.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(ErrorCode::FileWrite, "cannot move file into place at " + path.string());
}

}  // namespace gabordefect
