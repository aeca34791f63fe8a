#include "phasor_forge/io.hpp"

#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <system_error>

namespace phasor_forge {

namespace {

constexpr char kFtsMagic[4] = {'F', 'T', 'S', '1'};
constexpr std::uint8_t kFtsVersion = 1;
constexpr std::uint8_t kDtypeFloat32 = 0;

std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

}  // namespace

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error(ErrorCode::Io, "write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw Error(ErrorCode::Io, "cannot rename into " + path.string());
    }
}

std::vector<std::uint8_t> encode_fts(const Tensor& tensor) {
    std::uint64_t count = 1;
    for (auto d : tensor.dims) count *= d;
    if (tensor.dims.empty() || tensor.dims.size() > 255 || count != tensor.data.size()) {
        throw Error(ErrorCode::LengthMismatch, "tensor dims do not match payload");
    }
    std::vector<std::uint8_t> out(std::begin(kFtsMagic), std::end(kFtsMagic));
    out.push_back(kFtsVersion);
    out.push_back(kDtypeFloat32);
    out.push_back(static_cast<std::uint8_t>(tensor.dims.size()));
    for (auto d : tensor.dims) {
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(d >> (8 * i)));
    }
    out.reserve(out.size() + tensor.data.size() * 4);
    for (float f : tensor.data) {
        const auto bits = std::bit_cast<std::uint32_t>(f);
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
    return out;
}

Tensor decode_fts(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 7 || std::memcmp(bytes.data(), kFtsMagic, 4) != 0) {
        throw Error(ErrorCode::BadMagic, "expected FTS1 header");
    }
    if (bytes[4] != kFtsVersion) throw Error(ErrorCode::BadMagic, "unsupported FTS version");
    if (bytes[5] != kDtypeFloat32) throw Error(ErrorCode::DtypeUnsupported, "only float32 payloads are supported");
    const std::size_t ndim = bytes[6];
    if (ndim == 0) throw Error(ErrorCode::LengthMismatch, "zero-dimensional tensor");
    const std::size_t header = 7 + 8 * ndim;
    if (bytes.size() < header) throw Error(ErrorCode::LengthMismatch, "header truncated");
    Tensor t;
    std::uint64_t count = 1;
    for (std::size_t i = 0; i < ndim; ++i) {
        t.dims.push_back(get_u64(bytes.data() + 7 + 8 * i));
        count *= t.dims.back();
    }
    if ((bytes.size() - header) / 4 != count || (bytes.size() - header) % 4 != 0) {
        throw Error(ErrorCode::LengthMismatch, "payload holds " + std::to_string(bytes.size() - header) +
                                                   " bytes, expected " + std::to_string(count * 4));
    }
    t.data.resize(count);
    const std::uint8_t* p = bytes.data() + header;
    for (std::size_t i = 0; i < count; ++i, p += 4) {
        const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
                                   static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
        t.data[i] = std::bit_cast<float>(bits);
    }
    return t;
}

Tensor to_tensor(const ImageStack& stack) {
    const Dims d = stack.dims();
    Tensor t{{d.nz, d.ny, d.nx}, std::vector<float>(stack.size())};
    for (std::size_t i = 0; i < stack.size(); ++i) t.data[i] = static_cast<float>(stack[i]);
    return t;
}

Tensor to_tensor(const LabelField& labels) {
    const Dims d = labels.dims;
    Tensor t{{d.nz, d.ny, d.nx}, std::vector<float>(labels.labels.begin(), labels.labels.end())};
    return t;
}

Tensor to_tensor(const Mask& mask, const Dims& dims) {
    if (mask.size() != dims.count()) throw Error(ErrorCode::LengthMismatch, "mask size mismatch");
    return {{dims.nz, dims.ny, dims.nx}, std::vector<float>(mask.begin(), mask.end())};
}

Tensor to_tensor(const DecayCube& cube) {
    Tensor t{{cube.dims.nz, cube.dims.ny, cube.dims.nx, cube.n_bins}, std::vector<float>(cube.data.size())};
    for (std::size_t i = 0; i < cube.data.size(); ++i) t.data[i] = static_cast<float>(cube.data[i]);
    return t;
}

ImageStack stack_from_tensor(const Tensor& tensor, ValueKind kind) {
    if (tensor.dims.empty() || tensor.dims.size() > 3) {
        throw Error(ErrorCode::LengthMismatch, "expected a 1- to 3-dimensional tensor");
    }
    std::uint64_t d[3] = {1, 1, 1};
    std::copy(tensor.dims.begin(), tensor.dims.end(), d + (3 - tensor.dims.size()));
    return ImageStack(Dims{d[0], d[1], d[2]}, kind, std::vector<double>(tensor.data.begin(), tensor.data.end()));
}

DecayCube decay_cube_from_tensor(const Tensor& tensor, double period) {
    if (tensor.dims.size() != 4) throw Error(ErrorCode::LengthMismatch, "decay cube must be 4-dimensional");
    if (!(period > 0.0)) throw Error(ErrorCode::InvalidArgument, "period must be > 0");
    DecayCube cube;
    cube.dims = {tensor.dims[0], tensor.dims[1], tensor.dims[2]};
    cube.n_bins = tensor.dims[3];
    cube.bin_width = period / static_cast<double>(cube.n_bins);
    cube.data.assign(tensor.data.begin(), tensor.data.end());
    return cube;
}

void write_fts(const ImageStack& stack, const std::filesystem::path& path) {
    write_file_atomic(path, encode_fts(to_tensor(stack)));
}

ImageStack read_fts(const std::filesystem::path& path, ValueKind kind) {
    return stack_from_tensor(decode_fts(read_file(path)), kind);
}

std::vector<std::uint8_t> encode_ppm(const RgbImage& img) {
    if (img.data.size() != img.nx * img.ny * 3) throw Error(ErrorCode::LengthMismatch, "RGB buffer size mismatch");
    const std::string header = "P6\n" + std::to_string(img.nx) + " " + std::to_string(img.ny) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), img.data.begin(), img.data.end());
    return out;
}

RgbImage decode_ppm(std::span<const std::uint8_t> bytes) {
    std::size_t pos = 0;
    auto token = [&]() {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
        std::string t;
        while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
        return t;
    };
    if (token() != "P6") throw Error(ErrorCode::BadMagic, "expected P6");
    const std::string w = token();
    const std::string h = token();
    const std::string maxval = token();
    if (w.empty() || h.empty() || maxval != "255") throw Error(ErrorCode::BadMagic, "unsupported PPM header");
    ++pos;  // single whitespace before raster
    RgbImage img(std::stoul(h), std::stoul(w));
    if (bytes.size() < pos || bytes.size() - pos != img.data.size()) {
        throw Error(ErrorCode::LengthMismatch, "PPM raster size mismatch");
    }
    std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end(), img.data.begin());
    return img;
}

void write_ppm(const RgbImage& img, const std::filesystem::path& path) { write_file_atomic(path, encode_ppm(img)); }

}  // namespace phasor_forge
