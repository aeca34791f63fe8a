#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "phasor_forge/denoise.hpp"
#include "phasor_forge/io.hpp"

namespace phasor_forge {

namespace {

constexpr char kMagic[4] = {'F', 'W', 'T', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw Error(ErrorCode::TruncatedFile, "weight file ends early");
    }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_model(const DenoiserModel& model) {
    model.validate();
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    put_u32(out, static_cast<std::uint32_t>(model.layers.size()));
    for (const auto& layer : model.layers) {
        put_u32(out, layer.out_channels);
        put_u32(out, layer.in_channels);
        put_u32(out, 3);
        put_u32(out, 3);
        for (float w : layer.weights) put_f32(out, w);
        for (float b : layer.bias) put_f32(out, b);
    }
    return out;
}

DenoiserModel decode_model(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) throw Error(ErrorCode::TruncatedFile, "weight file shorter than magic");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw Error(ErrorCode::BadMagic, "expected FWT1");
    Reader in(bytes.subspan(4));
    const std::uint32_t n_layers = in.u32();
    DenoiserModel model;
    for (std::uint32_t l = 0; l < n_layers; ++l) {
        ConvLayer layer;
        layer.out_channels = in.u32();
        layer.in_channels = in.u32();
        const std::uint32_t kh = in.u32();
        const std::uint32_t kw = in.u32();
        if (kh != 3 || kw != 3) throw Error(ErrorCode::ShapeChainBroken, "only 3x3 kernels are supported");
        const std::uint64_t n_weights = std::uint64_t{layer.out_channels} * layer.in_channels * 9;
        in.need((n_weights + layer.out_channels) * 4);
        layer.weights.resize(n_weights);
        for (auto& w : layer.weights) w = in.f32();
        layer.bias.resize(layer.out_channels);
        for (auto& b : layer.bias) b = in.f32();
        model.layers.push_back(std::move(layer));
    }
    if (in.remaining() != 0) throw Error(ErrorCode::LengthMismatch, "trailing bytes after last layer");
    model.validate();
    return model;
}

void save_model(const DenoiserModel& model, const std::filesystem::path& path) {
    write_file_atomic(path, encode_model(model));
}

DenoiserModel load_model(const std::filesystem::path& path) { return decode_model(read_file(path)); }

}  // namespace phasor_forge
