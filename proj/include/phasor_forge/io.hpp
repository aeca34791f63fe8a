#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "phasor_forge/core.hpp"
#include "phasor_forge/render.hpp"
#include "phasor_forge/simulate.hpp"

namespace phasor_forge {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
// Writes to a sibling temp file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// FTS1 tensor store: "FTS1", u8 version = 1, u8 dtype = 0 (float32), u8 ndim,
// ndim x u64 dims, then row-major little-endian payload.
struct Tensor {
    std::vector<std::uint64_t> dims;
    std::vector<float> data;
};

std::vector<std::uint8_t> encode_fts(const Tensor& tensor);
Tensor decode_fts(std::span<const std::uint8_t> bytes);

// Stacks are written as 3-D tensors (nz, ny, nx) after rounding to float32.
Tensor to_tensor(const ImageStack& stack);
Tensor to_tensor(const LabelField& labels);
Tensor to_tensor(const Mask& mask, const Dims& dims);
Tensor to_tensor(const DecayCube& cube);  // (nz, ny, nx, n_bins)
// Accepts 1- to 3-D tensors; missing leading axes are 1.
ImageStack stack_from_tensor(const Tensor& tensor, ValueKind kind = ValueKind::generic);
DecayCube decay_cube_from_tensor(const Tensor& tensor, double period);

void write_fts(const ImageStack& stack, const std::filesystem::path& path);
ImageStack read_fts(const std::filesystem::path& path, ValueKind kind = ValueKind::generic);

// Binary PPM (P6, maxval 255), width before height.
std::vector<std::uint8_t> encode_ppm(const RgbImage& img);
RgbImage decode_ppm(std::span<const std::uint8_t> bytes);
void write_ppm(const RgbImage& img, const std::filesystem::path& path);

}  // namespace phasor_forge
