#include <algorithm>
#include <vector>

#include "phasor_forge/denoise.hpp"
#include "phasor_forge/parallel.hpp"

namespace phasor_forge {

namespace {

void median_pass(std::span<const double> in, std::span<double> out, std::size_t ny, std::size_t nx, int window,
                 std::vector<double>& padded, std::vector<double>& scratch) {
    const auto r = static_cast<std::size_t>(window / 2);
    const std::size_t pw = nx + 2 * r;
    const std::size_t ph = ny + 2 * r;
    padded.resize(pw * ph);
    for (std::size_t py = 0; py < ph; ++py) {
        const std::size_t y = std::min(ny - 1, py > r ? py - r : 0);
        for (std::size_t px = 0; px < pw; ++px) {
            const std::size_t x = std::min(nx - 1, px > r ? px - r : 0);
            padded[py * pw + px] = in[y * nx + x];
        }
    }
    const auto w = static_cast<std::size_t>(window);
    const std::size_t mid = w * w / 2;
    scratch.resize(w * w);
    for (std::size_t y = 0; y < ny; ++y) {
        for (std::size_t x = 0; x < nx; ++x) {
            std::size_t k = 0;
            for (std::size_t dy = 0; dy < w; ++dy) {
                const double* row = padded.data() + (y + dy) * pw + x;
                for (std::size_t dx = 0; dx < w; ++dx) scratch[k++] = row[dx];
            }
            std::nth_element(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(mid), scratch.end());
            out[y * nx + x] = scratch[mid];
        }
    }
}

// Median over the masked-in pixels of each replicate-padded window;
// an even count takes the mean of the two central values. Masked-out pixels
// pass through unchanged.
void masked_median_pass(std::span<const double> in, std::span<const std::uint8_t> mask, std::span<double> out,
                        std::size_t ny, std::size_t nx, int window, std::vector<double>& scratch) {
    const auto r = static_cast<std::ptrdiff_t>(window / 2);
    const auto h = static_cast<std::ptrdiff_t>(ny);
    const auto w = static_cast<std::ptrdiff_t>(nx);
    for (std::ptrdiff_t y = 0; y < h; ++y) {
        for (std::ptrdiff_t x = 0; x < w; ++x) {
            const auto i = static_cast<std::size_t>(y * w + x);
            if (!mask[i]) {
                out[i] = in[i];
                continue;
            }
            scratch.clear();
            for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
                const std::ptrdiff_t yy = std::clamp<std::ptrdiff_t>(y + dy, 0, h - 1);
                for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
                    const std::ptrdiff_t xx = std::clamp<std::ptrdiff_t>(x + dx, 0, w - 1);
                    const auto j = static_cast<std::size_t>(yy * w + xx);
                    if (mask[j]) scratch.push_back(in[j]);
                }
            }
            const std::size_t n = scratch.size();
            const auto upper = scratch.begin() + static_cast<std::ptrdiff_t>(n / 2);
            std::nth_element(scratch.begin(), upper, scratch.end());
            if (n % 2 == 1) {
                out[i] = *upper;
            } else {
                const double lower = *std::max_element(scratch.begin(), upper);
                out[i] = 0.5 * (lower + *upper);
            }
        }
    }
}

}  // namespace

ImageStack masked_median_filter(const ImageStack& stack, const Mask& mask, int passes, int window) {
    if (passes < 1) throw Error(ErrorCode::InvalidArgument, "passes must be >= 1");
    if (window < 3 || window % 2 == 0) throw Error(ErrorCode::InvalidArgument, "window must be odd and >= 3");
    if (mask.size() != stack.size()) throw Error(ErrorCode::InvalidArgument, "mask size differs from stack");
    const Dims d = stack.dims();
    ImageStack out = stack;
    if (d.count() == 0) return out;
    const std::size_t plane = d.slice_size();
    parallel_for(d.nz, [&](std::size_t z) {
        std::vector<double> scratch;
        const std::span<const std::uint8_t> m(mask.data() + z * plane, plane);
        std::vector<double> current(stack.slice(z).begin(), stack.slice(z).end());
        auto dst = out.slice(z);
        for (int p = 0; p < passes; ++p) {
            masked_median_pass(current, m, dst, d.ny, d.nx, window, scratch);
            std::copy(dst.begin(), dst.end(), current.begin());
        }
    });
    return out;
}

ImageStack median_filter(const ImageStack& stack, int passes, int window) {
    if (passes < 1) throw Error(ErrorCode::InvalidArgument, "passes must be >= 1");
    if (window < 3 || window % 2 == 0) throw Error(ErrorCode::InvalidArgument, "window must be odd and >= 3");
    const Dims d = stack.dims();
    ImageStack out = stack;
    if (d.count() == 0) return out;
    parallel_for(d.nz, [&](std::size_t z) {
        std::vector<double> padded;
        std::vector<double> scratch;
        std::vector<double> current(stack.slice(z).begin(), stack.slice(z).end());
        auto dst = out.slice(z);
        for (int p = 0; p < passes; ++p) {
            median_pass(current, dst, d.ny, d.nx, window, padded, scratch);
            std::copy(dst.begin(), dst.end(), current.begin());
        }
    });
    return out;
}

}  // namespace phasor_forge
