#include "phasor_forge/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace phasor_forge {

std::string_view error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::DegeneratePhasor: return "DegeneratePhasor";
        case ErrorCode::RegionOutOfBounds: return "RegionOutOfBounds";
        case ErrorCode::ZeroReference: return "ZeroReference";
        case ErrorCode::ModelShapeMismatch: return "ModelShapeMismatch";
        case ErrorCode::DivergedLoss: return "DivergedLoss";
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::TruncatedFile: return "TruncatedFile";
        case ErrorCode::ShapeChainBroken: return "ShapeChainBroken";
        case ErrorCode::DtypeUnsupported: return "DtypeUnsupported";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::TooFewDistinctPoints: return "TooFewDistinctPoints";
        case ErrorCode::KTooLargeForExactMatching: return "KTooLargeForExactMatching";
        case ErrorCode::PaletteTooSmall: return "PaletteTooSmall";
        case ErrorCode::Io: return "Io";
        case ErrorCode::Config: return "Config";
    }
    return "Unknown";
}

ImageStack::ImageStack(Dims dims, ValueKind kind, double fill)
    : dims_(dims), kind_(kind), data_(dims.count(), fill) {
    if (!std::isfinite(fill) || (kind == ValueKind::intensity && fill < 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "invalid fill value");
    }
}

ImageStack::ImageStack(Dims dims, ValueKind kind, std::vector<double> data)
    : dims_(dims), kind_(kind), data_(std::move(data)) {
    if (data_.size() != dims_.count()) {
        throw Error(ErrorCode::LengthMismatch, "data length " + std::to_string(data_.size()) +
                                                   " != " + std::to_string(dims_.count()));
    }
    for (double v : data_) {
        if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "non-finite value in stack");
        if (kind_ == ValueKind::intensity && v < 0.0) {
            throw Error(ErrorCode::InvalidArgument, "negative intensity");
        }
    }
}

std::span<const double> ImageStack::slice(std::size_t z) const {
    return std::span<const double>(data_).subspan(z * dims_.slice_size(), dims_.slice_size());
}

std::span<double> ImageStack::slice(std::size_t z) {
    return std::span<double>(data_).subspan(z * dims_.slice_size(), dims_.slice_size());
}

ImageStack ImageStack::with_kind(ValueKind kind) const {
    ImageStack out = *this;
    out.kind_ = kind;
    return out;
}

std::size_t PhasorField::valid_count() const {
    return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](auto m) { return m != 0; }));
}

void PhasorField::validate() const {
    if (!(g.dims() == s.dims()) || mask.size() != g.size()) {
        throw Error(ErrorCode::InvalidArgument, "phasor field g/s/mask dims differ");
    }
    if (!(omega > 0.0)) throw Error(ErrorCode::InvalidArgument, "omega must be positive");
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i] && (!std::isfinite(g[i]) || !std::isfinite(s[i]))) {
            throw Error(ErrorCode::InvalidArgument, "non-finite masked-in phasor");
        }
    }
}

double lifetime_from_phasor(double g, double s, double omega, double eps_g) {
    if (!(omega > 0.0)) throw Error(ErrorCode::InvalidArgument, "omega must be positive");
    if (!(std::abs(g) >= eps_g)) throw Error(ErrorCode::DegeneratePhasor, "|g| below eps_g");
    return s / (omega * g);
}

std::pair<double, double> phasor_from_lifetime(double tau, double omega) {
    if (!(tau >= 0.0) || !(omega > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "tau must be >= 0 and omega > 0");
    }
    const double wt = omega * tau;
    const double denom = 1.0 + wt * wt;
    return {1.0 / denom, wt / denom};
}

NormalizedStack normalize_stack(const ImageStack& stack, const Mask& mask) {
    if (!mask.empty() && mask.size() != stack.size()) {
        throw Error(ErrorCode::InvalidArgument, "mask size mismatch");
    }
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = 0; i < stack.size(); ++i) {
        if (!mask.empty() && !mask[i]) continue;
        lo = std::min(lo, stack[i]);
        hi = std::max(hi, stack[i]);
    }
    NormalizedStack out;
    if (!std::isfinite(lo)) {
        // nothing masked in
        out.stack = ImageStack(stack.dims(), stack.kind(), 0.0);
        out.record = {0.0, 1.0};
        out.constant = true;
        return out;
    }
    if (hi - lo < 1e-20) {
        out.stack = ImageStack(stack.dims(), stack.kind(), 0.0);
        out.record = {lo, lo + 1.0};
        out.constant = true;
        return out;
    }
    std::vector<double> data(stack.size());
    const double inv = 1.0 / (hi - lo);
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = (stack[i] - lo) * inv;
    out.stack = ImageStack(stack.dims(), stack.kind() == ValueKind::intensity ? ValueKind::generic : stack.kind(),
                           std::move(data));
    out.record = {lo, hi};
    return out;
}

ImageStack denormalize_stack(const ImageStack& stack, const NormalizationRecord& rec) {
    if (!(rec.hi > rec.lo)) throw Error(ErrorCode::InvalidArgument, "normalization record hi <= lo");
    std::vector<double> data(stack.size());
    const double span = rec.hi - rec.lo;
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = stack[i] * span + rec.lo;
    return ImageStack(stack.dims(), stack.kind(), std::move(data));
}

}  // namespace phasor_forge
