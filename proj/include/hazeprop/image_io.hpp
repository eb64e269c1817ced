#pragma once

#include <stdexcept>
#include <string>

#include "hazeprop/field.hpp"

namespace hazeprop {

/// File I/O failure with a machine-checkable cause.
class IoError : public std::runtime_error {
public:
    enum class Kind { open_failed, unsupported_format, truncated, bad_data, write_failed };

    IoError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

/// Load an RGB image from PNG (8/16-bit, gray or color) or binary PPM/PGM.
/// Values are scaled to [0,1]; grayscale sources are replicated to all
/// three channels.
ImageRGB load_image(const std::string& path);

/// Load a single-channel field from a grayscale PNG/PGM (color inputs are
/// reduced to luminance).
ScalarField load_field(const std::string& path);

/// Save as 8-bit (default) or 16-bit RGB PNG or binary PPM, chosen by file
/// extension (.png / .ppm). Values are clamped to [0,1] first.
void save_image(const ImageRGB& img, const std::string& path, int bit_depth = 8);

/// Save a field as grayscale PNG or binary PGM.
void save_field(const ScalarField& f, const std::string& path, int bit_depth = 8);

}  // namespace hazeprop
