#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "varreg/grid.hpp"
#include "varreg/unroll.hpp"

namespace varreg {

// VRFIELD1: "VRFIELD1\n" then ASCII lines rank/dims/spacing/channels/dtype/
// end, followed by little-endian f32 samples, planar by channel.
using FieldData = std::variant<ScalarField, VectorField>;

std::string encode_field(const FieldData& field);
FieldData decode_field(std::span<const char> bytes);

void write_field(const std::string& path, const FieldData& field);
FieldData read_field(const std::string& path);
ScalarField read_scalar_field(const std::string& path);
VectorField read_vector_field(const std::string& path);

// VRWGHT1 checkpoint of CascadeParams: "VRWGHT1\n", "attr" lines, one
// "tensor <name> <ndim> <shape...>" line per tensor, "end\n", the f32
// payloads in manifest order and a trailing little-endian FNV-1a 64
// checksum of the payload bytes.
std::string encode_weights(const CascadeParams& params);
CascadeParams decode_weights(std::span<const char> bytes);
void write_weights(const std::string& path, const CascadeParams& params);
CascadeParams read_weights(const std::string& path);

std::uint64_t fnv1a64(std::span<const char> bytes);

// Binary P5 grey image, 2D only. Intensities map to [0, 1].
ScalarField decode_pgm(std::span<const char> bytes);
std::string encode_pgm(const ScalarField& image, int maxval = 255);
ScalarField read_pgm(const std::string& path);
void write_pgm(const std::string& path, const ScalarField& image, int maxval = 255);

// Reads a PGM or a single-channel field file, chosen by magic.
ScalarField read_image(const std::string& path);

// Binary P6 flow visualisation: hue from direction, saturation from
// relative magnitude, value 1. Rows follow axis 0, columns axis 1.
std::string encode_flow_ppm(const VectorField& u);
void write_flow_ppm(const std::string& path, const VectorField& u);

// HSV (hue in degrees, s and v in [0, 1]) to 8-bit RGB.
std::array<std::uint8_t, 3> hsv_to_rgb(double hue, double sat, double val);

std::vector<char> read_file(const std::string& path);
// Writes through a temporary sibling file and renames it into place.
void write_file_atomic(const std::string& path, std::string_view content);

}  // namespace varreg
