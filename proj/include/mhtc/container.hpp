// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mhtc/tensor.hpp"

namespace mhtc {

/// Malformed file, unreadable path, or unwritable destination.
class io_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Dtype { F16, BF16, F32, F64 };

std::size_t dtype_size(Dtype d);
std::string_view dtype_name(Dtype d);
std::optional<Dtype> dtype_from_name(std::string_view name);

/// One named tensor: raw little-endian payload plus dtype and shape.
struct TensorEntry {
    std::string name;
    Dtype dtype = Dtype::F32;
    std::vector<std::size_t> shape;
    std::vector<std::uint8_t> bytes;

    std::size_t element_count() const;
};

/// In-memory snapshot of a tensor file: named entries plus an optional
/// string-to-string metadata map. Entries keep their payload bytes verbatim
/// so untouched tensors round-trip bit-exactly.
class TensorContainer {
public:
    bool has(std::string_view name) const;
    const TensorEntry& entry(std::string_view name) const;

    /// Decodes the named entry to 64-bit values.
    DenseTensor tensor(std::string_view name) const;

    /// Inserts or replaces an entry, rounding to `dtype` once (to nearest,
    /// ties to even).
    void set(const std::string& name, const DenseTensor& t, Dtype dtype);
    void set_raw(TensorEntry entry);

    std::vector<std::string> names() const;  // insertion order
    std::size_t tensor_count() const { return entries_.size(); }

    std::map<std::string, std::string>& metadata() { return metadata_; }
    const std::map<std::string, std::string>& metadata() const { return metadata_; }

private:
    std::vector<TensorEntry> entries_;
    std::map<std::string, std::size_t, std::less<>> index_;
    std::map<std::string, std::string> metadata_;
};

/// File layout: 8-byte little-endian header length, a UTF-8 JSON header
/// mapping names to {dtype, shape, data_offsets} (offsets relative to the
/// data section that follows), then the data section. Headers over 100 MB
/// are rejected.
TensorContainer read_container(const std::filesystem::path& path);

/// Canonical form: names sorted bytewise, payloads packed contiguously in
/// that order, compact JSON with sorted keys. Writes to a temporary file in
/// the destination directory, then renames.
void write_container(const TensorContainer& c, const std::filesystem::path& path);

// Scalar codecs. Decoding is exact; encoding rounds to nearest, ties to
// even, in a single step from the 64-bit value.
std::uint16_t f16_from_double(double x);
double f16_to_double(std::uint16_t bits);
std::uint16_t bf16_from_double(double x);
double bf16_to_double(std::uint16_t bits);

std::vector<std::uint8_t> encode_scalars(std::span<const double> values, Dtype dtype);
std::vector<double> decode_scalars(std::span<const std::uint8_t> bytes, Dtype dtype);

}  // namespace mhtc
