// SPDX-License-Identifier: Apache-2.0
#include "mhtc/container.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace mhtc {

namespace {

constexpr std::size_t kMaxHeaderBytes = 100ull * 1024 * 1024;

// Round a finite double to a binary format with `exp_bits` exponent bits and
// `man_bits` stored mantissa bits: to nearest, ties to even, single step.
std::uint16_t encode_small_float(double x, int exp_bits, int man_bits) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(x);
    const std::uint16_t sign = static_cast<std::uint16_t>((bits >> 63) << (exp_bits + man_bits));
    const int exp_field = static_cast<int>((bits >> 52) & 0x7FF);
    const std::uint64_t frac = bits & 0xFFFFFFFFFFFFFull;
    const int bias = (1 << (exp_bits - 1)) - 1;
    const std::uint16_t inf_bits =
        static_cast<std::uint16_t>(((1u << exp_bits) - 1u) << man_bits);

    if (exp_field == 0x7FF) {
        if (frac != 0) {
            // Canonical quiet NaN; payloads are not preserved.
            return static_cast<std::uint16_t>(sign | inf_bits | (1u << (man_bits - 1)));
        }
        return static_cast<std::uint16_t>(sign | inf_bits);
    }
    if (exp_field == 0) {
        // Double zeros and subnormals are far below half the target's
        // smallest subnormal; they all round to (signed) zero.
        return sign;
    }

    int e = exp_field - 1023;
    const std::uint64_t sig = (1ull << 52) | frac;
    const int min_normal_exp = 1 - bias;

    int shift = 52 - man_bits;
    const bool subnormal = e < min_normal_exp;
    if (subnormal) {
        shift += min_normal_exp - e;
        if (shift > 53) return sign;
    }

    const std::uint64_t low = sig & ((1ull << shift) - 1ull);
    const std::uint64_t half = 1ull << (shift - 1);
    std::uint64_t q = sig >> shift;
    if (low > half || (low == half && (q & 1ull))) ++q;

    if (subnormal) {
        // q <= 2^man_bits; hitting the bound lands exactly on the smallest
        // normal, which the packed representation below encodes naturally.
        return static_cast<std::uint16_t>(sign | static_cast<std::uint16_t>(q));
    }
    if (q == (1ull << (man_bits + 1))) {
        q >>= 1;
        ++e;
    }
    if (e > bias) {
        return static_cast<std::uint16_t>(sign | inf_bits);
    }
    const std::uint16_t exp_out = static_cast<std::uint16_t>((e + bias) << man_bits);
    const std::uint16_t man_out = static_cast<std::uint16_t>(q & ((1u << man_bits) - 1u));
    return static_cast<std::uint16_t>(sign | exp_out | man_out);
}

double decode_small_float(std::uint16_t bits, int exp_bits, int man_bits) {
    const int bias = (1 << (exp_bits - 1)) - 1;
    const bool negative = (bits >> (exp_bits + man_bits)) & 1u;
    const int exp_field = (bits >> man_bits) & ((1 << exp_bits) - 1);
    const int man = bits & ((1 << man_bits) - 1);
    double mag;
    if (exp_field == (1 << exp_bits) - 1) {
        mag = man != 0 ? std::numeric_limits<double>::quiet_NaN()
                       : std::numeric_limits<double>::infinity();
    } else if (exp_field == 0) {
        mag = std::ldexp(static_cast<double>(man), 1 - bias - man_bits);
    } else {
        mag = std::ldexp(static_cast<double>((1 << man_bits) + man), exp_field - bias - man_bits);
    }
    return negative ? -mag : mag;
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

std::uint16_t get_u16(const std::uint8_t* p) {
    return static_cast<std::uint16_t>(p[0] | (std::uint16_t(p[1]) << 8));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

void validate_entry(const TensorEntry& e) {
    if (e.shape.empty()) {
        throw io_error("tensor '" + e.name + "': shape must be a non-empty list of extents");
    }
    std::size_t count = 1;
    for (std::size_t ext : e.shape) {
        if (ext == 0) {
            throw io_error("tensor '" + e.name + "': extents must be positive");
        }
        count *= ext;
    }
    if (e.bytes.size() != count * dtype_size(e.dtype)) {
        throw io_error("tensor '" + e.name + "': payload is " + std::to_string(e.bytes.size()) +
                       " bytes but shape and dtype require " +
                       std::to_string(count * dtype_size(e.dtype)));
    }
}

}  // namespace

std::size_t dtype_size(Dtype d) {
    switch (d) {
        case Dtype::F16:
        case Dtype::BF16:
            return 2;
        case Dtype::F32:
            return 4;
        case Dtype::F64:
            return 8;
    }
    return 0;
}

std::string_view dtype_name(Dtype d) {
    switch (d) {
        case Dtype::F16:
            return "F16";
        case Dtype::BF16:
            return "BF16";
        case Dtype::F32:
            return "F32";
        case Dtype::F64:
            return "F64";
    }
    return "";
}

std::optional<Dtype> dtype_from_name(std::string_view name) {
    if (name == "F16") return Dtype::F16;
    if (name == "BF16") return Dtype::BF16;
    if (name == "F32") return Dtype::F32;
    if (name == "F64") return Dtype::F64;
    return std::nullopt;
}

std::size_t TensorEntry::element_count() const {
    std::size_t count = 1;
    for (std::size_t e : shape) count *= e;
    return count;
}

std::uint16_t f16_from_double(double x) { return encode_small_float(x, 5, 10); }
double f16_to_double(std::uint16_t bits) { return decode_small_float(bits, 5, 10); }
std::uint16_t bf16_from_double(double x) { return encode_small_float(x, 8, 7); }
double bf16_to_double(std::uint16_t bits) { return decode_small_float(bits, 8, 7); }

std::vector<std::uint8_t> encode_scalars(std::span<const double> values, Dtype dtype) {
    std::vector<std::uint8_t> out;
    out.reserve(values.size() * dtype_size(dtype));
    switch (dtype) {
        case Dtype::F16:
            for (double v : values) put_u16(out, f16_from_double(v));
            break;
        case Dtype::BF16:
            for (double v : values) put_u16(out, bf16_from_double(v));
            break;
        case Dtype::F32:
            for (double v : values) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
            break;
        case Dtype::F64:
            for (double v : values) put_u64(out, std::bit_cast<std::uint64_t>(v));
            break;
    }
    return out;
}

std::vector<double> decode_scalars(std::span<const std::uint8_t> bytes, Dtype dtype) {
    const std::size_t width = dtype_size(dtype);
    if (bytes.size() % width != 0) {
        throw io_error("payload length is not a multiple of the dtype width");
    }
    std::vector<double> out(bytes.size() / width);
    const std::uint8_t* p = bytes.data();
    for (double& v : out) {
        switch (dtype) {
            case Dtype::F16:
                v = f16_to_double(get_u16(p));
                break;
            case Dtype::BF16:
                v = bf16_to_double(get_u16(p));
                break;
            case Dtype::F32:
                v = static_cast<double>(std::bit_cast<float>(get_u32(p)));
                break;
            case Dtype::F64:
                v = std::bit_cast<double>(get_u64(p));
                break;
        }
        p += width;
    }
    return out;
}

bool TensorContainer::has(std::string_view name) const {
    return index_.find(name) != index_.end();
}

const TensorEntry& TensorContainer::entry(std::string_view name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
        throw io_error("tensor '" + std::string(name) + "' not found in container");
    }
    return entries_[it->second];
}

DenseTensor TensorContainer::tensor(std::string_view name) const {
    const TensorEntry& e = entry(name);
    return DenseTensor::from_data(e.shape, decode_scalars(e.bytes, e.dtype));
}

void TensorContainer::set(const std::string& name, const DenseTensor& t, Dtype dtype) {
    TensorEntry e;
    e.name = name;
    e.dtype = dtype;
    e.shape = t.shape();
    e.bytes = encode_scalars(t.data(), dtype);
    set_raw(std::move(e));
}

void TensorContainer::set_raw(TensorEntry entry) {
    validate_entry(entry);
    auto it = index_.find(entry.name);
    if (it != index_.end()) {
        entries_[it->second] = std::move(entry);
        return;
    }
    index_.emplace(entry.name, entries_.size());
    entries_.push_back(std::move(entry));
}

std::vector<std::string> TensorContainer::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const TensorEntry& e : entries_) out.push_back(e.name);
    return out;
}

TensorContainer read_container(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw io_error("cannot open '" + path.string() + "' for reading");
    }
    std::vector<std::uint8_t> raw((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
    if (in.bad()) {
        throw io_error("read failure on '" + path.string() + "'");
    }
    if (raw.size() < 8) {
        throw io_error("'" + path.string() + "' is too short to hold a header length");
    }
    const std::uint64_t header_len = get_u64(raw.data());
    if (header_len > kMaxHeaderBytes) {
        throw io_error("header length " + std::to_string(header_len) + " exceeds the 100 MB limit");
    }
    if (8 + header_len > raw.size()) {
        throw io_error("header length " + std::to_string(header_len) +
                       " overflows the file size " + std::to_string(raw.size()));
    }
    const char* header_begin = reinterpret_cast<const char*>(raw.data()) + 8;
    nlohmann::ordered_json header =
        nlohmann::ordered_json::parse(header_begin, header_begin + header_len,
                                      /*cb=*/nullptr, /*allow_exceptions=*/false);
    if (header.is_discarded() || !header.is_object()) {
        throw io_error("malformed header JSON in '" + path.string() + "'");
    }

    const std::size_t data_size = raw.size() - 8 - header_len;
    const std::uint8_t* data = raw.data() + 8 + header_len;

    TensorContainer c;
    std::vector<std::pair<std::uint64_t, std::pair<std::uint64_t, std::string>>> ranges;
    for (const auto& [key, value] : header.items()) {
        if (key == "__metadata__") {
            if (!value.is_object()) {
                throw io_error("__metadata__ must be a string-to-string object");
            }
            for (const auto& [mk, mv] : value.items()) {
                if (!mv.is_string()) {
                    throw io_error("__metadata__ value for '" + mk + "' must be a string");
                }
                c.metadata()[mk] = mv.get<std::string>();
            }
            continue;
        }
        if (!value.is_object() || !value.contains("dtype") || !value.contains("shape") ||
            !value.contains("data_offsets")) {
            throw io_error("tensor '" + key + "': entry must carry dtype, shape, data_offsets");
        }
        if (!value["dtype"].is_string()) {
            throw io_error("tensor '" + key + "': dtype must be a string");
        }
        const auto dtype = dtype_from_name(value["dtype"].get<std::string>());
        if (!dtype) {
            throw io_error("tensor '" + key + "': unknown dtype '" +
                           value["dtype"].get<std::string>() + "'");
        }
        TensorEntry e;
        e.name = key;
        e.dtype = *dtype;
        if (!value["shape"].is_array()) {
            throw io_error("tensor '" + key + "': shape must be an array");
        }
        for (const auto& ext : value["shape"]) {
            if (!ext.is_number_unsigned()) {
                throw io_error("tensor '" + key + "': extents must be non-negative integers");
            }
            e.shape.push_back(ext.get<std::size_t>());
        }
        const auto& offs = value["data_offsets"];
        if (!offs.is_array() || offs.size() != 2 || !offs[0].is_number_unsigned() ||
            !offs[1].is_number_unsigned()) {
            throw io_error("tensor '" + key + "': data_offsets must be [begin, end]");
        }
        const std::uint64_t begin = offs[0].get<std::uint64_t>();
        const std::uint64_t end = offs[1].get<std::uint64_t>();
        if (begin > end || end > data_size) {
            throw io_error("tensor '" + key + "': byte range [" + std::to_string(begin) + ", " +
                           std::to_string(end) + ") is out of bounds for data section of " +
                           std::to_string(data_size) + " bytes");
        }
        e.bytes.assign(data + begin, data + end);
        validate_entry(e);
        ranges.push_back({begin, {end, key}});
        c.set_raw(std::move(e));
    }

    std::sort(ranges.begin(), ranges.end());
    for (std::size_t i = 1; i < ranges.size(); ++i) {
        if (ranges[i].first < ranges[i - 1].second.first) {
            throw io_error("tensor '" + ranges[i].second.second +
                           "': byte range overlaps tensor '" + ranges[i - 1].second.second + "'");
        }
    }
    return c;
}

void write_container(const TensorContainer& c, const std::filesystem::path& path) {
    std::vector<std::string> names = c.names();
    std::sort(names.begin(), names.end());

    nlohmann::json header = nlohmann::json::object();
    std::uint64_t offset = 0;
    std::vector<const TensorEntry*> ordered;
    ordered.reserve(names.size());
    for (const std::string& name : names) {
        const TensorEntry& e = c.entry(name);
        ordered.push_back(&e);
        nlohmann::json item;
        item["dtype"] = std::string(dtype_name(e.dtype));
        item["shape"] = e.shape;
        item["data_offsets"] = {offset, offset + e.bytes.size()};
        header[name] = std::move(item);
        offset += e.bytes.size();
    }
    if (!c.metadata().empty()) {
        header["__metadata__"] = c.metadata();
    }
    const std::string header_text = header.dump();
    if (header_text.size() > kMaxHeaderBytes) {
        throw io_error("header would exceed the 100 MB limit");
    }

    std::vector<std::uint8_t> blob;
    blob.reserve(8 + header_text.size() + offset);
    put_u64(blob, header_text.size());
    blob.insert(blob.end(), header_text.begin(), header_text.end());
    for (const TensorEntry* e : ordered) {
        blob.insert(blob.end(), e->bytes.begin(), e->bytes.end());
    }

    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw io_error("cannot open '" + tmp.string() + "' for writing");
        }
        out.write(reinterpret_cast<const char*>(blob.data()),
                  static_cast<std::streamsize>(blob.size()));
        if (!out) {
            throw io_error("write failure on '" + tmp.string() + "'");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw io_error("cannot move '" + tmp.string() + "' into place: " + ec.message());
    }
}

}  // namespace mhtc
