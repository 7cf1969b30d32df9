// Copyright (c) 2026 mvsd authors
// SPDX-License-Identifier: Apache-2.0

#include "mvsd/field_stack.hpp"

#include <cstdio>
#include <cstring>
#include <memory>

namespace mvsd {

namespace {

void check_same_shape(const FieldStack& a, const FieldStack& b, const char* op) {
    if (!a.same_shape(b))
        throw ContractViolation(std::string("FieldStack ") + op + ": shape mismatch");
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_u32(std::FILE* f, std::uint32_t v) {
    const unsigned char b[4] = {
        static_cast<unsigned char>(v & 0xff),
        static_cast<unsigned char>((v >> 8) & 0xff),
        static_cast<unsigned char>((v >> 16) & 0xff),
        static_cast<unsigned char>((v >> 24) & 0xff)};
    if (std::fwrite(b, 1, 4, f) != 4) throw IoError("FieldStack: short write");
}

std::uint32_t read_u32(std::FILE* f) {
    unsigned char b[4];
    if (std::fread(b, 1, 4, f) != 4) throw IoError("FieldStack: short read");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

FieldStack operator+(const FieldStack& a, const FieldStack& b) {
    check_same_shape(a, b, "+");
    FieldStack r = a;
    for (std::size_t i = 0; i < r.data.size(); ++i) r.data[i] += b.data[i];
    return r;
}

FieldStack operator-(const FieldStack& a, const FieldStack& b) {
    check_same_shape(a, b, "-");
    FieldStack r = a;
    for (std::size_t i = 0; i < r.data.size(); ++i) r.data[i] -= b.data[i];
    return r;
}

FieldStack operator*(double s, const FieldStack& a) {
    FieldStack r = a;
    for (double& v : r.data) v *= s;
    return r;
}

double mse(const FieldStack& a, const FieldStack& b) {
    check_same_shape(a, b, "mse");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return a.data.empty() ? 0.0 : acc / static_cast<double>(a.data.size());
}

void save_field_stack(const FieldStack& f, const std::string& path) {
    f.check_invariants();
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("FieldStack: cannot open " + path + " for writing");
    if (std::fwrite("FSTK", 1, 4, fp.get()) != 4) throw IoError("FieldStack: short write");
    write_u32(fp.get(), static_cast<std::uint32_t>(f.width));
    write_u32(fp.get(), static_cast<std::uint32_t>(f.height));
    write_u32(fp.get(), static_cast<std::uint32_t>(f.channels));
    std::vector<float> buf(f.data.begin(), f.data.end());
    if (!buf.empty() &&
        std::fwrite(buf.data(), sizeof(float), buf.size(), fp.get()) != buf.size())
        throw IoError("FieldStack: short write");
    if (f.valid_mask && !f.valid_mask->empty()) {
        if (std::fwrite(f.valid_mask->data(), 1, f.valid_mask->size(), fp.get()) !=
            f.valid_mask->size())
            throw IoError("FieldStack: short write");
    }
}

FieldStack load_field_stack(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("FieldStack: cannot open " + path);
    char magic[4];
    if (std::fread(magic, 1, 4, fp.get()) != 4 || std::memcmp(magic, "FSTK", 4) != 0)
        throw IoError("FieldStack: bad magic in " + path);
    FieldStack f;
    f.width = static_cast<int>(read_u32(fp.get()));
    f.height = static_cast<int>(read_u32(fp.get()));
    f.channels = static_cast<int>(read_u32(fp.get()));
    const std::size_t n = static_cast<std::size_t>(f.width) * f.height * f.channels;
    std::vector<float> buf(n);
    if (n > 0 && std::fread(buf.data(), sizeof(float), n, fp.get()) != n)
        throw IoError("FieldStack: truncated payload in " + path);
    f.data.assign(buf.begin(), buf.end());
    // Optional mask plane: present iff more bytes follow.
    std::vector<std::uint8_t> mask(f.pixel_count());
    const std::size_t got = std::fread(mask.data(), 1, mask.size(), fp.get());
    if (got == mask.size()) {
        f.valid_mask = std::move(mask);
    } else if (got != 0) {
        throw IoError("FieldStack: truncated mask plane in " + path);
    }
    f.check_invariants();
    return f;
}

}  // namespace mvsd
