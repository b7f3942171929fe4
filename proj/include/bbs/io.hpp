// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The bbs authors

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "bbs/common.hpp"

static_assert(std::endian::native == std::endian::little, "on-disk formats are little-endian");

namespace bbs::io {

namespace fs = std::filesystem;

inline void write_bytes(std::ostream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void read_bytes(std::istream& is, void* p, std::size_t n, const char* what) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n) {
        throw FormatError(std::string("unexpected end of file while reading ") + what);
    }
}

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    write_bytes(os, &v, sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const char* what) {
    T v;
    read_bytes(is, &v, sizeof(T), what);
    return v;
}

inline std::string slurp(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path.string());
    std::string s((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return s;
}

inline void spit(const fs::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("cannot write " + path.string());
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
}

inline std::uint64_t file_hash(const fs::path& path) {
    const std::string s = slurp(path);
    return fnv1a(s.data(), s.size());
}

}  // namespace bbs::io
