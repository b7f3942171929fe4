// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The bbs authors

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "bbs/common.hpp"
#include "bbs/io.hpp"

namespace bbs::checkpoint {

using nlohmann::json;

/// Versioned container of named, shape-tagged arrays plus a JSON metadata
/// block (config echo, prompt stats, RNG state). Arrays keep their on-disk
/// element type so a float round trip is bit-exact. The file ends with a
/// FNV-1a digest of everything before it; a failed digest aborts the load
/// before any field is handed out.
class Checkpoint {
  public:
    static constexpr char kMagic[8] = {'B', 'B', 'S', 'C', 'K', 'P', 'T', '\0'};
    static constexpr uint32_t kFormatVersion = 1;

    using Array = std::variant<Eigen::MatrixXf, Eigen::MatrixXd>;

    json meta;

    void add(const std::string& name, Eigen::MatrixXf m) { arrays_.emplace_back(name, Array(std::move(m))); }
    void add(const std::string& name, Eigen::MatrixXd m) { arrays_.emplace_back(name, Array(std::move(m))); }

    bool has(const std::string& name) const { return find(name) != nullptr; }

    const Eigen::MatrixXf& get_f32(const std::string& name) const { return get<Eigen::MatrixXf>(name, "f32"); }
    const Eigen::MatrixXd& get_f64(const std::string& name) const { return get<Eigen::MatrixXd>(name, "f64"); }

    const std::vector<std::pair<std::string, Array>>& arrays() const { return arrays_; }

    void save(const std::string& path) const {
        std::string payload;
        payload.append(kMagic, sizeof(kMagic));
        append_pod(payload, kFormatVersion);
        const std::string meta_str = meta.dump();
        append_pod(payload, static_cast<uint64_t>(meta_str.size()));
        payload += meta_str;
        append_pod(payload, static_cast<uint32_t>(arrays_.size()));
        for (const auto& [name, arr] : arrays_) {
            append_pod(payload, static_cast<uint16_t>(name.size()));
            payload += name;
            const uint8_t dtype = std::holds_alternative<Eigen::MatrixXf>(arr) ? 0 : 1;
            append_pod(payload, dtype);
            std::visit(
                [&payload](const auto& m) {
                    append_pod(payload, static_cast<uint32_t>(m.rows()));
                    append_pod(payload, static_cast<uint32_t>(m.cols()));
                    payload.append(reinterpret_cast<const char*>(m.data()), static_cast<size_t>(m.size()) * sizeof(m(0, 0)));
                },
                arr);
        }
        const uint64_t digest = fnv1a(payload.data(), payload.size());
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError("checkpoint save: cannot open " + path);
        out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
        io::write_pod(out, digest);
        if (!out) throw FormatError("checkpoint save: write failed for " + path);
    }

    static Checkpoint load(const std::string& path) {
        const std::string blob = io::slurp(path);
        if (blob.size() < sizeof(kMagic) + sizeof(uint32_t) + sizeof(uint64_t)) {
            throw FormatError("checkpoint load: " + path + " too short to be a checkpoint");
        }
        const size_t body = blob.size() - sizeof(uint64_t);
        uint64_t stored;
        std::memcpy(&stored, blob.data() + body, sizeof(stored));
        if (fnv1a(blob.data(), body) != stored) {
            throw FormatError("checkpoint load: integrity digest mismatch in " + path);
        }
        size_t pos = 0;
        auto take = [&](void* dst, size_t n) {
            if (pos + n > body) throw FormatError("checkpoint load: truncated field in " + path);
            std::memcpy(dst, blob.data() + pos, n);
            pos += n;
        };
        char magic[sizeof(kMagic)];
        take(magic, sizeof(magic));
        if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
            throw FormatError("checkpoint load: bad magic in " + path);
        }
        uint32_t version;
        take(&version, sizeof(version));
        if (version != kFormatVersion) {
            throw FormatError("checkpoint load: unsupported format version " + std::to_string(version));
        }
        uint64_t meta_len;
        take(&meta_len, sizeof(meta_len));
        if (pos + meta_len > body) throw FormatError("checkpoint load: truncated metadata in " + path);
        Checkpoint ck;
        ck.meta = json::parse(blob.substr(pos, meta_len));
        pos += meta_len;
        uint32_t count;
        take(&count, sizeof(count));
        for (uint32_t i = 0; i < count; ++i) {
            uint16_t name_len;
            take(&name_len, sizeof(name_len));
            if (pos + name_len > body) throw FormatError("checkpoint load: truncated array name in " + path);
            std::string name = blob.substr(pos, name_len);
            pos += name_len;
            uint8_t dtype;
            take(&dtype, sizeof(dtype));
            uint32_t rows, cols;
            take(&rows, sizeof(rows));
            take(&cols, sizeof(cols));
            const size_t n = static_cast<size_t>(rows) * cols;
            if (dtype == 0) {
                Eigen::MatrixXf m(rows, cols);
                take(m.data(), n * sizeof(float));
                ck.add(name, std::move(m));
            } else if (dtype == 1) {
                Eigen::MatrixXd m(rows, cols);
                take(m.data(), n * sizeof(double));
                ck.add(name, std::move(m));
            } else {
                throw FormatError("checkpoint load: unknown dtype tag " + std::to_string(dtype));
            }
        }
        if (pos != body) throw FormatError("checkpoint load: trailing bytes in " + path);
        return ck;
    }

  private:
    template <typename T>
    static void append_pod(std::string& s, const T& v) {
        s.append(reinterpret_cast<const char*>(&v), sizeof(v));
    }

    template <typename M>
    const M& get(const std::string& name, const char* want) const {
        const Array* a = find(name);
        if (a == nullptr) throw FormatError("checkpoint: missing array '" + name + "'");
        if (!std::holds_alternative<M>(*a)) {
            throw FormatError("checkpoint: array '" + name + "' is not " + want);
        }
        return std::get<M>(*a);
    }

    const Array* find(const std::string& name) const {
        for (const auto& [n, a] : arrays_) {
            if (n == name) return &a;
        }
        return nullptr;
    }

    std::vector<std::pair<std::string, Array>> arrays_;
};

/// Flat key-by-key comparison of two JSON objects, for refusing a checkpoint
/// whose config echo disagrees with the requested one.
inline std::string json_field_diff(const json& expected, const json& actual) {
    std::string diff;
    for (auto it = expected.begin(); it != expected.end(); ++it) {
        if (!actual.contains(it.key())) {
            diff += "  " + it.key() + ": expected " + it.value().dump() + ", missing\n";
        } else if (actual.at(it.key()) != it.value()) {
            diff += "  " + it.key() + ": expected " + it.value().dump() + ", found " + actual.at(it.key()).dump() + "\n";
        }
    }
    for (auto it = actual.begin(); it != actual.end(); ++it) {
        if (!expected.contains(it.key())) {
            diff += "  " + it.key() + ": unexpected " + it.value().dump() + "\n";
        }
    }
    return diff;
}

}  // namespace bbs::checkpoint
