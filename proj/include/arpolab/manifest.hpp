#pragma once

#include "arpolab/common.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <vector>

#include <json.hpp>

namespace arpolab {

inline constexpr const char* kToolVersion = "0.1.0";

/// FNV-1a over the file bytes; enough to detect artifact drift.
inline std::uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorKind::Io, "cannot open for digest: " + path);
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[4096];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ull;
        }
        if (!in) break;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string iso8601_now() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Run metadata plus the digest of every emitted artifact. This is the one
/// output that carries wall-clock information; everything else a command
/// writes is byte-deterministic under a fixed seed.
class RunManifest {
public:
    RunManifest(std::string command, std::uint64_t seed, int workers, std::string config_snapshot)
        : command_(std::move(command)),
          seed_(seed),
          workers_(workers),
          config_(std::move(config_snapshot)),
          started_at_(iso8601_now()) {}

    void add_output(const std::string& path) { outputs_.push_back(path); }

    void write(const std::string& path) const {
        nlohmann::json j;
        j["tool"] = "arpolab";
        j["version"] = kToolVersion;
        j["command"] = command_;
        j["seed"] = seed_;
        j["workers"] = workers_;
        j["config"] = config_;
        j["started_at"] = started_at_;
        j["finished_at"] = iso8601_now();
        j["outputs"] = nlohmann::json::array();
        for (const std::string& out : outputs_) {
            nlohmann::json entry;
            entry["path"] = std::filesystem::path(out).filename().string();
            entry["bytes"] = static_cast<std::uint64_t>(std::filesystem::file_size(out));
            entry["fnv1a64"] = hex64(fnv1a64_file(out));
            j["outputs"].push_back(entry);
        }
        std::ofstream os(path);
        require(os.good(), ErrorKind::Io, "cannot write manifest: " + path);
        os << j.dump(2) << '\n';
    }

private:
    std::string command_;
    std::uint64_t seed_;
    int workers_;
    std::string config_;
    std::string started_at_;
    std::vector<std::string> outputs_;
};

}  // namespace arpolab
