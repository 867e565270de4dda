// SPDX-License-Identifier: Apache-2.0
//
// Run manifest (text, one record per line):
//
//   lliam-run-manifest 1
//   command <name>
//   created <UTC timestamp>
//   <tag> <text...>          config, seed, digest, registry, template_sha256, note, ...
//   read <role> <path> <sha256>
//   write <role> <path>
//
// Everything except the "created" line is a pure function of the inputs.

#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lliam {

struct FileAccess {
    std::string role; // e.g. "test-windows", "base-checkpoint"
    std::string path;
    std::string sha256;
};

class RunManifest {
public:
    explicit RunManifest(std::string command = "");

    const std::string& command() const noexcept { return command_; }

    // Later values for an existing key replace the earlier one in place.
    void set_config(const std::string& key, const std::string& value);
    void add(const std::string& tag, const std::string& text);
    // Records a read with the content digest of the file (directories hash
    // their manifest.txt when present).
    void record_read(const std::filesystem::path& path, const std::string& role);
    void record_write(const std::filesystem::path& path, const std::string& role);

    const std::vector<std::pair<std::string, std::string>>& config() const noexcept { return config_; }
    const std::vector<std::pair<std::string, std::string>>& records() const noexcept { return records_; }
    const std::vector<FileAccess>& reads() const noexcept { return reads_; }
    const std::vector<FileAccess>& writes() const noexcept { return writes_; }
    std::string config_value(const std::string& key) const;

    std::string to_text(bool with_timestamp = true) const;
    void write(const std::filesystem::path& path) const;
    static RunManifest load(const std::filesystem::path& path);

private:
    std::string command_;
    std::string created_;
    std::vector<std::pair<std::string, std::string>> config_;
    std::vector<std::pair<std::string, std::string>> records_;
    std::vector<FileAccess> reads_;
    std::vector<FileAccess> writes_;
};

std::string file_sha256(const std::filesystem::path& path);
// Digest of the prompt template text.
std::string template_sha256();

class LockError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Exclusive ".lock" file in an output directory, released on destruction.
// A lock left behind by a process that no longer exists is taken over.
class DirectoryLock {
public:
    explicit DirectoryLock(const std::filesystem::path& dir);
    ~DirectoryLock();
    DirectoryLock(const DirectoryLock&) = delete;
    DirectoryLock& operator=(const DirectoryLock&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
};

} // namespace lliam
