// SPDX-License-Identifier: Apache-2.0
#include "lliam/run.hpp"

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include "lliam/digest.hpp"
#include "lliam/errors.hpp"
#include "lliam/prompt_codec.hpp"

namespace lliam {

namespace fs = std::filesystem;

namespace {

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string one_line(std::string s) {
    for (auto& c : s)
        if (c == '\n' || c == '\r') c = ' ';
    return s;
}

} // namespace

std::string file_sha256(const fs::path& path) {
    fs::path target = path;
    if (fs::is_directory(path) && fs::exists(path / "manifest.txt")) target = path / "manifest.txt";
    std::ifstream in(target, std::ios::binary);
    if (!in) throw ParseError("cannot read " + target.string());
    Sha256 h;
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        const auto got = static_cast<std::size_t>(in.gcount());
        if (got) h.update(std::as_bytes(std::span(buf.data(), got)));
    }
    return h.hex_digest();
}

std::string template_sha256() { return sha256_hex(kPromptTemplate); }

RunManifest::RunManifest(std::string command) : command_(std::move(command)), created_(utc_now()) {}

void RunManifest::set_config(const std::string& key, const std::string& value) {
    for (auto& [k, v] : config_)
        if (k == key) {
            v = one_line(value);
            return;
        }
    config_.emplace_back(key, one_line(value));
}

void RunManifest::add(const std::string& tag, const std::string& text) { records_.emplace_back(tag, one_line(text)); }

void RunManifest::record_read(const fs::path& path, const std::string& role) {
    reads_.push_back({role, path.lexically_normal().string(), file_sha256(path)});
}

void RunManifest::record_write(const fs::path& path, const std::string& role) {
    writes_.push_back({role, path.lexically_normal().string(), ""});
}

std::string RunManifest::config_value(const std::string& key) const {
    for (const auto& [k, v] : config_)
        if (k == key) return v;
    throw ConfigError("run manifest has no config key " + key);
}

std::string RunManifest::to_text(bool with_timestamp) const {
    std::ostringstream os;
    os << "lliam-run-manifest 1\n";
    os << "command " << command_ << '\n';
    if (with_timestamp) os << "created " << created_ << '\n';
    for (const auto& [k, v] : config_) os << "config " << k << ' ' << v << '\n';
    for (const auto& [tag, text] : records_) os << tag << ' ' << text << '\n';
    for (const auto& r : reads_) os << "read " << r.role << ' ' << r.path << ' ' << r.sha256 << '\n';
    for (const auto& w : writes_) os << "write " << w.role << ' ' << w.path << '\n';
    return os.str();
}

void RunManifest::write(const fs::path& path) const {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ParseError("cannot write " + path.string());
    out << to_text();
}

RunManifest RunManifest::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open run manifest " + path.string());
    RunManifest m;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto sp = line.find(' ');
        const std::string tag = line.substr(0, sp);
        const std::string rest = sp == std::string::npos ? "" : line.substr(sp + 1);
        if (line_no == 1) {
            if (tag != "lliam-run-manifest") throw ParseError(path.string() + " is not a run manifest");
            continue;
        }
        std::istringstream is(rest);
        if (tag == "command") m.command_ = rest;
        else if (tag == "created") m.created_ = rest;
        else if (tag == "config") {
            const auto k = rest.find(' ');
            m.config_.emplace_back(rest.substr(0, k), k == std::string::npos ? "" : rest.substr(k + 1));
        } else if (tag == "read") {
            FileAccess a;
            is >> a.role >> a.path >> a.sha256;
            m.reads_.push_back(a);
        } else if (tag == "write") {
            FileAccess a;
            is >> a.role >> a.path;
            m.writes_.push_back(a);
        } else {
            m.records_.emplace_back(tag, rest);
        }
    }
    return m;
}

DirectoryLock::DirectoryLock(const fs::path& dir) : path_(dir / ".lock") {
    fs::create_directories(dir);
    for (int attempt = 0; attempt < 2; ++attempt) {
        const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd >= 0) {
            const std::string pid = std::to_string(::getpid()) + "\n";
            [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
            ::close(fd);
            return;
        }
        if (errno != EEXIST) throw LockError("cannot create lock file " + path_.string());
        long owner = 0;
        std::ifstream(path_) >> owner;
        const bool alive = owner > 0 && (::kill(static_cast<pid_t>(owner), 0) == 0 || errno == EPERM);
        if (alive) throw LockError("output directory " + dir.string() + " is locked by process " + std::to_string(owner));
        fs::remove(path_);
    }
    throw LockError("cannot acquire lock " + path_.string());
}

DirectoryLock::~DirectoryLock() {
    std::error_code ec;
    fs::remove(path_, ec);
}

} // namespace lliam
