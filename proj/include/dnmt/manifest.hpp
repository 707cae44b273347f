#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dnmt/io.hpp"

namespace dnmt {

constexpr const char* kToolkitVersion = "0.1.0";

// Written into the run directory before a command starts; carries enough to
// replay the run (command, config snapshot, input digests, seed).
struct RunManifest {
    std::string command;
    std::map<std::string, std::string> config;
    std::map<std::string, std::string> input_digests;
    std::vector<std::string> checkpoint_ids;
    std::uint64_t seed = 0;
    std::string version = kToolkitVersion;

    Json to_json() const {
        Json j;
        j["command"] = command;
        j["config"] = config;
        j["input_digests"] = input_digests;
        j["checkpoint_ids"] = checkpoint_ids;
        j["seed"] = seed;
        j["version"] = version;
        return j;
    }

    static RunManifest from_json(const Json& j) {
        RunManifest m;
        m.command = j.at("command").get<std::string>();
        m.config = j.at("config").get<std::map<std::string, std::string>>();
        m.input_digests = j.at("input_digests").get<std::map<std::string, std::string>>();
        m.checkpoint_ids = j.at("checkpoint_ids").get<std::vector<std::string>>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.version = j.at("version").get<std::string>();
        return m;
    }

    void write(const std::filesystem::path& run_dir) const {
        std::filesystem::create_directories(run_dir);
        atomic_write_text(run_dir / "manifest.json", to_json().dump(2) + "\n");
    }
};

// One process per run directory: the lock file is created exclusively and
// removed on destruction.
class RunLock {
  public:
    explicit RunLock(const std::filesystem::path& run_dir) : path_(run_dir / ".lock") {
        std::filesystem::create_directories(run_dir);
        if (std::filesystem::exists(path_)) {
            raise(ErrorKind::contract,
                  "run directory " + run_dir.string() + " is locked by another process");
        }
        std::ofstream out(path_);
        out << "locked\n";
    }

    ~RunLock() {
        std::error_code ec;
        std::filesystem::remove(path_, ec);
    }

    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

  private:
    std::filesystem::path path_;
};

} // namespace dnmt
