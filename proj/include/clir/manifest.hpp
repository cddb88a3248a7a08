#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "clir/common.hpp"
#include "clir/config.hpp"

namespace clir {

/// Written beside every primary output as "<output>.manifest.json". The
/// created_unix timestamp is the only non-reproducible field; byte-for-byte
/// output comparisons exclude manifests.
inline void write_manifest(const std::filesystem::path& output, const std::string& command,
                           const std::vector<std::string>& inputs, const Config& cfg) {
    nlohmann::json m{
        {"command", command},
        {"version", kVersion},
        {"inputs", inputs},
        {"output", output.string()},
        {"config_hash", config_hash(cfg)},
        {"seed", cfg.seed},
        {"created_unix",
         std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
             .count()},
    };
    write_file(output.string() + ".manifest.json", m.dump(2) + "\n");
}

/// Removes declared outputs unless released; commands that fail part-way leave
/// nothing behind.
class OutputGuard {
  public:
    void add(const std::filesystem::path& p) { paths_.push_back(p); }
    void release() { armed_ = false; }

    ~OutputGuard() {
        if (!armed_) return;
        std::error_code ec;
        for (const auto& p : paths_) {
            std::filesystem::remove_all(p, ec);
            std::filesystem::remove(p.string() + ".manifest.json", ec);
        }
    }

  private:
    std::vector<std::filesystem::path> paths_;
    bool armed_ = true;
};

}  // namespace clir
