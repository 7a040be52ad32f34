#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace mscal::cli {

std::string sha256_hex(std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

/// Collects what a subcommand read and wrote, then writes manifest.json into
/// the output directory. Only the manifest carries a timestamp.
class RunManifest {
public:
    RunManifest(std::string subcommand, std::filesystem::path out_dir);

    nlohmann::ordered_json& config() { return config_; }
    void set_seed(std::uint64_t seed) { seed_ = seed; }
    void set_note(std::string key, std::string value) { notes_[std::move(key)] = std::move(value); }

    /// Reads an input file and records its digest.
    std::string read_input(const std::filesystem::path& path);
    /// Writes `name` into the output directory and records its digest.
    void write_output(const std::string& name, std::string_view bytes);

    void finish() const;

private:
    std::string subcommand_;
    std::filesystem::path out_dir_;
    nlohmann::ordered_json config_ = nlohmann::ordered_json::object();
    nlohmann::ordered_json inputs_ = nlohmann::ordered_json::object();
    nlohmann::ordered_json outputs_ = nlohmann::ordered_json::object();
    nlohmann::ordered_json notes_ = nlohmann::ordered_json::object();
    std::optional<std::uint64_t> seed_;
};

}  // namespace mscal::cli
