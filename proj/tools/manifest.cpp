#include "manifest.hpp"

#include "mscal/error.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#ifndef MSCAL_VERSION
#define MSCAL_VERSION "0.0.0"
#endif

namespace mscal::cli {

std::string sha256_hex(std::string_view bytes)
{
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw Error(ErrorCode::Io, "SHA-256 digest failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 0xf];
    }
    return out;
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorCode::Io, "cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

namespace {

void write_file(const std::filesystem::path& path, std::string_view bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error(ErrorCode::Io, "cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw Error(ErrorCode::Io, "write failed for " + path.string());
}

std::string utc_now()
{
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

RunManifest::RunManifest(std::string subcommand, std::filesystem::path out_dir)
    : subcommand_(std::move(subcommand)), out_dir_(std::move(out_dir))
{
    std::error_code ec;
    std::filesystem::create_directories(out_dir_, ec);
    if (ec)
        throw Error(ErrorCode::Io, "cannot create " + out_dir_.string() + ": " + ec.message());
}

std::string RunManifest::read_input(const std::filesystem::path& path)
{
    auto bytes = read_file(path);
    inputs_[path.string()] = sha256_hex(bytes);
    return bytes;
}

void RunManifest::write_output(const std::string& name, std::string_view bytes)
{
    write_file(out_dir_ / name, bytes);
    outputs_[name] = sha256_hex(bytes);
}

void RunManifest::finish() const
{
    nlohmann::ordered_json j;
    j["tool"] = "mscal";
    j["version"] = MSCAL_VERSION;
    j["subcommand"] = subcommand_;
    j["config"] = config_;
    if (seed_)
        j["seed"] = *seed_;
    else
        j["seed"] = nullptr;
    j["inputs"] = inputs_;
    j["outputs"] = outputs_;
    if (!notes_.empty())
        j["notes"] = notes_;
    j["created_utc"] = utc_now();
    write_file(out_dir_ / "manifest.json", j.dump(2) + "\n");
}

}  // namespace mscal::cli
