#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "nnaee/model.hpp"
#include "nnaee/neural.hpp"

namespace nnaee::store {

namespace fs = std::filesystem;

constexpr int kFormatVersion = 1;

std::uint64_t fnv1a64(const void *data, std::size_t size);
std::uint64_t fnv1a64(const std::vector<std::uint8_t> &bytes);
std::string hex64(std::uint64_t v);

/// Writes through a temporary sibling and renames it over `path`.
void write_atomic(const fs::path &path, const std::vector<std::uint8_t> &bytes);
void write_text_atomic(const fs::path &path, const std::string &text);
std::vector<std::uint8_t> read_bytes(const fs::path &path);
std::string read_text(const fs::path &path);

std::vector<std::uint8_t> encode_field(const SOSField &field);
SOSField decode_field(const std::vector<std::uint8_t> &bytes, const std::string &origin = "<memory>");
void save_field(const fs::path &path, const SOSField &field);
SOSField load_field(const fs::path &path);

/// MSIG carries no tier; loaded sets take `tier`.
std::vector<std::uint8_t> encode_measurements(const MeasurementSet &m);
MeasurementSet decode_measurements(const std::vector<std::uint8_t> &bytes, Tier tier,
                                   const std::string &origin = "<memory>");
void save_measurements(const fs::path &path, const MeasurementSet &m);
MeasurementSet load_measurements(const fs::path &path, Tier tier = Tier::physical);

std::vector<std::uint8_t> encode_network(const nn::NetworkBundle &bundle);
nn::NetworkBundle decode_network(const std::vector<std::uint8_t> &bytes,
                                 const std::string &origin = "<memory>");
void save_network(const fs::path &path, const nn::NetworkBundle &bundle);
nn::NetworkBundle load_network(const fs::path &path);

struct FileEntry {
  std::string name; // relative to the manifest directory
  std::uint64_t bytes = 0;
  std::uint64_t checksum = 0;
};

struct Manifest {
  int format_version = kFormatVersion;
  std::string created; // UTC, ISO 8601
  std::uint64_t master_seed = 0;
  std::map<std::string, std::string> config_hashes;
  std::vector<FileEntry> files;
  std::string meta; // free-form JSON document
};

/// Records `name` (relative path under `dir`) with its current size and checksum.
FileEntry describe_file(const fs::path &dir, const std::string &name);

void write_manifest(const fs::path &dir, const Manifest &manifest);
/// Parses manifest.json; VersionError for a newer format.
Manifest read_manifest(const fs::path &dir);
/// Checks every listed file: IoError when missing, TruncationError when shorter than
/// recorded, CorruptionError on size or checksum mismatch.
void verify_manifest(const fs::path &dir, const Manifest &manifest);

/// Hash of a config's canonical JSON form.
std::string config_hash(const ModelConfig &config);

std::string utc_timestamp();

} // namespace nnaee::store
