#pragma once

#include <string>
#include <vector>

#include "lorapatch/model_zoo.hpp"
#include "lorapatch/nn.hpp"
#include "lorapatch/surgery.hpp"

namespace lorapatch::patchio {

// Single-file container, little-endian throughout:
//   bytes 0..7    magic "LORAPTCH"
//   bytes 8..11   u32 format version (currently 1)
//   bytes 12..19  u64 manifest byte length
//   manifest      UTF-8 JSON (sorted keys, byte-deterministic)
//   blob          concatenated float32 tensors, tiled exactly by the
//                 manifest's (offset, count) records
//   trailer       32-byte SHA-256 over every preceding byte
inline constexpr char kMagic[8] = {'L', 'O', 'R', 'A', 'P', 'T', 'C', 'H'};
inline constexpr unsigned kVersion = 1;

/// Writes the patch (A then B per layer, manifest order); atomic via
/// temp-file + rename; byte-deterministic for identical patches.
void save_patch(const surgery::LoraPatch& patch, const std::string& path);

/// Verifies magic, version, checksum, and blob tiling; bit-exact roundtrip.
surgery::LoraPatch load_patch(const std::string& path);

/// Generic weight container (same byte layout) for generators and encoders;
/// `kind` is recorded in the manifest and checked on load. `extra_json`
/// carries arbitrary metadata (e.g. an architecture spec) as a JSON string.
void save_params(const std::string& path, const std::string& kind,
                 const std::vector<nn::Param*>& params, const std::string& extra_json = "{}");
/// Loads values into the given params (sizes must match); returns extra_json.
std::string load_params(const std::string& path, const std::string& kind,
                        std::vector<nn::Param*>& params);

/// Generator weights + spec in one file.
void save_generator(zoo::Generator& gen, const std::string& path);
zoo::Generator load_generator(const std::string& path);

}  // namespace lorapatch::patchio
