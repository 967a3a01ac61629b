#include "lorapatch/patchio.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "lorapatch/errors.hpp"
#include "lorapatch/sha256.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace lorapatch::patchio {

namespace {

void append_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t read_u32(const std::string& buf, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[at + i])) << (8 * i);
  return v;
}

std::uint64_t read_u64(const std::string& buf, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[at + i])) << (8 * i);
  return v;
}

void append_floats(std::string& buf, const std::vector<float>& v) {
  static_assert(sizeof(float) == 4);
  const std::size_t at = buf.size();
  buf.resize(at + v.size() * 4);
  std::memcpy(buf.data() + at, v.data(), v.size() * 4);  // little-endian host
}

void write_atomic(const std::string& path, const std::string& bytes) {
  const fs::path target(path);
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("patchio: cannot open " + tmp.string() + " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("patchio: write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw IoError("patchio: rename to " + path + " failed: " + ec.message());
}

std::string assemble(const json& manifest, const std::string& blob) {
  std::string bytes(kMagic, 8);
  append_u32(bytes, kVersion);
  const std::string mtxt = manifest.dump();  // nlohmann orders keys: deterministic
  append_u64(bytes, mtxt.size());
  bytes += mtxt;
  bytes += blob;
  const Digest d = sha256(bytes.data(), bytes.size());
  bytes.append(reinterpret_cast<const char*>(d.data()), d.size());
  return bytes;
}

struct Parsed {
  json manifest;
  std::string blob;
};

Parsed read_container(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw PatchFileError(PatchFileErrorCode::io, "patchio: cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  if (bytes.size() < 8 + 4 + 8 + 32 || std::memcmp(bytes.data(), kMagic, 8) != 0)
    throw PatchFileError(PatchFileErrorCode::bad_magic, "patchio: bad magic in " + path);
  const std::uint32_t version = read_u32(bytes, 8);
  if (version != kVersion)
    throw PatchFileError(PatchFileErrorCode::bad_version,
                         "patchio: unsupported version " + std::to_string(version));

  const Digest actual = sha256(bytes.data(), bytes.size() - 32);
  if (std::memcmp(actual.data(), bytes.data() + bytes.size() - 32, 32) != 0)
    throw PatchFileError(PatchFileErrorCode::bad_checksum, "patchio: checksum mismatch in " + path);

  const std::uint64_t mlen = read_u64(bytes, 12);
  const std::size_t blob_at = 8 + 4 + 8 + mlen;
  if (blob_at + 32 > bytes.size())
    throw PatchFileError(PatchFileErrorCode::bad_layout, "patchio: manifest overruns file");

  Parsed p;
  try {
    p.manifest = json::parse(bytes.substr(20, mlen));
  } catch (const json::exception& e) {
    throw PatchFileError(PatchFileErrorCode::bad_layout,
                         std::string("patchio: manifest parse error: ") + e.what());
  }
  p.blob = bytes.substr(blob_at, bytes.size() - 32 - blob_at);
  return p;
}

std::vector<float> blob_floats(const std::string& blob, std::uint64_t offset, std::uint64_t count) {
  if (offset % 4 != 0 || offset + count * 4 > blob.size())
    throw PatchFileError(PatchFileErrorCode::bad_layout, "patchio: tensor record outside blob");
  std::vector<float> v(count);
  std::memcpy(v.data(), blob.data() + offset, count * 4);
  return v;
}

// Records must tile [0, blob_size) exactly: sequential, no gaps or overlaps.
void check_tiling(const std::vector<std::pair<std::uint64_t, std::uint64_t>>& records,
                  std::size_t blob_size) {
  std::uint64_t cursor = 0;
  for (const auto& [offset, count] : records) {
    if (offset != cursor)
      throw PatchFileError(PatchFileErrorCode::bad_layout, "patchio: blob gap or overlap");
    cursor += count * 4;
  }
  if (cursor != blob_size)
    throw PatchFileError(PatchFileErrorCode::bad_layout, "patchio: blob size mismatch");
}

}  // namespace

void save_patch(const surgery::LoraPatch& patch, const std::string& path) {
  json layers = json::array();
  std::string blob;
  for (const auto& b : patch.blocks) {
    json rec{{"path", b.desc.path},
             {"kind", b.desc.kind},
             {"in", b.desc.in_channels},
             {"out", b.desc.out_channels},
             {"kernel", {b.desc.kh, b.desc.kw}},
             {"stride", {b.desc.sh, b.desc.sw}},
             {"padding", {b.desc.ph, b.desc.pw}},
             {"a_offset", blob.size()},
             {"a_count", b.a.size()}};
    append_floats(blob, b.a);
    rec["b_offset"] = blob.size();
    rec["b_count"] = b.b.size();
    append_floats(blob, b.b);
    layers.push_back(std::move(rec));
  }
  json gates = json::array();
  for (const auto& b : patch.blocks) gates.push_back(b.gate);
  json manifest{{"format", "lora_patch"},
                {"mode", patch.manifest.mode},
                {"rank", patch.manifest.rank},
                {"alpha", patch.manifest.alpha},
                {"base_model_checksum", patch.manifest.base_model_checksum},
                {"config_hash", patch.manifest.config_hash},
                {"gates", gates},
                {"layers", layers}};
  write_atomic(path, assemble(manifest, blob));
}

surgery::LoraPatch load_patch(const std::string& path) {
  Parsed p = read_container(path);
  const json& m = p.manifest;
  if (!m.contains("format") || m["format"] != "lora_patch")
    throw PatchFileError(PatchFileErrorCode::bad_layout, "patchio: not a lora_patch file");

  surgery::LoraPatch patch;
  patch.manifest.rank = m.at("rank").get<int>();
  patch.manifest.alpha = m.at("alpha").get<float>();
  patch.manifest.mode = m.at("mode").get<std::string>();
  patch.manifest.base_model_checksum = m.at("base_model_checksum").get<std::string>();
  patch.manifest.config_hash = m.at("config_hash").get<std::string>();

  const json& layers = m.at("layers");
  const json& gates = m.at("gates");
  if (gates.size() != layers.size())
    throw PatchFileError(PatchFileErrorCode::bad_layout, "patchio: gates/layers length mismatch");

  std::vector<std::pair<std::uint64_t, std::uint64_t>> records;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const json& rec = layers[i];
    surgery::LoraBlockParams b;
    b.desc.path = rec.at("path").get<std::string>();
    b.desc.kind = rec.at("kind").get<std::string>();
    b.desc.in_channels = rec.at("in").get<int>();
    b.desc.out_channels = rec.at("out").get<int>();
    b.desc.kh = rec.at("kernel")[0].get<int>();
    b.desc.kw = rec.at("kernel")[1].get<int>();
    b.desc.sh = rec.at("stride")[0].get<int>();
    b.desc.sw = rec.at("stride")[1].get<int>();
    b.desc.ph = rec.at("padding")[0].get<int>();
    b.desc.pw = rec.at("padding")[1].get<int>();
    b.rank = patch.manifest.rank;
    b.alpha = patch.manifest.alpha;
    b.gate = gates[i].get<float>();
    const auto ao = rec.at("a_offset").get<std::uint64_t>(), ac = rec.at("a_count").get<std::uint64_t>();
    const auto bo = rec.at("b_offset").get<std::uint64_t>(), bc = rec.at("b_count").get<std::uint64_t>();
    records.emplace_back(ao, ac);
    records.emplace_back(bo, bc);
    b.a = blob_floats(p.blob, ao, ac);
    b.b = blob_floats(p.blob, bo, bc);
    patch.blocks.push_back(std::move(b));
  }
  check_tiling(records, p.blob.size());
  return patch;
}

void save_params(const std::string& path, const std::string& kind,
                 const std::vector<nn::Param*>& params, const std::string& extra_json) {
  json tensors = json::array();
  std::string blob;
  for (const auto* p : params) {
    tensors.push_back({{"offset", blob.size()}, {"count", p->v.size()}});
    append_floats(blob, p->v);
  }
  json extra;
  try {
    extra = json::parse(extra_json);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("save_params: extra_json is not valid JSON: ") + e.what());
  }
  json manifest{{"format", "params"}, {"kind", kind}, {"tensors", tensors}, {"extra", extra}};
  write_atomic(path, assemble(manifest, blob));
}

std::string load_params(const std::string& path, const std::string& kind,
                        std::vector<nn::Param*>& params) {
  Parsed p = read_container(path);
  const json& m = p.manifest;
  if (!m.contains("format") || m["format"] != "params")
    throw PatchFileError(PatchFileErrorCode::bad_layout, "patchio: not a params file");
  if (m.at("kind").get<std::string>() != kind)
    throw PatchFileError(PatchFileErrorCode::bad_layout,
                         "patchio: kind mismatch, file holds " + m.at("kind").get<std::string>() +
                             ", expected " + kind);
  const json& tensors = m.at("tensors");
  if (tensors.size() != params.size())
    throw PatchFileError(PatchFileErrorCode::bad_layout,
                         "patchio: file has " + std::to_string(tensors.size()) +
                             " tensors, model expects " + std::to_string(params.size()));
  std::vector<std::pair<std::uint64_t, std::uint64_t>> records;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto offset = tensors[i].at("offset").get<std::uint64_t>();
    const auto count = tensors[i].at("count").get<std::uint64_t>();
    if (count != params[i]->v.size())
      throw PatchFileError(PatchFileErrorCode::bad_layout,
                           "patchio: tensor " + std::to_string(i) + " size mismatch");
    records.emplace_back(offset, count);
    params[i]->v = blob_floats(p.blob, offset, count);
  }
  check_tiling(records, p.blob.size());
  return m.at("extra").dump();
}

void save_generator(zoo::Generator& gen, const std::string& path) {
  json spec{{"input_channels", gen.spec.input_channels},
            {"base_width", gen.spec.base_width},
            {"num_downsample", gen.spec.num_downsample},
            {"num_residual", gen.spec.num_residual},
            {"num_upsample", gen.spec.num_upsample},
            {"output_activation", gen.spec.output_activation},
            {"seed", gen.spec.seed}};
  auto params = gen.parameters();
  save_params(path, "generator", params, json{{"spec", spec}}.dump());
}

zoo::Generator load_generator(const std::string& path) {
  // Two passes: the spec is needed before the parameter list exists.
  Parsed p = read_container(path);
  const json spec_j = p.manifest.at("extra").at("spec");
  zoo::GeneratorSpec spec;
  spec.input_channels = spec_j.at("input_channels").get<int>();
  spec.base_width = spec_j.at("base_width").get<int>();
  spec.num_downsample = spec_j.at("num_downsample").get<int>();
  spec.num_residual = spec_j.at("num_residual").get<int>();
  spec.num_upsample = spec_j.at("num_upsample").get<int>();
  spec.output_activation = spec_j.at("output_activation").get<std::string>();
  spec.seed = spec_j.at("seed").get<unsigned>();

  zoo::Generator gen = zoo::build_toy_generator(spec);
  auto params = gen.parameters();
  load_params(path, "generator", params);
  return gen;
}

}  // namespace lorapatch::patchio
