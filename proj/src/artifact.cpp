// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#include "ceimven/artifact.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include <fmt/format.h>
#include <zlib.h>

#include "ceimven/error.hpp"

namespace ceimven {

static_assert(std::endian::native == std::endian::little, "artifact I/O assumes a little-endian host");

std::uint32_t crc32_of(const void* data, std::size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  const auto* bytes = static_cast<const Bytef*>(data);
  // zlib takes uInt lengths; feed in chunks to stay portable for large payloads.
  while (size > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = crc32(crc, bytes, chunk);
    bytes += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

nlohmann::json ImportReport::to_json() const {
  return {{"matched", matched}, {"unmatched", unmatched}, {"ignored", ignored}};
}

namespace {

struct Entry {
  std::string name;
  Tensor tensor;
  bool is_param;
  bool trainable;
};

std::vector<Entry> entries_of(const Model& model) {
  std::vector<Entry> out;
  for (auto& p : model.parameters()) out.push_back({p.name, p.tensor, true, p.trainable});
  for (auto& b : model.buffers()) out.push_back({b.name, b.tensor, false, false});
  return out;
}

struct Artifact {
  nlohmann::json header;
  std::vector<char> payload;
};

std::uint64_t read_u64_le(const char* p) {
  std::uint64_t v = 0;
  std::memcpy(&v, p, sizeof v);
  return v;
}

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open artifact " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Parses magic, header length and header; checks the version before anything
// else. Returns the offset of the payload.
std::size_t parse_header(const std::vector<char>& bytes, const std::string& where, nlohmann::json& header) {
  if (bytes.size() < 16) throw ArtifactTruncatedError(where + ": shorter than the fixed preamble");
  if (std::memcmp(bytes.data(), kArtifactMagic, 8) != 0) throw ArtifactError(where + ": not a ceimven artifact");
  const std::uint64_t len = read_u64_le(bytes.data() + 8);
  if (len > bytes.size() - 16) throw ArtifactTruncatedError(where + ": header extends past end of file");
  try {
    header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len));
  } catch (const nlohmann::json::exception& e) {
    throw ArtifactError(where + ": malformed header: " + e.what());
  }
  if (!header.is_object() || !header.contains("format_version")) {
    throw ArtifactError(where + ": header has no format_version");
  }
  const auto& v = header.at("format_version");
  if (!v.is_number_integer() || v.get<int>() != kArtifactVersion) {
    throw ArtifactVersionError(fmt::format("{}: format_version {} is not supported (expected {})", where,
                                           v.dump(), kArtifactVersion));
  }
  return 16 + static_cast<std::size_t>(len);
}

Artifact read_artifact(const std::filesystem::path& path) {
  const std::string where = path.string();
  const auto bytes = read_file(path);
  Artifact a;
  const std::size_t start = parse_header(bytes, where, a.header);
  const std::size_t expected = a.header.value("payload_bytes", std::size_t{0});
  const std::size_t available = bytes.size() - start;
  if (available < expected) {
    throw ArtifactTruncatedError(fmt::format("{}: payload has {} of {} bytes", where, available, expected));
  }
  if (available > expected) throw ArtifactError(fmt::format("{}: {} trailing bytes", where, available - expected));
  a.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(start), bytes.end());
  const std::string crc = fmt::format("{:08x}", crc32_of(a.payload.data(), a.payload.size()));
  if (crc != a.header.value("checksum", std::string{})) {
    throw ArtifactChecksumError(where + ": payload checksum " + crc + " does not match header " +
                                a.header.value("checksum", std::string{"<none>"}));
  }
  return a;
}

struct TensorRecord {
  Shape shape;
  std::size_t offset;
  bool is_param;
  bool trainable;
};

std::map<std::string, TensorRecord> tensor_records(const Artifact& a, const std::string& where) {
  std::map<std::string, TensorRecord> out;
  try {
    for (const auto& t : a.header.at("tensors")) {
      TensorRecord r{t.at("shape").get<Shape>(), t.at("offset").get<std::size_t>(),
                     t.at("kind").get<std::string>() == "param", t.value("trainable", true)};
      if (r.offset + shape_numel(r.shape) * sizeof(float) > a.payload.size()) {
        throw ArtifactError(where + ": tensor " + t.at("name").get<std::string>() + " lies outside the payload");
      }
      out.emplace(t.at("name").get<std::string>(), std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ArtifactError(where + ": malformed tensor manifest: " + e.what());
  }
  return out;
}

void copy_into(Tensor& dst, const Artifact& a, const TensorRecord& r) {
  auto data = dst.mutable_data();
  std::memcpy(data.data(), a.payload.data() + r.offset, data.size() * sizeof(float));
}

}  // namespace

void save_model(const Model& model, const std::filesystem::path& path, const nlohmann::json& extra) {
  const auto entries = entries_of(model);
  nlohmann::json tensors = nlohmann::json::array();
  std::vector<char> payload;
  for (const auto& e : entries) {
    const auto data = e.tensor.data();
    tensors.push_back({{"name", e.name},
                       {"shape", e.tensor.shape()},
                       {"offset", payload.size()},
                       {"kind", e.is_param ? "param" : "buffer"},
                       {"trainable", e.trainable}});
    const auto* raw = reinterpret_cast<const char*>(data.data());
    payload.insert(payload.end(), raw, raw + data.size() * sizeof(float));
  }
  nlohmann::json header = {{"format", "ceimven-artifact"},
                           {"format_version", kArtifactVersion},
                           {"task", task_name(model.task())},
                           {"config", model.config().to_json()},
                           {"layers", model.manifest()},
                           {"tensors", tensors},
                           {"payload_bytes", payload.size()},
                           {"checksum", fmt::format("{:08x}", crc32_of(payload.data(), payload.size()))}};
  if (!extra.empty()) header["extra"] = extra;
  const std::string text = header.dump();
  const std::uint64_t len = text.size();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write artifact " + path.string());
  out.write(kArtifactMagic, 8);
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("failed writing artifact " + path.string());
}

nlohmann::json read_artifact_header(const std::filesystem::path& path) {
  nlohmann::json header;
  parse_header(read_file(path), path.string(), header);
  return header;
}

Model load_model(const std::filesystem::path& path) {
  const std::string where = path.string();
  const Artifact a = read_artifact(path);
  const auto records = tensor_records(a, where);
  Model model = [&] {
    try {
      return Model(CeimvenConfig::from_json(a.header.at("config")),
                   task_from_name(a.header.value("task", std::string{"classify"})), 0);
    } catch (const nlohmann::json::exception& e) {
      throw ArtifactError(where + ": malformed config: " + e.what());
    } catch (const ValueError& e) {
      throw ArtifactError(where + ": invalid config: " + e.what());
    }
  }();
  auto entries = entries_of(model);
  if (entries.size() != records.size()) {
    throw ArtifactError(fmt::format("{}: {} tensors stored, model has {}", where, records.size(), entries.size()));
  }
  for (auto& e : entries) {
    const auto it = records.find(e.name);
    if (it == records.end()) throw ArtifactError(where + ": missing tensor " + e.name);
    if (it->second.shape != e.tensor.shape()) {
      throw ArtifactError(where + ": tensor " + e.name + " stored as " + shape_str(it->second.shape) +
                          ", model expects " + shape_str(e.tensor.shape()));
    }
  }
  for (auto& e : entries) copy_into(e.tensor, a, records.at(e.name));
  model.set_mode(Mode::kEval);
  return model;
}

ImportReport import_backbone_weights(Model& model, const std::filesystem::path& path) {
  const std::string where = path.string();
  const Artifact a = read_artifact(path);
  const auto records = tensor_records(a, where);
  const auto is_backbone = [](const std::string& n) { return n.rfind("backbone/", 0) == 0; };

  ImportReport report;
  std::vector<std::pair<Tensor, const TensorRecord*>> plan;
  std::map<std::string, bool> seen;
  for (auto& e : entries_of(model)) {
    if (!is_backbone(e.name)) continue;
    const auto it = records.find(e.name);
    if (it == records.end()) {
      report.unmatched.push_back(e.name);
      continue;
    }
    seen[e.name] = true;
    if (it->second.shape != e.tensor.shape()) {
      throw ImportError(where + ": shape conflict on " + e.name + ": artifact " + shape_str(it->second.shape) +
                        ", model " + shape_str(e.tensor.shape()));
    }
    report.matched.push_back(e.name);
    plan.emplace_back(e.tensor, &it->second);
  }
  for (const auto& [name, rec] : records) {
    if (is_backbone(name) && !seen.count(name)) report.ignored.push_back(name);
  }
  if (report.matched.empty()) throw ImportError(where + ": no backbone tensor matched (wrong variant?)");
  for (auto& [tensor, rec] : plan) copy_into(tensor, a, *rec);
  return report;
}

}  // namespace ceimven
