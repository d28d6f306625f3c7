// Copyright 2026 The unigait Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "unigait/store.h"

#include <algorithm>
#include <bit>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <utility>

#include "unigait/denoiser.h"
#include "unigait/error.h"
#include "unigait/hash.h"

namespace unigait {
namespace {

constexpr char kDatasetMagic[4] = {'M', 'L', 'D', 'S'};
constexpr char kCheckpointMagic[4] = {'M', 'L', 'C', 'K'};

void PutU32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t GetU32(std::span<const std::uint8_t> b, size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
  return v;
}

void PutFloats(Bytes& out, std::span<const float> values) {
  for (float f : values) PutU32(out, std::bit_cast<std::uint32_t>(f));
}

std::string HexDigest(std::uint64_t h) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

// Floats written so far as a payload; hashed over its LE bytes.
class PayloadWriter {
 public:
  void Append(std::span<const float> values) { PutFloats(bytes_, values); }
  size_t floats() const { return bytes_.size() / 4; }
  const Bytes& bytes() const { return bytes_; }

 private:
  Bytes bytes_;
};

Bytes Frame(const char magic[4], std::uint32_t version, nlohmann::json header,
            const Bytes& payload) {
  header["payload_bytes"] = payload.size();
  header["payload_fnv1a64"] = HexDigest(Fnv1a64Hash(payload.data(), payload.size()));
  std::string text = header.dump();
  Bytes out(magic, magic + 4);
  PutU32(out, version);
  PutU32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

struct Unframed {
  nlohmann::json header;
  std::span<const std::uint8_t> payload;
};

Unframed Unframe(std::span<const std::uint8_t> bytes, const char magic[4],
                 std::uint32_t version, const char* what) {
  const std::string label(what);
  if (bytes.size() < 12) throw FormatError(label + ": file truncated before header");
  if (std::memcmp(bytes.data(), magic, 4) != 0) {
    throw FormatError(label + ": bad magic, expected '" + std::string(magic, 4) + "'");
  }
  std::uint32_t v = GetU32(bytes, 4);
  if (v != version) {
    throw FormatError(label + ": unsupported version " + std::to_string(v) +
                      " (expected " + std::to_string(version) + ")");
  }
  std::uint32_t header_len = GetU32(bytes, 8);
  if (bytes.size() < 12 + static_cast<size_t>(header_len)) {
    throw FormatError(label + ": file truncated inside header");
  }
  Unframed u;
  try {
    u.header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(label + ": header is not valid JSON: " + e.what());
  }
  u.payload = bytes.subspan(12 + header_len);
  size_t declared = 0;
  std::string digest;
  try {
    declared = u.header.at("payload_bytes").get<size_t>();
    digest = u.header.at("payload_fnv1a64").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(label + ": header missing payload fields: " + e.what());
  }
  if (u.payload.size() < declared) {
    throw FormatError(label + ": payload truncated (" + std::to_string(u.payload.size()) +
                      " of " + std::to_string(declared) + " bytes)");
  }
  if (u.payload.size() > declared) {
    throw FormatError(label + ": " + std::to_string(u.payload.size() - declared) +
                      " trailing bytes after payload");
  }
  if (declared % 4 != 0) throw FormatError(label + ": payload is not whole floats");
  if (HexDigest(Fnv1a64Hash(u.payload.data(), u.payload.size())) != digest) {
    throw FormatError(label + ": payload hash mismatch");
  }
  return u;
}

std::vector<float> ReadFloats(std::span<const std::uint8_t> payload, size_t offset_floats,
                              size_t count) {
  std::vector<float> out(count);
  for (size_t i = 0; i < count; ++i) {
    out[i] = std::bit_cast<float>(GetU32(payload, 4 * (offset_floats + i)));
  }
  return out;
}

template <typename T>
T HeaderField(const nlohmann::json& header, const char* key, const char* what) {
  try {
    return header.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string(what) + ": bad header field '" + key + "': " + e.what());
  }
}

}  // namespace

Bytes ReadFileBytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void WriteFileBytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Write beside the target and rename so readers never see a partial file.
  std::filesystem::path tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InputError("short write to '" + path.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

Bytes EncodeDataset(const UnifiedDataset& ds) {
  ds.Validate();
  const size_t n = ds.samples.size();
  const size_t obs_len = static_cast<size_t>(ds.obs_horizon) * ds.dims.obs_dim;
  const size_t act_len = static_cast<size_t>(ds.pred_horizon) * ds.dims.action_dim;
  PayloadWriter w;
  for (const auto& s : ds.samples) w.Append(s.obs_window);
  for (const auto& s : ds.samples) w.Append(s.action_chunk);
  for (const auto& s : ds.samples) w.Append(s.command);
  for (const auto& s : ds.samples) w.Append(ds.mask(s.embodiment_id).values());
  for (const auto& s : ds.samples) {
    float id = static_cast<float>(s.embodiment_id);
    w.Append(std::span<const float>(&id, 1));
  }
  std::map<int, size_t> counts;
  for (const auto& spec : ds.specs) counts[spec.id] = 0;
  for (const auto& s : ds.samples) ++counts[s.embodiment_id];
  nlohmann::json count_json = nlohmann::json::object();
  for (const auto& [id, c] : counts) count_json[std::to_string(id)] = c;

  nlohmann::json header = {
      {"specs", ds.specs},
      {"dims", {{"obs", ds.dims.obs_dim}, {"action", ds.dims.action_dim}}},
      {"obs_horizon", ds.obs_horizon},
      {"pred_horizon", ds.pred_horizon},
      {"command_dim", ds.command_dim},
      {"stats", ds.stats},
      {"num_samples", n},
      {"counts", count_json},
      {"seed", ds.seed},
      {"metadata", ds.metadata},
      {"arrays",
       {{{"name", "obs_windows"}, {"floats", n * obs_len}},
        {{"name", "action_chunks"}, {"floats", n * act_len}},
        {{"name", "commands"}, {"floats", n * ds.command_dim}},
        {{"name", "masks"}, {"floats", n * ds.dims.action_dim}},
        {{"name", "embodiment_ids"}, {"floats", n}}}},
  };
  return Frame(kDatasetMagic, kDatasetVersion, std::move(header), w.bytes());
}

UnifiedDataset DecodeDataset(std::span<const std::uint8_t> bytes) {
  constexpr const char* kWhat = "dataset";
  Unframed u = Unframe(bytes, kDatasetMagic, kDatasetVersion, kWhat);
  const nlohmann::json& h = u.header;
  UnifiedDataset ds;
  try {
    ds.specs = h.at("specs").get<std::vector<EmbodimentSpec>>();
    ds.dims.obs_dim = h.at("dims").at("obs").get<int>();
    ds.dims.action_dim = h.at("dims").at("action").get<int>();
    ds.stats = h.at("stats").get<NormStats>();
    ds.metadata = h.at("metadata");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string(kWhat) + ": bad header: " + e.what());
  }
  ds.obs_horizon = HeaderField<int>(h, "obs_horizon", kWhat);
  ds.pred_horizon = HeaderField<int>(h, "pred_horizon", kWhat);
  ds.command_dim = HeaderField<int>(h, "command_dim", kWhat);
  ds.seed = HeaderField<std::uint64_t>(h, "seed", kWhat);
  const size_t n = HeaderField<size_t>(h, "num_samples", kWhat);
  const size_t obs_len = static_cast<size_t>(ds.obs_horizon) * ds.dims.obs_dim;
  const size_t act_len = static_cast<size_t>(ds.pred_horizon) * ds.dims.action_dim;
  const size_t per_sample = obs_len + act_len + ds.command_dim + ds.dims.action_dim + 1;
  if (u.payload.size() != 4 * n * per_sample) {
    throw FormatError(std::string(kWhat) + ": payload holds " +
                      std::to_string(u.payload.size()) + " bytes, header implies " +
                      std::to_string(4 * n * per_sample));
  }
  const size_t obs_at = 0, act_at = n * obs_len, cmd_at = act_at + n * act_len;
  const size_t mask_at = cmd_at + n * ds.command_dim;
  const size_t id_at = mask_at + n * ds.dims.action_dim;
  auto ids = ReadFloats(u.payload, id_at, n);
  ds.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    UnifiedSample& s = ds.samples[i];
    s.obs_window = ReadFloats(u.payload, obs_at + i * obs_len, obs_len);
    s.action_chunk = ReadFloats(u.payload, act_at + i * act_len, act_len);
    s.command = ReadFloats(u.payload, cmd_at + i * ds.command_dim, ds.command_dim);
    s.embodiment_id = static_cast<int>(ids[i]);
    if (static_cast<float>(s.embodiment_id) != ids[i]) {
      throw FormatError(std::string(kWhat) + ": non-integer embodiment id");
    }
  }
  try {
    ds.Validate();
  } catch (const InputError& e) {
    throw FormatError(std::string(kWhat) + ": " + e.what());
  }
  // Stored masks must agree with the specs they are derived from.
  for (size_t i = 0; i < n; ++i) {
    auto stored = ReadFloats(u.payload, mask_at + i * ds.dims.action_dim, ds.dims.action_dim);
    ValidityMask mask = ds.mask(ds.samples[i].embodiment_id);
    auto expected = mask.values();
    if (!std::equal(stored.begin(), stored.end(), expected.begin(), expected.end())) {
      throw FormatError(std::string(kWhat) + ": mask of sample " + std::to_string(i) +
                        " disagrees with its embodiment spec");
    }
  }
  return ds;
}

void WriteDataset(const UnifiedDataset& dataset, const std::filesystem::path& path) {
  WriteFileBytes(path, EncodeDataset(dataset));
}

UnifiedDataset ReadDataset(const std::filesystem::path& path) {
  Bytes b = ReadFileBytes(path);
  try {
    return DecodeDataset(b);
  } catch (const FormatError& e) {
    throw FormatError("'" + path.string() + "': " + e.what());
  }
}

std::string CheckpointKindName(CheckpointKind kind) {
  return kind == CheckpointKind::kDiffusion ? "diffusion" : "residual";
}

const Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.value;
  }
  throw FormatError("checkpoint has no tensor '" + name + "'");
}

Bytes EncodeCheckpoint(const Checkpoint& ck) {
  PayloadWriter w;
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& t : ck.tensors) {
    manifest.push_back({{"name", t.name},
                        {"shape", {t.value.rows(), t.value.cols()}},
                        {"offset", w.floats() * 4},
                        {"bytes", t.value.size() * 4}});
    w.Append(t.value.span());
  }
  nlohmann::json header = {
      {"kind", CheckpointKindName(ck.kind)},
      {"config", ck.config},
      {"stats", ck.stats},
      {"seed", ck.seed},
      {"manifest", manifest},
  };
  return Frame(kCheckpointMagic, kCheckpointVersion, std::move(header), w.bytes());
}

Checkpoint DecodeCheckpoint(std::span<const std::uint8_t> bytes, CheckpointKind expected) {
  constexpr const char* kWhat = "checkpoint";
  Unframed u = Unframe(bytes, kCheckpointMagic, kCheckpointVersion, kWhat);
  const nlohmann::json& h = u.header;
  Checkpoint ck;
  std::string kind = HeaderField<std::string>(h, "kind", kWhat);
  if (kind != CheckpointKindName(expected)) {
    throw FormatError(std::string(kWhat) + ": kind mismatch, file holds '" + kind +
                      "' but '" + CheckpointKindName(expected) + "' was expected");
  }
  ck.kind = expected;
  ck.seed = HeaderField<std::uint64_t>(h, "seed", kWhat);
  try {
    ck.config = h.at("config");
    ck.stats = h.at("stats").get<NormStats>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string(kWhat) + ": bad header: " + e.what());
  }
  auto manifest = HeaderField<nlohmann::json>(h, "manifest", kWhat);
  size_t cursor = 0;
  for (const auto& m : manifest) {
    std::string name;
    int rows = 0, cols = 0;
    size_t offset = 0, nbytes = 0;
    try {
      name = m.at("name").get<std::string>();
      rows = m.at("shape").at(0).get<int>();
      cols = m.at("shape").at(1).get<int>();
      offset = m.at("offset").get<size_t>();
      nbytes = m.at("bytes").get<size_t>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string(kWhat) + ": bad manifest entry: " + e.what());
    }
    if (rows < 0 || cols < 0 || nbytes != static_cast<size_t>(rows) * cols * 4) {
      throw FormatError(std::string(kWhat) + ": tensor '" + name +
                        "' size disagrees with its shape");
    }
    if (offset > cursor) {
      throw FormatError(std::string(kWhat) + ": manifest gap before '" + name + "' (" +
                        std::to_string(offset - cursor) + " unaccounted bytes)");
    }
    if (offset < cursor) {
      throw FormatError(std::string(kWhat) + ": tensor '" + name + "' overlaps its predecessor");
    }
    cursor = offset + nbytes;
    if (cursor > u.payload.size()) {
      throw FormatError(std::string(kWhat) + ": tensor '" + name + "' runs past the payload");
    }
    ck.tensors.push_back(
        {name, Tensor(rows, cols, ReadFloats(u.payload, offset / 4, nbytes / 4))});
  }
  if (cursor != u.payload.size()) {
    throw FormatError(std::string(kWhat) + ": manifest gap, " +
                      std::to_string(u.payload.size() - cursor) +
                      " payload bytes not covered by any tensor");
  }
  return ck;
}

void WriteCheckpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  WriteFileBytes(path, EncodeCheckpoint(checkpoint));
}

Checkpoint ReadCheckpoint(const std::filesystem::path& path, CheckpointKind expected) {
  Bytes b = ReadFileBytes(path);
  try {
    return DecodeCheckpoint(b, expected);
  } catch (const FormatError& e) {
    throw FormatError("'" + path.string() + "': " + e.what());
  }
}

Checkpoint DiffusionCheckpoint(const DiffusionModel& model) {
  Checkpoint ck;
  ck.kind = CheckpointKind::kDiffusion;
  ck.config = {
      {"denoiser", model.denoiser},
      {"edm", model.edm},
      {"train", model.train},
      {"specs", model.specs},
      {"dims", {{"obs", model.dims.obs_dim}, {"action", model.dims.action_dim}}},
      {"obs_horizon", model.obs_horizon},
      {"pred_horizon", model.pred_horizon},
      {"command_dim", model.command_dim},
  };
  ck.stats = model.stats;
  ck.seed = model.seed;
  for (const auto& p : model.params.entries()) ck.tensors.push_back({p.name, p.value});
  ck.tensors.push_back({"buffer/fourier_bank", model.fourier_bank});
  return ck;
}

DiffusionModel DiffusionFromCheckpoint(const Checkpoint& ck) {
  if (ck.kind != CheckpointKind::kDiffusion) {
    throw FormatError("checkpoint kind mismatch: expected diffusion");
  }
  DiffusionModel m;
  try {
    const auto& c = ck.config;
    m.denoiser = c.at("denoiser").get<DenoiserConfig>();
    m.edm = c.at("edm").get<EdmConfig>();
    m.train = c.at("train").get<DiffusionTrainConfig>();
    m.specs = c.at("specs").get<std::vector<EmbodimentSpec>>();
    m.dims.obs_dim = c.at("dims").at("obs").get<int>();
    m.dims.action_dim = c.at("dims").at("action").get<int>();
    m.obs_horizon = c.at("obs_horizon").get<int>();
    m.pred_horizon = c.at("pred_horizon").get<int>();
    m.command_dim = c.at("command_dim").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("diffusion checkpoint: bad config echo: ") + e.what());
  }
  m.stats = ck.stats;
  m.seed = ck.seed;
  // Rebuild the layout and require the stored tensors to match it exactly.
  DenoiserNet net(m.denoiser);
  ParamSet layout = net.InitParams();
  if (ck.tensors.size() != layout.size() + 1) {
    throw FormatError("diffusion checkpoint: expected " + std::to_string(layout.size() + 1) +
                      " tensors, found " + std::to_string(ck.tensors.size()));
  }
  for (size_t i = 0; i < layout.size(); ++i) {
    const auto& want = layout.entries()[i];
    const auto& got = ck.tensors[i];
    if (got.name != want.name || !got.value.SameShape(want.value)) {
      throw FormatError("diffusion checkpoint: tensor " + std::to_string(i) + " is '" +
                        got.name + "' " + got.value.ShapeString() + ", expected '" +
                        want.name + "' " + want.value.ShapeString());
    }
    m.params.Add(got.name, got.value);
  }
  const auto& bank = ck.tensors.back();
  if (bank.name != "buffer/fourier_bank" || !bank.value.SameShape(net.fourier_bank())) {
    throw FormatError("diffusion checkpoint: missing or misshapen fourier bank");
  }
  m.fourier_bank = bank.value;
  return m;
}

}  // namespace unigait
