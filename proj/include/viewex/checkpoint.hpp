#pragma once

// Model checkpoint file. All integers little-endian.
//
//   offset  size  field
//   0       8     magic "VIEWEXCK"
//   8       4     u32 format version (1)
//   12      8     u64 byte length S of the schema descriptor
//   20      S     schema descriptor, UTF-8 JSON (see io.hpp)
//   ...     8     u64 tensor count T
//   then T manifest entries:
//           4     u32 name length N
//           N     name bytes
//           8     u64 rows
//           8     u64 cols
//           1     u8 trainable flag
//   then the tensors in manifest order, rows*cols f64 values each, row-major.
//
// Loading rebuilds the tensor layout from the schema, the "meta.config"
// tensor and the shapes of the embedding tables, then requires the manifest to
// match it exactly.

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "viewex/io.hpp"
#include "viewex/model.hpp"

namespace viewex {

inline constexpr char kCheckpointMagic[8] = {'V', 'I', 'E', 'W', 'E', 'X', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in, const std::string& what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) fail(ErrorKind::ParseError, "checkpoint truncated in " + what);
  return v;
}

inline std::string get_bytes(std::istream& in, std::uint64_t n, const std::string& what) {
  if (n > (1ULL << 32)) fail(ErrorKind::ParseError, "checkpoint field too large: " + what);
  std::string s(n, '\0');
  if (n && !in.read(s.data(), static_cast<std::streamsize>(n)))
    fail(ErrorKind::ParseError, "checkpoint truncated in " + what);
  return s;
}

}  // namespace detail

inline void save_checkpoint(const GnnModel& model, std::ostream& out) {
  out.write(kCheckpointMagic, 8);
  detail::put<std::uint32_t>(out, kCheckpointVersion);
  const auto schema = schema_to_json(model.schema()).dump();
  detail::put<std::uint64_t>(out, schema.size());
  out.write(schema.data(), static_cast<std::streamsize>(schema.size()));
  const auto& P = model.params();
  detail::put<std::uint64_t>(out, P.tensors().size());
  for (const auto& t : P.tensors()) {
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    detail::put<std::uint64_t>(out, t.rows);
    detail::put<std::uint64_t>(out, t.cols);
    detail::put<std::uint8_t>(out, t.trainable ? 1 : 0);
  }
  out.write(reinterpret_cast<const char*>(P.data().data()), static_cast<std::streamsize>(P.size() * sizeof(double)));
}

inline GnnModel load_checkpoint(std::istream& in) {
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    fail(ErrorKind::ParseError, "not a model checkpoint");
  const auto version = detail::get<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion)
    fail(ErrorKind::ParseError, "unsupported checkpoint version " + std::to_string(version));
  const auto schema_text = detail::get_bytes(in, detail::get<std::uint64_t>(in, "schema length"), "schema");
  DatabaseSchema schema = [&] {
    try {
      return schema_from_json(Json::parse(schema_text));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::ParseError, std::string("checkpoint schema: ") + e.what());
    }
  }();

  struct Entry {
    std::string name;
    std::uint64_t rows, cols;
    bool trainable;
  };
  const auto count = detail::get<std::uint64_t>(in, "tensor count");
  if (count > 1'000'000) fail(ErrorKind::ParseError, "implausible tensor count");
  std::vector<Entry> manifest;
  std::uint64_t total = 0;
  for (std::uint64_t i = 0; i < count; ++i) {
    Entry e;
    e.name = detail::get_bytes(in, detail::get<std::uint32_t>(in, "manifest"), "manifest");
    e.rows = detail::get<std::uint64_t>(in, "manifest");
    e.cols = detail::get<std::uint64_t>(in, "manifest");
    e.trainable = detail::get<std::uint8_t>(in, "manifest") != 0;
    total += e.rows * e.cols;
    manifest.push_back(std::move(e));
  }
  if (total > (1ULL << 31)) fail(ErrorKind::ParseError, "implausible checkpoint size");
  std::vector<double> data(total);
  if (total && !in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(total * sizeof(double))))
    fail(ErrorKind::ParseError, "checkpoint truncated in tensor data");

  auto find = [&](const std::string& name) -> std::pair<const Entry*, std::uint64_t> {
    std::uint64_t off = 0;
    for (const auto& e : manifest) {
      if (e.name == name) return {&e, off};
      off += e.rows * e.cols;
    }
    fail(ErrorKind::ParseError, "checkpoint lacks tensor " + name);
  };

  auto [meta, meta_off] = find("meta.config");
  if (meta->rows * meta->cols != 4) fail(ErrorKind::ParseError, "malformed meta.config");
  ModelConfig cfg;
  cfg.attr_dim = static_cast<std::size_t>(data[meta_off + 0]);
  cfg.rel_dim = static_cast<std::size_t>(data[meta_off + 1]);
  cfg.hidden_dim = static_cast<std::size_t>(data[meta_off + 2]);
  cfg.layers = static_cast<std::size_t>(data[meta_off + 3]);

  FeatureStats stats;
  for (std::size_t r = 0; r < schema.relation_count(); ++r) {
    stats.vocab.emplace_back();
    stats.moments.emplace_back();
    for (auto c : schema.feature_columns(r)) {
      const auto prefix = "enc." + schema.relation(r).name + "." + schema.relation(r).attributes[c].name;
      if (schema.relation(r).attributes[c].kind == AttrKind::Categorical) {
        auto [e, off] = find(prefix + ".table");
        if (e->rows == 0) fail(ErrorKind::ParseError, "empty embedding table " + e->name);
        stats.vocab.back().push_back(e->rows - 1);
        stats.moments.back().emplace_back(0.0, 0.0);
      } else {
        stats.vocab.back().push_back(0);
        stats.moments.back().emplace_back(0.0, 0.0);
      }
    }
  }

  GnnModel model(std::move(schema), stats, cfg, 0);
  auto& P = model.params();
  if (P.tensors().size() != manifest.size()) fail(ErrorKind::ParseError, "checkpoint manifest does not match model layout");
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const auto& t = P.info(i);
    const auto& e = manifest[i];
    if (t.name != e.name || t.rows != e.rows || t.cols != e.cols || t.trainable != e.trainable)
      fail(ErrorKind::ParseError, "checkpoint tensor " + e.name + " does not match model layout");
  }
  P.data() = std::move(data);
  return model;
}

inline void save_checkpoint(const GnnModel& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::NotFound, "cannot write " + path.string());
  save_checkpoint(model, static_cast<std::ostream&>(out));
}

inline GnnModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::NotFound, "cannot open " + path.string());
  return load_checkpoint(static_cast<std::istream&>(in));
}

}  // namespace viewex
