// SPDX-License-Identifier: Apache-2.0
#include "refl/io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "refl/error.hpp"

namespace refl {

namespace fs = std::filesystem;

namespace {
constexpr char kMagic[8] = {'R', 'E', 'F', 'L', 'A', 'R', 'C', '1'};

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
}  // namespace

const nn::Tensor& Archive::array(const std::string& name) const {
  for (const auto& [n, t] : arrays)
    if (n == name) return t;
  fail(ErrorCode::kNotFound, "archive has no array named " + name);
}

void save_archive(const Archive& archive, const fs::path& path) {
  Json header;
  header["metadata"] = archive.metadata;
  header["arrays"] = Json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : archive.arrays) {
    header["arrays"].push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.size() * sizeof(double);
  }
  const std::string h = header.dump();
  if (path.has_parent_path()) ensure_directory(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) fail(ErrorCode::kIo, "cannot open " + tmp.string() + " for writing");
    os.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(os, kArchiveFormatVersion);
    put<std::uint64_t>(os, h.size());
    os.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (const auto& [name, t] : archive.arrays)
      os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!os) fail(ErrorCode::kIo, "short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

Archive load_archive(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::kIo, "cannot open archive " + path.string());
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof magic) != 0) fail(ErrorCode::kIo, path.string() + " is not a refl archive");
  const auto version = get<std::uint32_t>(is);
  if (version != kArchiveFormatVersion)
    fail(ErrorCode::kIo, "unsupported archive format version " + std::to_string(version));
  const auto hlen = get<std::uint64_t>(is);
  std::string h(hlen, '\0');
  is.read(h.data(), static_cast<std::streamsize>(hlen));
  if (!is) fail(ErrorCode::kIo, "truncated archive header in " + path.string());
  const Json header = Json::parse(h);
  Archive a;
  a.metadata = header.at("metadata");
  const auto base = is.tellg();
  for (const auto& entry : header.at("arrays")) {
    nn::Tensor t(entry.at("shape").get<nn::Shape>());
    is.seekg(base + static_cast<std::streamoff>(entry.at("offset").get<std::uint64_t>()));
    is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!is) fail(ErrorCode::kIo, "truncated array " + entry.at("name").get<std::string>());
    a.arrays.emplace_back(entry.at("name").get<std::string>(), std::move(t));
  }
  return a;
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) fail(ErrorCode::kIo, "cannot create directory " + dir.string());
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) ensure_directory(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) fail(ErrorCode::kIo, "cannot open " + tmp.string() + " for writing");
    os << text;
    if (!os) fail(ErrorCode::kIo, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::kIo, "cannot move " + tmp.string() + " into place: " + ec.message());
}

std::string read_text_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::kIo, "cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<Json> read_jsonl(const fs::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::kIo, "cannot read " + path.string());
  std::vector<Json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(Json::parse(line));
    } catch (const Json::parse_error& e) {
      fail(ErrorCode::kIo, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_jsonl(const fs::path& path, const std::vector<Json>& records) {
  std::string text;
  for (const auto& r : records) {
    text += r.dump();
    text += '\n';
  }
  write_text_file(path, text);
}

Json read_json_file(const fs::path& path) {
  try {
    return Json::parse(read_text_file(path));
  } catch (const Json::parse_error& e) {
    fail(ErrorCode::kConfig, path.string() + ": " + e.what());
  }
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t fnv1a(const std::string& bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t file_hash(const fs::path& path) { return fnv1a(read_text_file(path)); }

}  // namespace refl
