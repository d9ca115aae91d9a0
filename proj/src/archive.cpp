#include "semrom/archive.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "semrom/error.hpp"
#include "semrom/pod.hpp"

namespace semrom {

namespace {

constexpr const char* kMagic = "SEMROM-ARCHIVE 1";

std::uint64_t swap_bytes(std::uint64_t v) {
  std::uint64_t r = 0;
  for (int i = 0; i < 8; ++i) r = (r << 8) | ((v >> (8 * i)) & 0xff);
  return r;
}

// Payload bytes are little-endian whatever the host is.
void put_doubles(std::string& out, const double* p, std::size_t n) {
  const std::size_t at = out.size();
  out.resize(at + n * 8);
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(out.data() + at, p, n * 8);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      std::uint64_t v;
      std::memcpy(&v, p + i, 8);
      v = swap_bytes(v);
      std::memcpy(out.data() + at + 8 * i, &v, 8);
    }
  }
}

void get_doubles(const char* in, double* p, std::size_t n) {
  std::memcpy(p, in, n * 8);
  if constexpr (std::endian::native != std::endian::little) {
    for (std::size_t i = 0; i < n; ++i) {
      std::uint64_t v;
      std::memcpy(&v, p + i, 8);
      v = swap_bytes(v);
      std::memcpy(p + i, &v, 8);
    }
  }
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t unhex(const std::string& s, const std::string& what) {
  if (s.size() != 16 || s.find_first_not_of("0123456789abcdef") != std::string::npos) {
    throw StructuralError("archive header: bad " + what + " '" + s + "'");
  }
  return std::stoull(s, nullptr, 16);
}

}  // namespace

bool Archive::has(const std::string& name) const {
  for (const auto& [n, m] : matrices) {
    if (n == name) return true;
  }
  return false;
}

const Eigen::MatrixXd& Archive::matrix(const std::string& name) const {
  for (const auto& [n, m] : matrices) {
    if (n == name) return m;
  }
  throw StructuralError("archive (" + kind + ") has no matrix '" + name + "'");
}

void write_text_atomic(const std::string& path, const std::string& text) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + tmp.string() + "' for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.flush();
    if (!out) {
      out.close();
      fs::remove(tmp);
      throw Error("write to '" + tmp.string() + "' failed");
    }
  }
  fs::rename(tmp, target);
}

void write_archive(const std::string& path, const Archive& a) {
  nlohmann::json header;
  header["kind"] = a.kind;
  header["signature"] = hex(a.signature);
  header["level"] = a.level;
  header["layout"] = a.layout;
  header["axis"] = a.axis;
  header["axis_values"] = a.axis_values;
  header["attributes"] = a.attributes;
  nlohmann::json list = nlohmann::json::array();
  std::string payload;
  for (const auto& [name, m] : a.matrices) {
    if (name.empty()) throw InvalidArgument("archive matrix needs a name");
    list.push_back({{"name", name},
                    {"rows", m.rows()},
                    {"cols", m.cols()},
                    {"checksum", hex(matrix_checksum(m))}});
    put_doubles(payload, m.data(), static_cast<std::size_t>(m.size()));
  }
  header["matrices"] = list;
  header["payload_bytes"] = payload.size();

  std::string text = std::string(kMagic) + "\n" + header.dump() + "\n";
  text += payload;
  write_text_atomic(path, text);
}

Archive read_archive(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open archive '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string bytes = buf.str();

  const auto first = bytes.find('\n');
  if (first == std::string::npos || bytes.compare(0, first, kMagic) != 0) {
    throw StructuralError("'" + path + "' is not a semrom archive");
  }
  const auto second = bytes.find('\n', first + 1);
  if (second == std::string::npos) throw StructuralError("'" + path + "': truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(first + 1, second - first - 1));
  } catch (const nlohmann::json::exception& e) {
    throw StructuralError("'" + path + "': unreadable header: " + e.what());
  }

  Archive a;
  try {
    a.kind = header.at("kind").get<std::string>();
    a.signature = unhex(header.at("signature").get<std::string>(), "signature");
    a.level = header.at("level").get<std::string>();
    a.layout = header.at("layout").get<std::vector<std::string>>();
    a.axis = header.at("axis").get<std::string>();
    a.axis_values = header.at("axis_values").get<std::vector<double>>();
    a.attributes = header.at("attributes");

    const std::size_t payload = bytes.size() - second - 1;
    std::size_t expected = 0;
    for (const auto& entry : header.at("matrices")) {
      const auto rows = entry.at("rows").get<std::int64_t>();
      const auto cols = entry.at("cols").get<std::int64_t>();
      if (rows < 0 || cols < 0) throw StructuralError("'" + path + "': negative dimensions");
      expected += static_cast<std::size_t>(rows * cols) * 8;
    }
    if (header.at("payload_bytes").get<std::size_t>() != payload || expected != payload) {
      throw StructuralError("'" + path + "': header describes " + std::to_string(expected) +
                            " payload bytes but the file holds " + std::to_string(payload));
    }

    const char* cursor = bytes.data() + second + 1;
    for (const auto& entry : header.at("matrices")) {
      const std::string name = entry.at("name").get<std::string>();
      Eigen::MatrixXd m(entry.at("rows").get<Eigen::Index>(), entry.at("cols").get<Eigen::Index>());
      get_doubles(cursor, m.data(), static_cast<std::size_t>(m.size()));
      cursor += m.size() * 8;
      if (matrix_checksum(m) != unhex(entry.at("checksum").get<std::string>(), "checksum")) {
        throw StructuralError("'" + path + "': checksum mismatch in matrix '" + name + "'");
      }
      a.add(name, std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw StructuralError("'" + path + "': malformed header: " + e.what());
  }
  return a;
}

}  // namespace semrom
