#include "psf/container.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "psf/rng.hpp"

namespace psf {

static_assert(std::endian::native == std::endian::little, "container IO assumes a little-endian host");

void Container::set(const std::string& key, std::string value) {
  if (key.empty() || key.find_first_of(": \n") != std::string::npos) {
    throw ConfigError("container: invalid header key '" + key + "'");
  }
  if (value.find('\n') != std::string::npos) throw ConfigError("container: header value contains a newline");
  for (auto& [k, v] : header_) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  header_.emplace_back(key, std::move(value));
}

void Container::set_double(const std::string& key, double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", value);
  set(key, buf);
}

void Container::set_int(const std::string& key, long long value) { set(key, std::to_string(value)); }

bool Container::has(const std::string& key) const {
  for (const auto& [k, v] : header_) {
    if (k == key) return true;
  }
  return false;
}

const std::string& Container::get(const std::string& key) const {
  for (const auto& [k, v] : header_) {
    if (k == key) return v;
  }
  throw CheckpointError("checkpoint header is missing '" + key + "'", key);
}

double Container::get_double(const std::string& key) const {
  const std::string& s = get(key);
  char* end = nullptr;
  const double x = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw CheckpointError("checkpoint header '" + key + "' is not a number", key);
  return x;
}

long long Container::get_int(const std::string& key) const {
  const std::string& s = get(key);
  try {
    std::size_t used = 0;
    const long long x = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return x;
  } catch (const std::exception&) {
    throw CheckpointError("checkpoint header '" + key + "' is not an integer", key);
  }
}

void Container::add_array(const std::string& name, const Eigen::MatrixXd& values) {
  if (name.empty() || name.find_first_of(" \t\n") != std::string::npos) {
    throw ConfigError("container: invalid array name '" + name + "'");
  }
  if (has_array(name)) throw ConfigError("container: duplicate array '" + name + "'");
  arrays_.emplace_back(name, values);
}

bool Container::has_array(const std::string& name) const {
  for (const auto& [n, a] : arrays_) {
    if (n == name) return true;
  }
  return false;
}

const Eigen::MatrixXd& Container::array(const std::string& name) const {
  for (const auto& [n, a] : arrays_) {
    if (n == name) return a;
  }
  throw CheckpointError("checkpoint has no array '" + name + "'", name);
}

namespace {

std::string hex64(std::uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

std::uint64_t checksum(const double* data, std::size_t count) {
  return fnv1a(std::string_view(reinterpret_cast<const char*>(data), count * sizeof(double)));
}

}  // namespace

void write_container(const Container& c, const std::string& path) {
  std::ostringstream head;
  head.write(kContainerMagic, 8);
  for (const auto& [k, v] : c.header()) head << k << ": " << v << '\n';
  std::size_t offset = 0;
  for (const auto& [name, a] : c.arrays()) {
    const auto count = static_cast<std::size_t>(a.size());
    head << "array: " << name << ' ' << a.rows() << ' ' << a.cols() << ' ' << offset << ' '
         << hex64(checksum(a.data(), count)) << '\n';
    offset += count * sizeof(double);
  }
  head << "end-header\n";

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint " + path);
  const std::string h = head.str();
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (const auto& [name, a] : c.arrays()) {
    out.write(reinterpret_cast<const char*>(a.data()), static_cast<std::streamsize>(a.size() * sizeof(double)));
  }
  if (!out) throw CheckpointError("failed writing checkpoint " + path);
}

Container read_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kContainerMagic, 8) != 0) {
    throw CheckpointError(path + ": not a checkpoint (bad magic)");
  }
  struct Entry {
    std::string name;
    long rows;
    long cols;
    std::size_t offset;
    std::string sum;
  };
  Container c;
  std::vector<Entry> entries;
  std::size_t pos = 8;
  bool ended = false;
  while (pos < bytes.size()) {
    const std::size_t nl = bytes.find('\n', pos);
    if (nl == std::string::npos) break;
    const std::string line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    if (line == "end-header") {
      ended = true;
      break;
    }
    const auto colon = line.find(": ");
    if (colon == std::string::npos) throw CheckpointError(path + ": malformed header line '" + line + "'");
    const std::string key = line.substr(0, colon);
    const std::string value = line.substr(colon + 2);
    if (key == "array") {
      std::istringstream ss(value);
      Entry e;
      if (!(ss >> e.name >> e.rows >> e.cols >> e.offset >> e.sum) || e.rows < 0 || e.cols < 0) {
        throw CheckpointError(path + ": malformed array manifest entry '" + value + "'", value);
      }
      entries.push_back(std::move(e));
    } else {
      c.set(key, value);
    }
  }
  if (!ended) throw CheckpointError(path + ": header is not terminated");
  const std::size_t data_start = pos;
  std::size_t expected = 0;
  for (const auto& e : entries) {
    const auto count = static_cast<std::size_t>(e.rows) * static_cast<std::size_t>(e.cols);
    if (e.offset != expected) {
      throw CheckpointError(path + ": array '" + e.name + "' has offset " + std::to_string(e.offset) +
                                ", expected " + std::to_string(expected),
                            e.name);
    }
    const std::size_t nbytes = count * sizeof(double);
    if (data_start + e.offset + nbytes > bytes.size()) {
      throw CheckpointError(path + ": array '" + e.name + "' is truncated", e.name);
    }
    Eigen::MatrixXd a(e.rows, e.cols);
    std::memcpy(a.data(), bytes.data() + data_start + e.offset, nbytes);
    if (hex64(checksum(a.data(), count)) != e.sum) {
      throw CheckpointError(path + ": array '" + e.name + "' failed its checksum", e.name);
    }
    c.add_array(e.name, a);
    expected += nbytes;
  }
  if (data_start + expected != bytes.size()) {
    throw CheckpointError(path + ": " + std::to_string(bytes.size() - data_start - expected) +
                          " trailing bytes after the last array");
  }
  return c;
}

std::string join(const std::vector<std::string>& items, char sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

std::vector<std::string> split_words(const std::string& text) {
  std::istringstream ss(text);
  std::vector<std::string> out;
  for (std::string w; ss >> w;) out.push_back(w);
  return out;
}

}  // namespace psf
