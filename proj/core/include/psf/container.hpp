#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "psf/error.hpp"

namespace psf {

// Raised for unreadable or corrupted container files. `entry` names the
// failing header key or array manifest entry when there is one.
class CheckpointError : public DataError {
 public:
  CheckpointError(const std::string& what, std::string entry = {})
      : DataError(what), entry_(std::move(entry)) {}
  const std::string& entry() const { return entry_; }

 private:
  std::string entry_;
};

// Key/value header plus named float64 arrays.
//
// On disk: the 8-byte magic "PSFCKPT1", then UTF-8 header lines "key: value",
// one "array: <name> <rows> <cols> <offset> <fnv1a-hex>" line per array, the
// line "end-header", and finally the raw little-endian float64 data of every
// array (column-major) in manifest order. Offsets are relative to the first
// byte after "end-header\n".
class Container {
 public:
  void set(const std::string& key, std::string value);
  void set_double(const std::string& key, double value);  // exact (hex float)
  void set_int(const std::string& key, long long value);

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  long long get_int(const std::string& key) const;

  void add_array(const std::string& name, const Eigen::MatrixXd& values);
  bool has_array(const std::string& name) const;
  const Eigen::MatrixXd& array(const std::string& name) const;

  const std::vector<std::pair<std::string, std::string>>& header() const { return header_; }
  const std::vector<std::pair<std::string, Eigen::MatrixXd>>& arrays() const { return arrays_; }

 private:
  std::vector<std::pair<std::string, std::string>> header_;
  std::vector<std::pair<std::string, Eigen::MatrixXd>> arrays_;
};

inline constexpr char kContainerMagic[9] = "PSFCKPT1";

void write_container(const Container& c, const std::string& path);
Container read_container(const std::string& path);

// Whitespace-joined list helpers for header values.
std::string join(const std::vector<std::string>& items, char sep = ' ');
std::vector<std::string> split_words(const std::string& text);

}  // namespace psf
