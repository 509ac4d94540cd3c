#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace carrygap {

// ---------------------------------------------------------------------------
// number <-> text
// ---------------------------------------------------------------------------

// Shortest round-trip representation. All numeric output goes through this so
// that artifacts are byte-stable across runs and worker counts.
inline std::string fmt_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline bool try_parse_double(std::string_view s, double& out) {
  const char* b = s.data();
  const char* e = s.data() + s.size();
  auto res = std::from_chars(b, e, out);
  return res.ec == std::errc() && res.ptr == e && !s.empty();
}

inline double parse_double(std::string_view s, const char* what = "number") {
  double v;
  if (!try_parse_double(s, v))
    throw std::runtime_error(std::string("bad ") + what + ": '" + std::string(s) + "'");
  return v;
}

inline long parse_long(std::string_view s, const char* what = "integer") {
  long v;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty())
    throw std::runtime_error(std::string("bad ") + what + ": '" + std::string(s) + "'");
  return v;
}

// ---------------------------------------------------------------------------
// reading
// ---------------------------------------------------------------------------

inline void split_fields(std::string_view line, std::vector<std::string_view>& out) {
  out.clear();
  size_t start = 0;
  while (true) {
    const size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

// Line-oriented CSV reader. No quoting: none of the schemas need it.
class CsvReader {
 public:
  CsvReader(const std::string& path, std::string_view expected_header)
      : path_(path), in_(path) {
    if (!in_) throw std::runtime_error("cannot open " + path);
    std::string header;
    if (!std::getline(in_, header))
      throw std::runtime_error(path + ": empty file (missing header)");
    strip_cr(header);
    if (header != expected_header)
      throw std::runtime_error(path + ": unexpected header '" + header + "' (want '" +
                               std::string(expected_header) + "')");
    n_cols_ = size_t(std::count(expected_header.begin(), expected_header.end(), ',')) + 1;
  }

  // Returns false at EOF. Blank lines are skipped. Wrong field count throws.
  bool next(std::vector<std::string_view>& fields) {
    while (std::getline(in_, line_)) {
      ++line_no_;
      strip_cr(line_);
      if (line_.empty()) continue;
      split_fields(line_, fields);
      if (fields.size() != n_cols_)
        throw std::runtime_error(path_ + ":" + std::to_string(line_no_ + 1) +
                                 ": expected " + std::to_string(n_cols_) + " fields, got " +
                                 std::to_string(fields.size()));
      return true;
    }
    return false;
  }

  long line_no() const { return line_no_; }

 private:
  static void strip_cr(std::string& s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
  }
  std::string path_;
  std::ifstream in_;
  std::string line_;
  long line_no_ = 0;  // data lines read so far
  size_t n_cols_ = 0;
};

// ---------------------------------------------------------------------------
// writing
// ---------------------------------------------------------------------------

// Writes to "<path>.partial" and renames into place on commit(). A crashed or
// failed stage therefore leaves a .partial marker, never a truncated artifact.
class OutputFile {
 public:
  explicit OutputFile(std::string path)
      : path_(std::move(path)), tmp_(path_ + ".partial"), out_(tmp_, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot open " + tmp_ + " for writing");
  }

  ~OutputFile() {
    if (!committed_) {
      out_.close();  // leave the .partial behind as the failure marker
    }
  }

  std::ostream& stream() { return out_; }

  void write_line(std::string_view s) {
    out_.write(s.data(), std::streamsize(s.size()));
    out_.put('\n');
  }

  void commit() {
    out_.flush();
    if (!out_) throw std::runtime_error("write failed: " + tmp_);
    out_.close();
    std::error_code ec;
    std::filesystem::rename(tmp_, path_, ec);
    if (ec) throw std::runtime_error("rename " + tmp_ + " -> " + path_ + ": " + ec.message());
    committed_ = true;
  }

  const std::string& path() const { return path_; }

 private:
  std::string path_, tmp_;
  std::ofstream out_;
  bool committed_ = false;
};

// Row assembly helper: join pre-formatted cells with commas.
inline std::string join_row(const std::vector<std::string>& cells) {
  std::string row;
  for (size_t i = 0; i < cells.size(); ++i) {
    if (i) row += ',';
    row += cells[i];
  }
  return row;
}

// FNV-1a 64-bit, used for artifact hashes in the run manifest.
inline std::uint64_t fnv1a64(const void* data, size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path + " for hashing");
  char buf[1 << 16];
  std::uint64_t h = 0xcbf29ce484222325ULL;
  while (in) {
    in.read(buf, sizeof(buf));
    h = fnv1a64(buf, size_t(in.gcount()), h);
  }
  return h;
}

inline std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace carrygap
