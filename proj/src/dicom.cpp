/* Copyright 2026 The ct2ctpa Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "ct2ctpa/dicom.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "ct2ctpa/error.hpp"

namespace ct2ctpa::dicom {
namespace {

constexpr std::uint32_t kUndefinedLength = 0xFFFFFFFFu;

constexpr std::uint32_t tag_of(std::uint16_t group, std::uint16_t element) {
  return (static_cast<std::uint32_t>(group) << 16) | element;
}

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& buf, std::string path)
      : buf_(buf), path_(std::move(path)) {}

  bool at_end() const { return pos_ >= buf_.size(); }
  std::size_t pos() const { return pos_; }
  void seek(std::size_t p) { pos_ = p; }

  std::uint16_t u16() {
    need(2);
    const std::uint16_t v = static_cast<std::uint16_t>(buf_[pos_] | (buf_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | buf_[pos_ + i];
    pos_ += 4;
    return v;
  }
  std::string bytes_str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::vector<std::uint8_t> bytes(std::size_t n) {
    need(n);
    std::vector<std::uint8_t> v(buf_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                buf_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return v;
  }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw IoError("DICOM parse error (" + what + ") at offset " + std::to_string(pos_), path_);
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) fail("unexpected end of file");
  }

  const std::vector<std::uint8_t>& buf_;
  std::string path_;
  std::size_t pos_ = 0;
};

bool long_length_vr(const std::string& vr) {
  static const char* kLong[] = {"OB", "OW", "OF", "SQ", "UT", "UN", "OD", "OL", "UC", "UR", "OV", "SV", "UV"};
  for (const char* v : kLong) {
    if (vr == v) return true;
  }
  return false;
}

struct Element {
  std::uint32_t tag = 0;
  std::string vr;
  std::uint32_t length = 0;
};

Element read_header(Reader& r, bool explicit_vr) {
  Element e;
  const std::uint16_t group = r.u16();
  const std::uint16_t element = r.u16();
  e.tag = tag_of(group, element);
  // Item and delimiter tags never carry a VR.
  if (group == 0xFFFE) {
    e.length = r.u32();
    return e;
  }
  if (explicit_vr) {
    e.vr = r.bytes_str(2);
    if (long_length_vr(e.vr)) {
      r.skip(2);
      e.length = r.u32();
    } else {
      e.length = r.u16();
    }
  } else {
    e.length = r.u32();
  }
  return e;
}

void skip_undefined(Reader& r, bool explicit_vr);

// Skips items of a sequence (or encapsulated fragments) up to the sequence
// delimiter.
void skip_sequence_items(Reader& r, bool explicit_vr) {
  while (true) {
    const Element item = read_header(r, explicit_vr);
    if (item.tag == tag_of(0xFFFE, 0xE0DD)) return;
    if (item.tag != tag_of(0xFFFE, 0xE000)) r.fail("expected sequence item");
    if (item.length == kUndefinedLength) {
      skip_undefined(r, explicit_vr);
    } else {
      r.skip(item.length);
    }
  }
}

// Skips nested elements of an undefined-length item up to the item delimiter.
void skip_undefined(Reader& r, bool explicit_vr) {
  while (true) {
    const Element e = read_header(r, explicit_vr);
    if (e.tag == tag_of(0xFFFE, 0xE00D)) return;
    if (e.length == kUndefinedLength) {
      skip_sequence_items(r, explicit_vr);
    } else {
      r.skip(e.length);
    }
  }
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == ' ' || s.back() == '\0')) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && s[i] == ' ') ++i;
  return s.substr(i);
}

std::vector<double> parse_ds(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(trim(s));
  std::string part;
  while (std::getline(ss, part, '\\')) {
    try {
      out.push_back(std::stod(trim(part)));
    } catch (const std::exception&) {
      throw ConfigError("malformed decimal string '" + s + "'");
    }
  }
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open for reading", path.string());
  const auto size = static_cast<std::size_t>(in.tellg());
  std::vector<std::uint8_t> buf(size);
  in.seekg(0);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(size));
  if (!in) throw IoError("read failed", path.string());
  return buf;
}

}  // namespace

bool looks_like_dicom(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[4] = {};
  in.seekg(128);
  in.read(magic, 4);
  return in && std::memcmp(magic, "DICM", 4) == 0;
}

Slice read_slice(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> buf = read_file(path);
  Reader r(buf, path.string());
  bool explicit_vr = false;
  if (buf.size() >= 132 && std::memcmp(buf.data() + 128, "DICM", 4) == 0) {
    r.seek(132);
    // File meta group is always explicit VR little endian.
    std::string transfer_syntax;
    while (!r.at_end()) {
      const std::size_t start = r.pos();
      if (r.u16() != 0x0002) {
        r.seek(start);
        break;
      }
      r.seek(start);
      const Element e = read_header(r, true);
      if (e.tag == tag_of(0x0002, 0x0010)) {
        transfer_syntax = trim(r.bytes_str(e.length));
      } else {
        r.skip(e.length);
      }
    }
    if (transfer_syntax == "1.2.840.10008.1.2.1" || transfer_syntax.empty()) {
      explicit_vr = true;
    } else if (transfer_syntax == "1.2.840.10008.1.2") {
      explicit_vr = false;
    } else {
      throw IoError("unsupported transfer syntax " + transfer_syntax +
                        " (only uncompressed little endian is read)",
                    path.string());
    }
  }

  Slice s;
  while (!r.at_end()) {
    const Element e = read_header(r, explicit_vr);
    if (e.length == kUndefinedLength) {
      if (e.tag == tag_of(0x7FE0, 0x0010)) {
        throw IoError("encapsulated (compressed) pixel data is not supported", path.string());
      }
      skip_sequence_items(r, explicit_vr);
      continue;
    }
    switch (e.tag) {
      case tag_of(0x0008, 0x0060): s.modality = trim(r.bytes_str(e.length)); break;
      case tag_of(0x0020, 0x000E): s.series_uid = trim(r.bytes_str(e.length)); break;
      case tag_of(0x0020, 0x0013): {
        const auto v = parse_ds(r.bytes_str(e.length));
        if (!v.empty()) s.instance_number = static_cast<int>(v[0]);
        break;
      }
      case tag_of(0x0020, 0x0032): {
        const auto v = parse_ds(r.bytes_str(e.length));
        if (v.size() == 3) s.image_position = std::array<double, 3>{v[0], v[1], v[2]};
        break;
      }
      case tag_of(0x0020, 0x1041): {
        const auto v = parse_ds(r.bytes_str(e.length));
        if (!v.empty()) s.slice_location = v[0];
        break;
      }
      case tag_of(0x0018, 0x0050): {
        const auto v = parse_ds(r.bytes_str(e.length));
        if (!v.empty()) s.slice_thickness = v[0];
        break;
      }
      case tag_of(0x0028, 0x0010): s.rows = r.u16(); r.skip(e.length - 2); break;
      case tag_of(0x0028, 0x0011): s.cols = r.u16(); r.skip(e.length - 2); break;
      case tag_of(0x0028, 0x0030): {
        const auto v = parse_ds(r.bytes_str(e.length));
        if (v.size() == 2) s.pixel_spacing = std::array<double, 2>{v[0], v[1]};
        break;
      }
      case tag_of(0x0028, 0x0100): s.bits_allocated = r.u16(); r.skip(e.length - 2); break;
      case tag_of(0x0028, 0x0103): s.pixel_representation = r.u16(); r.skip(e.length - 2); break;
      case tag_of(0x0028, 0x1052): {
        const auto v = parse_ds(r.bytes_str(e.length));
        if (!v.empty()) s.rescale_intercept = v[0];
        break;
      }
      case tag_of(0x0028, 0x1053): {
        const auto v = parse_ds(r.bytes_str(e.length));
        if (!v.empty()) s.rescale_slope = v[0];
        break;
      }
      case tag_of(0x7FE0, 0x0010): s.pixel_data = r.bytes(e.length); break;
      default: r.skip(e.length); break;
    }
  }
  return s;
}

}  // namespace ct2ctpa::dicom
