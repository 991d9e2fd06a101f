#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

// Minimal Part-10 writer for synthetic CT slices.
namespace fixture {

struct SyntheticSlice {
  std::string study = "1.2.826.0.1.3680043.2.1125.1";
  std::string series = "1.2.826.0.1.3680043.2.1125.1.1";
  std::string sop;
  std::optional<int> instance;
  std::optional<double> slope = 1.0;
  std::optional<double> intercept = -1024.0;
  int rows = 8;
  int cols = 8;
  std::array<double, 2> pixel_spacing{0.7, 0.7};
  double thickness = 5.0;
  std::optional<std::array<double, 3>> position;
  std::array<double, 6> orientation{1, 0, 0, 0, 1, 0};
  bool is_signed = true;
  std::vector<std::int16_t> pixels;  // rows x cols
};

class ElementWriter {
 public:
  explicit ElementWriter(bool explicit_vr) : explicit_vr_(explicit_vr) {}

  void text(std::uint16_t g, std::uint16_t e, const char* vr, std::string v) {
    if (v.size() % 2) v.push_back(vr[0] == 'U' && vr[1] == 'I' ? '\0' : ' ');
    raw(g, e, vr, v.data(), v.size());
  }
  void us(std::uint16_t g, std::uint16_t e, std::uint16_t v) { raw(g, e, "US", &v, 2); }
  void raw(std::uint16_t g, std::uint16_t e, const char* vr, const void* data, std::size_t n) {
    put16(g);
    put16(e);
    const bool is_long = !std::strcmp(vr, "OB") || !std::strcmp(vr, "OW") || !std::strcmp(vr, "SQ") ||
                         !std::strcmp(vr, "UN") || !std::strcmp(vr, "UT");
    if (explicit_vr_) {
      bytes.push_back(vr[0]);
      bytes.push_back(vr[1]);
      if (is_long) {
        put16(0);
        put32(static_cast<std::uint32_t>(n));
      } else {
        put16(static_cast<std::uint16_t>(n));
      }
    } else {
      put32(static_cast<std::uint32_t>(n));
    }
    const char* p = static_cast<const char*>(data);
    bytes.insert(bytes.end(), p, p + n);
  }
  // An undefined-length sequence with one item holding a text element.
  void sequence(std::uint16_t g, std::uint16_t e) {
    put16(g);
    put16(e);
    if (explicit_vr_) {
      bytes.push_back('S');
      bytes.push_back('Q');
      put16(0);
    }
    put32(0xFFFFFFFFu);
    put16(0xFFFE);
    put16(0xE000);
    put32(0xFFFFFFFFu);
    text(0x0008, 0x0100, "SH", "CODE");
    put16(0xFFFE);
    put16(0xE00D);
    put32(0);
    put16(0xFFFE);
    put16(0xE0DD);
    put32(0);
  }

  std::vector<char> bytes;

 private:
  void put16(std::uint16_t v) { bytes.insert(bytes.end(), reinterpret_cast<char*>(&v), reinterpret_cast<char*>(&v) + 2); }
  void put32(std::uint32_t v) { bytes.insert(bytes.end(), reinterpret_cast<char*>(&v), reinterpret_cast<char*>(&v) + 4); }
  bool explicit_vr_;
};

inline std::string decimal(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline void write_dicom(const std::string& path, const SyntheticSlice& s, bool explicit_vr = true) {
  const char* syntax = explicit_vr ? "1.2.840.10008.1.2.1" : "1.2.840.10008.1.2";
  ElementWriter meta(true);
  meta.text(0x0002, 0x0010, "UI", syntax);
  ElementWriter body(explicit_vr);
  body.text(0x0008, 0x0016, "UI", "1.2.840.10008.5.1.4.1.1.2");
  body.text(0x0008, 0x0018, "UI", s.sop);
  body.text(0x0008, 0x0060, "CS", "CT");
  body.sequence(0x0008, 0x1032);
  body.text(0x0018, 0x0050, "DS", decimal(s.thickness));
  body.text(0x0020, 0x000D, "UI", s.study);
  body.text(0x0020, 0x000E, "UI", s.series);
  if (s.instance) body.text(0x0020, 0x0013, "IS", std::to_string(*s.instance));
  if (s.position) {
    const auto& p = *s.position;
    body.text(0x0020, 0x0032, "DS", decimal(p[0]) + "\\" + decimal(p[1]) + "\\" + decimal(p[2]));
  }
  std::string o;
  for (int i = 0; i < 6; ++i) o += (i ? "\\" : "") + decimal(s.orientation[i]);
  body.text(0x0020, 0x0037, "DS", o);
  body.us(0x0028, 0x0002, 1);
  body.text(0x0028, 0x0004, "CS", "MONOCHROME2");
  body.us(0x0028, 0x0010, static_cast<std::uint16_t>(s.rows));
  body.us(0x0028, 0x0011, static_cast<std::uint16_t>(s.cols));
  body.text(0x0028, 0x0030, "DS", decimal(s.pixel_spacing[0]) + "\\" + decimal(s.pixel_spacing[1]));
  body.us(0x0028, 0x0100, 16);
  body.us(0x0028, 0x0101, 16);
  body.us(0x0028, 0x0102, 15);
  body.us(0x0028, 0x0103, s.is_signed ? 1 : 0);
  if (s.intercept) body.text(0x0028, 0x1052, "DS", decimal(*s.intercept));
  if (s.slope) body.text(0x0028, 0x1053, "DS", decimal(*s.slope));
  body.raw(0x7FE0, 0x0010, "OW", s.pixels.data(), s.pixels.size() * 2);

  std::ofstream out(path, std::ios::binary);
  const std::vector<char> preamble(128, 0);
  out.write(preamble.data(), 128);
  out.write("DICM", 4);
  out.write(meta.bytes.data(), static_cast<std::streamsize>(meta.bytes.size()));
  out.write(body.bytes.data(), static_cast<std::streamsize>(body.bytes.size()));
}

}  // namespace fixture
