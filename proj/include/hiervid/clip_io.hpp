#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace hiervid {

// Raw RGB frames, frame-major: data[((t*h + y)*w + x)*c + channel].
struct RawClip {
  int64_t t = 0, h = 0, w = 0, c = 3;
  std::vector<uint8_t> data;

  size_t frame_bytes() const { return static_cast<size_t>(h * w * c); }
  const uint8_t* frame(int64_t i) const { return data.data() + i * h * w * c; }
  uint8_t* frame(int64_t i) { return data.data() + i * h * w * c; }
};

// HVC1 clip file: magic "HVC1", u32 LE T, H, W, C, then T*H*W*C u8 bytes.
void write_hvc1(const std::string& path, const RawClip& clip);
RawClip read_hvc1(const std::string& path);

// Alternate ingestion path: a directory of PNG frames, consumed in
// lexicographic filename order. 8-bit gray/RGB/RGBA inputs become RGB.
RawClip read_png_dir(const std::string& dir);
void write_png_rgb8(const std::string& path, int64_t h, int64_t w,
                    const uint8_t* rgb);

// Dispatches on the path: a directory reads PNG frames, a file reads HVC1.
RawClip read_clip(const std::string& path);

}  // namespace hiervid
