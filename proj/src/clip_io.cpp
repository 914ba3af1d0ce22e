#include "hiervid/clip_io.hpp"

#include <png.h>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "hiervid/check.hpp"

namespace hiervid {

namespace {

constexpr char kMagic[4] = {'H', 'V', 'C', '1'};

void put_u32(std::ostream& out, uint32_t v) {
  const uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                        static_cast<uint8_t>(v >> 16),
                        static_cast<uint8_t>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& in, const std::string& path, const char* what) {
  uint8_t b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  HV_REQUIRE(in.gcount() == 4, "clip '", path, "': truncated reading ", what);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

struct PngReadCloser {
  png_structp png = nullptr;
  png_infop info = nullptr;
  FILE* fp = nullptr;
  ~PngReadCloser() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (fp) std::fclose(fp);
  }
};

}  // namespace

void write_hvc1(const std::string& path, const RawClip& clip) {
  HV_REQUIRE(static_cast<int64_t>(clip.data.size()) ==
                 clip.t * clip.h * clip.w * clip.c,
             "write_hvc1: clip data has ", clip.data.size(),
             " bytes, dims want ", clip.t * clip.h * clip.w * clip.c);
  std::ofstream out(path, std::ios::binary);
  HV_REQUIRE(out.good(), "write_hvc1: cannot open '", path, "'");
  out.write(kMagic, 4);
  put_u32(out, static_cast<uint32_t>(clip.t));
  put_u32(out, static_cast<uint32_t>(clip.h));
  put_u32(out, static_cast<uint32_t>(clip.w));
  put_u32(out, static_cast<uint32_t>(clip.c));
  out.write(reinterpret_cast<const char*>(clip.data.data()),
            static_cast<std::streamsize>(clip.data.size()));
  HV_REQUIRE(out.good(), "write_hvc1: write failed for '", path, "'");
}

RawClip read_hvc1(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  HV_REQUIRE(in.good(), "read_hvc1: cannot open '", path, "'");
  char magic[4];
  in.read(magic, 4);
  HV_REQUIRE(in.gcount() == 4 && std::memcmp(magic, kMagic, 4) == 0,
             "read_hvc1: '", path, "' is not an HVC1 clip");
  RawClip clip;
  clip.t = get_u32(in, path, "T");
  clip.h = get_u32(in, path, "H");
  clip.w = get_u32(in, path, "W");
  clip.c = get_u32(in, path, "C");
  HV_REQUIRE(clip.t >= 1 && clip.h >= 1 && clip.w >= 1 && clip.c == 3,
             "read_hvc1: '", path, "' has bad dims T=", clip.t, " H=", clip.h,
             " W=", clip.w, " C=", clip.c);
  const int64_t n = clip.t * clip.h * clip.w * clip.c;
  clip.data.resize(static_cast<size_t>(n));
  in.read(reinterpret_cast<char*>(clip.data.data()), n);
  HV_REQUIRE(in.gcount() == n, "read_hvc1: '", path, "' truncated: wanted ", n,
             " pixel bytes, got ", in.gcount());
  return clip;
}

void write_png_rgb8(const std::string& path, int64_t h, int64_t w,
                    const uint8_t* rgb) {
  FILE* fp = std::fopen(path.c_str(), "wb");
  HV_REQUIRE(fp, "write_png: cannot open '", path, "'");
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    HV_REQUIRE(false, "write_png: libpng error for '", path, "'");
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w),
               static_cast<png_uint_32>(h), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int64_t y = 0; y < h; ++y)
    png_write_row(png, const_cast<png_bytep>(rgb + y * w * 3));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

namespace {

void read_png_rgb8(const std::string& path, int64_t& h, int64_t& w,
                   std::vector<uint8_t>& rgb) {
  PngReadCloser guard;
  guard.fp = std::fopen(path.c_str(), "rb");
  HV_REQUIRE(guard.fp, "read_png: cannot open '", path, "'");
  guard.png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  guard.info = png_create_info_struct(guard.png);
  if (setjmp(png_jmpbuf(guard.png)))
    HV_REQUIRE(false, "read_png: libpng error for '", path, "'");
  png_init_io(guard.png, guard.fp);
  png_read_info(guard.png, guard.info);
  w = png_get_image_width(guard.png, guard.info);
  h = png_get_image_height(guard.png, guard.info);
  // normalize everything to 8-bit RGB
  png_set_strip_16(guard.png);
  png_set_palette_to_rgb(guard.png);
  png_set_expand_gray_1_2_4_to_8(guard.png);
  png_set_gray_to_rgb(guard.png);
  png_set_strip_alpha(guard.png);
  png_read_update_info(guard.png, guard.info);
  HV_REQUIRE(png_get_rowbytes(guard.png, guard.info) ==
                 static_cast<size_t>(w * 3),
             "read_png: '", path, "' did not normalize to RGB8");
  rgb.resize(static_cast<size_t>(h * w * 3));
  for (int64_t y = 0; y < h; ++y)
    png_read_row(guard.png, rgb.data() + y * w * 3, nullptr);
}

}  // namespace

RawClip read_png_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".png")
      files.push_back(entry.path().string());
  HV_REQUIRE(!files.empty(), "read_png_dir: no .png frames in '", dir, "'");
  std::sort(files.begin(), files.end());

  RawClip clip;
  std::vector<uint8_t> frame;
  for (size_t i = 0; i < files.size(); ++i) {
    int64_t h = 0, w = 0;
    read_png_rgb8(files[i], h, w, frame);
    if (i == 0) {
      clip.h = h;
      clip.w = w;
      clip.c = 3;
      clip.data.reserve(files.size() * frame.size());
    } else {
      HV_REQUIRE(h == clip.h && w == clip.w, "read_png_dir: frame '", files[i],
                 "' is ", h, "x", w, ", expected ", clip.h, "x", clip.w);
    }
    clip.data.insert(clip.data.end(), frame.begin(), frame.end());
  }
  clip.t = static_cast<int64_t>(files.size());
  return clip;
}

RawClip read_clip(const std::string& path) {
  if (std::filesystem::is_directory(path)) return read_png_dir(path);
  return read_hvc1(path);
}

}  // namespace hiervid
