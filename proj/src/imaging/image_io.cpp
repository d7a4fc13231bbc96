#include "bifuser/imaging/image.hpp"

#include <jpeglib.h>
#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>

namespace bifuser::imaging {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::string& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw MissingFile("cannot open " + path);
  return f;
}

bool is_png(const unsigned char* magic) {
  static const unsigned char sig[4] = {0x89, 'P', 'N', 'G'};
  return std::memcmp(magic, sig, 4) == 0;
}

bool is_jpeg(const unsigned char* magic) { return magic[0] == 0xFF && magic[1] == 0xD8; }

ImageU8 read_png_file(std::FILE* f, const std::string& path) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IOError("libpng init failed for " + path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IOError("png decode failed for " + path);
  }
  png_init_io(png, f);
  png_read_info(png, info);

  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int channels = png_get_channels(png, info);
  ImageU8 img = ImageU8::create(static_cast<Index>(width), static_cast<Index>(height),
                                static_cast<Index>(channels));
  std::vector<png_bytep> rows(height);
  for (png_uint_32 y = 0; y < height; ++y)
    rows[y] = img.pixels.data() + static_cast<std::size_t>(y) * width * channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

struct JpegErrorMgr {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
};

void jpeg_error_trampoline(j_common_ptr cinfo) {
  auto* mgr = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  std::longjmp(mgr->jump, 1);
}

ImageU8 read_jpeg_file(std::FILE* f, const std::string& path) {
  jpeg_decompress_struct cinfo;
  JpegErrorMgr jerr;
  cinfo.err = jpeg_std_error(&jerr.pub);
  jerr.pub.error_exit = jpeg_error_trampoline;
  ImageU8 img;
  if (setjmp(jerr.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw IOError("jpeg decode failed for " + path);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f);
  jpeg_read_header(&cinfo, TRUE);
  jpeg_start_decompress(&cinfo);
  const Index width = cinfo.output_width;
  const Index height = cinfo.output_height;
  const Index channels = cinfo.output_components;
  img = ImageU8::create(width, height, channels);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row =
        img.pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * width * channels;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return img;
}

}  // namespace

TensorF to_chw_float(const ImageU8& img) {
  TensorF out({img.channels, img.height, img.width});
  const float inv = 1.0f / 255.0f;
  for (Index c = 0; c < img.channels; ++c)
    for (Index y = 0; y < img.height; ++y)
      for (Index x = 0; x < img.width; ++x)
        out.at({c, y, x}) = static_cast<float>(img.at(y, x, c)) * inv;
  return out;
}

ImageU8 to_u8(const TensorF& chw) {
  const Index c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
  ImageU8 img = ImageU8::create(w, h, c);
  for (Index ch = 0; ch < c; ++ch)
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) {
        const float v = std::min(1.0f, std::max(0.0f, chw.at({ch, y, x})));
        img.at(y, x, ch) = static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
  return img;
}

ImageU8 read_image(const std::string& path) {
  FilePtr f = open_file(path, "rb");
  unsigned char magic[4] = {0, 0, 0, 0};
  if (std::fread(magic, 1, 4, f.get()) != 4) throw IOError("truncated image file " + path);
  std::rewind(f.get());
  if (is_png(magic)) return read_png_file(f.get(), path);
  if (is_jpeg(magic)) return read_jpeg_file(f.get(), path);
  throw IOError("unsupported image format in " + path);
}

void write_png(const std::string& path, const ImageU8& img) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IOError("cannot write " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IOError("libpng init failed for " + path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IOError("png encode failed for " + path);
  }
  png_init_io(png, f.get());
  const int color = img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8, color, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (Index y = 0; y < img.height; ++y)
    png_write_row(png, const_cast<png_bytep>(img.pixels.data() +
                                             static_cast<std::size_t>(y * img.width * img.channels)));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::pair<Index, Index> probe_image_size(const std::string& path) {
  FilePtr f = open_file(path, "rb");
  unsigned char head[26];
  if (std::fread(head, 1, sizeof(head), f.get()) < 10) throw IOError("truncated file " + path);
  if (is_png(head)) {
    // IHDR starts at byte 16: width and height as big-endian u32
    auto be32 = [&](int off) {
      return (Index(head[off]) << 24) | (Index(head[off + 1]) << 16) |
             (Index(head[off + 2]) << 8) | Index(head[off + 3]);
    };
    return {be32(16), be32(20)};
  }
  if (is_jpeg(head)) {
    // scan segments for a SOF marker
    std::fseek(f.get(), 2, SEEK_SET);
    unsigned char seg[4];
    while (std::fread(seg, 1, 4, f.get()) == 4) {
      if (seg[0] != 0xFF) throw IOError("bad jpeg segment in " + path);
      const unsigned char marker = seg[1];
      const long len = (long(seg[2]) << 8) | seg[3];
      if ((marker >= 0xC0 && marker <= 0xC3) || (marker >= 0xC5 && marker <= 0xC7) ||
          (marker >= 0xC9 && marker <= 0xCB) || (marker >= 0xCD && marker <= 0xCF)) {
        unsigned char dims[5];
        if (std::fread(dims, 1, 5, f.get()) != 5) break;
        const Index h = (Index(dims[1]) << 8) | dims[2];
        const Index w = (Index(dims[3]) << 8) | dims[4];
        return {w, h};
      }
      std::fseek(f.get(), len - 2, SEEK_CUR);
    }
    throw IOError("no jpeg size header in " + path);
  }
  throw IOError("unsupported image format in " + path);
}

}  // namespace bifuser::imaging
