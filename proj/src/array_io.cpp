#include "camdiffuse/array_io.hpp"

#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <string>

#include "camdiffuse/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "NPY payloads are memcpy'd; big-endian hosts are not supported");

namespace camdiffuse {

namespace {

constexpr char kMagic[6] = {'\x93', 'N', 'U', 'M', 'P', 'Y'};
constexpr std::size_t kHeaderAlign = 64;

void check_shape(const std::vector<std::size_t>& shape) {
  if (shape.empty()) raise(Errc::InvalidShape, "zero-dimensional arrays are not supported");
  std::size_t count = 1;
  for (std::size_t dim : shape) {
    if (dim == 0) raise(Errc::InvalidShape, "zero-sized dimension");
    if (__builtin_mul_overflow(count, dim, &count)) {
      raise(Errc::InvalidShape, "shape product overflows");
    }
  }
}

// Minimal parser for the Python dict literal in an NPY header, e.g.
// {'descr': '<f4', 'fortran_order': False, 'shape': (18, 18), }
struct HeaderFields {
  std::string descr;
  bool fortran_order = false;
  std::vector<std::size_t> shape;
};

void skip_ws(const std::string& s, std::size_t& pos) {
  while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
}

std::string parse_quoted(const std::string& s, std::size_t& pos) {
  skip_ws(s, pos);
  if (pos >= s.size() || (s[pos] != '\'' && s[pos] != '"')) {
    raise(Errc::MalformedHeader, "expected quoted string in header");
  }
  const char quote = s[pos++];
  std::string out;
  while (pos < s.size() && s[pos] != quote) out.push_back(s[pos++]);
  if (pos >= s.size()) raise(Errc::MalformedHeader, "unterminated string in header");
  ++pos;
  return out;
}

HeaderFields parse_header_dict(const std::string& header) {
  HeaderFields fields;
  bool saw_descr = false, saw_order = false, saw_shape = false;
  std::size_t pos = 0;
  skip_ws(header, pos);
  if (pos >= header.size() || header[pos] != '{') {
    raise(Errc::MalformedHeader, "header is not a dict literal");
  }
  ++pos;
  for (;;) {
    skip_ws(header, pos);
    if (pos >= header.size()) raise(Errc::MalformedHeader, "unterminated header dict");
    if (header[pos] == '}') break;
    const std::string key = parse_quoted(header, pos);
    skip_ws(header, pos);
    if (pos >= header.size() || header[pos] != ':') {
      raise(Errc::MalformedHeader, "missing ':' after header key");
    }
    ++pos;
    skip_ws(header, pos);
    if (key == "descr") {
      fields.descr = parse_quoted(header, pos);
      saw_descr = true;
    } else if (key == "fortran_order") {
      if (header.compare(pos, 4, "True") == 0) {
        fields.fortran_order = true;
        pos += 4;
      } else if (header.compare(pos, 5, "False") == 0) {
        fields.fortran_order = false;
        pos += 5;
      } else {
        raise(Errc::MalformedHeader, "fortran_order is not a bool");
      }
      saw_order = true;
    } else if (key == "shape") {
      if (pos >= header.size() || header[pos] != '(') {
        raise(Errc::MalformedHeader, "shape is not a tuple");
      }
      ++pos;
      for (;;) {
        skip_ws(header, pos);
        if (pos >= header.size()) raise(Errc::MalformedHeader, "unterminated shape tuple");
        if (header[pos] == ')') {
          ++pos;
          break;
        }
        std::size_t value = 0;
        bool any_digit = false;
        while (pos < header.size() && std::isdigit(static_cast<unsigned char>(header[pos]))) {
          value = value * 10 + static_cast<std::size_t>(header[pos] - '0');
          ++pos;
          any_digit = true;
        }
        if (!any_digit) raise(Errc::MalformedHeader, "non-integer shape entry");
        fields.shape.push_back(value);
        skip_ws(header, pos);
        if (pos < header.size() && header[pos] == ',') ++pos;
      }
      saw_shape = true;
    } else {
      raise(Errc::MalformedHeader, "unexpected header key '" + key + "'");
    }
    skip_ws(header, pos);
    if (pos < header.size() && header[pos] == ',') ++pos;
  }
  if (!saw_descr || !saw_order || !saw_shape) {
    raise(Errc::MalformedHeader, "header missing descr/fortran_order/shape");
  }
  return fields;
}

Dtype dtype_from_descr(const std::string& descr) {
  if (descr == "<f4") return Dtype::Float32;
  if (descr == "|u1" || descr == "<u1") return Dtype::Uint8;
  if (descr == "<u4") return Dtype::Uint32;
  raise(Errc::UnsupportedDtype, "dtype '" + descr + "' (only <f4, |u1, <u4 are accepted)");
}

}  // namespace

std::size_t dtype_itemsize(Dtype dtype) {
  switch (dtype) {
    case Dtype::Float32: return 4;
    case Dtype::Uint8: return 1;
    case Dtype::Uint32: return 4;
  }
  return 0;
}

const char* dtype_descr(Dtype dtype) {
  switch (dtype) {
    case Dtype::Float32: return "<f4";
    case Dtype::Uint8: return "|u1";
    case Dtype::Uint32: return "<u4";
  }
  return "?";
}

std::size_t ArrayFile::element_count() const {
  std::size_t count = 1;
  for (std::size_t dim : shape) count *= dim;
  return shape.empty() ? 0 : count;
}

std::span<const float> ArrayFile::f32() const {
  if (dtype != Dtype::Float32) raise(Errc::UnsupportedDtype, "array is not float32");
  return {reinterpret_cast<const float*>(data.data()), data.size() / 4};
}

std::span<const std::uint8_t> ArrayFile::u8() const {
  if (dtype != Dtype::Uint8) raise(Errc::UnsupportedDtype, "array is not uint8");
  return {reinterpret_cast<const std::uint8_t*>(data.data()), data.size()};
}

std::span<const std::uint32_t> ArrayFile::u32() const {
  if (dtype != Dtype::Uint32) raise(Errc::UnsupportedDtype, "array is not uint32");
  return {reinterpret_cast<const std::uint32_t*>(data.data()), data.size() / 4};
}

namespace {

ArrayFile build(Dtype dtype, std::vector<std::size_t> shape, const void* values,
                std::size_t count) {
  check_shape(shape);
  ArrayFile arr;
  arr.dtype = dtype;
  arr.shape = std::move(shape);
  if (arr.element_count() != count) {
    raise(Errc::InvalidShape, "value count does not match shape product");
  }
  arr.data.resize(count * dtype_itemsize(dtype));
  std::memcpy(arr.data.data(), values, arr.data.size());
  return arr;
}

}  // namespace

ArrayFile ArrayFile::from_f32(std::vector<std::size_t> shape,
                              std::span<const float> values) {
  return build(Dtype::Float32, std::move(shape), values.data(), values.size());
}

ArrayFile ArrayFile::from_u8(std::vector<std::size_t> shape,
                             std::span<const std::uint8_t> values) {
  return build(Dtype::Uint8, std::move(shape), values.data(), values.size());
}

ArrayFile ArrayFile::from_u32(std::vector<std::size_t> shape,
                              std::span<const std::uint32_t> values) {
  return build(Dtype::Uint32, std::move(shape), values.data(), values.size());
}

ArrayFile read_array(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::IoFailure, "cannot open '" + path.string() + "'");

  char prologue[10];
  in.read(prologue, sizeof(prologue));
  if (in.gcount() != sizeof(prologue)) {
    raise(Errc::MalformedHeader, "file shorter than the NPY prologue");
  }
  if (std::memcmp(prologue, kMagic, sizeof(kMagic)) != 0) {
    raise(Errc::MalformedHeader, "bad magic in '" + path.string() + "'");
  }
  const unsigned major = static_cast<unsigned char>(prologue[6]);
  const unsigned minor = static_cast<unsigned char>(prologue[7]);
  if (major != 1 || minor != 0) {
    raise(Errc::MalformedHeader, "unsupported NPY version " + std::to_string(major) +
                                     "." + std::to_string(minor));
  }
  const std::size_t header_len =
      static_cast<unsigned char>(prologue[8]) |
      (static_cast<std::size_t>(static_cast<unsigned char>(prologue[9])) << 8);

  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  if (static_cast<std::size_t>(in.gcount()) != header_len) {
    raise(Errc::MalformedHeader, "truncated NPY header");
  }

  const HeaderFields fields = parse_header_dict(header);
  if (fields.fortran_order) {
    raise(Errc::UnsupportedOrder, "Fortran-order arrays are not supported");
  }
  check_shape(fields.shape);

  ArrayFile arr;
  arr.dtype = dtype_from_descr(fields.descr);
  arr.shape = fields.shape;
  const std::size_t payload = arr.element_count() * dtype_itemsize(arr.dtype);
  arr.data.resize(payload);
  in.read(reinterpret_cast<char*>(arr.data.data()), static_cast<std::streamsize>(payload));
  if (static_cast<std::size_t>(in.gcount()) != payload) {
    raise(Errc::TruncatedData, "payload shorter than the declared shape implies");
  }
  return arr;
}

void write_array(const std::filesystem::path& path, const ArrayFile& arr) {
  check_shape(arr.shape);
  const std::size_t payload = arr.element_count() * dtype_itemsize(arr.dtype);
  if (arr.data.size() != payload) {
    raise(Errc::InvalidShape, "buffer size does not match shape product");
  }

  std::string dict = "{'descr': '";
  dict += dtype_descr(arr.dtype);
  dict += "', 'fortran_order': False, 'shape': (";
  for (std::size_t i = 0; i < arr.shape.size(); ++i) {
    dict += std::to_string(arr.shape[i]);
    if (arr.shape.size() == 1) {
      dict += ",";
    } else if (i + 1 < arr.shape.size()) {
      dict += ", ";
    }
  }
  dict += "), }";

  // magic(6) + version(2) + header_len(2) + dict + padding + '\n', padded so
  // the total is a multiple of 64.
  std::size_t total = 10 + dict.size() + 1;
  const std::size_t padded_total = (total + kHeaderAlign - 1) / kHeaderAlign * kHeaderAlign;
  std::string header = dict + std::string(padded_total - total, ' ') + "\n";
  if (header.size() > 0xffff) raise(Errc::InvalidShape, "NPY header too long");

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(Errc::IoFailure, "cannot open '" + path.string() + "' for writing");
  out.write(kMagic, sizeof(kMagic));
  const char version[2] = {1, 0};
  out.write(version, 2);
  const char lens[2] = {static_cast<char>(header.size() & 0xff),
                        static_cast<char>((header.size() >> 8) & 0xff)};
  out.write(lens, 2);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(arr.data.data()),
            static_cast<std::streamsize>(arr.data.size()));
  if (!out) raise(Errc::IoFailure, "write failed for '" + path.string() + "'");
}

}  // namespace camdiffuse
