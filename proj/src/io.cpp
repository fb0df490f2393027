#include "varreg/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <algorithm>
#include <cctype>
#include <sstream>

#include "varreg/error.hpp"

namespace varreg {

namespace {

constexpr std::string_view kFieldMagic = "VRFIELD1";
constexpr std::string_view kWeightsMagic = "VRWGHT1";

void put_f32(std::string& out, double v) {
  const auto f = static_cast<float>(v);
  if (!std::isfinite(f)) throw NumericalError("value not representable as finite f32");
  auto bits = std::bit_cast<std::uint32_t>(f);
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((bits >> (8 * k)) & 0xFF));
}

double get_f32(const char* p) {
  std::uint32_t bits = 0;
  for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[k])) << (8 * k);
  return static_cast<double>(std::bit_cast<float>(bits));
}

// Sequential reader of newline-terminated header lines.
class LineReader {
 public:
  explicit LineReader(std::span<const char> bytes) : bytes_(bytes) {}

  std::string next() {
    const auto* begin = bytes_.data() + pos_;
    const auto* end = bytes_.data() + bytes_.size();
    const auto* nl = std::find(begin, end, '\n');
    if (nl == end) throw FormatError("unterminated header line");
    std::string line(begin, nl);
    pos_ = static_cast<std::size_t>(nl - bytes_.data()) + 1;
    if (line.size() > 4096) throw FormatError("header line too long");
    return line;
  }

  std::size_t position() const { return pos_; }

 private:
  std::span<const char> bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::string> split_words(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> words;
  for (std::string w; in >> w;) words.push_back(w);
  return words;
}

long long parse_int(const std::string& s, const char* what) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw FormatError(std::string("bad integer in ") + what);
    return v;
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception&) {
    throw FormatError(std::string("bad integer in ") + what);
  }
}

double parse_real(const std::string& s, const char* what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size() || !std::isfinite(v)) throw FormatError(std::string("bad number in ") + what);
    return v;
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception&) {
    throw FormatError(std::string("bad number in ") + what);
  }
}

std::vector<std::string> expect_key(LineReader& r, const std::string& key) {
  auto words = split_words(r.next());
  if (words.empty() || words.front() != key) throw FormatError("expected header key '" + key + "'");
  words.erase(words.begin());
  return words;
}

std::string format_real(double v) {
  std::ostringstream o;
  o.precision(17);
  o << v;
  return o.str();
}

}  // namespace

std::string encode_field(const FieldData& field) {
  const GridDesc& g = std::visit([](const auto& f) -> const GridDesc& { return f.grid(); }, field);
  const int channels = std::holds_alternative<ScalarField>(field) ? 1 : g.rank();
  std::string out(kFieldMagic);
  out += "\nrank " + std::to_string(g.rank()) + "\ndims";
  for (int a = 0; a < g.rank(); ++a) out += " " + std::to_string(g.dim(a));
  out += "\nspacing";
  for (int a = 0; a < g.rank(); ++a) out += " " + format_real(g.spacing(a));
  out += "\nchannels " + std::to_string(channels) + "\ndtype f32\nend\n";
  out.reserve(out.size() + g.size() * static_cast<std::size_t>(channels) * 4);
  if (const auto* s = std::get_if<ScalarField>(&field)) {
    for (double v : s->values()) put_f32(out, v);
  } else {
    for (const auto& c : std::get<VectorField>(field).components())
      for (double v : c.values()) put_f32(out, v);
  }
  return out;
}

FieldData decode_field(std::span<const char> bytes) {
  if (bytes.size() < kFieldMagic.size() + 1 ||
      std::string_view(bytes.data(), kFieldMagic.size()) != kFieldMagic || bytes[kFieldMagic.size()] != '\n')
    throw FormatError("bad field file magic");
  LineReader r(bytes);
  r.next();
  const auto rank_w = expect_key(r, "rank");
  if (rank_w.size() != 1) throw FormatError("bad rank line");
  const long long rank = parse_int(rank_w[0], "rank");
  if (rank != 2 && rank != 3) throw FormatError("field rank must be 2 or 3");
  const auto dims_w = expect_key(r, "dims");
  const auto spacing_w = expect_key(r, "spacing");
  if (static_cast<long long>(dims_w.size()) != rank || static_cast<long long>(spacing_w.size()) != rank)
    throw FormatError("dims/spacing count does not match rank");
  std::vector<int> dims;
  std::vector<double> spacing;
  unsigned long long total = 1;
  for (long long a = 0; a < rank; ++a) {
    const long long d = parse_int(dims_w[static_cast<std::size_t>(a)], "dims");
    if (d < 2 || d > (1LL << 24)) throw FormatError("field dim out of range");
    total *= static_cast<unsigned long long>(d);
    if (total > (1ULL << 32)) throw FormatError("field dimensions overflow");
    dims.push_back(static_cast<int>(d));
    spacing.push_back(parse_real(spacing_w[static_cast<std::size_t>(a)], "spacing"));
  }
  const auto ch_w = expect_key(r, "channels");
  if (ch_w.size() != 1) throw FormatError("bad channels line");
  const long long channels = parse_int(ch_w[0], "channels");
  if (channels != 1 && channels != rank) throw FormatError("channels must be 1 or rank");
  const auto dt_w = expect_key(r, "dtype");
  if (dt_w.size() != 1 || dt_w[0] != "f32") throw FormatError("only dtype f32 is supported");
  if (!expect_key(r, "end").empty()) throw FormatError("bad end line");

  GridDesc grid;
  try {
    grid = GridDesc(dims, spacing);
  } catch (const InvalidArgument& e) {
    throw FormatError(e.what());
  }
  const std::size_t n = grid.size();
  const std::size_t payload = n * static_cast<std::size_t>(channels) * 4;
  if (bytes.size() - r.position() != payload) throw FormatError("field payload size does not match header");
  const char* p = bytes.data() + r.position();
  std::vector<ScalarField> comps;
  for (long long c = 0; c < channels; ++c) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i, p += 4) v[i] = get_f32(p);
    try {
      comps.emplace_back(grid, std::move(v));
    } catch (const NumericalError&) {
      throw FormatError("non-finite sample in field file");
    }
  }
  if (channels == 1) return comps.front();
  return VectorField(std::move(comps));
}

std::vector<char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::string& path, std::string_view content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw FormatError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw FormatError("cannot move " + tmp.string() + " into place: " + ec.message());
}

void write_field(const std::string& path, const FieldData& field) { write_file_atomic(path, encode_field(field)); }

FieldData read_field(const std::string& path) {
  const auto bytes = read_file(path);
  return decode_field(bytes);
}

ScalarField read_scalar_field(const std::string& path) {
  auto f = read_field(path);
  if (auto* s = std::get_if<ScalarField>(&f)) return std::move(*s);
  throw FormatError(path + " holds a vector field, expected one channel");
}

VectorField read_vector_field(const std::string& path) {
  auto f = read_field(path);
  if (auto* v = std::get_if<VectorField>(&f)) return std::move(*v);
  throw FormatError(path + " holds a scalar field, expected a displacement");
}

std::uint64_t fnv1a64(std::span<const char> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string encode_weights(const CascadeParams& params) {
  params.validate();
  CascadeParams copy = params;
  const int hidden = copy.denoisers.front().layers.front().out_channels;
  std::string out(kWeightsMagic);
  out += "\nattr rank " + std::to_string(copy.rank);
  out += "\nattr sharing " + std::string(copy.sharing == Sharing::Theta1 ? "theta1" : "theta2");
  out += "\nattr n_warp " + std::to_string(copy.n_warp);
  out += "\nattr n_iter " + std::to_string(copy.n_iter);
  out += "\nattr hidden " + std::to_string(hidden);
  out += "\nattr init " + std::string(copy.init_net ? "learned" : "none");
  out += "\n";
  std::string payload;
  for_each_tensor(copy, [&](const std::string& name, const std::vector<int>& shape, std::span<double> t) {
    out += "tensor " + name + " " + std::to_string(shape.size());
    for (int d : shape) out += " " + std::to_string(d);
    out += "\n";
    for (double v : t) put_f32(payload, v);
  });
  out += "end\n";
  out += payload;
  std::uint64_t h = fnv1a64(payload);
  for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((h >> (8 * k)) & 0xFF));
  return out;
}

CascadeParams decode_weights(std::span<const char> bytes) {
  if (bytes.size() < kWeightsMagic.size() + 1 ||
      std::string_view(bytes.data(), kWeightsMagic.size()) != kWeightsMagic || bytes[kWeightsMagic.size()] != '\n')
    throw FormatError("bad weights file magic");
  LineReader r(bytes);
  r.next();
  std::map<std::string, std::string> attrs;
  struct Entry {
    std::string name;
    std::vector<int> shape;
  };
  std::vector<Entry> manifest;
  for (;;) {
    const auto words = split_words(r.next());
    if (words.empty()) throw FormatError("empty manifest line");
    if (words[0] == "end") break;
    if (words[0] == "attr" && words.size() == 3) {
      attrs[words[1]] = words[2];
    } else if (words[0] == "tensor" && words.size() >= 3) {
      Entry e{words[1], {}};
      const long long nd = parse_int(words[2], "tensor rank");
      if (nd < 1 || static_cast<long long>(words.size()) != 3 + nd) throw FormatError("bad tensor shape");
      for (long long k = 0; k < nd; ++k) {
        const long long d = parse_int(words[static_cast<std::size_t>(3 + k)], "tensor shape");
        if (d < 1 || d > (1 << 20)) throw FormatError("tensor dim out of range");
        e.shape.push_back(static_cast<int>(d));
      }
      manifest.push_back(std::move(e));
    } else {
      throw FormatError("unknown manifest line");
    }
  }
  const auto attr = [&](const std::string& k) {
    auto it = attrs.find(k);
    if (it == attrs.end()) throw FormatError("missing attr " + k);
    return it->second;
  };
  const int rank = static_cast<int>(parse_int(attr("rank"), "rank"));
  const std::string sharing = attr("sharing");
  if (sharing != "theta1" && sharing != "theta2") throw FormatError("bad sharing attr");
  const int n_warp = static_cast<int>(parse_int(attr("n_warp"), "n_warp"));
  const int n_iter = static_cast<int>(parse_int(attr("n_iter"), "n_iter"));
  const int hidden = static_cast<int>(parse_int(attr("hidden"), "hidden"));
  const std::string init = attr("init");
  if (rank != 2 && rank != 3) throw FormatError("bad rank attr");
  if (n_warp < 1 || n_iter < 1 || n_warp * n_iter > 4096 || hidden < 1 || hidden > 4096)
    throw FormatError("cascade attrs out of range");

  CascadeParams p = make_cascade_params(rank, sharing == "theta1" ? Sharing::Theta1 : Sharing::Theta2, n_warp,
                                        n_iter, hidden, init == "learned", 1.0, 0);
  const std::size_t payload_start = r.position();
  std::size_t expected = 0;
  std::size_t index = 0;
  for_each_tensor(p, [&](const std::string& name, const std::vector<int>& shape, std::span<double> t) {
    if (index >= manifest.size() || manifest[index].name != name || manifest[index].shape != shape)
      throw FormatError("manifest does not match the cascade layout at tensor " + name);
    expected += t.size() * 4;
    ++index;
  });
  if (index != manifest.size()) throw FormatError("manifest has extra tensors");
  if (bytes.size() - payload_start != expected + 8) throw FormatError("weights payload size does not match manifest");
  const std::span<const char> payload = bytes.subspan(payload_start, expected);
  std::uint64_t stored = 0;
  for (int k = 0; k < 8; ++k)
    stored |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[payload_start + expected + static_cast<std::size_t>(k)]))
              << (8 * k);
  if (stored != fnv1a64(payload)) throw FormatError("weights checksum mismatch");
  const char* ptr = payload.data();
  for_each_tensor(p, [&](const std::string&, const std::vector<int>&, std::span<double> t) {
    for (double& v : t) {
      v = get_f32(ptr);
      ptr += 4;
      if (!std::isfinite(v)) throw FormatError("non-finite weight");
    }
  });
  return p;
}

void write_weights(const std::string& path, const CascadeParams& params) {
  write_file_atomic(path, encode_weights(params));
}

CascadeParams read_weights(const std::string& path) {
  const auto bytes = read_file(path);
  return decode_weights(bytes);
}

namespace {

// Next whitespace-delimited token of a PNM header, skipping comments.
std::string pnm_token(std::span<const char> b, std::size_t& pos) {
  for (;;) {
    while (pos < b.size() && std::isspace(static_cast<unsigned char>(b[pos]))) ++pos;
    if (pos < b.size() && b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  std::string tok;
  while (pos < b.size() && !std::isspace(static_cast<unsigned char>(b[pos])) && b[pos] != '#') tok.push_back(b[pos++]);
  if (tok.empty()) throw FormatError("truncated PGM header");
  return tok;
}

}  // namespace

ScalarField decode_pgm(std::span<const char> bytes) {
  std::size_t pos = 0;
  if (pnm_token(bytes, pos) != "P5") throw FormatError("not a binary P5 PGM");
  const long long width = parse_int(pnm_token(bytes, pos), "PGM width");
  const long long height = parse_int(pnm_token(bytes, pos), "PGM height");
  const long long maxval = parse_int(pnm_token(bytes, pos), "PGM maxval");
  if (width < 2 || height < 2 || width > (1 << 16) || height > (1 << 16)) throw FormatError("PGM size out of range");
  if (maxval != 255 && maxval != 65535) throw FormatError("unsupported PGM maxval");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw FormatError("missing PGM header terminator");
  ++pos;
  const std::size_t n = static_cast<std::size_t>(width * height);
  const std::size_t bpp = maxval == 255 ? 1 : 2;
  if (bytes.size() - pos != n * bpp) throw FormatError("PGM payload size does not match header");
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    unsigned raw = static_cast<unsigned char>(bytes[pos + i * bpp]);
    if (bpp == 2) raw = (raw << 8) | static_cast<unsigned char>(bytes[pos + i * bpp + 1]);
    v[i] = static_cast<double>(raw) / static_cast<double>(maxval);
  }
  return ScalarField(GridDesc::make2(static_cast<int>(height), static_cast<int>(width)), std::move(v));
}

std::string encode_pgm(const ScalarField& image, int maxval) {
  if (image.grid().rank() != 2) throw InvalidArgument("PGM output needs a 2D image");
  if (maxval != 255 && maxval != 65535) throw InvalidArgument("PGM maxval must be 255 or 65535");
  std::string out = "P5\n" + std::to_string(image.grid().dim(1)) + " " + std::to_string(image.grid().dim(0)) + "\n" +
                    std::to_string(maxval) + "\n";
  for (double v : image.values()) {
    const auto q = static_cast<unsigned>(std::lround(std::clamp(v, 0.0, 1.0) * maxval));
    if (maxval == 65535) out.push_back(static_cast<char>((q >> 8) & 0xFF));
    out.push_back(static_cast<char>(q & 0xFF));
  }
  return out;
}

ScalarField read_pgm(const std::string& path) {
  const auto bytes = read_file(path);
  return decode_pgm(bytes);
}

void write_pgm(const std::string& path, const ScalarField& image, int maxval) {
  write_file_atomic(path, encode_pgm(image, maxval));
}

ScalarField read_image(const std::string& path) {
  const auto bytes = read_file(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return decode_pgm(bytes);
  auto f = decode_field(bytes);
  if (auto* s = std::get_if<ScalarField>(&f)) return std::move(*s);
  throw FormatError(path + " holds a vector field, expected an image");
}

std::array<std::uint8_t, 3> hsv_to_rgb(double hue, double sat, double val) {
  const double h = std::fmod(std::fmod(hue, 360.0) + 360.0, 360.0) / 60.0;
  const double c = val * sat;
  const double x = c * (1.0 - std::abs(std::fmod(h, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(h)) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  const double m = val - c;
  const auto q = [&](double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v + m, 0.0, 1.0) * 255.0)); };
  return {q(r), q(g), q(b)};
}

std::string encode_flow_ppm(const VectorField& u) {
  if (u.rank() != 2) throw InvalidArgument("flow visualisation supports 2D fields only");
  const double peak = u.max_norm();
  const GridDesc& g = u.grid();
  std::string out = "P6\n" + std::to_string(g.dim(1)) + " " + std::to_string(g.dim(0)) + "\n255\n";
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double ux = u.component(0)[i], uy = u.component(1)[i];
    double hue = std::atan2(uy, ux) * 180.0 / M_PI;
    if (hue < 0.0) hue += 360.0;
    if (hue >= 360.0) hue -= 360.0;
    const double sat = peak > 0.0 ? std::hypot(ux, uy) / peak : 0.0;
    const auto rgb = hsv_to_rgb(hue, sat, 1.0);
    for (auto c : rgb) out.push_back(static_cast<char>(c));
  }
  return out;
}

void write_flow_ppm(const std::string& path, const VectorField& u) { write_file_atomic(path, encode_flow_ppm(u)); }

}  // namespace varreg
