#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include <unistd.h>

#include <cstring>

#include "helpers.hpp"
#include "varreg/conv.hpp"
#include "varreg/error.hpp"
#include "varreg/io.hpp"
#include "varreg/unroll.hpp"

using namespace varreg;
using namespace testing;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("varreg_io_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

double f32(double x) { return static_cast<double>(static_cast<float>(x)); }

std::span<const char> bytes_of(const std::string& s) { return {s.data(), s.size()}; }

std::size_t header_size(const std::string& encoded) { return encoded.find("end\n") + 4; }

}  // namespace

TEST_CASE("field files round-trip at f32 precision") {
  TempDir dir;
  const GridDesc g2 = GridDesc::make2(5, 7, 1.25, 0.8);
  const ScalarField s = random_field(g2, 1, -3.0, 3.0);
  write_field(dir.file("s.vrf"), s);
  const ScalarField back = read_scalar_field(dir.file("s.vrf"));
  CHECK(back.grid() == g2);
  for (std::size_t i = 0; i < g2.size(); ++i) CHECK(back[i] == f32(s[i]));

  const GridDesc g3 = GridDesc::make3(3, 4, 5, 2.0, 1.0, 0.5);
  const VectorField v = random_vector(g3, 2);
  write_field(dir.file("v.vrf"), v);
  const VectorField vb = read_vector_field(dir.file("v.vrf"));
  CHECK(vb.grid() == g3);
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < g3.size(); ++i) CHECK(vb.component(c)[i] == f32(v.component(c)[i]));

  CHECK(std::holds_alternative<VectorField>(read_field(dir.file("v.vrf"))));
  CHECK_THROWS_AS(read_scalar_field(dir.file("v.vrf")), FormatError);
  CHECK_THROWS_AS(read_vector_field(dir.file("s.vrf")), FormatError);
  CHECK_THROWS_AS(read_field(dir.file("missing.vrf")), FormatError);
}

TEST_CASE("field file layout") {
  const GridDesc g = GridDesc::make2(4, 3);
  const ScalarField s = field2(g, [](int a, int b) { return a * 3 + b; });
  const std::string enc = encode_field(s);
  CHECK(enc.rfind("VRFIELD1\nrank 2\ndims 4 3\nspacing 1 1\nchannels 1\ndtype f32\nend\n", 0) == 0);
  CHECK(enc.size() == header_size(enc) + 48);
  // Sample (1, 2) = 5 sits at float index 5, little-endian.
  float x = 0.0f;
  std::memcpy(&x, enc.data() + header_size(enc) + 5 * 4, 4);
  CHECK(x == 5.0f);
  CHECK(static_cast<unsigned char>(enc[header_size(enc) + 4 * 4 + 3]) == 0x40);  // 4.0f = 0x40800000
}

TEST_CASE("corrupt field files are rejected whole") {
  const GridDesc g = GridDesc::make2(4, 3);
  const std::string good = encode_field(random_field(g, 3));
  std::string bad = good;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_field(bytes_of(bad)), FormatError);
  CHECK_THROWS_AS(decode_field(bytes_of(good.substr(0, good.size() - 1))), FormatError);
  CHECK_THROWS_AS(decode_field(bytes_of(good + "x")), FormatError);

  std::string big = "VRFIELD1\nrank 3\ndims 16777216 16777216 16777216\nspacing 1 1 1\nchannels 1\ndtype f32\nend\n";
  CHECK_THROWS_AS(decode_field(bytes_of(big)), FormatError);
  std::string f64 = good;
  f64.replace(f64.find("f32"), 3, "f64");
  CHECK_THROWS_AS(decode_field(bytes_of(f64)), FormatError);
  std::string ch = good;
  ch.replace(ch.find("channels 1"), 10, "channels 3");
  CHECK_THROWS_AS(decode_field(bytes_of(ch)), FormatError);

  std::string nan = good;
  const float q = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(nan.data() + header_size(nan), &q, 4);
  CHECK_THROWS_AS(decode_field(bytes_of(nan)), FormatError);

  CHECK_THROWS_AS(encode_field(ScalarField(g, 1e300)), NumericalError);
}

TEST_CASE("PGM round trip and parsing") {
  const GridDesc g = GridDesc::make2(6, 9);
  const ScalarField img = random_field(g, 4);
  const ScalarField back = decode_pgm(bytes_of(encode_pgm(img)));
  CHECK(back.grid().dim(0) == 6);
  CHECK(back.grid().dim(1) == 9);
  CHECK(max_abs_diff(img, back) <= 1.0 / 510.0);

  const std::string commented = std::string("P5\n# made by hand\n3 # width\n2\n# depth next\n255\n") + std::string("\x00\x7f\xff\x10\x20\x30", 6);
  const ScalarField c = decode_pgm(bytes_of(commented));
  REQUIRE(c.grid().dim(0) == 2);
  REQUIRE(c.grid().dim(1) == 3);
  CHECK(c.at(0, 1) == 127.0 / 255.0);
  CHECK(c.at(1, 2) == 48.0 / 255.0);

  // Two 16-bit samples, most significant byte first: 0x0102 and 0xff00.
  const std::string wide = std::string("P5 2 2 65535\n") + std::string("\x01\x02\xff\x00\x00\x00\x00\x01", 8);
  const ScalarField w = decode_pgm(bytes_of(wide));
  CHECK(w.at(0, 0) == 258.0 / 65535.0);
  CHECK(w.at(0, 1) == 65280.0 / 65535.0);
  CHECK(w.at(1, 1) == 1.0 / 65535.0);
  CHECK(encode_pgm(w, 65535).substr(encode_pgm(w, 65535).size() - 8) == std::string("\x01\x02\xff\x00\x00\x00\x00\x01", 8));

  CHECK_THROWS_AS(decode_pgm(bytes_of(std::string("P5 2 2 1000\n12345678"))), FormatError);
  CHECK_THROWS_AS(decode_pgm(bytes_of(std::string("P2 2 2 255\n1 2 3 4"))), FormatError);
  CHECK_THROWS_AS(decode_pgm(bytes_of(std::string("P5 2 2 255\n123"))), FormatError);
}

TEST_CASE("read_image picks the format by magic") {
  TempDir dir;
  const GridDesc g = GridDesc::make2(4, 5);
  const ScalarField img = random_field(g, 5);
  write_pgm(dir.file("a.pgm"), img);
  write_field(dir.file("a.vrf"), img);
  CHECK(max_abs_diff(read_image(dir.file("a.pgm")), img) <= 1.0 / 510.0);
  CHECK(max_abs_diff(read_image(dir.file("a.vrf")), img) <= 1e-7);
}

TEST_CASE("flow visualisation") {
  const GridDesc g = GridDesc::make2(3, 4);
  const std::string zero = encode_flow_ppm(VectorField(g));
  CHECK(zero.rfind("P6\n4 3\n255\n", 0) == 0);
  for (std::size_t i = zero.size() - 36; i < zero.size(); ++i) CHECK(static_cast<unsigned char>(zero[i]) == 255);

  const std::string red = encode_flow_ppm(constant_vector(g, {1.0, 0.0}));
  for (std::size_t i = red.size() - 36; i < red.size(); i += 3) {
    CHECK(static_cast<unsigned char>(red[i]) == 255);
    CHECK(static_cast<unsigned char>(red[i + 1]) == 0);
    CHECK(static_cast<unsigned char>(red[i + 2]) == 0);
  }
  CHECK_THROWS_AS(encode_flow_ppm(VectorField(GridDesc::make3(2, 2, 2))), InvalidArgument);
}

TEST_CASE("flow wheel against a per-pixel recomputation") {
  const GridDesc g = GridDesc::make2(21, 21);
  const VectorField u(std::vector<ScalarField>{field2(g, [](int a, int) { return a - 10.0; }),
                                               field2(g, [](int, int b) { return b - 10.0; })});
  const std::string ppm = encode_flow_ppm(u);
  const std::size_t off = ppm.size() - 3 * g.size();
  const double peak = std::hypot(10.0, 10.0);
  for (int a = 0; a < 21; ++a)
    for (int b = 0; b < 21; ++b) {
      const double x = a - 10.0, y = b - 10.0;
      double hue = std::atan2(y, x) * 180.0 / std::numbers::pi;
      if (hue < 0) hue += 360.0;
      const double sat = std::hypot(x, y) / peak;
      // HSV to RGB via f(n) = v - v s max(0, min(k, 4 - k, 1)), k = (n + h / 60) mod 6.
      for (int ch = 0; ch < 3; ++ch) {
        const int n = ch == 0 ? 5 : ch == 1 ? 3 : 1;
        const double k = std::fmod(n + hue / 60.0, 6.0);
        const double f = 1.0 - sat * std::max(0.0, std::min({k, 4.0 - k, 1.0}));
        const int want = static_cast<int>(std::lround(f * 255.0));
        const int got = static_cast<unsigned char>(ppm[off + 3 * static_cast<std::size_t>(a * 21 + b) + ch]);
        CHECK(std::abs(got - want) <= 1);
      }
    }
}

TEST_CASE("weights round trip and integrity") {
  CascadeParams p = make_cascade_params(2, Sharing::Theta2, 2, 1, 4, true, 0.01, 6);
  for (auto& d : p.denoisers) randomize_conv_net(d, 0.1, 7);
  const std::string enc = encode_weights(p);
  CHECK(enc.rfind("VRWGHT1\n", 0) == 0);
  const CascadeParams back = decode_weights(bytes_of(enc));
  CHECK(back.sharing == p.sharing);
  CHECK(back.n_warp == 2);
  CHECK(back.init_net.has_value());
  const auto a = flatten(p), b = flatten(back);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == f32(a[i]));
  CHECK(encode_weights(back) == enc);

  std::string flipped = enc;
  flipped[enc.size() - 20] ^= 0x01;
  CHECK_THROWS_AS(decode_weights(bytes_of(flipped)), FormatError);
  CHECK_THROWS_AS(decode_weights(bytes_of(enc.substr(0, enc.size() - 3))), FormatError);
  std::string magic = enc;
  magic[2] = 'x';
  CHECK_THROWS_AS(decode_weights(bytes_of(magic)), FormatError);

  TempDir dir;
  write_weights(dir.file("w.bin"), p);
  CHECK(flatten(read_weights(dir.file("w.bin"))) == b);
}

TEST_CASE("FNV-1a reference values") {
  CHECK(fnv1a64(bytes_of("")) == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64(bytes_of("a")) == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64(bytes_of("foobar")) == 0x85944171f73967e8ULL);
}

TEST_CASE("atomic writes leave no temporary files") {
  TempDir dir;
  write_file_atomic(dir.file("out.txt"), "first");
  write_file_atomic(dir.file("out.txt"), "second");
  const auto content = read_file(dir.file("out.txt"));
  CHECK(std::string(content.begin(), content.end()) == "second");
  int entries = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir.path)) ++entries;
  CHECK(entries == 1);
}
