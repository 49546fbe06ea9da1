#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "advbench/data.hpp"
#include "advbench/errors.hpp"
#include "advbench/model_io.hpp"
#include "../test_util.hpp"

using namespace advbench;
using namespace advbench::testing;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / "advbench_test_data_io";
  fs::create_directories(dir);
  return dir / name;
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream f(p, std::ios::binary);
  f.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

void be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

// Byte-level IDX pair in the layout of the standard 10k test split.
void write_canonical(const fs::path& img, const fs::path& lab, std::uint32_t n = 10000) {
  std::vector<std::uint8_t> i, l;
  be32(i, 0x803);
  be32(i, n);
  be32(i, 28);
  be32(i, 28);
  for (std::uint32_t k = 0; k < n * 784; ++k) i.push_back(static_cast<std::uint8_t>((k * 2654435761u) >> 24));
  be32(l, 0x801);
  be32(l, n);
  for (std::uint32_t k = 0; k < n; ++k) l.push_back(static_cast<std::uint8_t>(k % 10));
  write_bytes(img, i);
  write_bytes(lab, l);
}

std::uint32_t hex_field(const fs::path& p, int offset) {
  std::ifstream f(p, std::ios::binary);
  f.seekg(offset);
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

}  // namespace

TEST(LoadIdx, CanonicalTestSplit) {
  auto img = scratch("t10k-images.idx"), lab = scratch("t10k-labels.idx");
  write_canonical(img, lab);
  auto ds = load_idx(img, lab);
  EXPECT_EQ(ds.size(), hex_field(img, 4));
  EXPECT_EQ(ds.size(), hex_field(lab, 4));
  EXPECT_EQ(ds.size(), 10000u);
  EXPECT_EQ(ds.input_shape, (Shape{1, hex_field(img, 8), hex_field(img, 12)}));
  EXPECT_EQ(ds.input_shape, (Shape{1, 28, 28}));
  EXPECT_EQ(ds.num_classes, 10u);
  std::ifstream f(img, std::ios::binary);
  f.seekg(16 + 5 * 784 + 100);
  const int raw = f.get();
  EXPECT_EQ(ds.examples[5].input[100], raw / 255.0);
  EXPECT_EQ(ds.examples[7].label, 7u);
  EXPECT_NO_THROW(validate_dataset(ds));
}

TEST(LoadIdx, PixelsScaledBy255) {
  auto img = scratch("scale-images.idx"), lab = scratch("scale-labels.idx");
  std::vector<std::uint8_t> i, l;
  be32(i, 0x803), be32(i, 1), be32(i, 1), be32(i, 3);
  i.insert(i.end(), {0, 128, 255});
  be32(l, 0x801), be32(l, 1);
  l.push_back(1);
  write_bytes(img, i);
  write_bytes(lab, l);
  auto ds = load_idx(img, lab);
  EXPECT_EQ(ds.examples[0].input[0], 0.0);
  EXPECT_EQ(ds.examples[0].input[1], 128.0 / 255.0);
  EXPECT_EQ(ds.examples[0].input[2], 1.0);
}

TEST(LoadIdx, LabelMagicAsImageFileRejected) {
  auto img = scratch("m-images.idx"), lab = scratch("m-labels.idx");
  write_canonical(img, lab, 3);
  EXPECT_THROW(load_idx(lab, lab), FormatError);
  EXPECT_THROW(load_idx(img, img), FormatError);
}

TEST(LoadIdx, EmptyAndTruncatedFilesRejected) {
  auto img = scratch("e-images.idx"), lab = scratch("e-labels.idx"), empty = scratch("empty.idx");
  write_canonical(img, lab, 4);
  write_bytes(empty, {});
  EXPECT_THROW(load_idx(empty, lab), FormatError);
  EXPECT_THROW(load_idx(img, empty), FormatError);
  auto bytes = read_file_bytes(img);
  bytes.resize(bytes.size() - 1);
  auto trunc = scratch("trunc-images.idx");
  write_bytes(trunc, bytes);
  EXPECT_THROW(load_idx(trunc, lab), FormatError);
}

TEST(LoadIdx, CountMismatchRejected) {
  auto img = scratch("c-images.idx"), lab = scratch("c-labels.idx"), lab2 = scratch("c2-labels.idx");
  write_canonical(img, lab, 4);
  write_canonical(scratch("unused.idx"), lab2, 5);
  EXPECT_THROW(load_idx(img, lab2), FormatError);
}

TEST(LoadIdx, WriteReadRoundTrip) {
  auto ds = load_idx(ADVBENCH_TEST_DATA "/digits16-images.idx", ADVBENCH_TEST_DATA "/digits16-labels.idx");
  EXPECT_EQ(ds.size(), 1797u);
  auto img = scratch("rt-images.idx"), lab = scratch("rt-labels.idx");
  write_idx(ds, img, lab);
  EXPECT_EQ(read_file_bytes(img), read_file_bytes(ADVBENCH_TEST_DATA "/digits16-images.idx"));
  EXPECT_EQ(read_file_bytes(lab), read_file_bytes(ADVBENCH_TEST_DATA "/digits16-labels.idx"));
}

TEST(LoadCsv, HeaderAndValues) {
  auto p = scratch("small.csv");
  std::ofstream(p) << "label,a,b\n1,0.25,1\n0,0,0.5\n";
  auto ds = load_csv(p);
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.input_shape, (Shape{2}));
  EXPECT_EQ(ds.num_classes, 2u);
  EXPECT_EQ(ds.examples[0].input, Tensor::vec({0.25, 1.0}));
  EXPECT_EQ(ds.examples[1].label, 0u);
}

TEST(LoadCsv, OutOfRangePixelRejected) {
  auto p = scratch("bad.csv");
  std::ofstream(p) << "1,0.25,1.5\n";
  EXPECT_THROW(load_csv(p), FormatError);
}

TEST(Synthetic, TwoGaussiansDeterministic) {
  auto a = gen_synthetic(SyntheticKind::two_gaussians, 100, 7);
  auto b = gen_synthetic(SyntheticKind::two_gaussians, 100, 7);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.examples[i].input, b.examples[i].input);
    EXPECT_EQ(a.examples[i].label, b.examples[i].label);
  }
  auto c = gen_synthetic(SyntheticKind::two_gaussians, 100, 8);
  EXPECT_NE(a.examples[0].input, c.examples[0].input);
}

TEST(Synthetic, TwoGaussiansSeparatedByFirstCoordinate) {
  auto ds = gen_synthetic(SyntheticKind::two_gaussians, 20000, 3);
  // w = (1,0) through the mapped mean midpoint
  std::size_t correct = 0;
  for (const auto& e : ds.examples) correct += ((e.input[0] - 0.5 > 0) ? 1u : 0u) == e.label;
  EXPECT_GT(static_cast<double>(correct) / ds.size(), 0.99);
  validate_dataset(ds);
}

TEST(Synthetic, XorGridDefeatsLinearRules) {
  auto ds = gen_synthetic(SyntheticKind::xor_grid, 2000, 5);
  Rng rng(6);
  std::normal_distribution<double> nd;
  double best = 0;
  for (int t = 0; t < 10000; ++t) {
    const double w0 = nd(rng), w1 = nd(rng), b = nd(rng) * 0.7;
    std::size_t c = 0;
    for (const auto& e : ds.examples) c += ((w0 * e.input[0] + w1 * e.input[1] + b > 0) ? 1u : 0u) == e.label;
    best = std::max(best, static_cast<double>(c) / ds.size());
  }
  EXPECT_LE(best, 0.60);
}

TEST(Synthetic, TooFewExamplesRejected) {
  EXPECT_THROW(gen_synthetic(SyntheticKind::xor_grid, 1, 0), InvalidInput);
}

TEST(AssignTargets, BinaryIsForced) {
  auto ds = assign_targets(gen_synthetic(SyntheticKind::two_gaussians, 50, 1), 9);
  for (const auto& e : ds.examples) EXPECT_EQ(*e.target, 1 - e.label);
}

TEST(AssignTargets, UniformOverOtherClasses) {
  Dataset ds;
  ds.num_classes = 10;
  ds.input_shape = Shape{1};
  for (int i = 0; i < 10000; ++i) ds.examples.push_back({Tensor::vec({0.0}), 4, std::nullopt});
  ds = assign_targets(ds, 12);
  std::vector<double> freq(10, 0);
  for (const auto& e : ds.examples) {
    ASSERT_NE(*e.target, e.label);
    freq[*e.target] += 1;
  }
  const double p = 1.0 / 9, n = 10000, sigma = std::sqrt(n * p * (1 - p));
  for (std::size_t k = 0; k < 10; ++k) {
    if (k == 4) continue;
    EXPECT_LT(std::abs(freq[k] - n * p), 4 * sigma) << "class " << k;
  }
  auto again = assign_targets(ds, 12);
  for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(ds.examples[i].target, again.examples[i].target);
}

TEST(ModelIo, BinaryRoundTripIsByteIdentical) {
  for (const char* arch : {"linear", "mlp:7,5", "lenet"}) {
    auto m = make_classifier(arch, Shape{1, 8, 8}, 4, 3);
    auto p = scratch(std::string("m-") + arch[0] + ".advb");
    save_model(m, p);
    const auto bytes = read_file_bytes(p);
    auto back = load_model(p);
    EXPECT_EQ(encode_model(back), bytes);
    Rng rng(1);
    auto x = random_tensor({1, 8, 8}, rng);
    EXPECT_EQ(m.forward(x), back.forward(x));
  }
}

TEST(ModelIo, HeaderLayout) {
  auto m = make_classifier("linear", Shape{3}, 2, 1);
  auto b = encode_model(m);
  ASSERT_GE(b.size(), 12u);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "ADVB");
  EXPECT_EQ(b[4] | b[5] << 8 | b[6] << 16 | b[7] << 24, 1);
  // input record plus one dense layer
  EXPECT_EQ(b[8] | b[9] << 8 | b[10] << 16 | b[11] << 24, 2);
}

TEST(ModelIo, CorruptFilesRejected) {
  auto b = encode_model(make_classifier("mlp:3", Shape{2}, 2, 1));
  auto bad = b;
  bad[0] = 'X';
  EXPECT_THROW(decode_model(bad), FormatError);
  auto trunc = b;
  trunc.pop_back();
  EXPECT_THROW(decode_model(trunc), FormatError);
  EXPECT_THROW(decode_model({}), FormatError);
}

TEST(ModelIo, JsonMirror) {
  auto m = make_classifier("mlp:4", Shape{3}, 2, 8);
  auto back = model_from_json(model_to_json(m));
  EXPECT_EQ(encode_model(back), encode_model(m));
  EXPECT_EQ(base64_decode(base64_encode({1, 2, 3, 250})), (std::vector<std::uint8_t>{1, 2, 3, 250}));
  EXPECT_EQ(base64_encode({'f', 'o', 'o', 'b'}), "Zm9vYg==");
}

TEST(Split, PartitionsAllExamples) {
  auto ds = gen_synthetic(SyntheticKind::xor_grid, 101, 2);
  auto [a, b] = split_dataset(ds, 80, 3);
  EXPECT_EQ(a.size(), 80u);
  EXPECT_EQ(b.size(), 21u);
  EXPECT_EQ(head(ds, 5).size(), 5u);
}
