#include "advbench/model_io.hpp"

#include <openssl/evp.h>

#include <bit>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>

#include "advbench/errors.hpp"

namespace advbench {

namespace {

enum class Tag : std::uint8_t { input = 0, dense = 1, conv3x3 = 2, relu = 3, flatten = 4, avgpool2 = 5 };

struct Record {
  Tag tag;
  std::vector<std::uint32_t> dims;
  std::vector<double> weights;
};

std::vector<Record> to_records(const Classifier& model) {
  std::vector<Record> recs;
  Record in{Tag::input, {}, {}};
  for (auto d : model.input_shape()) in.dims.push_back(static_cast<std::uint32_t>(d));
  recs.push_back(std::move(in));
  for (const auto& layer : model.layers()) {
    Record r{};
    auto put = [&](const Tensor& w, const Tensor& b) {
      for (auto d : w.shape()) r.dims.push_back(static_cast<std::uint32_t>(d));
      r.weights.assign(w.values().begin(), w.values().end());
      r.weights.insert(r.weights.end(), b.values().begin(), b.values().end());
    };
    if (auto* d = std::get_if<DenseLayer>(&layer)) {
      r.tag = Tag::dense;
      put(d->weight, d->bias);
    } else if (auto* c = std::get_if<Conv3x3Layer>(&layer)) {
      r.tag = Tag::conv3x3;
      put(c->kernel, c->bias);
    } else if (std::holds_alternative<ReluLayer>(layer)) {
      r.tag = Tag::relu;
    } else if (std::holds_alternative<FlattenLayer>(layer)) {
      r.tag = Tag::flatten;
    } else {
      r.tag = Tag::avgpool2;
    }
    recs.push_back(std::move(r));
  }
  return recs;
}

std::size_t expected_weight_count(Tag tag, const std::vector<std::uint32_t>& dims) {
  switch (tag) {
    case Tag::dense:
      if (dims.size() != 2) throw FormatError("dense record needs 2 dims");
      return std::size_t{dims[0]} * dims[1] + dims[0];
    case Tag::conv3x3:
      if (dims.size() != 4 || dims[2] != 3 || dims[3] != 3)
        throw FormatError("conv3x3 record needs dims (out,in,3,3)");
      return std::size_t{dims[0]} * dims[1] * 9 + dims[0];
    case Tag::input:
      if (dims.empty()) throw FormatError("input record needs at least one dim");
      return 0;
    default:
      if (!dims.empty()) throw FormatError("parameter-free layer must have rank 0");
      return 0;
  }
}

Classifier from_records(const std::vector<Record>& recs) {
  if (recs.empty() || recs.front().tag != Tag::input)
    throw FormatError("model must start with an input record");
  Shape input;
  for (auto d : recs.front().dims) input.push_back(d);
  std::vector<Layer> layers;
  for (std::size_t i = 1; i < recs.size(); ++i) {
    const auto& r = recs[i];
    if (r.weights.size() != expected_weight_count(r.tag, r.dims))
      throw FormatError("weight count mismatch in layer " + std::to_string(i));
    auto split = [&](Shape wshape) {
      const std::size_t nw = shape_size(wshape);
      Tensor w(std::move(wshape), std::vector<double>(r.weights.begin(), r.weights.begin() + nw));
      Tensor b(Shape{r.dims[0]}, std::vector<double>(r.weights.begin() + nw, r.weights.end()));
      return std::pair{std::move(w), std::move(b)};
    };
    switch (r.tag) {
      case Tag::dense: {
        auto [w, b] = split(Shape{r.dims[0], r.dims[1]});
        layers.emplace_back(DenseLayer{std::move(w), std::move(b)});
        break;
      }
      case Tag::conv3x3: {
        auto [w, b] = split(Shape{r.dims[0], r.dims[1], 3, 3});
        layers.emplace_back(Conv3x3Layer{std::move(w), std::move(b)});
        break;
      }
      case Tag::relu: layers.emplace_back(ReluLayer{}); break;
      case Tag::flatten: layers.emplace_back(FlattenLayer{}); break;
      case Tag::avgpool2: layers.emplace_back(AvgPool2Layer{}); break;
      case Tag::input: throw FormatError("duplicate input record");
    }
  }
  try {
    return Classifier(std::move(input), std::move(layers));
  } catch (const InvalidInput& e) {
    throw FormatError(std::string("inconsistent model: ") + e.what());
  }
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw FormatError("model file truncated");
  }
  std::uint8_t u8() {
    need(1);
    return b_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{b_[pos_++]} << (8 * i);
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{b_[pos_++]} << (8 * i);
    return std::bit_cast<double>(v);
  }
  bool done() const { return pos_ == b_.size(); }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

const char* tag_name(Tag t) {
  switch (t) {
    case Tag::input: return "input";
    case Tag::dense: return "dense";
    case Tag::conv3x3: return "conv3x3";
    case Tag::relu: return "relu";
    case Tag::flatten: return "flatten";
    case Tag::avgpool2: return "avgpool2";
  }
  return "?";
}

Tag tag_from_name(const std::string& s) {
  for (int t = 0; t <= 5; ++t)
    if (s == tag_name(static_cast<Tag>(t))) return static_cast<Tag>(t);
  throw FormatError("unknown layer kind '" + s + "'");
}

}  // namespace

std::vector<std::uint8_t> encode_model(const Classifier& model) {
  std::vector<std::uint8_t> out{'A', 'D', 'V', 'B'};
  put_u32(out, kModelFormatVersion);
  const auto recs = to_records(model);
  put_u32(out, static_cast<std::uint32_t>(recs.size()));
  for (const auto& r : recs) {
    out.push_back(static_cast<std::uint8_t>(r.tag));
    put_u32(out, static_cast<std::uint32_t>(r.dims.size()));
    for (auto d : r.dims) put_u32(out, d);
    for (double w : r.weights) put_f64(out, w);
  }
  return out;
}

Classifier decode_model(const std::vector<std::uint8_t>& bytes) {
  Reader rd(bytes);
  rd.need(4);
  if (!(rd.u8() == 'A' && rd.u8() == 'D' && rd.u8() == 'V' && rd.u8() == 'B'))
    throw FormatError("bad magic: not an ADVB model file");
  const auto version = rd.u32();
  if (version != kModelFormatVersion)
    throw FormatError("unsupported model format version " + std::to_string(version));
  const auto count = rd.u32();
  std::vector<Record> recs;
  for (std::uint32_t i = 0; i < count; ++i) {
    Record r{};
    const auto tag = rd.u8();
    if (tag > 5) throw FormatError("unknown layer tag " + std::to_string(tag));
    r.tag = static_cast<Tag>(tag);
    const auto rank = rd.u32();
    rd.need(std::size_t{rank} * 4);
    for (std::uint32_t k = 0; k < rank; ++k) r.dims.push_back(rd.u32());
    const auto nw = expected_weight_count(r.tag, r.dims);
    rd.need(nw * 8);
    r.weights.reserve(nw);
    for (std::size_t k = 0; k < nw; ++k) r.weights.push_back(rd.f64());
    recs.push_back(std::move(r));
  }
  if (!rd.done())
    throw FormatError("trailing " + std::to_string(rd.remaining()) + " bytes after model");
  return from_records(recs);
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void save_model(const Classifier& model, const std::filesystem::path& path) {
  write_file_bytes(path, encode_model(model));
}

Classifier load_model(const std::filesystem::path& path) { return decode_model(read_file_bytes(path)); }

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  if (bytes.empty()) return {};
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  if (text.empty()) return {};
  if (text.size() % 4 != 0) throw FormatError("base64 length not a multiple of 4");
  std::vector<std::uint8_t> out(3 * text.size() / 4);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw FormatError("invalid base64");
  // EVP_DecodeBlock keeps the zero bytes produced by '=' padding
  std::size_t pad = 0;
  if (text.ends_with("==")) pad = 2;
  else if (text.ends_with("=")) pad = 1;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

std::string model_to_json(const Classifier& model) {
  nlohmann::json j;
  j["format"] = "ADVB";
  j["version"] = kModelFormatVersion;
  j["layers"] = nlohmann::json::array();
  for (const auto& r : to_records(model)) {
    std::vector<std::uint8_t> blob;
    for (double w : r.weights) put_f64(blob, w);
    j["layers"].push_back({{"kind", tag_name(r.tag)}, {"dims", r.dims}, {"weights", base64_encode(blob)}});
  }
  return j.dump();
}

Classifier model_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    if (j.at("format") != "ADVB") throw FormatError("JSON model has wrong format tag");
    if (j.at("version").get<std::uint32_t>() != kModelFormatVersion)
      throw FormatError("unsupported JSON model version");
    std::vector<Record> recs;
    for (const auto& l : j.at("layers")) {
      Record r{};
      r.tag = tag_from_name(l.at("kind").get<std::string>());
      r.dims = l.at("dims").get<std::vector<std::uint32_t>>();
      const auto blob = base64_decode(l.at("weights").get<std::string>());
      if (blob.size() % 8 != 0) throw FormatError("weight blob not a multiple of 8 bytes");
      Reader rd(blob);
      while (!rd.done()) r.weights.push_back(rd.f64());
      recs.push_back(std::move(r));
    }
    return from_records(recs);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed JSON model: ") + e.what());
  }
}

}  // namespace advbench
