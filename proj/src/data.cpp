#include "advbench/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "advbench/errors.hpp"
#include "advbench/model_io.hpp"
#include "advbench/rng.hpp"

namespace advbench {

bool Dataset::has_targets() const {
  return !examples.empty() &&
         std::all_of(examples.begin(), examples.end(), [](const auto& e) { return e.target.has_value(); });
}

void validate_dataset(const Dataset& ds) {
  for (std::size_t i = 0; i < ds.examples.size(); ++i) {
    const auto& e = ds.examples[i];
    if (e.label >= ds.num_classes)
      throw FormatError("example " + std::to_string(i) + " has label out of range");
    if (e.input.shape() != ds.input_shape)
      throw FormatError("example " + std::to_string(i) + " has wrong shape");
    for (double v : e.input.values())
      if (!(v >= 0.0 && v <= 1.0))
        throw FormatError("example " + std::to_string(i) + " has a pixel outside [0,1]");
    if (e.target && (*e.target == e.label || *e.target >= ds.num_classes))
      throw FormatError("example " + std::to_string(i) + " has an invalid target");
  }
}

namespace {

std::uint32_t be_u32(const std::vector<std::uint8_t>& b, std::size_t off) {
  if (off + 4 > b.size()) throw FormatError("IDX header truncated");
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
         (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

void put_be_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

}  // namespace

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path) {
  const auto img = read_file_bytes(images_path);
  const auto lab = read_file_bytes(labels_path);
  if (img.size() < 16) throw FormatError("IDX image file too short: " + images_path.string());
  if (lab.size() < 8) throw FormatError("IDX label file too short: " + labels_path.string());
  const auto im = be_u32(img, 0);
  if (im != kImagesMagic)
    throw FormatError("bad IDX image magic " + std::to_string(im) + " in " + images_path.string());
  const auto lm = be_u32(lab, 0);
  if (lm != kLabelsMagic)
    throw FormatError("bad IDX label magic " + std::to_string(lm) + " in " + labels_path.string());
  const std::size_t n = be_u32(img, 4), rows = be_u32(img, 8), cols = be_u32(img, 12);
  const std::size_t nl = be_u32(lab, 4);
  if (n != nl) throw FormatError("IDX image count " + std::to_string(n) + " != label count " + std::to_string(nl));
  if (rows == 0 || cols == 0) throw FormatError("IDX images have a zero dimension");
  const std::size_t px = rows * cols;
  if (img.size() != 16 + n * px) throw FormatError("IDX image file truncated or oversized");
  if (lab.size() != 8 + n) throw FormatError("IDX label file truncated or oversized");

  Dataset ds;
  ds.name = images_path.stem().string();
  ds.input_shape = Shape{1, rows, cols};
  ds.examples.reserve(n);
  std::size_t max_label = 1;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> pixels(px);
    for (std::size_t k = 0; k < px; ++k) pixels[k] = img[16 + i * px + k] / 255.0;
    const std::size_t label = lab[8 + i];
    max_label = std::max(max_label, label);
    ds.examples.push_back({Tensor(ds.input_shape, std::move(pixels)), label, std::nullopt});
  }
  ds.num_classes = max_label + 1;
  return ds;
}

void write_idx(const Dataset& ds, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path) {
  if (ds.input_shape.size() != 3 || ds.input_shape[0] != 1)
    throw InvalidInput("write_idx needs single-channel (1,H,W) images");
  std::vector<std::uint8_t> img, lab;
  put_be_u32(img, kImagesMagic);
  put_be_u32(img, static_cast<std::uint32_t>(ds.size()));
  put_be_u32(img, static_cast<std::uint32_t>(ds.input_shape[1]));
  put_be_u32(img, static_cast<std::uint32_t>(ds.input_shape[2]));
  put_be_u32(lab, kLabelsMagic);
  put_be_u32(lab, static_cast<std::uint32_t>(ds.size()));
  for (const auto& e : ds.examples) {
    for (double v : e.input.values())
      img.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
    if (e.label > 255) throw InvalidInput("IDX labels must fit in a byte");
    lab.push_back(static_cast<std::uint8_t>(e.label));
  }
  write_file_bytes(images_path, img);
  write_file_bytes(labels_path, lab);
}

Dataset load_csv(const std::filesystem::path& path, std::size_t num_classes) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  Dataset ds;
  ds.name = path.stem().string();
  std::string line;
  std::size_t lineno = 0, max_label = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (cell.find_first_not_of(" \t\r", used) != std::string::npos) numeric = false;
      } catch (const std::exception&) {
        numeric = false;
      }
    }
    if (!numeric) {
      if (lineno == 1 && ds.examples.empty()) continue;  // header
      throw FormatError("non-numeric CSV row at line " + std::to_string(lineno));
    }
    if (row.size() < 2) throw FormatError("CSV row needs a label and features at line " + std::to_string(lineno));
    const double lab = row.front();
    if (lab < 0 || lab != std::floor(lab))
      throw FormatError("CSV label must be a nonnegative integer at line " + std::to_string(lineno));
    std::vector<double> feats(row.begin() + 1, row.end());
    for (double v : feats)
      if (!(v >= 0.0 && v <= 1.0))
        throw FormatError("CSV feature outside [0,1] at line " + std::to_string(lineno));
    if (ds.input_shape.empty()) ds.input_shape = Shape{feats.size()};
    if (feats.size() != ds.input_shape[0])
      throw FormatError("CSV row width changes at line " + std::to_string(lineno));
    const auto label = static_cast<std::size_t>(lab);
    max_label = std::max(max_label, label);
    ds.examples.push_back({Tensor(ds.input_shape, std::move(feats)), label, std::nullopt});
  }
  if (ds.examples.empty()) throw FormatError("CSV file has no examples: " + path.string());
  ds.num_classes = num_classes ? num_classes : max_label + 1;
  validate_dataset(ds);
  return ds;
}

SyntheticKind synthetic_kind_from_string(const std::string& name) {
  if (name == "two_gaussians") return SyntheticKind::two_gaussians;
  if (name == "xor_grid") return SyntheticKind::xor_grid;
  throw ConfigError("unknown synthetic dataset '" + name + "'");
}

Dataset gen_synthetic(SyntheticKind kind, std::size_t n, std::uint64_t seed) {
  if (n < 2) throw InvalidInput("synthetic dataset needs n >= 2");
  Rng rng(seed);
  Dataset ds;
  ds.num_classes = 2;
  ds.input_shape = Shape{2};
  ds.examples.reserve(n);
  if (kind == SyntheticKind::two_gaussians) {
    ds.name = "two_gaussians";
    std::normal_distribution<double> nd(0.0, std::sqrt(0.1));
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t label = i % 2;
      const double mean = label == 0 ? -1.0 : 1.0;
      const double x0 = mean + nd(rng), x1 = nd(rng);
      Tensor t = Tensor::vec({std::clamp(0.5 + 0.3 * x0, 0.0, 1.0), std::clamp(0.5 + 0.3 * x1, 0.0, 1.0)});
      ds.examples.push_back({std::move(t), label, std::nullopt});
    }
  } else {
    ds.name = "xor_grid";
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    constexpr double cells = 6.0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t label = i % 2;
      // rejection-sample a point in a cell of the right parity
      for (;;) {
        const double u0 = ud(rng), u1 = ud(rng);
        const auto c0 = static_cast<std::size_t>(std::min(u0 * cells, cells - 1));
        const auto c1 = static_cast<std::size_t>(std::min(u1 * cells, cells - 1));
        if ((c0 + c1) % 2 == label) {
          ds.examples.push_back({Tensor::vec({u0, u1}), label, std::nullopt});
          break;
        }
      }
    }
  }
  return ds;
}

Dataset assign_targets(Dataset ds, std::uint64_t seed) {
  if (ds.num_classes < 2) throw InvalidInput("assign_targets needs at least two classes");
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, ds.num_classes - 2);
  for (auto& e : ds.examples) {
    const std::size_t r = pick(rng);
    e.target = r < e.label ? r : r + 1;
  }
  return ds;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, std::size_t first_count,
                                          std::uint64_t seed) {
  if (first_count > ds.size()) throw InvalidInput("split larger than dataset");
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  // Fisher-Yates with an explicit draw so the order is library-independent
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = rng() % i;
    std::swap(idx[i - 1], idx[j]);
  }
  Dataset a, b;
  a.name = ds.name + "/train";
  b.name = ds.name + "/test";
  a.num_classes = b.num_classes = ds.num_classes;
  a.input_shape = b.input_shape = ds.input_shape;
  for (std::size_t k = 0; k < idx.size(); ++k)
    (k < first_count ? a : b).examples.push_back(ds.examples[idx[k]]);
  return {std::move(a), std::move(b)};
}

Dataset head(const Dataset& ds, std::size_t n) {
  Dataset out = ds;
  if (out.examples.size() > n) out.examples.resize(n);
  return out;
}

}  // namespace advbench
