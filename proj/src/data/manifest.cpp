#include "cxr/data/manifest.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cxr/common/csv.hpp"
#include "cxr/common/error.hpp"
#include "cxr/common/log.hpp"
#include "cxr/common/random.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cxr {
namespace {

bool has_image_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".jpeg" || ext == ".jpg" || ext == ".png";
}

// Cheap readability probe: the file opens and starts with a JPEG or PNG magic.
bool looks_like_image(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return false;
  std::array<unsigned char, 4> magic{};
  in.read(reinterpret_cast<char*>(magic.data()), magic.size());
  if (in.gcount() < 3) return false;
  const bool jpeg = magic[0] == 0xFF && magic[1] == 0xD8 && magic[2] == 0xFF;
  const bool png = in.gcount() == 4 && magic[0] == 0x89 && magic[1] == 'P' && magic[2] == 'N' &&
                   magic[3] == 'G';
  return jpeg || png;
}

}  // namespace

void SplitRatios::validate() const {
  for (double r : {train, val, test})
    if (!std::isfinite(r) || r < 0.0) throw ConfigError("split ratios must be finite and >= 0");
  if (std::abs(train + val + test - 1.0) > 1e-9)
    throw ConfigError("split ratios must sum to 1");
}

SplitCounts SplitManifest::counts() const {
  SplitCounts c{};
  for (const auto& r : records) ++c[index_of(r.split)][index_of(r.label)];
  return c;
}

std::size_t SplitManifest::count(Split split) const {
  const auto c = counts();
  return c[index_of(split)][0] + c[index_of(split)][1];
}

std::size_t SplitManifest::count(Split split, Label label) const {
  return counts()[index_of(split)][index_of(label)];
}

std::vector<ImageRecord> SplitManifest::records_in(Split split) const {
  std::vector<ImageRecord> out;
  for (const auto& r : records)
    if (r.split == split) out.push_back(r);
  return out;
}

void SplitManifest::validate_unique_ids() const {
  std::set<std::string_view> seen;
  for (const auto& r : records)
    if (!seen.insert(r.id).second) throw DataError("duplicate record id '" + r.id + "'");
}

ClassDirs default_class_dirs() {
  return {{Label::kNormal, "NORMAL"}, {Label::kPneumonia, "PNEUMONIA"}};
}

ScanResult scan_dataset_dir(const fs::path& root, const ClassDirs& class_dirs) {
  if (!fs::is_directory(root)) throw DataError("dataset root not found: " + root.string());
  ScanResult result;
  for (const auto& [label, dirname] : class_dirs) {
    const fs::path dir = root / dirname;
    if (!fs::is_directory(dir))
      throw DataError("class directory not found: " + dir.string());
    std::size_t found = 0;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (!entry.is_regular_file() || !has_image_extension(entry.path())) continue;
      const std::string id = (fs::path(dirname) / entry.path().filename()).generic_string();
      std::error_code ec;
      const auto size = fs::file_size(entry.path(), ec);
      if (ec || size == 0 || !looks_like_image(entry.path())) {
        log::warn("skipping unreadable image " + id);
        ++result.skipped;
        continue;
      }
      result.manifest.records.push_back({id, label, Split::kUnassigned});
      ++found;
    }
    if (found == 0) log::warn("class directory " + dir.string() + " contains no images");
  }
  std::sort(result.manifest.records.begin(), result.manifest.records.end(),
            [](const ImageRecord& a, const ImageRecord& b) { return a.id < b.id; });
  if (result.skipped > 0)
    log::warn("skipped " + std::to_string(result.skipped) + " unreadable file(s)");
  return result;
}

std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitRatios& ratios) {
  // The epsilon keeps products such as 0.8 * 3875 from flooring to 3099.
  const auto portion = [n](double r) {
    return static_cast<std::size_t>(std::floor(r * static_cast<double>(n) + 1e-9));
  };
  const std::size_t train = std::min(portion(ratios.train), n);
  const std::size_t val = std::min(portion(ratios.val), n - train);
  return {train, val, n - train - val};
}

SplitManifest stratified_split(const SplitManifest& manifest, const SplitRatios& ratios,
                               std::uint64_t seed) {
  ratios.validate();
  manifest.validate_unique_ids();
  SplitManifest out = manifest;
  out.seed = seed;
  out.ratios = ratios;

  Rng rng(seed);
  for (Label label : kAllLabels) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < out.records.size(); ++i) {
      if (out.records[i].label != label) continue;
      if (out.records[i].split != Split::kUnassigned)
        throw DataError("record '" + out.records[i].id + "' is already assigned to a split");
      members.push_back(i);
    }
    if (members.empty()) continue;
    if (members.size() < 3)
      throw DataError("class " + std::string(to_string(label)) + " has " +
                      std::to_string(members.size()) +
                      " record(s); at least 3 are needed to populate every split");
    shuffle(std::span<std::size_t>(members), rng);
    const auto sizes = split_sizes(members.size(), ratios);
    for (std::size_t k = 0; k < members.size(); ++k) {
      Split s = Split::kTest;
      if (k < sizes[0]) s = Split::kTrain;
      else if (k < sizes[0] + sizes[1]) s = Split::kVal;
      out.records[members[k]].split = s;
    }
  }
  return out;
}

fs::path manifest_sidecar_path(const fs::path& csv_path) {
  fs::path p = csv_path;
  p.replace_extension(".json");
  return p;
}

void write_manifest(const SplitManifest& manifest, const fs::path& csv_path) {
  csv::Table table;
  table.header = {"id", "label", "split"};
  for (const auto& r : manifest.records)
    table.rows.push_back({r.id, std::string(to_string(r.label)), std::string(to_string(r.split))});
  csv::write(csv_path, table);

  json counts = json::object();
  const auto c = manifest.counts();
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest, Split::kUnassigned}) {
    json per = json::object();
    for (Label l : kAllLabels) per[std::string(to_string(l))] = c[index_of(s)][index_of(l)];
    counts[std::string(to_string(s))] = per;
  }
  const json sidecar = {
      {"seed", manifest.seed},
      {"ratios", {manifest.ratios.train, manifest.ratios.val, manifest.ratios.test}},
      {"counts", counts},
  };
  std::ofstream out(manifest_sidecar_path(csv_path));
  out << sidecar.dump(2) << '\n';
}

SplitManifest read_manifest(const fs::path& csv_path) {
  const auto table = csv::read(csv_path);
  const auto id_col = table.column("id");
  const auto label_col = table.column("label");
  const auto split_col = table.column("split");
  SplitManifest m;
  for (const auto& row : table.rows)
    m.records.push_back({row[id_col], parse_label(row[label_col]), parse_split(row[split_col])});
  m.validate_unique_ids();

  const auto sidecar = manifest_sidecar_path(csv_path);
  std::ifstream in(sidecar);
  if (!in) throw DataError("manifest sidecar missing: " + sidecar.string());
  try {
    const json j = json::parse(in);
    m.seed = j.at("seed").get<std::uint64_t>();
    const auto& r = j.at("ratios");
    m.ratios = {r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>()};
  } catch (const json::exception& e) {
    throw DataError("malformed manifest sidecar " + sidecar.string() + ": " + e.what());
  }
  return m;
}

}  // namespace cxr
