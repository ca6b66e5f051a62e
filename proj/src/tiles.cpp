#include "morai/tiles.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "morai/error.hpp"
#include "standard_manifest.hpp"

namespace morai {

namespace {

constexpr std::array<std::pair<TileCategory, std::string_view>, 8> kCategoryNames{{
    {TileCategory::kSolid, "solid"},
    {TileCategory::kBlock, "block"},
    {TileCategory::kEnemy, "enemy"},
    {TileCategory::kPipe, "pipe"},
    {TileCategory::kCollectible, "collectible"},
    {TileCategory::kDecoration, "decoration"},
    {TileCategory::kHazard, "hazard"},
    {TileCategory::kStructure, "structure"},
}};

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

[[noreturn]] void bad(int line_no, const std::string& what) {
  throw Error(ErrorCode::kBadManifest, "line " + std::to_string(line_no) + ": " + what);
}

}  // namespace

std::string_view to_string(TileCategory category) {
  for (auto [c, name] : kCategoryNames) {
    if (c == category) return name;
  }
  return "unknown";
}

std::optional<TileCategory> parse_category(std::string_view text) {
  for (auto [c, name] : kCategoryNames) {
    if (name == text) return c;
  }
  return std::nullopt;
}

bool operator==(const TileType& a, const TileType& b) {
  return a.id == b.id && a.glyph == b.glyph && a.name == b.name && a.category == b.category;
}

bool operator==(const TileManifest& a, const TileManifest& b) {
  return a.version_ == b.version_ && a.tiles_ == b.tiles_;
}

TileManifest TileManifest::parse(std::string_view text) {
  TileManifest m;
  m.by_glyph_.fill(-1);
  std::array<bool, kTileCount> seen{};
  int line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (line.starts_with("#version")) {
      auto num = line.substr(8);
      while (!num.empty() && (num.front() == ' ' || num.front() == '\t')) num.remove_prefix(1);
      auto [p, ec] = std::from_chars(num.data(), num.data() + num.size(), m.version_);
      if (ec != std::errc{} || p != num.data() + num.size()) bad(line_no, "bad version");
      continue;
    }
    if (line.front() == '#') continue;
    auto fields = split_tabs(line);
    if (fields.size() != 4) bad(line_no, "expected 4 tab-separated fields");
    int id = -1;
    auto [p, ec] = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), id);
    if (ec != std::errc{} || p != fields[0].data() + fields[0].size() || id < 0 || id >= kTileCount) {
      bad(line_no, "id must be an integer in [0,31]");
    }
    if (seen[id]) bad(line_no, "duplicate id " + std::to_string(id));
    if (fields[1].size() != 1 || fields[1][0] == '-' || fields[1][0] == ' ') {
      bad(line_no, "glyph must be one character other than '-' and space");
    }
    auto glyph = static_cast<unsigned char>(fields[1][0]);
    if (m.by_glyph_[glyph] >= 0) bad(line_no, "duplicate glyph");
    if (fields[2].empty()) bad(line_no, "empty name");
    auto category = parse_category(fields[3]);
    if (!category) bad(line_no, "unknown category '" + std::string(fields[3]) + "'");
    seen[id] = true;
    m.tiles_[id] = TileType{static_cast<TileId>(id), fields[1][0], std::string(fields[2]), *category};
    m.by_glyph_[glyph] = static_cast<std::int16_t>(id);
  }
  for (int i = 0; i < kTileCount; ++i) {
    if (!seen[i]) throw Error(ErrorCode::kBadManifest, "missing id " + std::to_string(i));
    for (int j = 0; j < i; ++j) {
      if (m.tiles_[i].name == m.tiles_[j].name) {
        throw Error(ErrorCode::kBadManifest, "duplicate name " + m.tiles_[i].name);
      }
    }
  }
  return m;
}

TileManifest TileManifest::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open manifest " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

const TileManifest& TileManifest::standard() {
  static const TileManifest manifest = parse(detail::kStandardManifest);
  return manifest;
}

std::string TileManifest::serialize() const {
  std::string out = "#version " + std::to_string(version_) + "\n";
  for (const auto& t : tiles_) {
    out += std::to_string(t.id) + '\t' + t.glyph + '\t' + t.name + '\t' + std::string(to_string(t.category)) + '\n';
  }
  return out;
}

const TileType& TileManifest::at(TileId id) const {
  if (id < 0 || id >= kTileCount) throw Error(ErrorCode::kInvalidArgument, "tile id out of range");
  return tiles_[id];
}

std::optional<TileId> TileManifest::find_glyph(char glyph) const {
  auto v = by_glyph_[static_cast<unsigned char>(glyph)];
  if (v < 0) return std::nullopt;
  return static_cast<TileId>(v);
}

std::optional<TileId> TileManifest::find_name(std::string_view name) const {
  for (const auto& t : tiles_) {
    if (t.name == name) return t.id;
  }
  return std::nullopt;
}

TileId TileManifest::id_of(std::string_view name) const {
  auto id = find_name(name);
  if (!id) throw Error(ErrorCode::kInvalidArgument, "unknown tile name '" + std::string(name) + "'");
  return *id;
}

}  // namespace morai
