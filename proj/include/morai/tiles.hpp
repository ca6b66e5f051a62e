#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace morai {

inline constexpr int kTileCount = 32;

using TileId = std::int8_t;

enum class TileCategory { kSolid, kBlock, kEnemy, kPipe, kCollectible, kDecoration, kHazard, kStructure };

std::string_view to_string(TileCategory category);
std::optional<TileCategory> parse_category(std::string_view text);

struct TileType {
  TileId id = 0;
  char glyph = '\0';
  std::string name;
  TileCategory category = TileCategory::kSolid;
};

/// The 32-entry id/glyph/name/category table. Loaded from a `tiles.manifest`
/// file: an optional `#version N` line, `#` comments, then one
/// `id<TAB>glyph<TAB>name<TAB>category` line per tile covering ids 0..31.
class TileManifest {
 public:
  static TileManifest parse(std::string_view text);
  static TileManifest load(const std::string& path);
  /// The manifest shipped in data/tiles.manifest, compiled in.
  static const TileManifest& standard();

  std::string serialize() const;

  int version() const { return version_; }
  const TileType& at(TileId id) const;
  std::optional<TileId> find_glyph(char glyph) const;
  std::optional<TileId> find_name(std::string_view name) const;
  /// Throws InvalidArgument on an unknown name.
  TileId id_of(std::string_view name) const;
  const std::array<TileType, kTileCount>& tiles() const { return tiles_; }

  friend bool operator==(const TileManifest&, const TileManifest&);

 private:
  int version_ = 1;
  std::array<TileType, kTileCount> tiles_{};
  std::array<std::int16_t, 256> by_glyph_{};
};

bool operator==(const TileType& a, const TileType& b);

}  // namespace morai
