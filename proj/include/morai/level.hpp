#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "morai/tensor.hpp"
#include "morai/tiles.hpp"

namespace morai {

inline constexpr int kLevelHeight = 15;
inline constexpr int kWindowWidth = 40;
inline constexpr int kMinLevelWidth = kWindowWidth;
inline constexpr int kDefaultLevelWidth = 200;

enum class EditKind { kAddition, kDeletion };
enum class Author { kHuman, kAi };

std::string_view to_string(EditKind kind);
std::string_view to_string(Author author);
EditKind parse_edit_kind(std::string_view text);
Author parse_author(std::string_view text);

struct Edit {
  EditKind kind = EditKind::kAddition;
  int x = 0;
  int y = 0;
  TileId tile = 0;
  Author author = Author::kHuman;
  std::int64_t turn_id = 0;
  std::int64_t timestamp_ms = 0;

  friend bool operator==(const Edit&, const Edit&) = default;
};

/// Empty-or-tile grid with fixed height 15. Cells are stored column-major so a
/// 40-column window is one contiguous slice.
class Level {
 public:
  explicit Level(int width = kDefaultLevelWidth);

  int width() const { return width_; }
  static constexpr int height() { return kLevelHeight; }

  bool in_bounds(int x, int y) const { return x >= 0 && x < width_ && y >= 0 && y < kLevelHeight; }
  std::optional<TileId> at(int x, int y) const;
  bool empty_at(int x, int y) const { return cells_[index(x, y)] < 0; }
  /// Unchecked setter for loaders and tests; edits go through apply_edit.
  void set(int x, int y, std::optional<TileId> tile);
  int occupied_count() const;

  friend bool operator==(const Level&, const Level&) = default;

 private:
  std::size_t index(int x, int y) const { return static_cast<std::size_t>(x) * kLevelHeight + y; }

  int width_;
  std::vector<std::int8_t> cells_;
};

/// A 40-column view of a level, copied out so it can be stored alongside
/// proposals and re-encoded later.
struct Window {
  int origin_x = 0;
  std::vector<std::int8_t> cells;  // kWindowWidth * kLevelHeight, column-major, -1 = empty

  std::optional<TileId> at(int x, int y) const;
  bool empty_at(int x, int y) const { return cells[static_cast<std::size_t>(x) * kLevelHeight + y] < 0; }

  friend bool operator==(const Window&, const Window&) = default;
};

/// Applies one edit in place. Throws OutOfBounds, CellOccupied or CellMismatch
/// and leaves the level untouched on failure.
void apply_edit(Level& level, const Edit& edit);
/// Checks apply_edit's preconditions without mutating.
void validate_edit(const Level& level, const Edit& edit);

int window_origin(int level_width, int focus_x);
Window extract_window(const Level& level, int focus_x);
Window window_at(const Level& level, int origin_x);
Window empty_window(int origin_x = 0);

/// One-hot encoding, 40 x 15 x 32; an empty cell is all zeros.
Volume to_tensor(const Window& window);

Level load_level(std::string_view text, const TileManifest& manifest = TileManifest::standard());
std::string save_level(const Level& level, const TileManifest& manifest = TileManifest::standard());
Level load_level_file(const std::string& path, const TileManifest& manifest = TileManifest::standard());
void save_level_file(const Level& level, const std::string& path,
                     const TileManifest& manifest = TileManifest::standard());
/// Loads every `*.txt` level in a directory, sorted by filename.
std::vector<Level> load_corpus(const std::string& dir, const TileManifest& manifest = TileManifest::standard());

}  // namespace morai
