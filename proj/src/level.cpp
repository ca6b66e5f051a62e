#include "morai/level.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "morai/error.hpp"

namespace morai {

std::string_view to_string(EditKind kind) { return kind == EditKind::kAddition ? "addition" : "deletion"; }
std::string_view to_string(Author author) { return author == Author::kHuman ? "human" : "ai"; }

EditKind parse_edit_kind(std::string_view text) {
  if (text == "addition" || text == "add") return EditKind::kAddition;
  if (text == "deletion" || text == "delete") return EditKind::kDeletion;
  throw Error(ErrorCode::kInvalidArgument, "unknown edit kind '" + std::string(text) + "'");
}

Author parse_author(std::string_view text) {
  if (text == "human") return Author::kHuman;
  if (text == "ai") return Author::kAi;
  throw Error(ErrorCode::kInvalidArgument, "unknown author '" + std::string(text) + "'");
}

Level::Level(int width) : width_(width) {
  if (width < 1) throw Error(ErrorCode::kBadDimensions, "level width must be positive");
  cells_.assign(static_cast<std::size_t>(width) * kLevelHeight, -1);
}

std::optional<TileId> Level::at(int x, int y) const {
  auto v = cells_[index(x, y)];
  if (v < 0) return std::nullopt;
  return static_cast<TileId>(v);
}

void Level::set(int x, int y, std::optional<TileId> tile) {
  cells_[index(x, y)] = tile ? *tile : std::int8_t{-1};
}

int Level::occupied_count() const {
  return static_cast<int>(std::count_if(cells_.begin(), cells_.end(), [](auto v) { return v >= 0; }));
}

std::optional<TileId> Window::at(int x, int y) const {
  auto v = cells[static_cast<std::size_t>(x) * kLevelHeight + y];
  if (v < 0) return std::nullopt;
  return static_cast<TileId>(v);
}

void validate_edit(const Level& level, const Edit& edit) {
  if (!level.in_bounds(edit.x, edit.y)) {
    throw Error(ErrorCode::kOutOfBounds,
                "(" + std::to_string(edit.x) + "," + std::to_string(edit.y) + ") outside level of width " +
                    std::to_string(level.width()));
  }
  if (edit.tile < 0 || edit.tile >= kTileCount) throw Error(ErrorCode::kInvalidArgument, "tile id out of range");
  auto current = level.at(edit.x, edit.y);
  if (edit.kind == EditKind::kAddition) {
    if (current) throw Error(ErrorCode::kCellOccupied, "cell is not empty");
  } else {
    if (edit.author == Author::kAi) throw Error(ErrorCode::kInvalidArgument, "AI edits are additions only");
    if (!current || *current != edit.tile) throw Error(ErrorCode::kCellMismatch, "cell does not hold that tile");
  }
}

void apply_edit(Level& level, const Edit& edit) {
  validate_edit(level, edit);
  level.set(edit.x, edit.y, edit.kind == EditKind::kAddition ? std::optional<TileId>(edit.tile) : std::nullopt);
}

int window_origin(int level_width, int focus_x) {
  if (level_width < kWindowWidth) {
    throw Error(ErrorCode::kLevelTooNarrow, "level width " + std::to_string(level_width) + " < 40");
  }
  return std::clamp(focus_x - kWindowWidth / 2, 0, level_width - kWindowWidth);
}

Window window_at(const Level& level, int origin_x) {
  if (level.width() < kWindowWidth) throw Error(ErrorCode::kLevelTooNarrow, "level narrower than a window");
  if (origin_x < 0 || origin_x > level.width() - kWindowWidth) throw Error(ErrorCode::kOutOfBounds, "window origin");
  Window w = empty_window(origin_x);
  for (int x = 0; x < kWindowWidth; ++x) {
    for (int y = 0; y < kLevelHeight; ++y) {
      auto t = level.at(origin_x + x, y);
      w.cells[static_cast<std::size_t>(x) * kLevelHeight + y] = t ? *t : std::int8_t{-1};
    }
  }
  return w;
}

Window extract_window(const Level& level, int focus_x) { return window_at(level, window_origin(level.width(), focus_x)); }

Window empty_window(int origin_x) {
  return Window{origin_x, std::vector<std::int8_t>(static_cast<std::size_t>(kWindowWidth) * kLevelHeight, -1)};
}

Volume to_tensor(const Window& window) {
  Volume v(kWindowWidth, kLevelHeight, kTileCount);
  for (int x = 0; x < kWindowWidth; ++x) {
    for (int y = 0; y < kLevelHeight; ++y) {
      if (auto t = window.at(x, y)) v.at(x, y, *t) = 1.0;
    }
  }
  return v;
}

Level load_level(std::string_view text, const TileManifest& manifest) {
  std::vector<std::string_view> rows;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto row = text.substr(start, end - start);
    if (!row.empty() && row.back() == '\r') row.remove_suffix(1);
    rows.push_back(row);
    start = end + 1;
  }
  while (!rows.empty() && rows.back().empty()) rows.pop_back();
  if (rows.size() != kLevelHeight) {
    throw Error(ErrorCode::kBadDimensions, "expected 15 rows, got " + std::to_string(rows.size()));
  }
  const auto width = rows.front().size();
  if (width == 0) throw Error(ErrorCode::kBadDimensions, "empty rows");
  for (const auto& r : rows) {
    if (r.size() != width) throw Error(ErrorCode::kBadDimensions, "rows differ in length");
  }
  Level level(static_cast<int>(width));
  for (int y = 0; y < kLevelHeight; ++y) {
    for (int x = 0; x < static_cast<int>(width); ++x) {
      char c = rows[y][x];
      if (c == '-') continue;
      auto id = manifest.find_glyph(c);
      if (!id) {
        throw Error(ErrorCode::kUnknownGlyph, std::string("'") + c + "' at row " + std::to_string(y) + ", col " +
                                                   std::to_string(x));
      }
      level.set(x, y, *id);
    }
  }
  return level;
}

std::string save_level(const Level& level, const TileManifest& manifest) {
  std::string out;
  out.reserve(static_cast<std::size_t>(level.width() + 1) * kLevelHeight);
  for (int y = 0; y < kLevelHeight; ++y) {
    for (int x = 0; x < level.width(); ++x) {
      auto t = level.at(x, y);
      out += t ? manifest.at(*t).glyph : '-';
    }
    out += '\n';
  }
  return out;
}

Level load_level_file(const std::string& path, const TileManifest& manifest) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open level " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return load_level(ss.str(), manifest);
}

void save_level_file(const Level& level, const std::string& path, const TileManifest& manifest) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write level " + path);
  out << save_level(level, manifest);
}

std::vector<Level> load_corpus(const std::string& dir, const TileManifest& manifest) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") files.push_back(entry.path());
  }
  if (ec) throw Error(ErrorCode::kIo, "cannot read corpus directory " + dir);
  std::sort(files.begin(), files.end());
  std::vector<Level> corpus;
  for (const auto& f : files) corpus.push_back(load_level_file(f.string(), manifest));
  return corpus;
}

}  // namespace morai
