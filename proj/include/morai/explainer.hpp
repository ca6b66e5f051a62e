#pragma once

#include <string>

#include "morai/agents.hpp"
#include "morai/level.hpp"
#include "morai/tensor_net.hpp"
#include "morai/tiles.hpp"

namespace morai {

inline constexpr int kSliceSize = 4;
inline constexpr int kSliceOriginsX = kWindowWidth - kSliceSize + 1;   // 37
inline constexpr int kSliceOriginsY = kLevelHeight - kSliceSize + 1;   // 12

struct Explanation {
  int window_origin = 0;
  int x = 0;  // absolute column of the explained addition
  int y = 0;
  TileId tile = 0;
  int x0 = 0;  // decisive slice origin, window-relative
  int y0 = 0;
  double delta = 0.0;
  double confidence = 0.0;  // raw activation, not normalized
  int max_filter = 0;
  std::string text;
};

/// Occlusion explanation: the 4x4 input slice whose zeroing moves the
/// addition's activation the most (ties to the lowest (x0, y0)), the raw
/// activation, and the most active first-layer filter at the addition's cell.
/// Read-only over the network.
Explanation explain(const Network& net, const Window& window, const Triple& addition,
                    const TileManifest& manifest = TileManifest::standard());

/// `Added <name> at (<x>,<y>) with confidence <c>; most influenced by the
/// region at columns <a>-<b>, rows <c>-<d> (filter <k>).` Columns are absolute.
std::string render_text(const Explanation& explanation, const TileManifest& manifest = TileManifest::standard());

}  // namespace morai
