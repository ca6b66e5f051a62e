#include "morai/explainer.hpp"

#include <cmath>
#include <cstdio>

#include "morai/error.hpp"

namespace morai {

namespace {

// Input columns/rows that can influence one head output, as an inclusive box.
struct Box {
  int x0, x1, y0, y1;
};

Box receptive_field(const Network& net, int x, int y) {
  const auto& arch = net.architecture();
  if (!arch.head_radius) return {0, arch.width - 1, 0, arch.height - 1};
  const int r = *arch.head_radius;
  Box b{x - r, x + r, y - r, y + r};
  for (auto it = net.convs().rbegin(); it != net.convs().rend(); ++it) {
    const int pad = it->pad_before();
    const int k = it->filter_size;
    b = {b.x0 - pad, b.x1 - pad + k - 1, b.y0 - pad, b.y1 - pad + k - 1};
  }
  return b;
}

bool slice_has_content(const Volume& input, int x0, int y0) {
  for (int x = x0; x < x0 + kSliceSize; ++x) {
    for (int y = y0; y < y0 + kSliceSize; ++y) {
      for (int c = 0; c < input.channels(); ++c) {
        if (input.at(x, y, c) != 0.0) return true;
      }
    }
  }
  return false;
}

}  // namespace

Explanation explain(const Network& net, const Window& window, const Triple& addition, const TileManifest& manifest) {
  const int wx = addition.x - window.origin_x;
  if (wx < 0 || wx >= kWindowWidth || addition.y < 0 || addition.y >= kLevelHeight || addition.tile < 0 ||
      addition.tile >= kTileCount) {
    throw Error(ErrorCode::kOutOfBounds, "addition outside the window");
  }
  const Volume input = to_tensor(window);
  Explanation e;
  e.window_origin = window.origin_x;
  e.x = addition.x;
  e.y = addition.y;
  e.tile = addition.tile;
  e.confidence = net.output_at(input, wx, addition.y, addition.tile);

  // A slice that is already all zeros, or that lies outside the output's
  // receptive field, leaves the activation bit-for-bit unchanged.
  const Box field = receptive_field(net, wx, addition.y);
  Volume occluded = input;
  bool first = true;
  for (int x0 = 0; x0 < kSliceOriginsX; ++x0) {
    for (int y0 = 0; y0 < kSliceOriginsY; ++y0) {
      double delta = 0.0;
      const bool overlaps = x0 + kSliceSize - 1 >= field.x0 && x0 <= field.x1 && y0 + kSliceSize - 1 >= field.y0 &&
                            y0 <= field.y1;
      if (overlaps && slice_has_content(input, x0, y0)) {
        for (int x = x0; x < x0 + kSliceSize; ++x) {
          for (int y = y0; y < y0 + kSliceSize; ++y) {
            for (int c = 0; c < input.channels(); ++c) occluded.at(x, y, c) = 0.0;
          }
        }
        delta = std::abs(net.output_at(occluded, wx, addition.y, addition.tile) - e.confidence);
        for (int x = x0; x < x0 + kSliceSize; ++x) {
          for (int y = y0; y < y0 + kSliceSize; ++y) {
            for (int c = 0; c < input.channels(); ++c) occluded.at(x, y, c) = input.at(x, y, c);
          }
        }
      }
      if (first || delta > e.delta) {
        e.x0 = x0;
        e.y0 = y0;
        e.delta = delta;
        first = false;
      }
    }
  }

  const auto filters = net.first_layer_at(input, wx, addition.y);
  e.max_filter = 0;
  for (int f = 1; f < static_cast<int>(filters.size()); ++f) {
    if (filters[f] > filters[e.max_filter]) e.max_filter = f;
  }
  e.text = render_text(e, manifest);
  return e;
}

std::string render_text(const Explanation& e, const TileManifest& manifest) {
  char confidence[64];
  std::snprintf(confidence, sizeof(confidence), "%.2f", e.confidence);
  const int c0 = e.window_origin + e.x0;
  return "Added " + manifest.at(e.tile).name + " at (" + std::to_string(e.x) + "," + std::to_string(e.y) +
         ") with confidence " + confidence + "; most influenced by the region at columns " + std::to_string(c0) +
         "-" + std::to_string(c0 + kSliceSize - 1) + ", rows " + std::to_string(e.y0) + "-" +
         std::to_string(e.y0 + kSliceSize - 1) + " (filter " + std::to_string(e.max_filter) + ").";
}

}  // namespace morai
