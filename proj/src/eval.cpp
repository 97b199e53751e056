#include "cmmp/eval.hpp"

#include <cstdio>

namespace cmmp {

BinaryMask mask_from_tile(const RasterTile& tile) {
  if (tile.C != 1) throw ShapeMismatch("mask tiles must have one channel");
  BinaryMask m(tile.H, tile.W);
  for (std::size_t i = 0; i < tile.values.size(); ++i)
    m.values[i] = tile.values[i] > 0.5f ? 1 : 0;
  return m;
}

RasterTile tile_from_mask(const BinaryMask& mask) {
  RasterTile t(mask.H, mask.W, 1);
  for (std::size_t i = 0; i < mask.values.size(); ++i)
    t.values[i] = mask.values[i] ? 1.0f : 0.0f;
  return t;
}

BinaryMask binarize(const RasterTile& prob, double tau) {
  if (prob.C != 1) throw ShapeMismatch("binarize expects a single channel");
  BinaryMask m(prob.H, prob.W);
  for (std::size_t i = 0; i < prob.values.size(); ++i)
    m.values[i] = double(prob.values[i]) > tau ? 1 : 0;
  return m;
}

TileResult tile_result(std::string id, const BinaryMask& estimated, const BinaryMask& truth) {
  if (estimated.H != truth.H || estimated.W != truth.W)
    throw ShapeMismatch("mask shapes differ for tile " + id);
  TileResult r;
  r.id = std::move(id);
  for (std::size_t i = 0; i < estimated.values.size(); ++i) {
    const bool e = estimated.values[i] != 0;
    const bool g = truth.values[i] != 0;
    r.intersection += (e && g) ? 1 : 0;
    r.union_ += (e || g) ? 1 : 0;
  }
  r.iou = r.union_ == 0 ? 1.0 : double(r.intersection) / double(r.union_);
  return r;
}

double iou(const BinaryMask& estimated, const BinaryMask& truth) {
  return tile_result("", estimated, truth).iou;
}

double a_iou(const std::vector<TileResult>& tiles) {
  if (tiles.empty()) throw EmptyInput("a_iou needs at least one tile");
  double acc = 0.0;
  for (const auto& t : tiles) acc += t.iou;
  return acc / double(tiles.size());
}

double a_iou(const std::vector<std::pair<BinaryMask, BinaryMask>>& pairs) {
  if (pairs.empty()) throw EmptyInput("a_iou needs at least one pair");
  double acc = 0.0;
  for (const auto& [e, g] : pairs) acc += iou(e, g);
  return acc / double(pairs.size());
}

double g_iou(const std::vector<TileResult>& tiles) {
  if (tiles.empty()) throw EmptyInput("g_iou needs at least one tile");
  std::size_t inter = 0, uni = 0;
  for (const auto& t : tiles) {
    inter += t.intersection;
    uni += t.union_;
  }
  return uni == 0 ? 1.0 : double(inter) / double(uni);
}

double g_iou(const std::vector<std::pair<BinaryMask, BinaryMask>>& pairs) {
  if (pairs.empty()) throw EmptyInput("g_iou needs at least one pair");
  std::vector<TileResult> tiles;
  tiles.reserve(pairs.size());
  for (const auto& [e, g] : pairs) tiles.push_back(tile_result("", e, g));
  return g_iou(tiles);
}

std::string format_report(const std::vector<TileResult>& tiles) {
  std::string out;
  char buf[128];
  for (const auto& t : tiles) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%.4f\n", t.id.c_str(), t.intersection,
                  t.union_, t.iou);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "A_IoU=%.4f\n", a_iou(tiles));
  out += buf;
  std::snprintf(buf, sizeof buf, "G_IoU=%.4f\n", g_iou(tiles));
  out += buf;
  return out;
}

}  // namespace cmmp
