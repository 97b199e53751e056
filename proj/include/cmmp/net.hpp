#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <string>
#include <vector>

#include "cmmp/ops.hpp"
#include "cmmp/optim.hpp"
#include "cmmp/tape.hpp"

namespace cmmp {

// Which parts of the dual enhancement module are active. `full` is
// local + global messages with sigmoid gates; the reduced modes exist for
// ablation runs.
enum class DemMode { off, local, local_global, full };

enum class Branches { both, image_only };

const char* to_string(DemMode m);
const char* to_string(Branches b);
DemMode dem_mode_from_string(const std::string& s);
Branches branches_from_string(const std::string& s);

// Network configuration. Defaults are the desk-scale profile; the full-size
// profile (base 64, residual counts 3,3,5,2) is reachable through the same
// fields.
struct NetConfig {
  std::size_t in_channels_a = 3;  // modality A, aerial image
  std::size_t in_channels_b = 1;  // modality B, trajectory heat-map
  std::size_t base_channels = 8;
  std::array<std::size_t, 4> res_counts{1, 1, 1, 1};
  std::size_t spp_levels = 3;
  std::size_t input_size = 64;  // H = W, divisible by 32
  std::uint64_t seed = 0;
  DemMode dem_mode = DemMode::full;
  Branches branches = Branches::both;

  void validate() const;
  std::string serialize() const;
  static NetConfig parse(const std::string& text);
  static NetConfig load_file(const std::string& path);
  void save_file(const std::string& path) const;
};

template <typename T>
struct ConvParams {
  Tensor<T> w, b;
};

template <typename T>
struct ResUnitParams {
  ConvParams<T> conv1, conv2;  // both 3x3, channel preserving
};

template <typename T>
struct InterimParams {
  ConvParams<T> d1, d2, d3, d4;  // 3x3 dilated, rates 1, 2, 4, 8
};

template <typename T>
struct UpsampleParams {
  ConvParams<T> reduce;  // 1x1, cin -> cin/4
  ConvParams<T> tconv;   // 4x4 stride 2, pad 1
  ConvParams<T> expand;  // 1x1, cin/4 -> cout
};

// Parameters for one message direction (one source modality) at one site.
template <typename T>
struct DemDirParams {
  ConvParams<T> local;          // 3x3, c -> c
  Tensor<T> fc_w, fc_b;         // (sum_j 4^{j-1}) * c -> c
  ConvParams<T> gate_l, gate_g; // 1x1, 2c -> c
};

template <typename T>
struct DemSiteParams {
  DemMode mode = DemMode::full;
  std::size_t levels = 3;  // pyramid depth, clamped to the site extent
  DemDirParams<T> from_a, from_b;
};

// y = relu(conv2(relu(conv1(x))) + x)
template <typename T>
Tensor<T> residual_unit(Tape<T>* t, const Tensor<T>& x, const ResUnitParams<T>& p) {
  auto h = relu(t, conv2d(t, x, p.conv1.w, p.conv1.b, {1, 1, 1}));
  auto y = conv2d(t, h, p.conv2.w, p.conv2.b, {1, 1, 1});
  return relu(t, add(t, y, x));
}

// Cascade of dilated convolutions with cumulative skip additions:
// y = x + d1 + d2 + d3 + d4, rates 1, 2, 4, 8, padding = rate.
template <typename T>
Tensor<T> interim_unit(Tape<T>* t, const Tensor<T>& x, const InterimParams<T>& p) {
  auto d1 = relu(t, conv2d(t, x, p.d1.w, p.d1.b, {1, 1, 1}));
  auto d2 = relu(t, conv2d(t, d1, p.d2.w, p.d2.b, {1, 2, 2}));
  auto d3 = relu(t, conv2d(t, d2, p.d3.w, p.d3.b, {1, 4, 4}));
  auto d4 = relu(t, conv2d(t, d3, p.d4.w, p.d4.b, {1, 8, 8}));
  return add(t, add(t, add(t, add(t, x, d1), d2), d3), d4);
}

// 1x1 channel reduce -> 4x4 stride-2 transposed conv (doubles h, w) ->
// 1x1 channel expand, relu after each.
template <typename T>
Tensor<T> upsampling_unit(Tape<T>* t, const Tensor<T>& x, const UpsampleParams<T>& p) {
  auto a = relu(t, conv2d(t, x, p.reduce.w, p.reduce.b, {}));
  auto b = relu(t, transposed_conv2d(t, a, p.tconv.w, p.tconv.b, {2, 1}));
  return relu(t, conv2d(t, b, p.expand.w, p.expand.b, {}));
}

// N-level pyramid of region max pools (grids 1, 2, 4, ... per side), levels
// flattened, concatenated and projected to c outputs by one FC layer.
template <typename T>
Tensor<T> spp_global(Tape<T>* t, const Tensor<T>& L, std::size_t levels,
                     const Tensor<T>& fc_w, const Tensor<T>& fc_b) {
  if (L.rank() != 4) throw ShapeMismatch("spp_global expects rank 4");
  const std::size_t N = L.dim(0), c = L.dim(1), h = L.dim(2), w = L.dim(3);
  if (levels == 0 || (std::size_t(1) << (levels - 1)) > std::min(h, w))
    throw InvalidGrid("pyramid with " + std::to_string(levels) +
                      " levels exceeds spatial extent " + shape_str(L.shape()));
  std::vector<Tensor<T>> flat;
  flat.reserve(levels);
  for (std::size_t j = 0; j < levels; ++j) {
    const std::size_t g = std::size_t(1) << j;
    auto pooled = region_maxpool(t, L, g, g);
    flat.push_back(reshape(t, pooled, {N, c * g * g, 1, 1}));
  }
  auto cat = concat_channels(t, flat);
  auto vec = reshape(t, cat, {N, cat.dim(1)});
  return fully_connected(t, vec, fc_w, fc_b);
}

template <typename T>
struct DemActivations {
  Tensor<T> L_a, G_a, L_b, G_b;
  Tensor<T> gate_aL, gate_aG, gate_bL, gate_bG;  // full mode only
};

template <typename T>
struct DemResult {
  Tensor<T> a, b;
  DemActivations<T> acts;
};

// Cross-modal enhancement of a feature pair: each side receives the other
// side's gated local and global messages. Identical shapes required.
template <typename T>
DemResult<T> dem_forward(Tape<T>* t, const Tensor<T>& f_a, const Tensor<T>& f_b,
                         const DemSiteParams<T>& site) {
  if (f_a.shape() != f_b.shape())
    throw ShapeMismatch("dem_forward features differ: " + shape_str(f_a.shape()) +
                        " vs " + shape_str(f_b.shape()));
  DemResult<T> out;
  if (site.mode == DemMode::off) {
    out.a = f_a;
    out.b = f_b;
    return out;
  }
  const std::size_t h = f_a.dim(2), w = f_a.dim(3);

  auto message = [&](const Tensor<T>& f_src, const DemDirParams<T>& p, Tensor<T>& L_out,
                     Tensor<T>& G_out, Tensor<T>& gl_out, Tensor<T>& gg_out) {
    auto L = conv2d(t, f_src, p.local.w, p.local.b, {1, 1, 1});
    L_out = L;
    if (site.mode == DemMode::local) return L;
    auto g = spp_global(t, L, site.levels, p.fc_w, p.fc_b);
    auto G = broadcast_spatial(t, g, h, w);
    G_out = G;
    if (site.mode == DemMode::local_global) return add(t, L, G);
    auto cat = concat_channels(t, {L, G});
    auto theta_l = sigmoid(t, conv2d(t, cat, p.gate_l.w, p.gate_l.b, {}));
    auto theta_g = sigmoid(t, conv2d(t, cat, p.gate_g.w, p.gate_g.b, {}));
    gl_out = theta_l;
    gg_out = theta_g;
    return add(t, mul(t, theta_l, L), mul(t, theta_g, G));
  };

  auto msg_a = message(f_a, site.from_a, out.acts.L_a, out.acts.G_a, out.acts.gate_aL,
                       out.acts.gate_aG);
  auto msg_b = message(f_b, site.from_b, out.acts.L_b, out.acts.G_b, out.acts.gate_bL,
                       out.acts.gate_bG);
  out.a = add(t, f_a, msg_b);
  out.b = add(t, f_b, msg_a);
  return out;
}

// The two-branch autoencoder network with dual enhancement sites after each
// of the eight block outputs. Parameters live in a named ParamSet whose
// insertion order is the checkpoint order.
template <typename T>
class CmmpNet {
 public:
  explicit CmmpNet(NetConfig cfg);

  const NetConfig& config() const { return cfg_; }
  ParamSet<T>& params() { return params_; }
  const ParamSet<T>& params() const { return params_; }

  // Xavier weights / zero biases, drawn in parameter order.
  void init_params(Rng& rng) { params_.init(rng); }
  void init_params() {
    Rng rng(cfg_.seed);
    params_.init(rng);
  }

  // image: N x in_a x S x S; traj: N x in_b x S x S (ignored when the net is
  // image-only). Returns the road probability map, N x 1 x S x S in (0,1).
  Tensor<T> forward(Tape<T>* tape, const Tensor<T>& image, const Tensor<T>& traj,
                    std::vector<DemActivations<T>>* acts = nullptr) const;

  // Spatial extent and channel width of enhancement site i (0-based).
  std::size_t site_extent(std::size_t i) const { return site_extent_[i]; }
  std::size_t site_channels(std::size_t i) const { return site_channels_[i]; }
  std::size_t site_levels(std::size_t i) const { return site_levels_[i]; }

 private:
  struct EncBlock {
    bool has_widen = false;
    ConvParams<T> widen;  // 3x3 channel widening before the residual units
    std::vector<ResUnitParams<T>> res;
  };
  struct Branch {
    ConvParams<T> stem;  // 7x7 stride 2
    std::array<EncBlock, 4> enc;
    InterimParams<T> interim;
    std::array<UpsampleParams<T>, 4> dec;
    ConvParams<T> head_tconv;  // 4x4 stride 2, c1 -> c1/2
    ConvParams<T> head_conv;   // 3x3, c1/2 -> c1/2
  };

  ConvParams<T> add_conv(const std::string& name, std::size_t cout, std::size_t cin,
                         std::size_t k);
  ConvParams<T> add_tconv(const std::string& name, std::size_t cin, std::size_t cout,
                          std::size_t k);
  Branch build_branch(const std::string& prefix, std::size_t cin);
  DemDirParams<T> build_dem_dir(const std::string& prefix, std::size_t c,
                                std::size_t levels);
  Tensor<T> enc_block(Tape<T>* t, const EncBlock& blk, const Tensor<T>& x) const;
  Tensor<T> head(Tape<T>* t, const Branch& br, const Tensor<T>& f8) const;

  NetConfig cfg_;
  ParamSet<T> params_;
  Branch img_, trj_;
  std::vector<DemSiteParams<T>> dems_;
  ConvParams<T> fuse_;  // 1x1 -> 1
  std::array<std::size_t, 8> site_extent_{};
  std::array<std::size_t, 8> site_channels_{};
  std::array<std::size_t, 8> site_levels_{};
};

template <typename T>
ConvParams<T> CmmpNet<T>::add_conv(const std::string& name, std::size_t cout,
                                   std::size_t cin, std::size_t k) {
  ConvParams<T> p;
  p.w = params_
            .add(name + ".w", Tensor<T>::zeros({cout, cin, k, k}, true), cin * k * k,
                 cout * k * k)
            .value;
  p.b = params_.add(name + ".b", Tensor<T>::zeros({cout}, true)).value;
  return p;
}

template <typename T>
ConvParams<T> CmmpNet<T>::add_tconv(const std::string& name, std::size_t cin,
                                    std::size_t cout, std::size_t k) {
  ConvParams<T> p;
  p.w = params_
            .add(name + ".w", Tensor<T>::zeros({cin, cout, k, k}, true), cin * k * k,
                 cout * k * k)
            .value;
  p.b = params_.add(name + ".b", Tensor<T>::zeros({cout}, true)).value;
  return p;
}

template <typename T>
typename CmmpNet<T>::Branch CmmpNet<T>::build_branch(const std::string& prefix,
                                                     std::size_t cin) {
  const std::size_t c1 = cfg_.base_channels;
  Branch br;
  br.stem = add_conv(prefix + ".stem", c1, cin, 7);
  std::size_t ch = c1;
  for (std::size_t i = 0; i < 4; ++i) {
    EncBlock& blk = br.enc[i];
    const std::size_t cout = c1 << i;
    if (i > 0) {
      blk.has_widen = true;
      blk.widen = add_conv(prefix + ".enc" + std::to_string(i + 1) + ".widen", cout, ch, 3);
    }
    for (std::size_t r = 0; r < cfg_.res_counts[i]; ++r) {
      ResUnitParams<T> unit;
      const std::string base =
          prefix + ".enc" + std::to_string(i + 1) + ".res" + std::to_string(r);
      unit.conv1 = add_conv(base + ".conv1", cout, cout, 3);
      unit.conv2 = add_conv(base + ".conv2", cout, cout, 3);
      blk.res.push_back(unit);
    }
    ch = cout;
  }
  for (int d = 1; d <= 4; ++d) {
    const std::string base = prefix + ".inter.d" + std::to_string(d);
    ConvParams<T> p = add_conv(base, ch, ch, 3);
    (d == 1 ? br.interim.d1 : d == 2 ? br.interim.d2 : d == 3 ? br.interim.d3
                                                              : br.interim.d4) = p;
  }
  for (std::size_t j = 0; j < 4; ++j) {
    const std::size_t dec_in = j == 0 ? 8 * c1 : (8 * c1) >> j;   // 8c, 4c, 2c, c
    const std::size_t dec_out = j < 3 ? dec_in / 2 : dec_in;      // 4c, 2c, c, c
    const std::size_t mid = dec_in / 4;
    const std::string base = prefix + ".dec" + std::to_string(j + 1);
    UpsampleParams<T>& up = br.dec[j];
    up.reduce = add_conv(base + ".reduce", mid, dec_in, 1);
    up.tconv = add_tconv(base + ".tconv", mid, mid, 4);
    up.expand = add_conv(base + ".expand", dec_out, mid, 1);
  }
  br.head_tconv = add_tconv(prefix + ".head.tconv", c1, c1 / 2, 4);
  br.head_conv = add_conv(prefix + ".head.conv", c1 / 2, c1 / 2, 3);
  return br;
}

template <typename T>
DemDirParams<T> CmmpNet<T>::build_dem_dir(const std::string& prefix, std::size_t c,
                                          std::size_t levels) {
  DemDirParams<T> p;
  p.local = add_conv(prefix + ".local", c, c, 3);
  if (cfg_.dem_mode == DemMode::local) return p;
  std::size_t bins = 0;
  for (std::size_t j = 0; j < levels; ++j) bins += std::size_t(1) << (2 * j);
  const std::size_t din = bins * c;
  p.fc_w = params_.add(prefix + ".fc.w", Tensor<T>::zeros({c, din}, true), din, c).value;
  p.fc_b = params_.add(prefix + ".fc.b", Tensor<T>::zeros({c}, true)).value;
  if (cfg_.dem_mode == DemMode::local_global) return p;
  p.gate_l = add_conv(prefix + ".gate_l", c, 2 * c, 1);
  p.gate_g = add_conv(prefix + ".gate_g", c, 2 * c, 1);
  return p;
}

template <typename T>
CmmpNet<T>::CmmpNet(NetConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const std::size_t c1 = cfg_.base_channels;
  const std::size_t S = cfg_.input_size;

  // Block outputs f1..f8: four encoder scales down to S/32, then back up.
  site_channels_ = {c1, 2 * c1, 4 * c1, 8 * c1, 4 * c1, 2 * c1, c1, c1};
  site_extent_ = {S / 4, S / 8, S / 16, S / 32, S / 16, S / 8, S / 4, S / 2};
  for (std::size_t i = 0; i < 8; ++i) {
    // Deepest grid is 2^(levels-1) per side; clamp to what the site fits.
    const std::size_t fit = std::size_t(std::bit_width(site_extent_[i]));
    site_levels_[i] = std::min(cfg_.spp_levels, fit);
  }

  img_ = build_branch("img", cfg_.in_channels_a);
  const bool dual = cfg_.branches == Branches::both;
  if (dual) trj_ = build_branch("trj", cfg_.in_channels_b);

  if (dual && cfg_.dem_mode != DemMode::off) {
    for (std::size_t i = 0; i < 8; ++i) {
      DemSiteParams<T> site;
      site.mode = cfg_.dem_mode;
      site.levels = site_levels_[i];
      const std::string base = "dem" + std::to_string(i + 1);
      site.from_a = build_dem_dir(base + ".img", site_channels_[i], site.levels);
      site.from_b = build_dem_dir(base + ".trj", site_channels_[i], site.levels);
      dems_.push_back(site);
    }
  }
  fuse_ = add_conv("fuse", 1, dual ? c1 : c1 / 2, 1);
}

template <typename T>
Tensor<T> CmmpNet<T>::enc_block(Tape<T>* t, const EncBlock& blk, const Tensor<T>& x) const {
  Tensor<T> h = maxpool2d(t, x);
  if (blk.has_widen) h = relu(t, conv2d(t, h, blk.widen.w, blk.widen.b, {1, 1, 1}));
  for (const auto& unit : blk.res) h = residual_unit(t, h, unit);
  return h;
}

template <typename T>
Tensor<T> CmmpNet<T>::head(Tape<T>* t, const Branch& br, const Tensor<T>& f8) const {
  auto up = relu(t, transposed_conv2d(t, f8, br.head_tconv.w, br.head_tconv.b, {2, 1}));
  return relu(t, conv2d(t, up, br.head_conv.w, br.head_conv.b, {1, 1, 1}));
}

template <typename T>
Tensor<T> CmmpNet<T>::forward(Tape<T>* tape, const Tensor<T>& image, const Tensor<T>& traj,
                              std::vector<DemActivations<T>>* acts) const {
  const std::size_t S = cfg_.input_size;
  if (image.rank() != 4 || image.dim(1) != cfg_.in_channels_a || image.dim(2) != S ||
      image.dim(3) != S)
    throw ShapeMismatch("image input must be N x " + std::to_string(cfg_.in_channels_a) +
                        " x " + std::to_string(S) + " x " + std::to_string(S) + ", got " +
                        shape_str(image.shape()));
  const bool dual = cfg_.branches == Branches::both;
  if (dual) {
    if (traj.rank() != 4 || traj.dim(0) != image.dim(0) ||
        traj.dim(1) != cfg_.in_channels_b || traj.dim(2) != S || traj.dim(3) != S)
      throw ShapeMismatch("trajectory input must be N x " +
                          std::to_string(cfg_.in_channels_b) + " x " + std::to_string(S) +
                          " x " + std::to_string(S) + ", got " + shape_str(traj.shape()));
  }

  auto apply_dem = [&](std::size_t i, Tensor<T>& a, Tensor<T>& b) {
    if (dems_.empty()) return;
    DemResult<T> r = dem_forward(tape, a, b, dems_[i]);
    a = r.a;
    b = r.b;
    if (acts) acts->push_back(std::move(r.acts));
  };

  Tensor<T> a = relu(tape, conv2d(tape, image, img_.stem.w, img_.stem.b, {2, 3, 1}));
  Tensor<T> b;
  if (dual) b = relu(tape, conv2d(tape, traj, trj_.stem.w, trj_.stem.b, {2, 3, 1}));

  std::array<Tensor<T>, 4> ea, eb;  // enhanced encoder outputs, for the skips
  for (std::size_t i = 0; i < 4; ++i) {
    a = enc_block(tape, img_.enc[i], a);
    if (dual) {
      b = enc_block(tape, trj_.enc[i], b);
      apply_dem(i, a, b);
    }
    ea[i] = a;
    if (dual) eb[i] = b;
  }

  a = interim_unit(tape, a, img_.interim);
  if (dual) b = interim_unit(tape, b, trj_.interim);

  for (std::size_t j = 0; j < 4; ++j) {
    a = upsampling_unit(tape, a, img_.dec[j]);
    if (j < 3) a = add(tape, a, ea[2 - j]);
    if (dual) {
      b = upsampling_unit(tape, b, trj_.dec[j]);
      if (j < 3) b = add(tape, b, eb[2 - j]);
      apply_dem(4 + j, a, b);
    }
  }

  Tensor<T> fo = head(tape, img_, a);
  if (dual) {
    Tensor<T> fb = head(tape, trj_, b);
    fo = concat_channels(tape, {fo, fb});
  }
  return sigmoid(tape, conv2d(tape, fo, fuse_.w, fuse_.b, {}));
}

// "CKP1" checkpoint: magic, u32le parameter count, then per parameter
// u16le name length, name bytes, u32le rank, rank u32le dims, f32le values.
template <typename T>
void save_checkpoint(const ParamSet<T>& params, const std::string& path);
template <typename T>
void load_checkpoint(const std::string& path, ParamSet<T>& params);

}  // namespace cmmp

#include "cmmp/checkpoint_impl.hpp"
