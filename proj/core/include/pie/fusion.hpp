#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "pie/ssm.hpp"

namespace pie::fusion {

enum class Modality { image, lidar };

/// Pre-fusion feature map, stored as (H, W, D).
struct ModalityGrid {
  Modality modality = Modality::image;
  Tensor values;

  std::size_t height() const { return values.dim(0); }
  std::size_t width() const { return values.dim(1); }
  std::size_t channels() const { return values.dim(2); }
  std::size_t tokens() const { return height() * width(); }
  // Row-major flattening to (H*W, D).
  Tensor sequence() const;

  static ModalityGrid from_sequence(Modality modality, const Tensor& seq, std::size_t height,
                                    std::size_t width);
};

struct FusedFeatures {
  ModalityGrid image;
  ModalityGrid lidar;
};

/// A stack of SSM blocks applied in sequence.
struct Branch {
  std::vector<ssm::BlockParams> layers;

  static Branch create(ParameterStore& store, const std::string& prefix, std::size_t n_layers,
                       std::size_t model_dim, std::size_t state_dim, std::size_t expand = 2);
  Tensor operator()(const Tensor& seq) const;
};

/// [image; lidar] through the branch: the trailing LiDAR segment conditions on
/// every image token. Returns (L_img + L_lid, D).
Tensor lidar_centric_fuse(const ModalityGrid& img, const ModalityGrid& lid, const Branch& branch);

/// [lidar; image] through the branch. Returns (L_lid + L_img, D).
Tensor image_centric_fuse(const ModalityGrid& img, const ModalityGrid& lid, const Branch& branch);

/// Runs both orders and adds, per modality, the two segments that belong to
/// the same (modality, position).
FusedFeatures bidirectional_fuse(const ModalityGrid& img, const ModalityGrid& lid,
                                 const Branch& lidar_centric, const Branch& image_centric);

enum class Variant {
  plus_plus,   // two LiDAR-centric branches
  plus_minus,  // one LiDAR-centric, one image-centric (the bidirectional design)
};

FusedFeatures unidirectional_variant(const ModalityGrid& img, const ModalityGrid& lid,
                                     const Branch& branch_a, const Branch& branch_b, Variant mode);

}  // namespace pie::fusion
