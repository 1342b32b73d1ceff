#include "pie/fusion.hpp"

#include "pie/ops.hpp"

namespace pie::fusion {

Tensor ModalityGrid::sequence() const {
  return ops::reshape(values, {height() * width(), channels()});
}

ModalityGrid ModalityGrid::from_sequence(Modality modality, const Tensor& seq, std::size_t height,
                                         std::size_t width) {
  if (seq.rank() != 2 || seq.dim(0) != height * width) {
    throw ShapeError("cannot reshape sequence " + shape_str(seq.shape()) + " to a " +
                     std::to_string(height) + "x" + std::to_string(width) + " grid");
  }
  return ModalityGrid{modality, ops::reshape(seq, {height, width, seq.dim(1)})};
}

Branch Branch::create(ParameterStore& store, const std::string& prefix, std::size_t n_layers,
                      std::size_t model_dim, std::size_t state_dim, std::size_t expand) {
  Branch b;
  for (std::size_t i = 0; i < n_layers; ++i) {
    b.layers.push_back(ssm::BlockParams::create(store, prefix + ".layer" + std::to_string(i),
                                                model_dim, state_dim, expand));
  }
  return b;
}

Tensor Branch::operator()(const Tensor& seq) const {
  Tensor h = seq;
  for (const auto& layer : layers) h = ssm::block_forward(layer, h);
  return h;
}

namespace {

void check_pair(const ModalityGrid& img, const ModalityGrid& lid) {
  if (img.values.rank() != 3 || lid.values.rank() != 3) {
    throw ShapeError("fusion grids must be (H, W, D); got image " + shape_str(img.values.shape()) +
                     " and lidar " + shape_str(lid.values.shape()));
  }
  if (img.channels() != lid.channels()) {
    throw ShapeError("fusion channel mismatch: image " + shape_str(img.values.shape()) +
                     " vs lidar " + shape_str(lid.values.shape()));
  }
}

struct Segments {
  Tensor image;
  Tensor lidar;
};

Segments lidar_centric_segments(const ModalityGrid& img, const ModalityGrid& lid, const Branch& br) {
  auto out = lidar_centric_fuse(img, lid, br);
  auto parts = ops::split(out, 0, {img.tokens(), lid.tokens()});
  return {parts[0], parts[1]};
}

Segments image_centric_segments(const ModalityGrid& img, const ModalityGrid& lid, const Branch& br) {
  auto out = image_centric_fuse(img, lid, br);
  auto parts = ops::split(out, 0, {lid.tokens(), img.tokens()});
  return {parts[1], parts[0]};
}

FusedFeatures combine(const ModalityGrid& img, const ModalityGrid& lid, const Segments& a,
                      const Segments& b) {
  return FusedFeatures{
      ModalityGrid::from_sequence(Modality::image, ops::add(a.image, b.image), img.height(), img.width()),
      ModalityGrid::from_sequence(Modality::lidar, ops::add(a.lidar, b.lidar), lid.height(), lid.width())};
}

}  // namespace

Tensor lidar_centric_fuse(const ModalityGrid& img, const ModalityGrid& lid, const Branch& branch) {
  check_pair(img, lid);
  return branch(ops::concat({img.sequence(), lid.sequence()}, 0));
}

Tensor image_centric_fuse(const ModalityGrid& img, const ModalityGrid& lid, const Branch& branch) {
  check_pair(img, lid);
  return branch(ops::concat({lid.sequence(), img.sequence()}, 0));
}

FusedFeatures bidirectional_fuse(const ModalityGrid& img, const ModalityGrid& lid,
                                 const Branch& lidar_centric, const Branch& image_centric) {
  return combine(img, lid, lidar_centric_segments(img, lid, lidar_centric),
                 image_centric_segments(img, lid, image_centric));
}

FusedFeatures unidirectional_variant(const ModalityGrid& img, const ModalityGrid& lid,
                                     const Branch& branch_a, const Branch& branch_b, Variant mode) {
  if (mode == Variant::plus_minus) return bidirectional_fuse(img, lid, branch_a, branch_b);
  return combine(img, lid, lidar_centric_segments(img, lid, branch_a),
                 lidar_centric_segments(img, lid, branch_b));
}

}  // namespace pie::fusion
