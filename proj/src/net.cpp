#include "ebseg/net.hpp"

#include "ebseg/pgm.hpp"
#include "ebseg/rdm.hpp"

namespace ebseg {

namespace {

constexpr std::size_t kBlock1Width = 16;

struct BlockSpec {
  const char* name;
  std::size_t stride;
  std::size_t dilation;
};

constexpr BlockSpec kBlocks[4] = {{"bb.block1", 2, 1}, {"bb.block2", 2, 1}, {"bb.block3", 2, 1}, {"bb.block4", 1, 2}};

void init_conv_bn(ParamStore<float>& ps, ParamInit& init, const std::string& name, std::size_t cout,
                  std::size_t cin, std::size_t k) {
  init.conv(ps, name, cout, cin, k);
  init.batch_norm(ps, name + ".bn", cout);
}

template <class T>
Tensor<T> conv_bn_relu(Tape<T>& tape, ParamStore<T>& ps, const std::string& name, const Tensor<T>& x,
                       Conv2dOptions opt, NormMode mode) {
  return tape.relu(batch_norm_layer(tape, ps, name + ".bn", conv_layer(tape, ps, name, x, opt), mode));
}

std::size_t block_width(const NetConfig& cfg, int b) {
  switch (b) {
    case 0: return kBlock1Width;
    case 1: return cfg.c_low;
    default: return cfg.c_high;
  }
}

}  // namespace

ParamStore<float> init_params(const NetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParamStore<float> ps;
  ParamInit init(seed);
  std::size_t cin = 3;
  for (int b = 0; b < 4; ++b) {
    const std::size_t cout = block_width(cfg, b);
    init_conv_bn(ps, init, std::string(kBlocks[b].name) + ".conv1", cout, cin, 3);
    init_conv_bn(ps, init, std::string(kBlocks[b].name) + ".conv2", cout, cout, 3);
    cin = cout;
  }
  init_conv_bn(ps, init, "bb.context", cfg.channels, cfg.c_high, 3);

  for (int s = 1; s <= cfg.stages; ++s) {
    const std::string pre = stage_prefix(s);
    if (cfg.use_rdm) init_rdm_params(ps, init, pre + ".rdm", cfg.channels, cfg.c_low, cfg.c_high);
    if (cfg.use_pgm) init_pgm_params(ps, init, pre + ".pgm", cfg.channels, cfg.points);
    init_conv_bn(ps, init, pre + ".pred.conv1", cfg.channels, cfg.channels, 3);
    init_conv_bn(ps, init, pre + ".pred.conv2", cfg.channels, cfg.channels, 3);
    init.conv(ps, pre + ".pred.conv3", 2, cfg.channels, 1, /*zero=*/true);
  }
  return ps;
}

template <class T>
BackboneFeatures<T> backbone_forward(Tape<T>& tape, ParamStore<T>& ps, const Tensor<T>& image, NormMode mode) {
  if (image.ndim() != 4 || image.dim(1) != 3)
    throw std::invalid_argument("backbone: expected N x 3 x H x W image, got " + shape_str(image.shape()));
  const std::size_t h = image.dim(2), w = image.dim(3);
  if (h < 32 || w < 32 || h % 8 != 0 || w % 8 != 0)
    throw std::invalid_argument("backbone: image size " + std::to_string(h) + "x" + std::to_string(w) +
                                " must be a multiple of 8 and at least 32");
  BackboneFeatures<T> f;
  Tensor<T> x = image;
  for (int b = 0; b < 4; ++b) {
    const std::string name = kBlocks[b].name;
    const std::size_t d = kBlocks[b].dilation;
    x = conv_bn_relu(tape, ps, name + ".conv1", x, conv3x3(kBlocks[b].stride, d), mode);
    x = conv_bn_relu(tape, ps, name + ".conv2", x, conv3x3(1, d), mode);
    if (b == 1) f.f_low = x;
    if (b == 2) f.f_high1 = x;
    if (b == 3) f.f_high2 = x;
  }
  f.f_in0 = conv_bn_relu(tape, ps, "bb.context", x, conv3x3(1, 2), mode);
  return f;
}

template <class T>
Tensor<T> pred_head(Tape<T>& tape, ParamStore<T>& ps, const std::string& prefix, const Tensor<T>& f, NormMode mode) {
  const std::size_t want = ps.at(prefix + ".conv1.w").dim(1);
  if (f.ndim() != 4 || f.dim(1) != want)
    throw std::invalid_argument("pred head " + prefix + ": input " + shape_str(f.shape()) + " needs " +
                                std::to_string(want) + " channels");
  Tensor<T> x = conv_bn_relu(tape, ps, prefix + ".conv1", f, conv3x3(), mode);
  x = conv_bn_relu(tape, ps, prefix + ".conv2", x, conv3x3(), mode);
  return conv_layer(tape, ps, prefix + ".conv3", x);
}

template <class T>
NetOutput<T> cascade_forward(Tape<T>& tape, ParamStore<T>& ps, const NetConfig& cfg, const Tensor<T>& image,
                             NormMode mode) {
  if (cfg.stages < 1) throw std::invalid_argument("cascade: stages must be >= 1");
  const BackboneFeatures<T> bb = backbone_forward(tape, ps, image, mode);
  NetOutput<T> out;
  Tensor<T> f_in = bb.f_in0;
  for (int s = 1; s <= cfg.stages; ++s) {
    const std::string pre = stage_prefix(s);
    StageOutput<T> st;
    if (cfg.use_rdm) {
      const auto rp = RdmParams<T>::bind(ps, pre + ".rdm", cfg.edge_conv_relu);
      RdmOutputs<T> r = rdm_forward(tape, ps, rp, f_in, bb.f_low, s == 1 ? bb.f_high1 : bb.f_high2);
      st.f_b = r.f_b;
      st.f_r = r.f_r;
      st.f_edge = r.f_edge;
      st.f_merge = r.f_merge;
    } else {
      st.f_merge = f_in;
    }
    if (cfg.use_pgm) {
      st.f_merge_refined = pgm_forward(tape, st.f_b, st.f_merge, ps.at(pre + ".pgm.w_g"), ps.at(pre + ".pgm.a_g"),
                                       cfg.points, cfg.laplacian_variant, &st.points);
    } else {
      st.f_merge_refined = st.f_merge;
    }
    st.f_m = pred_head(tape, ps, pre + ".pred", st.f_merge_refined, mode);
    f_in = st.f_merge_refined;
    out.stages.push_back(std::move(st));
  }
  out.logits = tape.resize_bilinear(out.stages.back().f_m, image.dim(2), image.dim(3));
  return out;
}

template BackboneFeatures<float> backbone_forward(Tape<float>&, ParamStore<float>&, const Tensor<float>&, NormMode);
template BackboneFeatures<double> backbone_forward(Tape<double>&, ParamStore<double>&, const Tensor<double>&,
                                                   NormMode);
template Tensor<float> pred_head(Tape<float>&, ParamStore<float>&, const std::string&, const Tensor<float>&,
                                 NormMode);
template Tensor<double> pred_head(Tape<double>&, ParamStore<double>&, const std::string&, const Tensor<double>&,
                                  NormMode);
template NetOutput<float> cascade_forward(Tape<float>&, ParamStore<float>&, const NetConfig&, const Tensor<float>&,
                                          NormMode);
template NetOutput<double> cascade_forward(Tape<double>&, ParamStore<double>&, const NetConfig&,
                                           const Tensor<double>&, NormMode);

}  // namespace ebseg
