#include "ebseg/losses.hpp"

namespace ebseg {

namespace {

void append(std::vector<std::uint8_t>& dst, const LabelMap& m) { dst.insert(dst.end(), m.data.begin(), m.data.end()); }

}  // namespace

BatchTargets make_targets(const std::vector<GroundTruthBundle>& gts, std::size_t stage_h, std::size_t stage_w) {
  if (gts.empty()) throw std::invalid_argument("make_targets: empty batch");
  BatchTargets t;
  t.full.n = t.stage.n = gts.size();
  t.full.h = gts[0].g_m.height;
  t.full.w = gts[0].g_m.width;
  t.stage.h = stage_h;
  t.stage.w = stage_w;
  for (const auto& g : gts) {
    if (!g.g_m.same_shape(gts[0].g_m) || !g.g_e.same_shape(g.g_m) || !g.g_r.same_shape(g.g_m))
      throw std::invalid_argument("make_targets: label maps differ in size");
    append(t.full.g_m, g.g_m);
    append(t.full.g_e, g.g_e);
    append(t.full.g_r, g.g_r);
    append(t.stage.g_m, resize_nearest(g.g_m, stage_h, stage_w));
    append(t.stage.g_e, resize_nearest(g.g_e, stage_h, stage_w));
    append(t.stage.g_r, resize_nearest(g.g_r, stage_h, stage_w));
  }
  return t;
}

template <class T>
LossTerms<T> joint_loss(Tape<T>& tape, const StageOutput<T>& stage, const BatchTargets& gt, const LossWeights& w,
                        Supervision sup) {
  const StackedLabels& full = gt.full;
  LossTerms<T> terms;
  terms.merge = tape.cross_entropy_ignore(tape.resize_bilinear(stage.f_m, full.h, full.w), full.g_m);
  terms.joint = tape.scale(terms.merge, static_cast<T>(w.lambda3));
  if (!stage.f_b.defined()) return terms;

  if (sup == Supervision::stage) {
    if (stage.f_b.dim(2) != gt.stage.h || stage.f_b.dim(3) != gt.stage.w)
      throw std::invalid_argument("joint_loss: stage labels are " + std::to_string(gt.stage.h) + "x" +
                                  std::to_string(gt.stage.w) + " but f_b is " + shape_str(stage.f_b.shape()));
    terms.edge = tape.dice_loss(stage.f_b, gt.stage.g_e);
    terms.residual = tape.cross_entropy_ignore(stage.f_r, gt.stage.g_r);
  } else {
    terms.edge = tape.dice_loss(tape.resize_bilinear(stage.f_b, full.h, full.w), full.g_e);
    terms.residual = tape.cross_entropy_ignore(tape.resize_bilinear(stage.f_r, full.h, full.w), full.g_r);
  }
  terms.joint = tape.add(tape.add(tape.scale(terms.residual, static_cast<T>(w.lambda1)),
                                  tape.scale(terms.edge, static_cast<T>(w.lambda2))),
                         terms.joint);
  return terms;
}

template <class T>
TotalLoss<T> total_loss(Tape<T>& tape, const std::vector<StageOutput<T>>& stages, const BatchTargets& gt,
                        const LossWeights& w, Supervision sup) {
  if (stages.empty()) throw std::invalid_argument("total_loss: no stages");
  TotalLoss<T> out;
  for (const auto& s : stages) {
    out.stages.push_back(joint_loss(tape, s, gt, w, sup));
    out.total = out.total.defined() ? tape.add(out.total, out.stages.back().joint) : out.stages.back().joint;
  }
  return out;
}

template LossTerms<float> joint_loss(Tape<float>&, const StageOutput<float>&, const BatchTargets&,
                                     const LossWeights&, Supervision);
template LossTerms<double> joint_loss(Tape<double>&, const StageOutput<double>&, const BatchTargets&,
                                      const LossWeights&, Supervision);
template TotalLoss<float> total_loss(Tape<float>&, const std::vector<StageOutput<float>>&, const BatchTargets&,
                                     const LossWeights&, Supervision);
template TotalLoss<double> total_loss(Tape<double>&, const std::vector<StageOutput<double>>&, const BatchTargets&,
                                      const LossWeights&, Supervision);

}  // namespace ebseg
