#pragma once

#include "oplearn/correction.hpp"
#include "oplearn/dataset.hpp"

namespace oplearn {

struct TrainOpt {
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  Index batch = 8;
  Index epochs = 200;
  std::uint64_t seed = 0;
  double divergence_factor = 1e3;  // abort when loss exceeds this x initial
};

// One supervised regression pool; the loss is the mean weighted-norm MSE,
// cell_measure being the measure of the target space.
struct Pool {
  std::vector<Mat> in, tgt;
  std::vector<std::string> tag;
  double cell_measure = 1.0;

  Index size() const { return static_cast<Index>(in.size()); }
  void add(Mat i, Mat t, std::string tg);
};

struct AdamState {
  Vec m, v;
  long t = 0;
};

struct TrainResult {
  std::vector<double> epoch_loss;
  bool diverged = false;
};

// Adam on the batched weighted MSE; batch order reshuffles each epoch from
// derive_seed(opt.seed, epoch), so training is bit-reproducible.  Passing an
// AdamState keeps optimiser history across calls.
TrainResult train_correction(ConvCorrection& model, const Pool& pool,
                             const TrainOpt& opt, AdamState* state = nullptr);

// Supervised pools for correction training.  ydata keeps each forward
// entry's owning measurement so adjoint targets can be re-derived when the
// forward model moves.
struct CorrectionPools {
  Pool fwd;       // (Atilde x, A x), data space
  Pool adj;       // (Atilde* r, A* r) with r = F(Atilde x) - y, image space
  Pool adj_base;  // permanent start-of-descent cotangent pairs (r = -y)
  Pool nrm;       // (Atilde* Atilde x, A* A x), image space
  std::vector<Mat> ydata;
  Index a_calls = 0, astar_calls = 0;
};

// Pools over the dataset phantoms ("manifold" pools: inputs never leave the
// training manifold).  Uses the stored y and z, so no true-model calls.
//
// `scales` adds one supervised pair per sample-scale combination; since the
// models are linear, (b Atilde x, b A x) is an exact pair for free, and the
// descent iterates sweep exactly those amplitudes on their way up from zero.
// `zero_anchor` adds a single (0, 0) pair per pool so the residual nets are
// pulled toward fixing the origin, where every descent starts.
CorrectionPools build_manifold_pools(const Dataset& ds, const LinOp& atilde,
                                     const std::vector<double>& scales = {1.0},
                                     bool zero_anchor = false);

// Rebuilds the adjoint pool from (fwd.in, ydata) with the current forward
// correction; costs one A* evaluation per entry (counted).
void refresh_adjoint_pool(CorrectionPools& pools, const ConvCorrection& f,
                          const LinOp& a, const LinOp& atilde);

struct FwdAdjResult {
  std::vector<double> fwd_loss, adj_loss;
  Index a_calls = 0, astar_calls = 0;
  bool diverged = false;
};

// Interleaved training of the forward and adjoint corrections: blocks of
// refresh_every epochs for F, then an adjoint-pool refresh (the residual
// cotangents depend on F), then a block for G.
FwdAdjResult train_forward_adjoint(ConvCorrection& f, ConvCorrection& g,
                                   CorrectionPools& pools, const LinOp& a,
                                   const LinOp& atilde, const TrainOpt& opt,
                                   Index refresh_every = 20);

struct TrajectoryOpt {
  Index rounds = 2;
  Index stride = 50;  // harvest every stride-th iterate; 0 disables
  GdConfig gd;        // inner reconstruction settings
  TvRegulariser tv;
  TrainOpt train;
  Index refresh_every = 20;
  // false: f and g arrive already manifold-trained and round 0 is skipped
  bool round0 = true;
};

struct TrajectoryResult {
  Index a_calls = 0, astar_calls = 0;
  std::vector<Index> pool_sizes;  // forward pool size after each round
  std::vector<double> fwd_loss, adj_loss;
  bool diverged = false;
};

// Round 0 trains on the manifold pools; each further round reconstructs
// every training measurement with the current corrected oracle, harvests
// iterates every `stride` steps, extends the pools with (Atilde x_k, A x_k)
// and the matching adjoint pairs, and retrains both models (warm parameters,
// fresh optimiser state).
TrajectoryResult trajectory_train(ConvCorrection& f, ConvCorrection& g,
                                  CorrectionPools& pools, const Dataset& ds,
                                  const LinOp& a, const LinOp& atilde,
                                  const TrajectoryOpt& topt);

}  // namespace oplearn
